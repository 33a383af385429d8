#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include "chanlab/netsim.hpp"

namespace chanlab::net {

namespace {

constexpr std::string_view kWorld = "world";

std::size_t at(int i) { return static_cast<std::size_t>(i); }

double arrival_gap(std::mt19937_64& rng, const WorldConfig& cfg) {
  const double mean_gap = static_cast<double>(cfg.ticks_per_second) / cfg.request_rate;
  return std::exponential_distribution<double>(1.0 / mean_gap)(rng);
}

}  // namespace

PaymentTimers payment_timers(const WorldConfig& cfg, Tick t0, int hops) {
  PaymentTimers p;
  const Tick ell = hops + 1;
  const Tick expiry = t0 + 6 * ell * cfg.round_ticks + cfg.delta;
  p.crit = expiry - cfg.delta;
  p.dispute = expiry + cfg.delta + 3 * cfg.round_ticks;
  p.htlc_claim.assign(at(hops), 0);
  Tick deadline = expiry;
  for (int i = hops - 1; i >= 0; --i) {
    p.htlc_claim[at(i)] = deadline - cfg.delta;
    deadline += cfg.delta + cfg.grace;
  }
  return p;
}

HopSchedule abstract_schedule(const WorldConfig& cfg, const Topology& t, const Path& path,
                              const std::vector<bool>& petty, Tick t0) {
  const int hops = static_cast<int>(path.size()) - 1;
  HopSchedule s;
  if (hops <= 0) return s;
  const PaymentTimers timers = payment_timers(cfg, t0, hops);
  auto is_petty = [&](int node) { return !petty.empty() && petty[at(node)]; };
  const bool constant = cfg.model == linked::Model::ConstantLocktime;
  std::vector<Tick> c(at(hops));
  for (int i = hops - 1; i >= 0; --i) {
    const int receiver = path[at(i + 1)];
    const Tick after = i == hops - 1 ? t0 : c[at(i + 1)];
    c[at(i)] = after + t.nodes[at(receiver)].latency;
    if (!constant && is_petty(receiver)) c[at(i)] = std::max(c[at(i)], timers.htlc_claim[at(i)]);
  }
  if (constant) {
    const bool petty_recipient = is_petty(path.back());
    for (int i = 0; i < hops; ++i) {
      if (petty_recipient || (i > 0 && is_petty(path[at(i)]))) c[at(i)] = std::max(c[at(i)], timers.crit);
    }
  }
  s.complete.resize(at(hops));
  for (int i = 0; i < hops; ++i) s.complete[at(i)] = c[at(i)] - t0;
  return s;
}

World::World(const WorldConfig& cfg)
    : World(cfg, assign_attributes(gen_topology(cfg.topology, stream_seed(cfg.seed, 1)), stream_seed(cfg.seed, 2), cfg.profiles),
            {}) {
  std::mt19937_64 rng(stream_seed(cfg.seed, 3));
  const int n = topo_.g.n;
  std::vector<int> order(at(n));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const auto count = static_cast<std::size_t>(std::llround(cfg.petty_rate * n));
  petty_.assign(at(n), false);
  for (std::size_t i = 0; i < std::min(count, order.size()); ++i) petty_[at(order[i])] = true;
}

World::World(const WorldConfig& cfg, Topology topo, std::vector<bool> petty)
    : cfg_(cfg),
      topo_(std::move(topo)),
      petty_(std::move(petty)),
      sim_(1),
      arrivals_(stream_seed(cfg.seed, 4)),
      workload_(stream_seed(cfg.seed, 5)) {
  const std::size_t n = topo_.channels.size();
  if (petty_.empty()) petty_.assign(at(topo_.g.n), false);
  escrow_.assign(n, Money(0));
  paused_until_.assign(n, 0);
  topup_.assign(n, {Money(0), Money(0)});
  funded_.reserve(n);
  initial_bal_.reserve(n);
  for (const auto& c : topo_.channels) {
    funded_.push_back(c.bal[0] + c.bal[1]);
    initial_bal_.push_back(c.bal);
  }
  topping_up_.assign(at(topo_.g.n), false);
  RequestSampler sampler(topo_, cfg_.profiles);
  if (sampler.usable()) sampler_.emplace(topo_, cfg_.profiles);
  if (cfg_.routing == Routing::Flare)
    flare_ = flare_build(topo_.g, cfg_.flare.radius, cfg_.flare.beacons, stream_seed(cfg_.seed, 6));
}

void World::start(Tick arrivals_until) {
  arrivals_until_ = arrivals_until;
  if (cfg_.request_rate > 0 && sampler_) {
    next_arrival_ = static_cast<double>(now()) + arrival_gap(arrivals_, cfg_);
    const auto when = static_cast<Tick>(std::ceil(next_arrival_));
    if (when < arrivals_until_) sim_.schedule(when, kWorld, sim::Endpoint::none(), [this] { arrive(); });
  }
  if (cfg_.rebalance_interval > 0)
    sim_.schedule(now() + cfg_.rebalance_interval, kWorld, sim::Endpoint::none(), [this] { periodic_rebalance(); });
  if (cfg_.revive && cfg_.revive_interval > 0)
    sim_.schedule(now() + cfg_.revive_interval, kWorld, sim::Endpoint::none(), [this] { periodic_revive(); });
}

void World::arrive() {
  const PaymentRequest r = sampler_->draw(workload_, now());
  submit(r.sender, r.recipient, r.amount);
  next_arrival_ += arrival_gap(arrivals_, cfg_);
  const Tick when = std::max(now(), static_cast<Tick>(std::ceil(next_arrival_)));
  if (when < arrivals_until_) sim_.schedule(when, kWorld, sim::Endpoint::none(), [this] { arrive(); });
}

bool World::usable(int from, int to, Money amount) const {
  const int k = topo_.g.edge_index(from, to);
  if (k < 0 || paused(k)) return false;
  return topo_.channels[at(k)].bal[at(topo_.side_of(k, from))] >= amount;
}

std::size_t World::submit(int sender, int recipient, Money amount) {
  PaymentRequest r;
  r.sender = sender;
  r.recipient = recipient;
  r.amount = amount;
  r.created_at = now();
  const std::size_t id = requests_.size();
  requests_.push_back(r);
  collateral_.push_back(0);
  hop_done_.emplace_back();
  const HopFilter ok = [&](int a, int b) { return usable(a, b, amount); };
  std::optional<Path> path;
  if (sender != recipient) {
    if (flare_) {
      path = flare_route(topo_.g, *flare_, sender, recipient, cfg_.flare.query_limit, ok).path;
    } else {
      path = shortest_path(topo_.g, sender, recipient, ok);
    }
  }
  if (!path) {
    requests_[id].status = Status::Failed;
    return id;
  }
  open(id, *path);
  return id;
}

std::size_t World::submit_path(const Path& path, Money amount) {
  PaymentRequest r;
  r.sender = path.front();
  r.recipient = path.back();
  r.amount = amount;
  r.created_at = now();
  const std::size_t id = requests_.size();
  requests_.push_back(r);
  collateral_.push_back(0);
  hop_done_.emplace_back();
  bool ok = path.size() >= 2;
  for (std::size_t i = 0; ok && i + 1 < path.size(); ++i) ok = usable(path[i], path[i + 1], amount);
  if (!ok) {
    requests_[id].status = Status::Failed;
    return id;
  }
  open(id, path);
  return id;
}

HopSchedule World::schedule_for(const Path& path, Tick t0) {
  if (cfg_.fidelity == Fidelity::Abstract) return abstract_schedule(cfg_, topo_, path, petty_, t0);
  const int ell = static_cast<int>(path.size());
  std::uint64_t mask = 0;
  for (int i = 1; i < ell && i < 64; ++i)
    if (petty_[at(path[at(i)])]) mask |= std::uint64_t{1} << i;
  const auto key = std::make_pair(mask, ell);
  auto it = full_cache_.find(key);
  if (it == full_cache_.end()) {
    linked::LinkedRunConfig c;
    c.ell = ell;
    c.delta = cfg_.delta;
    c.unit = cfg_.round_ticks;
    c.seed = cfg_.seed;
    c.behaviors.assign(at(ell), linked::Behavior::Honest);
    for (int i = 1; i < ell && i < 64; ++i)
      if (mask >> i & 1U) c.behaviors[at(i)] = linked::Behavior::Petty;
    const linked::LinkedOutcome o = cfg_.model == linked::Model::ConstantLocktime ? linked::run_linked_payment(c)
                                                                                 : linked::run_htlc_baseline(c);
    HopSchedule s;
    for (const auto& h : o.hops) {
      s.complete.push_back(std::max<Tick>(1, h.close_at.value_or(o.check_at) - o.T));
      s.cancelled = s.cancelled || h.flag != linked::Flag::Complete;
    }
    it = full_cache_.emplace(key, std::move(s)).first;
  }
  return it->second;
}

void World::open(std::size_t req, const Path& path) {
  const Money amount = requests_[req].amount;
  Open o;
  o.request = req;
  o.path = path;
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    const int k = topo_.g.edge_index(path[i], path[i + 1]);
    o.channels.push_back(k);
    auto& c = topo_.channels[at(k)];
    c.bal[at(topo_.side_of(k, path[i]))] -= amount;
    escrow_[at(k)] += amount;
  }
  const Tick t0 = now();
  const HopSchedule s = schedule_for(path, t0);
  const std::size_t id = opens_.size();
  hop_done_[req].assign(o.channels.size(), kNever);
  opens_.push_back(std::move(o));
  ++pending_;
  for (std::size_t i = 0; i < s.complete.size(); ++i) {
    collateral_[req] += amount.units() * s.complete[i];
    if (s.cancelled) {
      sim_.schedule(t0 + s.complete[i], kWorld, sim::Endpoint::none(), [this, id, i] {
        Open& op = opens_[id];
        const int k = op.channels[i];
        const Money a = requests_[op.request].amount;
        escrow_[at(k)] -= a;
        topo_.channels[at(k)].bal[at(topo_.side_of(k, op.path[i]))] += a;
        hop_done_[op.request][i] = now();
        if (++op.done == op.channels.size()) finish(id, false);
      });
    } else {
      sim_.schedule(t0 + s.complete[i], kWorld, sim::Endpoint::none(), [this, id, i] { complete_hop(id, i); });
    }
  }
}

void World::complete_hop(std::size_t open_id, std::size_t hop) {
  Open& o = opens_[open_id];
  const int k = o.channels[hop];
  if (paused(k)) {
    sim_.schedule(paused_until_[at(k)], kWorld, sim::Endpoint::none(), [this, open_id, hop] { complete_hop(open_id, hop); });
    return;
  }
  const Money a = requests_[o.request].amount;
  escrow_[at(k)] -= a;
  topo_.channels[at(k)].bal[at(topo_.side_of(k, o.path[hop + 1]))] += a;
  hop_done_[o.request][hop] = now();
  if (++o.done == o.channels.size()) finish(open_id, true);
}

void World::finish(std::size_t open_id, bool ok) {
  auto& r = requests_[opens_[open_id].request];
  r.status = ok ? Status::Success : Status::Failed;
  r.completed_at = now();
  --pending_;
}

void World::run_until(Tick t) { sim_.run_until(t); }

void World::drain() {
  const Tick limit = now() + 64 * (cfg_.delta + cfg_.grace + 6 * cfg_.round_ticks) * std::max(1, topo_.g.n);
  const Tick step = std::max<Tick>(1, cfg_.rebalance_interval);
  while (pending_ > 0 && now() < limit) run_until(now() + step);
}

void World::rebalance_onchain() {
  const Money threshold = cfg_.rebalance_threshold;
  for (int u = 0; u < topo_.g.n; ++u) {
    if (topping_up_[at(u)] || topo_.g.adj[at(u)].empty()) continue;
    bool low = false;
    std::int64_t outlay = 0;
    std::vector<int> chans;
    for (int v : topo_.g.adj[at(u)]) {
      const int k = topo_.g.edge_index(u, v);
      const int side = topo_.side_of(k, u);
      chans.push_back(k);
      outlay += initial_bal_[at(k)][at(side)].units();
      low = low || (!paused(k) && topo_.channels[at(k)].bal[at(side)] < threshold);
    }
    if (!low) continue;
    const auto total = static_cast<std::int64_t>(std::llround(cfg_.topup_scale * static_cast<double>(outlay)));
    const auto deg = static_cast<std::int64_t>(chans.size());
    std::vector<std::pair<int, Money>> shares;
    for (std::size_t i = 0; i < chans.size(); ++i) {
      const std::int64_t extra = static_cast<std::int64_t>(i) < total % deg ? 1 : 0;
      shares.emplace_back(chans[i], Money(total / deg + extra));
    }
    ++onchain_txs_;
    topping_up_[at(u)] = true;
    const Tick confirm = now() + cfg_.delta;
    for (const auto& [k, amt] : shares) {
      if (cfg_.incremental) {
        topup_[at(k)][at(topo_.side_of(k, u))] += amt;
      } else {
        paused_until_[at(k)] = std::max(paused_until_[at(k)], confirm);
      }
    }
    sim_.schedule(confirm, kWorld, sim::Endpoint::none(), [this, u, shares] {
      for (const auto& [k, amt] : shares) {
        const int side = topo_.side_of(k, u);
        if (cfg_.incremental) topup_[at(k)][at(side)] -= amt;
        topo_.channels[at(k)].bal[at(side)] += amt;
        topo_.channels[at(k)].capacity += amt;
        funded_[at(k)] += amt;
      }
      topping_up_[at(u)] = false;
    });
  }
}

void World::rebalance_revive() {
  std::vector<bool> frozen(topo_.channels.size());
  for (std::size_t k = 0; k < frozen.size(); ++k) frozen[k] = paused(static_cast<int>(k));
  revive_shifts_ += cancel_skew_cycles(topo_, frozen);
}

void World::periodic_rebalance() {
  rebalance_onchain();
  sim_.schedule(now() + cfg_.rebalance_interval, kWorld, sim::Endpoint::none(), [this] { periodic_rebalance(); });
}

void World::periodic_revive() {
  rebalance_revive();
  sim_.schedule(now() + cfg_.revive_interval, kWorld, sim::Endpoint::none(), [this] { periodic_revive(); });
}

std::vector<std::string> World::check_conservation() const {
  std::vector<std::string> out;
  for (std::size_t k = 0; k < topo_.channels.size(); ++k) {
    const auto& c = topo_.channels[k];
    if (c.bal[0] < Money(0) || c.bal[1] < Money(0) || escrow_[k] < Money(0)) {
      out.push_back("channel " + std::to_string(k) + ": negative balance");
    }
    if (c.bal[0] + c.bal[1] + escrow_[k] != funded_[k]) {
      out.push_back("channel " + std::to_string(k) + ": balances + escrow != funded");
    }
  }
  return out;
}

RunMetrics World::metrics(Tick from, Tick to) const {
  RunMetrics m;
  std::vector<double> durations;
  for (std::size_t i = 0; i < requests_.size(); ++i) {
    const auto& r = requests_[i];
    if (r.created_at < from || r.created_at >= to) continue;
    ++m.attempts;
    m.collateral_integral += collateral_[i];
    if (r.status == Status::Success) {
      ++m.successes;
      durations.push_back(static_cast<double>(*r.completed_at - r.created_at) / static_cast<double>(cfg_.ticks_per_second));
    } else if (r.status == Status::Failed) {
      ++m.failures;
    } else {
      ++m.unresolved;
    }
  }
  if (m.attempts > 0) m.success_rate = static_cast<double>(m.successes) / static_cast<double>(m.attempts);
  const double seconds = static_cast<double>(to - from) / static_cast<double>(cfg_.ticks_per_second);
  if (seconds > 0) m.throughput_tps = static_cast<double>(m.successes) / seconds;
  if (!durations.empty()) {
    m.mean_duration = std::accumulate(durations.begin(), durations.end(), 0.0) / static_cast<double>(durations.size());
    std::sort(durations.begin(), durations.end());
    const auto rank = static_cast<std::size_t>(std::ceil(0.99 * static_cast<double>(durations.size())));
    m.p99_duration = durations[std::max<std::size_t>(rank, 1) - 1];
  }
  m.onchain_txs = onchain_txs_;
  m.violations = check_conservation();
  return m;
}

RunMetrics run_world(const WorldConfig& cfg) {
  World w(cfg);
  const Tick end = cfg.warmup + cfg.measure;
  w.start(end);
  w.run_until(end);
  w.drain();
  return w.metrics(cfg.warmup, end);
}

ThroughputResult measure_throughput_at_98(const WorldConfig& base, const SearchConfig& s) {
  ThroughputResult res;
  auto eval = [&](double rate) {
    WorldConfig c = base;
    c.request_rate = rate;
    ++res.evaluations;
    return run_world(c);
  };
  auto meets = [&](const RunMetrics& m) { return m.success_rate >= s.target - s.tolerance; };
  auto close = [&](const RunMetrics& m) { return std::abs(m.success_rate - s.target) <= s.tolerance; };

  double lo = 0, hi = 0;
  RunMetrics lo_m;
  auto accept = [&](double rate, const RunMetrics& m) {
    if (!meets(m)) return false;
    lo = rate;
    lo_m = m;
    return true;
  };
  double r = s.initial_rate;
  if (accept(r, eval(r))) {
    while (hi == 0) {
      r *= 2;
      if (r > s.max_rate) break;
      if (!accept(r, eval(r))) hi = r;
    }
  } else {
    hi = r;
    while (lo == 0 && r > 1e-3) {
      r /= 2;
      if (!accept(r, eval(r))) hi = r;
    }
  }
  for (int i = 0; i < s.max_iter && lo > 0 && hi > 0 && (hi - lo) / hi >= s.rate_precision; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (!accept(mid, eval(mid))) hi = mid;
  }
  res.converged = lo > 0 && hi > 0 && (hi - lo) / hi < s.rate_precision && close(lo_m);
  res.rate = lo;
  res.lo = lo;
  res.hi = hi;
  res.metrics = lo_m;
  return res;
}

std::vector<ThroughputResult> sweep_serial(const std::vector<WorldConfig>& cfgs, const SearchConfig& s) {
  std::vector<ThroughputResult> out;
  out.reserve(cfgs.size());
  for (const auto& c : cfgs) out.push_back(measure_throughput_at_98(c, s));
  return out;
}

std::vector<ThroughputResult> sweep_parallel(const std::vector<WorldConfig>& cfgs, const SearchConfig& s) {
  std::vector<ThroughputResult> out(cfgs.size());
  const auto n = static_cast<std::int64_t>(cfgs.size());
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = measure_throughput_at_98(cfgs[static_cast<std::size_t>(i)], s);
  return out;
}

std::size_t cancel_skew_cycles(Topology& t, const std::vector<bool>& frozen) {
  const int n = t.g.n;
  // weight of the directed skew edge from the richer side to the poorer one
  auto skew = [&](int k, int from) -> std::int64_t {
    if (!frozen.empty() && frozen[at(k)]) return 0;
    const auto& c = t.channels[at(k)];
    const int side = t.side_of(k, from);
    const std::int64_t d = c.bal[at(side)].units() - c.bal[at(1 - side)].units();
    return d >= 2 ? d / 2 : 0;
  };
  std::size_t shifts = 0;
  for (;;) {
    // Iterative DFS for any directed cycle, lowest ids first.
    std::vector<int> color(at(n), 0);
    std::vector<int> parent(at(n), -1);
    std::vector<int> cycle;
    for (int root = 0; root < n && cycle.empty(); ++root) {
      if (color[at(root)] != 0) continue;
      std::vector<std::pair<int, std::size_t>> stack{{root, 0}};
      color[at(root)] = 1;
      while (!stack.empty() && cycle.empty()) {
        auto& [u, next] = stack.back();
        const auto& adj = t.g.adj[at(u)];
        bool pushed = false;
        while (next < adj.size()) {
          const int v = adj[next++];
          if (skew(t.g.edge_index(u, v), u) == 0) continue;
          if (color[at(v)] == 1) {
            for (int x = u; x != v; x = parent[at(x)]) cycle.push_back(x);
            cycle.push_back(v);
            std::reverse(cycle.begin(), cycle.end());
            break;
          }
          if (color[at(v)] == 0) {
            color[at(v)] = 1;
            parent[at(v)] = u;
            stack.emplace_back(v, 0);
            pushed = true;
            break;
          }
        }
        if (!cycle.empty()) break;
        if (!pushed) {
          color[at(stack.back().first)] = 2;
          stack.pop_back();
        }
      }
    }
    if (cycle.empty()) return shifts;
    const std::size_t len = cycle.size();
    std::int64_t delta = std::numeric_limits<std::int64_t>::max();
    for (std::size_t i = 0; i < len; ++i) {
      const int u = cycle[i], v = cycle[(i + 1) % len];
      delta = std::min(delta, skew(t.g.edge_index(u, v), u));
    }
    for (std::size_t i = 0; i < len; ++i) {
      const int u = cycle[i], v = cycle[(i + 1) % len];
      const int k = t.g.edge_index(u, v);
      auto& c = t.channels[at(k)];
      c.bal[at(t.side_of(k, u))] -= Money(delta);
      c.bal[at(t.side_of(k, v))] += Money(delta);
    }
    ++shifts;
  }
}

std::string csv_header() {
  return "config_id,seed,model,topology,routing,incremental,revive,petty_rate,request_rate,attempts,successes,"
         "success_rate,throughput_tps,mean_duration_s,p99_duration_s,collateral_integral,onchain_txs";
}

std::string csv_row(const WorldConfig& cfg, double request_rate, const RunMetrics& m) {
  auto num = [](double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", x);
    return std::string(buf);
  };
  std::ostringstream os;
  os << cfg.config_id << ',' << cfg.seed << ','
     << (cfg.model == linked::Model::ConstantLocktime ? "S" : "L") << ',' << to_string(cfg.topology.kind) << ','
     << (cfg.routing == Routing::ShortestPath ? "SP" : "Flare") << ',' << (cfg.incremental ? 1 : 0) << ','
     << (cfg.revive ? 1 : 0) << ',' << num(cfg.petty_rate) << ',' << num(request_rate) << ',' << m.attempts << ','
     << m.successes << ',' << num(m.success_rate) << ',' << num(m.throughput_tps) << ',' << num(m.mean_duration)
     << ',' << num(m.p99_duration) << ',' << m.collateral_integral << ',' << m.onchain_txs;
  return os.str();
}

}  // namespace chanlab::net
