#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <set>
#include <stdexcept>

#include "chanlab/netsim.hpp"

namespace chanlab::net {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::pair<int, int> ordered(int a, int b) { return a < b ? std::make_pair(a, b) : std::make_pair(b, a); }

}  // namespace

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) { return splitmix(seed ^ splitmix(stream + 1)); }

bool Graph::has_edge(int u, int v) const {
  const auto& a = adj[static_cast<std::size_t>(u)];
  return std::binary_search(a.begin(), a.end(), v);
}

int Graph::edge_index(int u, int v) const {
  const auto e = ordered(u, v);
  auto it = std::lower_bound(edges.begin(), edges.end(), e);
  if (it == edges.end() || *it != e) return -1;
  return static_cast<int>(it - edges.begin());
}

Graph make_graph(int n, std::vector<std::pair<int, int>> edges) {
  Graph g;
  g.n = n;
  g.adj.assign(static_cast<std::size_t>(n), {});
  for (auto& e : edges) e = ordered(e.first, e.second);
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  for (const auto& [u, v] : edges) {
    if (u == v || u < 0 || v >= n) throw std::invalid_argument("bad edge");
    g.adj[static_cast<std::size_t>(u)].push_back(v);
    g.adj[static_cast<std::size_t>(v)].push_back(u);
  }
  for (auto& a : g.adj) std::sort(a.begin(), a.end());
  g.edges = std::move(edges);
  return g;
}

Graph gen_ba(int n, int m, std::uint64_t seed) {
  if (m < 1 || n <= m) throw std::invalid_argument("BA needs n > m >= 1");
  std::mt19937_64 rng(seed);
  std::vector<std::pair<int, int>> edges;
  // Degree-weighted urn: every edge endpoint appears once.
  std::vector<int> urn;
  for (int u = 0; u <= m; ++u) {
    for (int v = u + 1; v <= m; ++v) {
      edges.emplace_back(u, v);
      urn.push_back(u);
      urn.push_back(v);
    }
  }
  for (int v = m + 1; v < n; ++v) {
    std::vector<int> targets;
    while (static_cast<int>(targets.size()) < m) {
      const int t = urn[std::uniform_int_distribution<std::size_t>(0, urn.size() - 1)(rng)];
      if (std::find(targets.begin(), targets.end(), t) == targets.end()) targets.push_back(t);
    }
    for (int t : targets) {
      edges.emplace_back(t, v);
      urn.push_back(t);
      urn.push_back(v);
    }
  }
  return make_graph(n, std::move(edges));
}

Graph gen_ws(int n, int k, double p, std::uint64_t seed) {
  if (k % 2 != 0 || k >= n || k < 2) throw std::invalid_argument("WS needs even k with 2 <= k < n");
  std::mt19937_64 rng(seed);
  std::vector<std::set<int>> nb(static_cast<std::size_t>(n));
  auto link = [&](int a, int b) {
    nb[static_cast<std::size_t>(a)].insert(b);
    nb[static_cast<std::size_t>(b)].insert(a);
  };
  for (int i = 0; i < n; ++i)
    for (int j = 1; j <= k / 2; ++j) link(i, (i + j) % n);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_int_distribution<int> any(0, n - 1);
  for (int j = 1; j <= k / 2; ++j) {
    for (int i = 0; i < n; ++i) {
      const int v = (i + j) % n;
      if (coin(rng) >= p) continue;
      auto& ni = nb[static_cast<std::size_t>(i)];
      if (static_cast<int>(ni.size()) >= n - 1 || !ni.count(v)) continue;
      int w = any(rng);
      while (w == i || ni.count(w)) w = any(rng);
      ni.erase(v);
      nb[static_cast<std::size_t>(v)].erase(i);
      link(i, w);
    }
  }
  std::vector<std::pair<int, int>> edges;
  for (int u = 0; u < n; ++u)
    for (int v : nb[static_cast<std::size_t>(u)])
      if (u < v) edges.emplace_back(u, v);
  return make_graph(n, std::move(edges));
}

std::vector<int> bfs_distances(const Graph& g, int s) {
  std::vector<int> d(static_cast<std::size_t>(g.n), -1);
  std::queue<int> q;
  d[static_cast<std::size_t>(s)] = 0;
  q.push(s);
  while (!q.empty()) {
    const int u = q.front();
    q.pop();
    for (int v : g.adj[static_cast<std::size_t>(u)]) {
      if (d[static_cast<std::size_t>(v)] >= 0) continue;
      d[static_cast<std::size_t>(v)] = d[static_cast<std::size_t>(u)] + 1;
      q.push(v);
    }
  }
  return d;
}

double largest_component_fraction(const Graph& g) {
  if (g.n == 0) return 0.0;
  std::vector<bool> seen(static_cast<std::size_t>(g.n), false);
  int best = 0;
  for (int s = 0; s < g.n; ++s) {
    if (seen[static_cast<std::size_t>(s)]) continue;
    int size = 0;
    std::queue<int> q;
    q.push(s);
    seen[static_cast<std::size_t>(s)] = true;
    while (!q.empty()) {
      const int u = q.front();
      q.pop();
      ++size;
      for (int v : g.adj[static_cast<std::size_t>(u)]) {
        if (seen[static_cast<std::size_t>(v)]) continue;
        seen[static_cast<std::size_t>(v)] = true;
        q.push(v);
      }
    }
    best = std::max(best, size);
  }
  return static_cast<double>(best) / g.n;
}

std::string_view to_string(TopologyKind k) { return k == TopologyKind::BA ? "BA" : "WS"; }

Graph gen_topology(const TopologySpec& spec, std::uint64_t seed) {
  for (std::uint64_t attempt = 0; attempt < 1000; ++attempt) {
    const std::uint64_t s = stream_seed(seed, 100 + attempt);
    Graph g = spec.kind == TopologyKind::BA ? gen_ba(spec.n, spec.ba_m, s) : gen_ws(spec.n, spec.ws_k, spec.ws_p, s);
    if (largest_component_fraction(g) >= 0.99) return g;
  }
  throw std::runtime_error("could not generate a connected topology");
}

Role sample_role(std::mt19937_64& rng, const Profiles& p) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p.consumer_prob ? Role::Consumer : Role::Merchant;
}

Tick sample_latency(std::mt19937_64& rng, const Profiles& p) {
  std::discrete_distribution<std::size_t> d(p.latency_prob.begin(), p.latency_prob.end());
  return p.latency_ticks[d(rng)];
}

Money sample_capacity(std::mt19937_64& rng, const Profiles& p) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p.high_prob ? p.high_capacity : p.low_capacity;
}

Topology assign_attributes(Graph g, std::uint64_t seed, const Profiles& p) {
  std::mt19937_64 rng(seed);
  Topology t;
  t.nodes.resize(static_cast<std::size_t>(g.n));
  std::lognormal_distribution<double> freq(0.0, p.freq_sigma);
  std::lognormal_distribution<double> mean(std::log(p.amount_median), p.amount_sigma);
  for (auto& a : t.nodes) {
    a.role = sample_role(rng, p);
    a.latency = sample_latency(rng, p);
    a.freq = freq(rng);
    a.amount_mean = 100.0 * mean(rng);
    a.amount_sd = p.amount_cv * a.amount_mean;
  }
  t.channels.reserve(g.edges.size());
  for (const auto& [u, v] : g.edges) {
    Channel c;
    c.u = u;
    c.v = v;
    c.capacity = sample_capacity(rng, p);
    const Money half(c.capacity.units() / 2);
    c.bal = {half, c.capacity - half};
    t.channels.push_back(c);
  }
  t.g = std::move(g);
  return t;
}

std::optional<Money> Topology::available(int from, int to) const {
  const int k = g.edge_index(from, to);
  if (k < 0) return std::nullopt;
  return channels[static_cast<std::size_t>(k)].bal[static_cast<std::size_t>(side_of(k, from))];
}

RequestSampler::RequestSampler(const Topology& t, const Profiles& p) : topo_(&t), max_payment_(p.max_payment) {
  std::vector<double> wc, wm;
  for (int i = 0; i < t.g.n; ++i) {
    const auto& a = t.nodes[static_cast<std::size_t>(i)];
    if (a.role == Role::Consumer) {
      consumers_.push_back(i);
      wc.push_back(a.freq);
    } else {
      merchants_.push_back(i);
      wm.push_back(a.freq);
    }
  }
  pick_consumer_ = std::discrete_distribution<std::size_t>(wc.begin(), wc.end());
  pick_merchant_ = std::discrete_distribution<std::size_t>(wm.begin(), wm.end());
}

PaymentRequest RequestSampler::draw(std::mt19937_64& rng, Tick now) const {
  if (!usable()) throw std::logic_error("workload needs at least one consumer and one merchant");
  PaymentRequest r;
  r.created_at = now;
  r.sender = consumers_[pick_consumer_(rng)];
  r.recipient = merchants_[pick_merchant_(rng)];
  const auto& a = topo_->nodes[static_cast<std::size_t>(r.sender)];
  std::normal_distribution<double> amount(a.amount_mean, a.amount_sd);
  double x = amount(rng);
  while (x < 0.5) x = amount(rng);
  r.amount = std::min(Money(std::llround(x)), max_payment_);
  return r;
}

PaymentRequest gen_request(const Topology& t, std::mt19937_64& rng, const Profiles& p) {
  return RequestSampler(t, p).draw(rng, 0);
}

}  // namespace chanlab::net
