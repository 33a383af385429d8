#include <algorithm>
#include <random>

#include "chanlab/linkedpay.hpp"

namespace chanlab::linked {

std::string_view to_string(Behavior b) {
  switch (b) {
    case Behavior::Honest: return "honest";
    case Behavior::Petty: return "petty";
    case Behavior::Crash: return "crash";
    case Behavior::CancelEarly: return "cancel-early";
    case Behavior::Withhold: return "withhold";
    case Behavior::PublishLate: return "publish-late";
    case Behavior::RefuseSign: return "refuse-sign";
    case Behavior::RandomDispute: return "random-dispute";
    case Behavior::WrongPreimage: return "wrong-preimage";
  }
  return "?";
}

Tick check_time(const LinkedTimers& t, bool all_honest) {
  if (all_honest) return t.T + 6 * t.ell * t.unit;
  return t.dispute() + 6 * t.delta + 8 * t.unit;
}

Tick LinkedOutcome::max_lock() const {
  Tick m = 0;
  for (const auto& h : hops) m = std::max(m, h.lock());
  return m;
}

std::int64_t LinkedOutcome::collateral_integral() const {
  std::int64_t total = 0;
  for (const auto& h : hops) total += amount.units() * h.lock();
  return total;
}

std::optional<Tick> LinkedOutcome::completed_at() const {
  Tick last = 0;
  for (const auto& h : hops) {
    if (!h.close_at) return std::nullopt;
    last = std::max(last, *h.close_at);
  }
  return last;
}

bool LinkedOutcome::honest_intermediaries_whole() const {
  for (int i = 1; i + 1 < ell; ++i) {
    if (honest[static_cast<std::size_t>(i)] && net[static_cast<std::size_t>(i)] < Money(0)) return false;
  }
  return true;
}

FLinkedOracle::FLinkedOracle(int ell, Money amount, std::vector<bool> honest, std::vector<Money> bal_left)
    : amount_(amount), honest_(std::move(honest)), flags_(static_cast<std::size_t>(ell - 1), Flag::Init) {
  for (int i = 0; i < ell - 1; ++i) {
    const auto k = static_cast<std::size_t>(i);
    bal_.push_back({k < bal_left.size() ? bal_left[k] : Money(0), Money(0)});
  }
}

bool FLinkedOracle::any_corrupt() const {
  return std::any_of(honest_.begin(), honest_.end(), [](bool h) { return !h; });
}

void FLinkedOracle::open(int i, Tick now) {
  auto& f = flags_.at(static_cast<std::size_t>(i));
  if (f != Flag::Init) {
    errors_.push_back("open on hop " + std::to_string(i) + " in state " + std::string(to_string(f)) + " at " +
                      std::to_string(now));
    return;
  }
  auto& b = bal_[static_cast<std::size_t>(i)];
  if (b[0] >= amount_) {
    b[0] -= amount_;
    f = Flag::Inflight;
  } else {
    f = Flag::Cancel;
    short_funded_ = true;
  }
}

void FLinkedOracle::cancel(int i, Tick now) {
  auto& f = flags_.at(static_cast<std::size_t>(i));
  if (!any_corrupt() && !short_funded_) {
    errors_.push_back("cancel of hop " + std::to_string(i) + " with every party honest at " + std::to_string(now));
    return;
  }
  if (f != Flag::Init && f != Flag::Inflight) {
    errors_.push_back("cancel of hop " + std::to_string(i) + " in state " + std::string(to_string(f)));
    return;
  }
  if (f == Flag::Inflight) bal_[static_cast<std::size_t>(i)][0] += amount_;
  f = Flag::Cancel;
}

void FLinkedOracle::complete(int i, Tick now) {
  auto& f = flags_.at(static_cast<std::size_t>(i));
  if (f != Flag::Inflight) {
    errors_.push_back("complete of hop " + std::to_string(i) + " in state " + std::string(to_string(f)) + " at " +
                      std::to_string(now));
    return;
  }
  bal_[static_cast<std::size_t>(i)][1] += amount_;
  f = Flag::Complete;
}

bool FLinkedOracle::check(Tick now) {
  const std::size_t before = errors_.size();
  const std::string at = " at " + std::to_string(now);
  for (int i = 0; i < hops(); ++i) {
    const Flag f = flags_[static_cast<std::size_t>(i)];
    if (f != Flag::Complete && f != Flag::Cancel) {
      errors_.push_back("assertion 1: hop " + std::to_string(i) + " is " + std::string(to_string(f)) + at);
    }
  }
  // Party i+1 sits between hop i (incoming) and hop i+1 (outgoing).
  for (int i = 0; i + 1 < hops(); ++i) {
    if (honest(i + 1) && flags_[static_cast<std::size_t>(i)] == Flag::Cancel &&
        flags_[static_cast<std::size_t>(i + 1)] == Flag::Complete) {
      errors_.push_back("assertion 2: honest party " + std::to_string(i + 1) + " paid without being paid" + at);
    }
  }
  const int ell = hops() + 1;
  if (honest(0) && honest(ell - 1)) {
    const Flag first = flags_.front();
    const Flag last = flags_.back();
    bool bad = first == Flag::Complete && last == Flag::Cancel;
    bool all_mid_honest = true;
    for (int p = 1; p + 1 < ell; ++p) all_mid_honest = all_mid_honest && honest(p);
    if (all_mid_honest && first != last) bad = true;
    if (bad) {
      errors_.push_back("assertion 3: end hops are " + std::string(to_string(first)) + "/" +
                        std::string(to_string(last)) + at);
    }
  }
  return errors_.size() == before;
}

std::vector<std::string> ideal_exceptions(const LinkedOutcome& o, const std::vector<Money>& bal_left) {
  struct Step {
    Tick at;
    int hop;
    int kind;  // 0 open, 1 complete, 2 cancel
  };
  std::vector<Step> steps;
  for (std::size_t k = 0; k < o.hops.size(); ++k) {
    const HopOutcome& h = o.hops[k];
    const int i = static_cast<int>(k);
    if (h.open_at) {
      steps.push_back({*h.open_at, i, 0});
      if (h.close_at) steps.push_back({*h.close_at, i, h.flag == Flag::Complete ? 1 : 2});
    } else if (h.flag == Flag::Cancel && h.close_at) {
      steps.push_back({*h.close_at, i, 0});  // an open the payer could not cover
    }
  }
  std::stable_sort(steps.begin(), steps.end(), [](const Step& a, const Step& b) { return a.at < b.at; });

  std::vector<std::string> out;
  FLinkedOracle oracle(o.ell, o.amount, o.honest, bal_left);
  for (const auto& st : steps) {
    if (st.at > o.check_at) continue;
    switch (st.kind) {
      case 0: {
        oracle.open(st.hop, st.at);
        const bool real_inflight = o.hops[static_cast<std::size_t>(st.hop)].open_at.has_value();
        if (real_inflight != (oracle.flag(st.hop) == Flag::Inflight)) {
          out.push_back("hop " + std::to_string(st.hop) + " open outcome differs from the ideal balance check");
        }
        break;
      }
      case 1: oracle.complete(st.hop, st.at); break;
      default: oracle.cancel(st.hop, st.at); break;
    }
  }
  // The ideal adversary cancels hops that were never opened and abandons
  // hops whose endpoints are both corrupt.
  for (int i = 0; i + 1 < o.ell; ++i) {
    const Flag f = oracle.flag(i);
    const bool both_corrupt = !o.honest[static_cast<std::size_t>(i)] && !o.honest[static_cast<std::size_t>(i + 1)];
    if (f == Flag::Init || (both_corrupt && f == Flag::Inflight)) oracle.cancel(i, o.check_at);
  }
  oracle.check(o.check_at);
  out.insert(out.end(), oracle.errors().begin(), oracle.errors().end());
  return out;
}

namespace {

using pay::Side;

struct Party {
  int i = 0;
  Behavior b = Behavior::Honest;
  bool crashed = false;
  LinkedApp* in = nullptr;   // R side of hop i-1
  LinkedApp* out = nullptr;  // L side of hop i
  std::vector<state::Endpoint*> endpoints;
  std::optional<crypto::Preimage> x;
  std::vector<crypto::Preimage> heard;
  bool x_early = false;
  bool revealed = false;
  bool decided = false;

  bool honest() const { return b == Behavior::Honest; }
  // Whether the party releases value to its counterparty off-chain.
  bool cooperative() const { return b != Behavior::Petty; }
};

class ConstantLocktimeRun {
 public:
  explicit ConstantLocktimeRun(const LinkedRunConfig& cfg)
      : cfg_(cfg),
        sim_(cfg.message_bound),
        chain_(sim_, chain::ChainConfig{cfg.delta}),
        keys_(cfg.backend, cfg.seed),
        sched_rng_(cfg.seed * 0x9E3779B97F4A7C15ULL + 1),
        rng_(cfg.seed * 0xD1B54A32D192ED03ULL + 2) {}

  LinkedOutcome run();

 private:
  int last() const { return cfg_.ell - 1; }
  Party& party_at(int i) { return parties_[static_cast<std::size_t>(i)]; }
  PartyId pid(int i) const { return party(static_cast<std::uint32_t>(i)); }
  Money balance(int hop) const {
    const auto k = static_cast<std::size_t>(hop);
    return k < cfg_.balances.size() ? cfg_.balances[k] : cfg_.amount;
  }

  void setup();
  state::Behavior channel_behavior(int i, Side side);
  void schedule(int i);
  void crash(int i);
  void send_preimage(int from, int to, const crypto::Preimage& x);
  void multicast(int from, const crypto::Preimage& x);
  void publish(int i, const crypto::Preimage& x);
  void on_preimage(int i, const crypto::Preimage& x);
  void on_in_flag(int i, Flag f);
  void on_out_flag(int i, Flag f);
  void scan_heard(int i);
  void recipient_check(int i);
  void at_crit(int i);
  void at_expiry(int i);
  void at_dispute(int i);
  crypto::Preimage bogus() { return crypto::sample_preimage(rng_); }

  LinkedOutcome collect();

  LinkedRunConfig cfg_;
  LinkedTimers timers_;
  sim::Simulator sim_;
  chain::Chain chain_;
  crypto::KeyRegistry keys_;
  std::mt19937_64 sched_rng_;
  std::mt19937_64 rng_;
  ContractPM* pm_ = nullptr;
  std::vector<std::unique_ptr<LinkedHop>> hops_;
  std::vector<Party> parties_;
  crypto::Preimage secret_;
  crypto::Hash h_{};
};

void ConstantLocktimeRun::setup() {
  const int ell = cfg_.ell;
  if (ell < 2) throw std::invalid_argument("a linked payment needs at least two parties");
  cfg_.behaviors.resize(static_cast<std::size_t>(ell), Behavior::Honest);
  sim_.enable_log(cfg_.log_events);
  timers_ = LinkedTimers{3 * cfg_.delta + 12, ell, cfg_.delta, cfg_.unit, cfg_.dispute_pad};

  if (cfg_.random_schedule) {
    sim_.set_delay_policy([this](PartyId, PartyId, Tick base, Tick max) {
      return std::uniform_int_distribution<Tick>(base, max)(sched_rng_);
    });
    chain_.set_confirm_policy([this](const chain::TxRecord&, Tick delta) {
      return std::uniform_int_distribution<Tick>(1, delta)(sched_rng_);
    });
  }

  parties_.resize(static_cast<std::size_t>(ell));
  for (int i = 0; i < ell; ++i) {
    Party& p = party_at(i);
    p.i = i;
    p.b = cfg_.behaviors[static_cast<std::size_t>(i)];
    keys_.register_party(pid(i), p.honest());
    sim_.register_party(pid(i));
  }
  pm_ = &chain_.deploy<ContractPM>();
  for (int i = 0; i + 1 < ell; ++i) {
    hops_.push_back(std::make_unique<LinkedHop>(sim_, chain_, keys_, static_cast<std::uint64_t>(i + 1), pid(i),
                                                pid(i + 1), pm_->address(), cfg_.amount, timers_.expiry()));
    LinkedHop& hop = *hops_.back();
    party_at(i).out = &hop.app(Side::L);
    party_at(i + 1).in = &hop.app(Side::R);
    chain_.mint(pid(i), balance(i));
    hop.deposit(Side::L, balance(i));
  }
  for (int i = 0; i + 1 < ell; ++i) {
    LinkedHop& hop = *hops_[static_cast<std::size_t>(i)];
    hop.start(channel_behavior(i, Side::L), channel_behavior(i + 1, Side::R));
    party_at(i).endpoints.push_back(&hop.channel().endpoint(0));
    party_at(i + 1).endpoints.push_back(&hop.channel().endpoint(1));
    hop.app(Side::L).on_flag = [this, i](Flag f) { on_out_flag(i, f); };
    hop.app(Side::R).on_flag = [this, i](Flag f) { on_in_flag(i + 1, f); };
  }
  for (int i = 0; i < ell; ++i) schedule(i);
}

state::Behavior ConstantLocktimeRun::channel_behavior(int i, Side side) {
  state::Behavior b;
  const Behavior kind = party_at(i).b;
  if (kind == Behavior::RefuseSign) b.offchain = [] { return false; };
  if (kind == Behavior::Petty && side == Side::L) {
    // Never co-sign a state that releases the escrow to the payee.
    b.sign_filter = [](std::int64_t, const Bytes& old_state, const Bytes& new_state) {
      auto o = decode_state(old_state);
      auto n = decode_state(new_state);
      if (!o || !n) return true;
      return !(o->flag == Flag::Inflight && (n->flag == Flag::Complete || n->flag == Flag::Dispute));
    };
  }
  return b;
}

void ConstantLocktimeRun::schedule(int i) {
  Party& p = party_at(i);
  auto at = [this, i](Tick t, std::string_view kind, void (ConstantLocktimeRun::*fn)(int)) {
    sim_.schedule(t, kind, sim::Endpoint::of(pid(i)), [this, i, fn] {
      if (!party_at(i).crashed) (this->*fn)(i);
    });
  };
  if (i == 0) {
    sim_.schedule(timers_.T, "pay", sim::Endpoint::of(pid(0)), [this] {
      Party& s = party_at(0);
      if (s.crashed) return;
      secret_ = crypto::sample_preimage(rng_);
      h_ = crypto::hash_preimage(secret_);
      s.x = secret_;
      s.out->want(Cmd::Open, h_);
      if (s.b == Behavior::WrongPreimage) {
        send_preimage(0, last(), bogus());
      } else if (s.b != Behavior::Withhold) {
        send_preimage(0, last(), secret_);
      }
    });
  }
  if (i > 0) at(timers_.crit(), "t-crit", &ConstantLocktimeRun::at_crit);
  at(timers_.expiry() + timers_.delta, "t-expiry-check", &ConstantLocktimeRun::at_expiry);
  at(timers_.dispute(), "t-dispute", &ConstantLocktimeRun::at_dispute);

  if (p.b == Behavior::Crash) {
    const Tick t = std::uniform_int_distribution<Tick>(timers_.T, timers_.dispute() + timers_.delta)(rng_);
    sim_.schedule(t, "crash", sim::Endpoint::of(pid(i)), [this, i] { crash(i); });
  }
  if (p.b == Behavior::RandomDispute) {
    const int n = std::uniform_int_distribution<int>(1, 3)(rng_);
    for (int k = 0; k < n; ++k) {
      const Tick t = std::uniform_int_distribution<Tick>(timers_.T, timers_.dispute())(rng_);
      const std::size_t which = std::uniform_int_distribution<std::size_t>(0, p.endpoints.size() - 1)(rng_);
      sim_.schedule(t, "spurious-dispute", sim::Endpoint::of(pid(i)), [this, i, which] {
        Party& q = party_at(i);
        if (!q.crashed && which < q.endpoints.size()) q.endpoints[which]->force_dispute();
      });
    }
  }
  if (p.b == Behavior::WrongPreimage) {
    const Tick t = std::uniform_int_distribution<Tick>(timers_.T, timers_.crit())(rng_);
    sim_.schedule(t, "bogus-preimage", sim::Endpoint::of(pid(i)), [this, i] {
      if (!party_at(i).crashed) multicast(i, bogus());
    });
  }
}

void ConstantLocktimeRun::crash(int i) {
  Party& p = party_at(i);
  p.crashed = true;
  for (auto* e : p.endpoints) e->stop();
}

void ConstantLocktimeRun::send_preimage(int from, int to, const crypto::Preimage& x) {
  sim_.send(pid(from), pid(to), "preimage", [this, to, x] { on_preimage(to, x); });
}

void ConstantLocktimeRun::multicast(int from, const crypto::Preimage& x) {
  for (int j = 0; j < cfg_.ell; ++j)
    if (j != from) send_preimage(from, j, x);
}

void ConstantLocktimeRun::publish(int i, const crypto::Preimage& x) {
  ContractPM* pm = pm_;
  chain_.submit(pid(i), pm->address(), "publish", "", Money(0),
                [pm, x](chain::TxContext& ctx) { return pm->publish(ctx, x); });
}

void ConstantLocktimeRun::on_preimage(int i, const crypto::Preimage& x) {
  Party& p = party_at(i);
  if (p.crashed) return;
  const Tick now = sim_.now();
  if (i == last()) {
    if (!p.x) {
      p.x = x;
      recipient_check(i);
    }
    return;
  }
  if (i == 0) {
    if (crypto::hash_preimage(x) == h_ && now < timers_.expiry() && p.cooperative()) p.out->want(Cmd::Complete);
    return;
  }
  p.heard.push_back(x);
  scan_heard(i);
}

void ConstantLocktimeRun::scan_heard(int i) {
  Party& p = party_at(i);
  if (p.x_early || !p.in->hash() || sim_.now() >= timers_.crit()) return;
  for (const auto& x : p.heard) {
    if (crypto::hash_preimage(x) != *p.in->hash()) continue;
    p.x = x;
    p.x_early = true;
    if (p.cooperative()) p.out->want(Cmd::Complete);
    return;
  }
}

void ConstantLocktimeRun::on_in_flag(int i, Flag f) {
  Party& p = party_at(i);
  if (p.crashed || f != Flag::Inflight) return;
  if (p.b == Behavior::CancelEarly) {
    p.in->want(Cmd::Cancel);
    return;
  }
  if (i == last()) {
    recipient_check(i);
    return;
  }
  if (sim_.now() >= timers_.crit()) {
    // Too late to forward safely.
    if (p.cooperative()) p.in->want(Cmd::Cancel);
    return;
  }
  if (p.b == Behavior::WrongPreimage) {
    p.out->want(Cmd::Open, crypto::hash_preimage(bogus()));
  } else {
    p.out->want(Cmd::Open, *p.in->hash());
  }
  scan_heard(i);
}

void ConstantLocktimeRun::on_out_flag(int i, Flag f) {
  Party& p = party_at(i);
  if (p.crashed || i == 0 || f != Flag::Cancel) return;
  if (p.cooperative()) p.in->want(Cmd::Cancel);
}

void ConstantLocktimeRun::recipient_check(int i) {
  Party& p = party_at(i);
  if (p.decided || p.crashed || p.in->flag() != Flag::Inflight) return;
  const Tick now = sim_.now();
  const auto& h = p.in->hash();
  const bool match = p.x && h && crypto::hash_preimage(*p.x) == *h;
  if (match && now <= timers_.crit()) {
    p.decided = true;
    p.revealed = true;
    switch (p.b) {
      case Behavior::Petty:
      case Behavior::Withhold:
        break;
      case Behavior::PublishLate: {
        const crypto::Preimage x = *p.x;
        sim_.schedule(timers_.expiry() + 1, "late-reveal", sim::Endpoint::of(pid(i)), [this, i, x] {
          if (party_at(i).crashed) return;
          multicast(i, x);
          publish(i, x);
        });
        break;
      }
      case Behavior::WrongPreimage:
        multicast(i, bogus());
        break;
      default:
        multicast(i, *p.x);
    }
  } else if (now > timers_.crit() || (p.x && !match)) {
    p.decided = true;
    if (p.cooperative() && p.b != Behavior::Withhold) p.in->want(Cmd::Cancel);
  }
}

void ConstantLocktimeRun::at_crit(int i) {
  Party& p = party_at(i);
  const bool knows = i == last() ? p.revealed : p.x_early;
  const bool publishes = p.b != Behavior::Withhold && p.b != Behavior::PublishLate;
  if (knows && publishes && p.in->flag() == Flag::Inflight) publish(i, *p.x);
  if (i == last() && !p.decided && p.in->flag() == Flag::Inflight) {
    p.decided = true;
    if (p.cooperative() && p.b != Behavior::Withhold) p.in->want(Cmd::Cancel);
  }
}

void ConstantLocktimeRun::at_expiry(int i) {
  Party& p = party_at(i);
  if (!p.cooperative() || i == last()) return;
  if (i == 0) {
    if (pm_->published(h_, timers_.expiry())) p.out->want(Cmd::Complete);
    return;
  }
  if (!p.in->hash()) return;
  if (pm_->published(*p.in->hash(), timers_.expiry())) {
    p.out->want(Cmd::Complete);
  } else {
    p.in->want(Cmd::Cancel);
  }
}

void ConstantLocktimeRun::at_dispute(int i) {
  Party& p = party_at(i);
  if (p.in && p.in->flag() == Flag::Inflight) p.in->want(Cmd::Dispute);
  if (p.out && p.out->flag() == Flag::Inflight) p.out->want(Cmd::Dispute);
}

LinkedOutcome ConstantLocktimeRun::run() {
  setup();
  sim_.run(check_time(timers_, false) + 4 * cfg_.delta + 40);
  for (auto& h : hops_) h->channel().stop();
  return collect();
}

LinkedOutcome ConstantLocktimeRun::collect() {
  LinkedOutcome o;
  o.model = Model::ConstantLocktime;
  o.ell = cfg_.ell;
  o.amount = cfg_.amount;
  o.delta = cfg_.delta;
  o.T = timers_.T;
  o.expiry = timers_.expiry();
  o.dispute = timers_.dispute();
  bool all_honest = true;
  for (const auto& p : parties_) {
    o.honest.push_back(p.honest());
    all_honest = all_honest && p.honest();
  }
  o.check_at = check_time(timers_, all_honest);
  o.net.assign(static_cast<std::size_t>(cfg_.ell), Money(0));

  for (std::size_t k = 0; k < hops_.size(); ++k) {
    LinkedHop& hop = *hops_[k];
    const int i = static_cast<int>(k);
    HopOutcome h;
    // A crashed endpoint may hold a local commit the chain later superseded,
    // so its view only counts when no live endpoint is left.
    std::vector<Side> views;
    if (!party_at(i).crashed) views.push_back(Side::L);
    if (!party_at(i + 1).crashed) views.push_back(Side::R);
    if (views.empty()) views = {Side::L, Side::R};
    auto first_seen = [&](Flag f) -> std::optional<Tick> {
      std::optional<Tick> t;
      for (Side s : views) {
        const auto& seen = hop.app(s).seen();
        auto it = seen.find(f);
        if (it != seen.end() && (!t || it->second < *t)) t = it->second;
      }
      return t;
    };
    for (Flag f : {Flag::Inflight, Flag::Complete, Flag::Dispute}) {
      auto t = first_seen(f);
      if (t && (!h.open_at || *t < *h.open_at)) h.open_at = t;
    }
    const auto complete = first_seen(Flag::Complete);
    const auto cancel = first_seen(Flag::Cancel);
    const auto dispute = first_seen(Flag::Dispute);
    const auto& res = hop.contract().resolution();
    if (complete) {
      h.flag = Flag::Complete;
      h.close_at = complete;
    } else if (cancel) {
      h.flag = Flag::Cancel;
      h.close_at = cancel;
    } else if (dispute || res) {
      h.via_dispute = true;
      if (res) {
        h.flag = res->to_right ? Flag::Complete : Flag::Cancel;
        h.close_at = res->at;
      } else {
        h.flag = Flag::Dispute;
      }
    } else if (h.open_at) {
      h.flag = Flag::Inflight;
    }
    o.hops.push_back(h);

    // Funds of both sides in the latest state either party holds.
    const LinkedApp& a = hop.app(Side::L);
    const LinkedApp& b = hop.app(Side::R);
    LinkedState s = a.last_round() >= b.last_round() ? a.last_state().value_or(LinkedState{})
                                                     : b.last_state().value_or(LinkedState{});
    const ContractLinked& c = hop.contract();
    Money fl = c.deposits().d[0] + s.core.cred[0] + c.paid_out(Side::L);
    Money fr = c.deposits().d[1] + s.core.cred[1] + c.paid_out(Side::R);
    if (s.flag == Flag::Inflight || (s.flag == Flag::Dispute && !res)) fl += cfg_.amount;
    o.net[k] += fl - balance(i);
    o.net[k + 1] += fr;
    if (fl + fr != balance(i)) o.conserved = false;
    // A resolved dispute re-books the locked amount as a deposit without new coins.
    const Money rebooked = res ? cfg_.amount : Money(0);
    if (chain_.escrow(c.address()) != c.deposits().d[0] + c.deposits().d[1] - rebooked - c.paid_out(Side::L) -
                                          c.paid_out(Side::R)) {
      o.conserved = false;
    }
    o.safety_violations += hop.channel().stats().safety_violations;
    o.channel_disputes += hop.channel().stats().disputes;
    for (const auto& d : hop.channel().disputes()) o.disputes.push_back({i, d});
  }
  if (!chain_.conserved() || chain_.conservation_violations() != 0) o.conserved = false;
  o.signature_forgeries = keys_.audit_violations();

  for (const auto& tx : chain_.transactions()) {
    ++o.txs;
    if (tx.method == "deposit") ++o.deposit_txs;
    if (tx.target == pm_->address()) ++o.pm_txs;
  }

  std::vector<Money> bal_left;
  for (int i = 0; i + 1 < cfg_.ell; ++i) bal_left.push_back(balance(i));
  o.exceptions = ideal_exceptions(o, bal_left);
  o.bal_left = std::move(bal_left);
  if (cfg_.log_events) {
    o.trace = sim_.log_text();
    o.chain_trace = chain_.trace_jsonl() + chain_.ledger_jsonl();
  }
  return o;
}

}  // namespace

LinkedOutcome run_linked_payment(const LinkedRunConfig& cfg) {
  ConstantLocktimeRun run(cfg);
  return run.run();
}

}  // namespace chanlab::linked
