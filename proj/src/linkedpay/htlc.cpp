#include <algorithm>
#include <random>

#include "chanlab/linkedpay.hpp"

namespace chanlab::linked {

std::vector<Tick> htlc_deadlines(const LinkedTimers& t, Tick grace) {
  const auto hops = static_cast<std::size_t>(std::max(t.ell - 1, 0));
  std::vector<Tick> d(hops);
  if (hops == 0) return d;
  d[hops - 1] = t.expiry();
  for (std::size_t k = hops - 1; k-- > 0;) d[k] = d[k + 1] + t.delta + grace;
  return d;
}

namespace {

// On-chain adjudicator of one hop. register_commitment stands in for the
// signed commitment transaction both endpoints hold off-chain.
class HtlcContract : public chain::Contract {
 public:
  HtlcContract(PartyId left, PartyId right) : left_(left), right_(right) {}

  std::string_view type_name() const override { return "Contract_HTLC"; }
  std::vector<std::string> field_names() const override { return {"resolved"}; }
  std::int64_t field(std::string_view name) const override {
    if (name == "resolved") return resolved_ ? 1 : 0;
    return Contract::field(name);
  }

  void register_commitment(const crypto::Hash& h, Tick deadline) {
    h_ = h;
    deadline_ = deadline;
  }

  bool claim(chain::TxContext& ctx, const crypto::Preimage& x) {
    if (resolved_ || !h_ || ctx.submitter != right_ || ctx.now > deadline_) return false;
    if (crypto::hash_preimage(x) != *h_) return false;
    resolved_ = true;
    ctx.emit("Claimed", "", x);
    return true;
  }

  bool refund(chain::TxContext& ctx) {
    if (resolved_ || !h_ || ctx.submitter != left_ || ctx.now <= deadline_) return false;
    resolved_ = true;
    ctx.emit("Refunded", "");
    return true;
  }

 private:
  PartyId left_;
  PartyId right_;
  std::optional<crypto::Hash> h_;
  Tick deadline_ = 0;
  bool resolved_ = false;
};

struct Hop {
  HtlcContract* contract = nullptr;
  Tick deadline = 0;
  crypto::Hash h{};
  HopOutcome out;
  bool inflight() const { return out.flag == Flag::Inflight; }
};

struct Node {
  Behavior b = Behavior::Honest;
  bool crashed = false;
  std::optional<crypto::Preimage> x;
  bool honest() const { return b == Behavior::Honest; }
};

class HtlcRun {
 public:
  explicit HtlcRun(const LinkedRunConfig& cfg)
      : cfg_(cfg),
        sim_(cfg.message_bound),
        chain_(sim_, chain::ChainConfig{cfg.delta}),
        sched_rng_(cfg.seed * 0x9E3779B97F4A7C15ULL + 3),
        rng_(cfg.seed * 0xD1B54A32D192ED03ULL + 4) {}

  LinkedOutcome run();

 private:
  int last() const { return cfg_.ell - 1; }
  PartyId pid(int i) const { return party(static_cast<std::uint32_t>(i)); }
  Node& node(int i) { return nodes_[static_cast<std::size_t>(i)]; }
  Hop& hop(int i) { return hops_[static_cast<std::size_t>(i)]; }
  Money balance(int i) const {
    const auto k = static_cast<std::size_t>(i);
    return k < cfg_.balances.size() ? cfg_.balances[k] : cfg_.amount;
  }
  void at(Tick t, int who, std::string_view kind, std::function<void()> fn) {
    sim_.schedule(std::max(t, sim_.now()), kind, sim::Endpoint::of(pid(who)), [this, who, fn = std::move(fn)] {
      if (!node(who).crashed) fn();
    });
  }
  void send(int from, int to, std::string_view kind, std::function<void()> fn) {
    if (node(from).crashed) return;
    sim_.send(pid(from), pid(to), kind, [this, to, fn = std::move(fn)] {
      if (!node(to).crashed) fn();
    });
  }

  void add(int i, const crypto::Hash& h);
  void on_add(int j);
  void learn(int i, const crypto::Preimage& x);
  void settle_incoming(int j, const crypto::Preimage& x);
  void fail_upstream(int j);
  void claim(int i, const crypto::Preimage& x);
  void close(int i, Flag f, bool onchain);

  LinkedRunConfig cfg_;
  LinkedTimers timers_;
  sim::Simulator sim_;
  chain::Chain chain_;
  std::mt19937_64 sched_rng_;
  std::mt19937_64 rng_;
  std::vector<Hop> hops_;
  std::vector<Node> nodes_;
};

void HtlcRun::close(int i, Flag f, bool onchain) {
  Hop& hp = hop(i);
  if (!hp.inflight()) return;
  hp.out.flag = f;
  hp.out.close_at = sim_.now();
  hp.out.via_dispute = onchain;
}

void HtlcRun::add(int i, const crypto::Hash& h) {
  Hop& hp = hop(i);
  hp.h = h;
  if (balance(i) < cfg_.amount) {
    hp.out.flag = Flag::Cancel;
    hp.out.close_at = sim_.now();
    if (i > 0) fail_upstream(i);
    return;
  }
  send(i, i + 1, "htlc-add", [this, i] {
    Hop& q = hop(i);
    if (q.out.flag != Flag::Init) return;
    q.contract->register_commitment(q.h, q.deadline);
    q.out.flag = Flag::Inflight;
    q.out.open_at = sim_.now();
    // The payer reclaims the escrow once the deadline has passed.
    at(q.deadline + 1, i, "htlc-refund", [this, i] {
      if (!hop(i).inflight()) return;
      HtlcContract* c = hop(i).contract;
      chain_.submit(pid(i), c->address(), "refund", "", Money(0), [c](chain::TxContext& ctx) { return c->refund(ctx); });
    });
    on_add(i + 1);
  });
}

void HtlcRun::on_add(int j) {
  Node& n = node(j);
  Hop& in = hop(j - 1);
  if (n.b == Behavior::CancelEarly) {
    fail_upstream(j);
    return;
  }
  if (j == last()) {
    if (!n.x || crypto::hash_preimage(*n.x) != in.h) {
      fail_upstream(j);
      return;
    }
    settle_incoming(j, *n.x);
    return;
  }
  if (sim_.now() + cfg_.delta >= hop(j).deadline) {
    fail_upstream(j);
    return;
  }
  const crypto::Hash h = n.b == Behavior::WrongPreimage ? crypto::hash_preimage(crypto::sample_preimage(rng_)) : in.h;
  add(j, h);
}

// Party j holds x for its incoming hop j-1 and collects the payment.
void HtlcRun::settle_incoming(int j, const crypto::Preimage& x) {
  Node& n = node(j);
  const int i = j - 1;
  const Tick deadline = hop(i).deadline;
  switch (n.b) {
    case Behavior::Withhold:
      return;
    case Behavior::Petty:
      at(deadline - cfg_.delta, j, "htlc-claim-late", [this, i, x] { claim(i, x); });
      return;
    case Behavior::PublishLate:
      at(deadline + 1, j, "htlc-claim-late", [this, i, x] { claim(i, x); });
      return;
    default:
      break;
  }
  send(j, i, "htlc-fulfill", [this, i, x] {
    Node& payer = node(i);
    Hop& hp = hop(i);
    if (payer.b == Behavior::Petty || !hp.inflight() || sim_.now() > hp.deadline) return;
    if (crypto::hash_preimage(x) != hp.h) return;
    close(i, Flag::Complete, false);
    learn(i, x);
  });
  // Fall back to the chain if the payer does not settle promptly.
  at(sim_.now() + 2 * cfg_.message_bound + 1, j, "htlc-fallback", [this, i, x] {
    if (hop(i).inflight()) claim(i, x);
  });
}

void HtlcRun::fail_upstream(int j) {
  const int i = j - 1;
  send(j, i, "htlc-fail", [this, i] {
    if (!hop(i).inflight()) return;
    close(i, Flag::Cancel, false);
    if (i > 0 && node(i).b != Behavior::Petty) fail_upstream(i);
  });
}

void HtlcRun::claim(int i, const crypto::Preimage& x) {
  HtlcContract* c = hop(i).contract;
  chain_.submit(pid(i + 1), c->address(), "claim", "", Money(0),
                [c, x](chain::TxContext& ctx) { return c->claim(ctx, x); });
}

// Party i (payer of hop i) has learned the preimage.
void HtlcRun::learn(int i, const crypto::Preimage& x) {
  Node& n = node(i);
  if (n.crashed || n.x || i == 0) return;
  n.x = x;
  if (crypto::hash_preimage(x) != hop(i - 1).h) return;
  settle_incoming(i, x);
}

LinkedOutcome HtlcRun::run() {
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
  nodes_.resize(static_cast<std::size_t>(ell));
  for (int i = 0; i < ell; ++i) {
    node(i).b = cfg_.behaviors[static_cast<std::size_t>(i)];
    sim_.register_party(pid(i));
  }
  const auto deadlines = htlc_deadlines(timers_);
  hops_.resize(deadlines.size());
  for (int i = 0; i + 1 < ell; ++i) {
    Hop& hp = hop(i);
    hp.deadline = deadlines[static_cast<std::size_t>(i)];
    hp.contract = &chain_.deploy<HtlcContract>(pid(i), pid(i + 1));
    chain_.subscribe(pid(i), hp.contract->address(), [this, i](const chain::ChainEvent& ev) {
      if (ev.name == "Claimed") {
        close(i, Flag::Complete, true);
        if (!node(i).crashed) learn(i, std::any_cast<const crypto::Preimage&>(ev.payload));
      } else if (ev.name == "Refunded") {
        close(i, Flag::Cancel, true);
        if (i > 0 && !node(i).crashed && node(i).b != Behavior::Petty) fail_upstream(i);
      }
    });
  }
  for (int i = 0; i < ell; ++i) {
    if (node(i).b != Behavior::Crash) continue;
    const Tick t = std::uniform_int_distribution<Tick>(timers_.T, deadlines.front() + cfg_.delta)(rng_);
    sim_.schedule(t, "crash", sim::Endpoint::of(pid(i)), [this, i] { node(i).crashed = true; });
  }
  sim_.schedule(timers_.T, "pay", sim::Endpoint::of(pid(0)), [this] {
    if (node(0).crashed) return;
    const crypto::Preimage x = crypto::sample_preimage(rng_);
    node(0).x = x;
    if (node(0).b != Behavior::Withhold) {
      const crypto::Preimage invoice = node(0).b == Behavior::WrongPreimage ? crypto::sample_preimage(rng_) : x;
      send(0, last(), "invoice", [this, invoice] { node(last()).x = invoice; });
    }
    // The invoice travels ahead of the first add.
    at(sim_.now() + cfg_.message_bound, 0, "htlc-start", [this, x] { add(0, crypto::hash_preimage(x)); });
  });

  const Tick check_at = deadlines.front() + 3 * cfg_.delta + 8 * cfg_.unit;
  sim_.run(check_at + 2 * cfg_.delta + 20);

  LinkedOutcome o;
  o.model = Model::StaggeredHtlc;
  o.ell = ell;
  o.amount = cfg_.amount;
  o.delta = cfg_.delta;
  o.T = timers_.T;
  o.expiry = deadlines.front();
  o.dispute = deadlines.back();
  o.check_at = check_at;
  o.net.assign(static_cast<std::size_t>(ell), Money(0));
  for (int i = 0; i < ell; ++i) o.honest.push_back(node(i).honest());
  std::vector<Money> bal_left;
  for (int i = 0; i + 1 < ell; ++i) {
    o.hops.push_back(hop(i).out);
    bal_left.push_back(balance(i));
    if (hop(i).out.flag == Flag::Complete) {
      o.net[static_cast<std::size_t>(i)] -= cfg_.amount;
      o.net[static_cast<std::size_t>(i + 1)] += cfg_.amount;
    }
  }
  for (const auto& tx : chain_.transactions()) {
    (void)tx;
    ++o.txs;
  }
  o.conserved = chain_.conserved() && chain_.conservation_violations() == 0;
  o.exceptions = ideal_exceptions(o, bal_left);
  o.bal_left = std::move(bal_left);
  if (cfg_.log_events) {
    o.trace = sim_.log_text();
    o.chain_trace = chain_.trace_jsonl() + chain_.ledger_jsonl();
  }
  return o;
}

}  // namespace

LinkedOutcome run_htlc_baseline(const LinkedRunConfig& cfg) {
  HtlcRun run(cfg);
  return run.run();
}

}  // namespace chanlab::linked
