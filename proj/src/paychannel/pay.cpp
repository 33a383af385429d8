#include <stdexcept>

#include "chanlab/paychannel.hpp"

namespace chanlab::pay {

namespace {

void write_list(codec::Writer& w, const std::vector<Money>& xs) {
  w.i64(static_cast<std::int64_t>(xs.size()));
  for (Money m : xs) w.money(m);
}

std::optional<std::vector<Money>> read_list(codec::Reader& r) {
  auto n = r.i64();
  if (!n || *n < 0 || *n > 1 << 20) return std::nullopt;
  std::vector<Money> xs;
  xs.reserve(static_cast<std::size_t>(*n));
  for (std::int64_t k = 0; k < *n; ++k) {
    auto m = r.money();
    if (!m) return std::nullopt;
    xs.push_back(*m);
  }
  return xs;
}

template <class T, class F>
std::optional<T> decode_all(const Bytes& b, F&& f) {
  codec::Reader r(b);
  auto v = f(r);
  if (!v || !r.at_end()) return std::nullopt;
  return v;
}

std::optional<std::array<Money, 2>> read_pair(codec::Reader& r) {
  auto a = r.money();
  auto b = r.money();
  if (!a || !b) return std::nullopt;
  return std::array<Money, 2>{*a, *b};
}

}  // namespace

void write(codec::Writer& w, const PayCoreState& s) {
  for (std::size_t i = 0; i < 2; ++i) {
    w.money(s.cred[i]);
    write_list(w, s.arr[i]);
  }
}

std::optional<PayCoreState> read_core(codec::Reader& r) {
  PayCoreState s;
  for (std::size_t i = 0; i < 2; ++i) {
    auto c = r.money();
    auto a = read_list(r);
    if (!c || !a) return std::nullopt;
    s.cred[i] = *c;
    s.arr[i] = std::move(*a);
  }
  return s;
}

void write(codec::Writer& w, const PayInput& in) {
  write_list(w, in.arr);
  w.money(in.wd);
}

std::optional<PayInput> read_input(codec::Reader& r) {
  auto a = read_list(r);
  auto wd = r.money();
  if (!a || !wd || *wd < Money(0)) return std::nullopt;
  for (Money m : *a)
    if (m <= Money(0)) return std::nullopt;
  return PayInput{std::move(*a), *wd};
}

Bytes encode(const PayCoreState& s) {
  codec::Writer w;
  write(w, s);
  return w.take();
}

Bytes encode(const PayInput& in) {
  codec::Writer w;
  write(w, in);
  return w.take();
}

Bytes encode(const Deposits& d) {
  codec::Writer w;
  w.money(d.d[0]).money(d.d[1]);
  return w.take();
}

Bytes encode(const Withdrawals& x) {
  codec::Writer w;
  w.money(x.wd[0]).money(x.wd[1]);
  return w.take();
}

std::optional<PayCoreState> decode_state(const Bytes& b) { return decode_all<PayCoreState>(b, read_core); }
std::optional<PayInput> decode_input(const Bytes& b) { return decode_all<PayInput>(b, read_input); }

std::optional<Deposits> decode_deposits(const Bytes& b) {
  return decode_all<Deposits>(b, [](codec::Reader& r) -> std::optional<Deposits> {
    auto p = read_pair(r);
    if (!p) return std::nullopt;
    return Deposits{*p};
  });
}

std::optional<Withdrawals> decode_withdrawals(const Bytes& b) {
  return decode_all<Withdrawals>(b, [](codec::Reader& r) -> std::optional<Withdrawals> {
    auto p = read_pair(r);
    if (!p || (*p)[0] < Money(0) || (*p)[1] < Money(0)) return std::nullopt;
    return Withdrawals{*p};
  });
}

std::optional<Withdrawals> apply_core(PayCoreState& s, std::array<PayInput, 2> in, const Deposits& dep) {
  std::array<Money, 2> pay{};
  for (std::size_t i = 0; i < 2; ++i) {
    const Money avail = dep.d[i] + s.cred[i];
    s.arr[i].clear();
    for (Money e : in[i].arr) {
      if (e + pay[i] <= avail) {
        s.arr[i].push_back(e);
        pay[i] += e;
      }
    }
    if (in[i].wd > avail - pay[i]) in[i].wd = Money(0);
  }
  s.cred[0] += pay[1] - pay[0] - in[0].wd;
  s.cred[1] += pay[0] - pay[1] - in[1].wd;
  if (in[0].wd == Money(0) && in[1].wd == Money(0)) return std::nullopt;
  return Withdrawals{{in[0].wd, in[1].wd}};
}

state::UpdateResult PayUpdate::apply(const Bytes& state, const std::vector<state::Input>& inputs, const Bytes& aux_in,
                                     Tick) const {
  PayCoreState s = decode_state(state).value_or(PayCoreState{});
  const Deposits dep = decode_deposits(aux_in).value_or(Deposits{});
  std::array<PayInput, 2> in{};
  for (std::size_t i = 0; i < 2 && i < inputs.size(); ++i) {
    if (inputs[i]) in[i] = decode_input(*inputs[i]).value_or(PayInput{});
  }
  auto wd = apply_core(s, std::move(in), dep);
  state::UpdateResult res{encode(s), std::nullopt};
  if (wd) res.out = encode(*wd);
  return res;
}

std::int64_t ContractPay::field(std::string_view name) const {
  if (name == "deposits_L") return deposits_.d[0].units();
  if (name == "deposits_R") return deposits_.d[1].units();
  return Contract::field(name);
}

std::optional<Side> ContractPay::side_of(PartyId p) const {
  if (p == parties_[0]) return Side::L;
  if (p == parties_[1]) return Side::R;
  return std::nullopt;
}

void ContractPay::credit(chain::TxContext& ctx, Side s, Money x) {
  deposits_.d[idx(s)] += x;
  ctx.emit(state::kAuxInputEvent, "deposits=" + to_string(deposits_.d[0]) + "," + to_string(deposits_.d[1]),
           encode(deposits_));
}

bool ContractPay::deposit(chain::TxContext& ctx) {
  auto s = side_of(ctx.submitter);
  if (!s) return false;
  credit(ctx, *s, ctx.coins);
  return true;
}

void ContractPay::pay_withdrawals(chain::TxContext& ctx, const Withdrawals& w) {
  for (std::size_t i = 0; i < 2; ++i) {
    if (w.wd[i] == Money(0)) continue;
    paid_out_[i] += w.wd[i];
    payout_log_.push_back({ctx.now, static_cast<Side>(i), w.wd[i]});
    ctx.pay(parties_[i], w.wd[i]);
  }
}

void ContractPay::aux_output(chain::TxContext& ctx, const Bytes& out) {
  if (auto w = decode_withdrawals(out)) pay_withdrawals(ctx, *w);
}

Money PayLedger::settled_deposits(Tick now) const {
  Money d;
  for (const auto& [t, v] : seen_) {
    if (t + settle_ > now) break;
    d = v.d[idx(side_)];
  }
  return d;
}

Money PayLedger::available(Tick now) const {
  return settled_deposits(now) + received_ + extra_ - sent_ - wd_total_;
}

bool PayLedger::pay(Money x, Tick now) {
  if (x <= Money(0) || x > available(now)) return false;
  arr_.push_back(x);
  sent_ += x;
  return true;
}

bool PayLedger::withdraw(Money x, Tick now) {
  if (x <= Money(0) || x > available(now)) return false;
  wd_pending_ += x;
  wd_total_ += x;
  return true;
}

PayInput PayLedger::take_input() {
  PayInput in{std::move(arr_), wd_pending_};
  arr_.clear();
  wd_pending_ = Money(0);
  return in;
}

void PayLedger::on_state(std::int64_t round, const PayCoreState& s, Tick now) {
  for (Money e : s.arr[idx(other(side_))]) {
    receipts_.push_back({now, e, round});
    received_ += e;
  }
}

state::Input PayApp::next_input(std::int64_t round) {
  PayInput in = ledger_.take_input();
  if (override_input) return override_input(round, in);
  if (in.empty()) return std::nullopt;
  return encode(in);
}

void PayApp::on_state(std::int64_t round, const Bytes& state, const std::optional<Bytes>&, state::CommitPath) {
  if (auto s = decode_state(state)) ledger_.on_state(round, *s, sim_.now());
}

PayChannel::PayChannel(sim::Simulator& sim, chain::Chain& chain, crypto::KeyRegistry& keys, PayChannelConfig cfg)
    : sim_(sim), chain_(chain), cfg_(cfg) {
  contract_ = &chain.deploy<ContractPay>(cfg.left, cfg.right);
  state::ChannelConfig cc;
  cc.sid = cfg.sid;
  cc.parties = {cfg.left, cfg.right};
  cc.timing = cfg.timing;
  channel_ = std::make_unique<state::StateChannel>(sim, chain, keys, cc, std::make_shared<PayUpdate>(),
                                                   contract_->address());
  for (Side s : {Side::L, Side::R}) {
    apps_[idx(s)] = std::make_unique<PayApp>(s, sim, chain.delta() + 1);
    PayApp* app = apps_[idx(s)].get();
    chain.subscribe(party_of(s), contract_->address(), [app, &sim](const chain::ChainEvent& ev) {
      if (ev.name != state::kAuxInputEvent) return;
      if (auto d = decode_deposits(std::any_cast<const Bytes&>(ev.payload))) app->ledger().observe_deposits(*d, sim.now());
    });
  }
}

void PayChannel::start(state::Behavior left, state::Behavior right) {
  channel_->attach(*apps_[0], std::move(left));
  channel_->attach(*apps_[1], std::move(right));
  channel_->start();
}

chain::SubmitStatus PayChannel::deposit(Side s, Money x) {
  ContractPay* c = contract_;
  return chain_.submit(party_of(s), c->address(), "deposit", to_string(x), x,
                       [c](chain::TxContext& ctx) { return c->deposit(ctx); });
}

PayBounds PayBounds::for_delta(Tick delta) {
  // Honest: wait for the next round boundary (4), then one round until the
  // follower holds COMMIT (5).
  // Corrupt: next boundary, fast-path timeouts, then dispute, deadline and
  // resolve each take up to delta, plus the event hop.
  return PayBounds{9, 3 * delta + 16, 4 * delta + 16};
}

bool FPayOracle::pay(Side s, Money x, Tick now) {
  if (x <= Money(0) || bal_[idx(s)] < x) return false;
  bal_[idx(s)] -= x;
  const Tick bound = honest_[0] && honest_[1] ? bounds_.honest_receive : bounds_.corrupt_receive;
  pending_pay_[idx(s)].push_back({x, now + bound});
  return true;
}

bool FPayOracle::withdraw(Side s, Money x, Tick now) {
  if (x <= Money(0) || bal_[idx(s)] < x) return false;
  bal_[idx(s)] -= x;
  pending_wd_[idx(s)].push_back({x, now + bounds_.withdraw});
  return true;
}

bool FPayOracle::deliver(Side from, Money x, Tick now) {
  auto& q = pending_pay_[idx(from)];
  if (q.empty() || q.front().amount != x) {
    errors_.push_back("unexpected delivery of " + to_string(x) + " at " + std::to_string(now));
    return false;
  }
  const bool late = now > q.front().deadline;
  if (late) errors_.push_back("late delivery of " + to_string(x) + " at " + std::to_string(now));
  q.pop_front();
  bal_[idx(other(from))] += x;
  return !late;
}

bool FPayOracle::payout(Side s, Money x, Tick now) {
  paid_[idx(s)] += x;
  Money owed;
  for (const auto& p : pending_wd_[idx(s)]) owed += p.amount;
  if (paid_[idx(s)] > owed) {
    errors_.push_back("payout of " + to_string(x) + " at " + std::to_string(now) + " exceeds withdrawals");
    return false;
  }
  return true;
}

Money FPayOracle::outstanding_withdrawals(Side s) const {
  Money owed;
  for (const auto& p : pending_wd_[idx(s)]) owed += p.amount;
  return owed - paid_[idx(s)];
}

bool FPayOracle::check(Tick now) {
  bool ok = true;
  for (std::size_t i = 0; i < 2; ++i) {
    auto& q = pending_pay_[i];
    if (!q.empty() && q.front().deadline < now) {
      if (!q.front().flagged) {
        errors_.push_back("payment of " + to_string(q.front().amount) + " overdue at " + std::to_string(now));
        q.front().flagged = true;
      }
      ok = false;
    }
    Money due;
    for (const auto& p : pending_wd_[i])
      if (p.deadline < now) due += p.amount;
    if (due > paid_[i]) {
      if (!wd_flagged_[i]) errors_.push_back("withdrawal overdue at " + std::to_string(now));
      wd_flagged_[i] = true;
      ok = false;
    }
  }
  return ok;
}

}  // namespace chanlab::pay
