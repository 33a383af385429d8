#include "chanlab/linkedpay.hpp"

namespace chanlab::linked {

namespace {

void write_hash(codec::Writer& w, const crypto::Hash& h) { w.bytes(h.bytes()); }

std::optional<crypto::Hash> read_hash(codec::Reader& r) {
  auto b = r.bytes();
  if (!b) return std::nullopt;
  return crypto::Hash::from_bytes(*b);
}

template <class T, class F>
std::optional<T> decode_all(const Bytes& b, F&& f) {
  codec::Reader r(b);
  auto v = f(r);
  if (!v || !r.at_end()) return std::nullopt;
  return v;
}

}  // namespace

std::string_view to_string(Flag f) {
  switch (f) {
    case Flag::Init: return "init";
    case Flag::Inflight: return "inflight";
    case Flag::Complete: return "complete";
    case Flag::Cancel: return "cancel";
    case Flag::Dispute: return "dispute";
  }
  return "?";
}

Bytes encode(const LinkedState& s) {
  codec::Writer w;
  w.u8(static_cast<std::uint8_t>(s.flag));
  w.u8(s.h ? 1 : 0);
  if (s.h) write_hash(w, *s.h);
  pay::write(w, s.core);
  return w.take();
}

Bytes encode(const LinkedInput& in) {
  codec::Writer w;
  w.u8(static_cast<std::uint8_t>(in.cmd));
  write_hash(w, in.h);
  pay::write(w, in.pay);
  return w.take();
}

Bytes encode(const LinkedOut& o) {
  codec::Writer w;
  w.u8(o.dispute ? 1 : 0);
  if (o.dispute) {
    write_hash(w, o.dispute->h);
    w.money(o.dispute->amount);
  }
  w.u8(o.pay ? 1 : 0);
  if (o.pay) w.money(o.pay->wd[0]).money(o.pay->wd[1]);
  return w.take();
}

std::optional<LinkedState> decode_state(const Bytes& b) {
  return decode_all<LinkedState>(b, [](codec::Reader& r) -> std::optional<LinkedState> {
    LinkedState s;
    auto f = r.u8();
    auto has_h = r.u8();
    if (!f || *f > 4 || !has_h || *has_h > 1) return std::nullopt;
    s.flag = static_cast<Flag>(*f);
    if (*has_h) {
      s.h = read_hash(r);
      if (!s.h) return std::nullopt;
    }
    auto core = pay::read_core(r);
    if (!core) return std::nullopt;
    s.core = std::move(*core);
    return s;
  });
}

std::optional<LinkedInput> decode_input(const Bytes& b) {
  return decode_all<LinkedInput>(b, [](codec::Reader& r) -> std::optional<LinkedInput> {
    auto c = r.u8();
    auto h = read_hash(r);
    if (!c || *c > 4 || !h) return std::nullopt;
    auto p = pay::read_input(r);
    if (!p) return std::nullopt;
    return LinkedInput{static_cast<Cmd>(*c), *h, std::move(*p)};
  });
}

std::optional<LinkedOut> decode_out(const Bytes& b) {
  return decode_all<LinkedOut>(b, [](codec::Reader& r) -> std::optional<LinkedOut> {
    LinkedOut o;
    auto has_d = r.u8();
    if (!has_d || *has_d > 1) return std::nullopt;
    if (*has_d) {
      auto h = read_hash(r);
      auto m = r.money();
      if (!h || !m || *m < Money(0)) return std::nullopt;
      o.dispute = DisputeOut{*h, *m};
    }
    auto has_p = r.u8();
    if (!has_p || *has_p > 1) return std::nullopt;
    if (*has_p) {
      auto a = r.money();
      auto c = r.money();
      if (!a || !c || *a < Money(0) || *c < Money(0)) return std::nullopt;
      o.pay = pay::Withdrawals{{*a, *c}};
    }
    return o;
  });
}

LinkedOut apply_linked(LinkedState& s, const LinkedInput& in_l, const LinkedInput& in_r, const pay::Deposits& dep,
                       Money amount, Tick expiry, Tick now) {
  LinkedOut out;
  if (in_l.cmd == Cmd::Open && s.flag == Flag::Init) {
    if (s.core.cred[0] + dep.d[0] >= amount) {
      s.core.cred[0] -= amount;
      s.flag = Flag::Inflight;
      s.h = in_l.h;
    } else {
      s.flag = Flag::Cancel;
    }
  } else if (in_l.cmd == Cmd::Complete && s.flag == Flag::Inflight) {
    s.core.cred[1] += amount;
    s.flag = Flag::Complete;
  } else if (in_r.cmd == Cmd::Cancel && s.flag == Flag::Inflight) {
    s.core.cred[0] += amount;
    s.flag = Flag::Cancel;
  } else if ((in_l.cmd == Cmd::Dispute || in_r.cmd == Cmd::Dispute) && s.flag == Flag::Inflight && now > expiry) {
    out.dispute = DisputeOut{*s.h, amount};
    s.flag = Flag::Dispute;
  }
  out.pay = pay::apply_core(s.core, {in_l.pay, in_r.pay}, dep);
  return out;
}

state::UpdateResult LinkedUpdate::apply(const Bytes& state, const std::vector<state::Input>& inputs,
                                        const Bytes& aux_in, Tick now) const {
  LinkedState s = decode_state(state).value_or(LinkedState{});
  const pay::Deposits dep = pay::decode_deposits(aux_in).value_or(pay::Deposits{});
  std::array<LinkedInput, 2> in{};
  for (std::size_t i = 0; i < 2 && i < inputs.size(); ++i) {
    if (inputs[i]) in[i] = decode_input(*inputs[i]).value_or(LinkedInput{});
  }
  LinkedOut o = apply_linked(s, in[0], in[1], dep, amount_, expiry_, now);
  state::UpdateResult res{encode(s), std::nullopt};
  if (o.dispute || o.pay) res.out = encode(o);
  return res;
}

std::int64_t ContractPM::field(std::string_view name) const {
  if (name == "published") return static_cast<std::int64_t>(timestamp_.size());
  return Contract::field(name);
}

bool ContractPM::publish(chain::TxContext& ctx, const crypto::Preimage& x) {
  const crypto::Hash h = crypto::hash_preimage(x);
  if (!timestamp_.emplace(h, ctx.now).second) return false;
  ctx.emit("Published", "h=" + h.hex().substr(0, 16), x);
  return true;
}

bool ContractPM::published(const crypto::Hash& h, Tick t) const {
  auto it = timestamp_.find(h);
  return it != timestamp_.end() && it->second <= t;
}

std::optional<Tick> ContractPM::timestamp(const crypto::Hash& h) const {
  auto it = timestamp_.find(h);
  if (it == timestamp_.end()) return std::nullopt;
  return it->second;
}

void ContractLinked::aux_output(chain::TxContext& ctx, const Bytes& out) {
  auto o = decode_out(out);
  if (!o) return;
  if (o->dispute) {
    const crypto::Hash h = o->dispute->h;
    const Tick expiry = expiry_;
    const bool to_right =
        ctx.call<ContractPM>(pm_, [&](ContractPM& pm, chain::TxContext&) { return pm.published(h, expiry); })
            .value_or(false);
    credit(ctx, to_right ? pay::Side::R : pay::Side::L, o->dispute->amount);
    resolution_ = Resolution{ctx.now, to_right};
  }
  if (o->pay) pay_withdrawals(ctx, *o->pay);
}

namespace {

bool moot(Cmd c, Flag f) {
  switch (c) {
    case Cmd::None: return true;
    case Cmd::Open: return f != Flag::Init;
    default: return f != Flag::Inflight;
  }
}

}  // namespace

void LinkedApp::want(Cmd c, const crypto::Hash& h) {
  if (moot(c, flag_)) return;
  if (c == Cmd::Open && !reserved_) {
    ledger_.adjust(-amount_);
    reserved_ = true;
  }
  want_ = c;
  want_h_ = h;
}

state::Input LinkedApp::next_input(std::int64_t) {
  LinkedInput in{want_, want_h_, ledger_.take_input()};
  if (in.cmd == Cmd::None && in.pay.empty()) return std::nullopt;
  return encode(in);
}

void LinkedApp::on_state(std::int64_t round, const Bytes& state, const std::optional<Bytes>&, state::CommitPath) {
  auto s = decode_state(state);
  if (!s) return;
  const Tick now = sim_.now();
  ledger_.on_state(round, s->core, now);
  last_ = *s;
  last_round_ = round;
  if (s->flag == flag_) return;
  flag_ = s->flag;
  h_ = s->h;
  seen_.try_emplace(flag_, now);
  if (ledger_.side() == pay::Side::L) {
    if (flag_ == Flag::Cancel && reserved_) {
      ledger_.adjust(amount_);
      reserved_ = false;
    } else if (flag_ != Flag::Cancel && !reserved_) {
      ledger_.adjust(-amount_);
      reserved_ = true;
    }
  } else if (flag_ == Flag::Complete) {
    ledger_.adjust(amount_);
  }
  if (moot(want_, flag_)) want_ = Cmd::None;
  if (on_flag) on_flag(flag_);
}

LinkedHop::LinkedHop(sim::Simulator& sim, chain::Chain& chain, crypto::KeyRegistry& keys, std::uint64_t sid,
                     PartyId left, PartyId right, chain::Address pm, Money amount, Tick expiry)
    : chain_(chain), parties_{left, right} {
  contract_ = &chain.deploy<ContractLinked>(left, right, pm, amount, expiry);
  state::ChannelConfig cc;
  cc.sid = sid;
  cc.parties = {left, right};
  channel_ = std::make_unique<state::StateChannel>(sim, chain, keys, cc,
                                                   std::make_shared<LinkedUpdate>(amount, expiry),
                                                   contract_->address());
  for (pay::Side s : {pay::Side::L, pay::Side::R}) {
    apps_[pay::idx(s)] = std::make_unique<LinkedApp>(s, sim, chain.delta() + 1, amount);
    LinkedApp* app = apps_[pay::idx(s)].get();
    chain.subscribe(party_of(s), contract_->address(), [app, &sim](const chain::ChainEvent& ev) {
      if (ev.name != state::kAuxInputEvent) return;
      if (auto d = pay::decode_deposits(std::any_cast<const Bytes&>(ev.payload)))
        app->ledger().observe_deposits(*d, sim.now());
    });
  }
}

void LinkedHop::start(state::Behavior left, state::Behavior right) {
  channel_->attach(*apps_[0], std::move(left));
  channel_->attach(*apps_[1], std::move(right));
  channel_->start();
}

chain::SubmitStatus LinkedHop::deposit(pay::Side s, Money x) {
  ContractLinked* c = contract_;
  return chain_.submit(party_of(s), c->address(), "deposit", to_string(x), x,
                       [c](chain::TxContext& ctx) { return c->deposit(ctx); });
}

}  // namespace chanlab::linked
