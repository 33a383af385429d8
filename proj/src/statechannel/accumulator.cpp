#include "chanlab/accumulator.hpp"

#include "chanlab/codec.hpp"

namespace chanlab::state {

Bytes encode_int(std::int64_t v) {
  codec::Writer w;
  w.i64(v);
  return w.take();
}

std::optional<std::int64_t> decode_int(const Bytes& b) {
  codec::Reader r(b);
  auto v = r.i64();
  if (!v || !r.at_end()) return std::nullopt;
  return v;
}

UpdateResult AccumulatorUpdate::apply(const Bytes& state, const std::vector<Input>& inputs, const Bytes& aux_in,
                                      Tick) const {
  auto s = static_cast<std::uint64_t>(decode_int(state).value_or(0));
  std::optional<Bytes> out;
  std::uint64_t acc = s * 7;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (!inputs[i]) continue;
    auto v = decode_int(*inputs[i]);
    if (!v) continue;
    acc += static_cast<std::uint64_t>(i + 1) * static_cast<std::uint64_t>(*v);
    if (*v < 0) out = encode_int(-*v);
  }
  acc += static_cast<std::uint64_t>(decode_int(aux_in).value_or(0));
  return {encode_int(static_cast<std::int64_t>(acc)), out};
}

void RecordingAux::aux_output(chain::TxContext& ctx, const Bytes& out) {
  if (on_output) on_output(ctx);
  outputs_.push_back({ctx.now, out});
}

void RecordingAux::set_value(chain::TxContext& ctx, Bytes v) {
  value_ = std::move(v);
  ctx.emit(kAuxInputEvent, "", value_);
}


AccumulatorRig::AccumulatorRig(RigOptions o, Script script)
    : opt(o), sim(o.message_bound), chain(sim, chain::ChainConfig{o.delta}), keys(crypto::Backend::TestDouble, o.sid) {
  aux = &chain.deploy<RecordingAux>();
  ChannelConfig cfg;
  cfg.sid = o.sid;
  cfg.timing = o.timing;
  for (std::size_t i = 0; i < o.parties; ++i) {
    cfg.parties.push_back(party(static_cast<std::uint32_t>(i)));
    keys.register_party(cfg.parties.back());
    apps.push_back(std::make_unique<ScriptedApp>([script, i](std::int64_t r) { return script(i, r); }));
  }
  channel = std::make_unique<StateChannel>(sim, chain, keys, cfg, update, aux->address());
}

void AccumulatorRig::start(std::vector<Behavior> behaviors) {
  behaviors.resize(opt.parties);
  for (std::size_t i = 0; i < opt.parties; ++i) channel->attach(*apps[i], behaviors[i]);
  channel->start();
}

bool AccumulatorRig::run_until_round(std::int64_t round, Tick horizon) {
  auto done = [&] {
    for (std::size_t i = 0; i < opt.parties; ++i)
      if (channel->endpoint(i).last_round() < round) return false;
    return true;
  };
  while (!done()) {
    const Tick next = sim.next_event_time();
    if (next > horizon) {
      sim.run_until(horizon);
      return false;
    }
    sim.run_until(next);
  }
  return true;
}

void AccumulatorRig::set_aux(PartyId who, std::int64_t v) {
  RecordingAux* a = aux;
  chain.submit(who, a->address(), "set", std::to_string(v), Money(0), [a, v](chain::TxContext& ctx) {
    a->set_value(ctx, encode_int(v));
    return true;
  });
}

}  // namespace chanlab::state
