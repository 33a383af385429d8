#pragma once

#include <functional>
#include <vector>

#include "chanlab/statechannel.hpp"

namespace chanlab::state {

Bytes encode_int(std::int64_t v);
std::optional<std::int64_t> decode_int(const Bytes& b);

// Order-sensitive accumulator: s' = 7s + Σ (i+1)·v_i + aux (wrapping). A
// negative input from any party requests an output of |v|.
class AccumulatorUpdate : public UpdateFunction {
 public:
  Bytes initial_state() const override { return encode_int(0); }
  UpdateResult apply(const Bytes& state, const std::vector<Input>& inputs, const Bytes& aux_in,
                     Tick now) const override;
};

// Aux contract with a settable aux_in value that records every output.
class RecordingAux : public AuxContract {
 public:
  std::string_view type_name() const override { return "RecordingAux"; }
  Bytes aux_in() const override { return value_; }
  void aux_output(chain::TxContext& ctx, const Bytes& out) override;

  void set_value(chain::TxContext& ctx, Bytes v);
  const std::vector<std::pair<Tick, Bytes>>& outputs() const { return outputs_; }
  // Runs inside aux_output before recording; used to probe re-entrancy.
  std::function<void(chain::TxContext&)> on_output;

 private:
  Bytes value_ = encode_int(0);
  std::vector<std::pair<Tick, Bytes>> outputs_;
};

// Channel app whose input for round r is a fixed function of r.
class ScriptedApp : public ChannelApp {
 public:
  explicit ScriptedApp(std::function<Input(std::int64_t)> script) : script_(std::move(script)) {}

  Input next_input(std::int64_t round) override {
    asked.push_back(round);
    return script_(round);
  }
  void on_state(std::int64_t round, const Bytes& state, const std::optional<Bytes>&, CommitPath path) override {
    seen.push_back({round, state, path});
  }

  struct Seen {
    std::int64_t round;
    Bytes state;
    CommitPath path;
  };
  std::vector<std::int64_t> asked;
  std::vector<Seen> seen;

 private:
  std::function<Input(std::int64_t)> script_;
};

struct RigOptions {
  std::size_t parties = 2;
  Tick delta = 3;
  Tick message_bound = 1;
  std::uint64_t sid = 1;
  Timing timing;
};

// A ready-wired accumulator channel: simulator, chain, keys, aux contract
// and one ScriptedApp per party.
class AccumulatorRig {
 public:
  using Script = std::function<Input(std::size_t party, std::int64_t round)>;

  AccumulatorRig(RigOptions opt, Script script);

  void start(std::vector<Behavior> behaviors = {});
  // Runs until every party has reached `round` or the horizon passes.
  bool run_until_round(std::int64_t round, Tick horizon);
  // Submits a transaction from `who` that sets the aux value.
  void set_aux(PartyId who, std::int64_t v);

  RigOptions opt;
  sim::Simulator sim;
  chain::Chain chain;
  crypto::KeyRegistry keys;
  RecordingAux* aux = nullptr;
  std::shared_ptr<const AccumulatorUpdate> update = std::make_shared<AccumulatorUpdate>();
  std::unique_ptr<StateChannel> channel;
  std::vector<std::unique_ptr<ScriptedApp>> apps;
};

}  // namespace chanlab::state
