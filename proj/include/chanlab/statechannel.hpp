#pragma once

#include <any>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "chanlab/chain.hpp"
#include "chanlab/common.hpp"
#include "chanlab/crypto.hpp"
#include "chanlab/simkernel.hpp"

namespace chanlab::state {

// A party's input for one round; nullopt is the default value ⊥.
using Input = std::optional<Bytes>;

struct UpdateResult {
  Bytes state;
  std::optional<Bytes> out;
};

// Deterministic, total transition function. Implementations must treat any
// malformed input as ⊥ and never throw.
class UpdateFunction {
 public:
  virtual ~UpdateFunction() = default;
  virtual Bytes initial_state() const = 0;
  virtual UpdateResult apply(const Bytes& state, const std::vector<Input>& inputs, const Bytes& aux_in,
                             Tick now) const = 0;
};

inline constexpr const char* kAuxInputEvent = "AuxInput";

// On-chain application contract paired with a state channel. Whenever the
// value returned by aux_in() changes it must emit kAuxInputEvent with the
// new value as a Bytes payload.
class AuxContract : public chain::Contract {
 public:
  virtual Bytes aux_in() const = 0;
  virtual void aux_output(chain::TxContext& ctx, const Bytes& out) = 0;
};

struct RoundEvidence {
  std::int64_t round = -1;
  Bytes state;
  std::optional<Bytes> out;
  std::vector<crypto::Signature> sigs;
};

inline constexpr std::string_view kSignContext = "SC";

Bytes evidence_message(std::uint64_t sid, std::int64_t round, const Bytes& state, const std::optional<Bytes>& out);

struct DisputeEvent {
  std::int64_t round;
  Tick deadline;
  // Evidence for round-1 if it was posted without clearing a dispute; lets a
  // party that never saw that COMMIT catch up.
  std::optional<RoundEvidence> prior;
};
struct OffchainEvent {
  std::int64_t round;  // the round whose dispute was cleared
  RoundEvidence evidence;
};
struct OnchainEvent {
  std::int64_t round;
  Bytes state;
  std::optional<Bytes> out;
};

class ContractState : public chain::Contract {
 public:
  enum class Flag { Ok = 0, Dispute = 1 };

  ContractState(std::uint64_t sid, std::vector<PartyId> parties, std::shared_ptr<const UpdateFunction> update,
                chain::Address aux, const crypto::KeyRegistry& keys, Tick delta);

  std::string_view type_name() const override { return "Contract_State"; }
  std::vector<std::string> field_names() const override { return {"bestRound", "flag", "deadline"}; }
  std::int64_t field(std::string_view name) const override;

  bool evidence(chain::TxContext& ctx, const RoundEvidence& ev);
  bool dispute(chain::TxContext& ctx, std::int64_t r);
  bool input(chain::TxContext& ctx, std::int64_t r, const Input& v);
  bool resolve(chain::TxContext& ctx, std::int64_t r);

  bool evidence_valid(const RoundEvidence& ev) const;

  // Invoked synchronously whenever the contract emits an event.
  using Observer = std::function<void(std::string_view name, const std::any& payload, Tick now)>;
  void set_observer(Observer fn) { observer_ = std::move(fn); }

  std::uint64_t sid() const { return sid_; }
  std::int64_t best_round() const { return best_round_; }
  const Bytes& state() const { return state_; }
  Flag flag() const { return flag_; }
  std::optional<Tick> deadline() const { return deadline_; }
  const std::optional<RoundEvidence>& best_evidence() const { return best_evidence_; }
  const std::set<std::int64_t>& applied() const { return applied_; }
  // Number of aux_output invocations per round; exactly-once means every
  // entry is 1.
  const std::map<std::int64_t, int>& aux_calls() const { return aux_calls_; }
  std::int64_t bestround_regressions() const { return regressions_; }

 private:
  void apply_output(chain::TxContext& ctx, std::int64_t r, const std::optional<Bytes>& out);
  void notify(chain::TxContext& ctx, std::string name, std::string args, std::any payload);
  void set_best_round(std::int64_t r);

  std::uint64_t sid_;
  std::vector<PartyId> parties_;
  std::shared_ptr<const UpdateFunction> update_;
  chain::Address aux_;
  const crypto::KeyRegistry& keys_;
  Tick delta_;

  std::int64_t best_round_ = -1;
  Bytes state_;
  Flag flag_ = Flag::Ok;
  std::optional<Tick> deadline_;
  std::optional<RoundEvidence> best_evidence_;
  std::set<std::int64_t> applied_;
  std::map<std::pair<std::int64_t, std::size_t>, Input> onchain_inputs_;
  std::map<std::int64_t, int> aux_calls_;
  std::int64_t regressions_ = 0;
  Observer observer_;
};

enum class CommitPath { Offchain, Onchain };

// Application layer driving one party's side of a state channel.
class ChannelApp {
 public:
  virtual ~ChannelApp() = default;
  // Input for round r. Called at most once per round; the value is reused
  // if the round has to be settled on-chain.
  virtual Input next_input(std::int64_t round) = 0;
  virtual void on_state(std::int64_t round, const Bytes& state, const std::optional<Bytes>& out, CommitPath path) = 0;
};

// Fast-path waits; 0 means twice the simulator's adversary message bound,
// which covers one request/response trip between rounds that start up to
// one message apart.
struct Timing {
  Tick input_wait = 0;
  Tick batch_wait = 0;
  Tick commit_wait = 0;
};

// Deviations from the honest protocol. The default value is honest.
struct Behavior {
  // When this returns false the party sends no off-chain messages.
  std::function<bool()> offchain;
  // Consulted before signing a proposal; returning false withholds the
  // signature (and, for the leader, the proposal itself).
  std::function<bool(std::int64_t round, const Bytes& old_state, const Bytes& new_state)> sign_filter;
  bool escalate = true;
  bool respond_disputes = true;
  bool resolve = true;
  bool submit_evidence = true;
  bool send_commit = true;
};

struct CommittedRound {
  std::int64_t round = 0;
  Bytes state;
  std::optional<Bytes> out;
  CommitPath path = CommitPath::Offchain;
  Tick commit_time = 0;
  std::optional<Tick> dispute_at;
  std::optional<Tick> deadline;
};

struct DisputeRecord {
  std::int64_t round = 0;
  Tick raised_at = 0;
  Tick deadline = 0;
  std::optional<Tick> offchain_at;
  std::optional<Tick> onchain_at;
  std::optional<Tick> first_offchain_commit;  // earliest off-chain commit of this round, if any
};

struct ChannelStats {
  std::uint64_t disputes = 0;
  std::uint64_t offchain_rounds = 0;
  std::uint64_t onchain_rounds = 0;
  std::uint64_t safety_violations = 0;  // two different states committed for one round
  std::uint64_t late_resolutions = 0;       // disputes unresolved within delta (off-chain) or 2 delta (on-chain)
  std::uint64_t commits_past_dispute = 0;   // next round committed off-chain while a dispute was open
  std::uint64_t lost_offchain_commits = 0;  // off-chain commit of a disputed round not honoured in time
};

class StateChannel;

class Endpoint {
 public:
  enum class Mode { Fast, Escalated, Pending, Stopped };

  Endpoint(StateChannel& ch, std::size_t index, ChannelApp& app, Behavior behavior);

  PartyId id() const;
  std::size_t index() const { return index_; }
  bool is_leader() const { return index_ == 0; }
  Mode mode() const { return mode_; }
  std::int64_t last_round() const { return last_round_; }
  const std::optional<RoundEvidence>& last_commit() const { return last_commit_; }
  const Bytes& state() const { return state_; }
  Behavior& behavior() { return behavior_; }

  void start();
  // Abandons the fast path for the current round and raises a dispute.
  void force_dispute();
  // Submits a bare dispute(r) transaction without changing local state.
  void raise_dispute(std::int64_t r);
  // Stops all activity (used to end runs).
  void stop();

 private:
  friend class StateChannel;

  struct Proposal {
    std::int64_t round;
    Bytes aux_in;
    std::vector<Input> inputs;
    Tick t_batch;
    UpdateResult result;
    Bytes message;
  };

  bool sends_offchain() const;
  void send(std::size_t to, std::string_view kind, std::function<void(Endpoint&)> fn);
  void set_timer(Tick at, std::function<void()> fn);
  void clear_timer();
  Input input_for(std::int64_t r);

  void start_round();
  void schedule_start();
  void maybe_batch(std::int64_t r);
  void on_input(std::size_t from, std::int64_t r, Input v);
  void on_batch(std::int64_t r, Bytes aux_in, std::vector<Input> inputs, Tick t_batch);
  void on_sign(std::size_t from, std::int64_t r, crypto::Signature sig);
  void on_commit(RoundEvidence ev);
  void commit_local(const RoundEvidence& ev);
  void escalate(std::int64_t r);
  void resync();

  void on_dispute_event(const DisputeEvent& e);
  void on_offchain_event(const OffchainEvent& e);
  void on_onchain_event(const OnchainEvent& e);
  void on_aux_event(const Bytes& value);
  void adopt(std::int64_t r, const Bytes& state, const std::optional<Bytes>& out, std::optional<RoundEvidence> ev,
             CommitPath path);

  bool aux_recent(const Bytes& v) const;

  void submit_evidence(const RoundEvidence& ev);
  void submit_input(std::int64_t r, const Input& v);
  void submit_resolve(std::int64_t r);

  StateChannel& ch_;
  std::size_t index_;
  ChannelApp& app_;
  Behavior behavior_;

  Mode mode_ = Mode::Fast;
  std::int64_t last_round_ = -1;
  std::optional<RoundEvidence> last_commit_;
  Bytes state_;
  std::uint64_t epoch_ = 0;
  std::int64_t cur_round_ = -1;
  std::int64_t input_round_ = -1;
  Input cur_input_;
  std::optional<sim::EventHandle> timer_;
  std::optional<Proposal> proposal_;
  std::vector<std::optional<crypto::Signature>> sigs_;
  std::map<std::int64_t, std::map<std::size_t, Input>> inbox_;  // leader only
  std::int64_t pending_round_ = -1;
  std::vector<std::pair<Tick, Bytes>> aux_history_;
};

struct ChannelConfig {
  std::uint64_t sid = 0;
  std::vector<PartyId> parties;
  Timing timing;
  // Maximum accepted age of a BATCH timestamp; 0 means the simulator's
  // adversary message bound.
  Tick batch_skew = 0;
};

// One N-party state channel: the on-chain Contract_State plus each party's
// local protocol instance, with built-in safety and dispute-timing monitors.
class StateChannel {
 public:
  StateChannel(sim::Simulator& sim, chain::Chain& chain, crypto::KeyRegistry& keys, ChannelConfig cfg,
               std::shared_ptr<const UpdateFunction> update, chain::Address aux);

  StateChannel(const StateChannel&) = delete;
  StateChannel& operator=(const StateChannel&) = delete;

  // Must be called once per party in order before start().
  Endpoint& attach(ChannelApp& app, Behavior behavior = {});
  void start();
  void stop();

  sim::Simulator& sim() { return sim_; }
  chain::Chain& chain() { return chain_; }
  crypto::KeyRegistry& keys() { return keys_; }
  const ChannelConfig& config() const { return cfg_; }
  const UpdateFunction& update() const { return *update_; }
  ContractState& contract() { return *contract_; }
  const ContractState& contract() const { return *contract_; }
  chain::Address aux_address() const { return aux_; }
  std::size_t size() const { return cfg_.parties.size(); }
  Endpoint& endpoint(std::size_t i) { return *endpoints_.at(i); }

  const std::map<std::int64_t, CommittedRound>& committed() const { return committed_; }
  const std::vector<DisputeRecord>& disputes() const { return disputes_; }
  const ChannelStats& stats() const { return stats_; }
  // Re-evaluates the dispute-timing monitors at the current time; call at
  // the end of a run to flag disputes that never resolved.
  void finalize_checks();
  // Per-round records as JSON lines.
  std::string trace_jsonl() const;

 private:
  friend class Endpoint;

  // `by` is the committing party; commits by corrupt parties only feed the
  // commits_past_dispute monitor.
  void record_commit(std::int64_t r, const Bytes& state, const std::optional<Bytes>& out, CommitPath path,
                     std::optional<PartyId> by = std::nullopt);
  void observe_contract(std::string_view name, const std::any& payload, Tick now);
  void check_dispute(DisputeRecord& d, bool final);

  sim::Simulator& sim_;
  chain::Chain& chain_;
  crypto::KeyRegistry& keys_;
  ChannelConfig cfg_;
  std::shared_ptr<const UpdateFunction> update_;
  chain::Address aux_;
  ContractState* contract_ = nullptr;
  std::vector<std::unique_ptr<Endpoint>> endpoints_;
  std::map<std::int64_t, CommittedRound> committed_;
  std::vector<DisputeRecord> disputes_;
  ChannelStats stats_;
};

// The ideal functionality F_State as an executable oracle: a trusted party
// applying U to the inputs it received for each round.
class FStateOracle {
 public:
  FStateOracle(std::size_t parties, std::shared_ptr<const UpdateFunction> update);

  // Inputs missing from `received` (nullopt entries) are ⊥.
  const UpdateResult& step(const std::vector<Input>& received, const Bytes& aux_in, Tick now);
  void append_aux(Bytes value) { aux_buf_.push_back(std::move(value)); }
  // The adversary may move the pointer forward to any buffered entry.
  void advance_ptr(std::size_t j);
  const Bytes& current_aux() const;

  std::int64_t round() const { return round_; }
  const Bytes& state() const { return state_; }
  const std::vector<UpdateResult>& history() const { return history_; }

 private:
  std::size_t parties_;
  std::shared_ptr<const UpdateFunction> update_;
  Bytes state_;
  std::int64_t round_ = -1;
  std::vector<Bytes> aux_buf_;
  std::size_t ptr_ = 0;
  std::vector<UpdateResult> history_;
};

}  // namespace chanlab::state
