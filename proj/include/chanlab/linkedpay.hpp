#pragma once

#include <array>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "chanlab/paychannel.hpp"

namespace chanlab::linked {

enum class Flag : std::uint8_t { Init = 0, Inflight = 1, Complete = 2, Cancel = 3, Dispute = 4 };
std::string_view to_string(Flag f);

struct LinkedState {
  Flag flag = Flag::Init;
  std::optional<crypto::Hash> h;
  pay::PayCoreState core;

  friend bool operator==(const LinkedState&, const LinkedState&) = default;
};

enum class Cmd : std::uint8_t { None = 0, Open = 1, Complete = 2, Cancel = 3, Dispute = 4 };

struct LinkedInput {
  Cmd cmd = Cmd::None;
  crypto::Hash h{};  // meaningful for Open only
  pay::PayInput pay;

  friend bool operator==(const LinkedInput&, const LinkedInput&) = default;
};

struct DisputeOut {
  crypto::Hash h;
  Money amount;
  friend bool operator==(const DisputeOut&, const DisputeOut&) = default;
};

struct LinkedOut {
  std::optional<DisputeOut> dispute;
  std::optional<pay::Withdrawals> pay;
  friend bool operator==(const LinkedOut&, const LinkedOut&) = default;
};

Bytes encode(const LinkedState& s);
Bytes encode(const LinkedInput& in);
Bytes encode(const LinkedOut& o);
std::optional<LinkedState> decode_state(const Bytes& b);
std::optional<LinkedInput> decode_input(const Bytes& b);
std::optional<LinkedOut> decode_out(const Bytes& b);

// Timer ladder of one linked payment. `unit` is the length of one
// off-chain round in ticks.
struct LinkedTimers {
  Tick T = 0;
  int ell = 2;
  Tick delta = 10;
  Tick unit = 4;
  Tick dispute_pad = 3;

  Tick expiry() const { return T + 6 * ell * unit + delta; }
  Tick crit() const { return expiry() - delta; }
  Tick dispute() const { return expiry() + delta + dispute_pad * unit; }
};

// One round of the conditional-payment layer followed by the pay step.
// An open that the payer's balance cannot cover moves straight to Cancel.
LinkedOut apply_linked(LinkedState& s, const LinkedInput& in_l, const LinkedInput& in_r, const pay::Deposits& dep,
                       Money amount, Tick expiry, Tick now);

class LinkedUpdate : public state::UpdateFunction {
 public:
  LinkedUpdate(Money amount, Tick expiry) : amount_(amount), expiry_(expiry) {}

  Bytes initial_state() const override { return encode(LinkedState{}); }
  state::UpdateResult apply(const Bytes& state, const std::vector<state::Input>& inputs, const Bytes& aux_in,
                            Tick now) const override;

 private:
  Money amount_;
  Tick expiry_;
};

// Global preimage registry; records the confirmation time of the first
// publication of each preimage.
class ContractPM : public chain::Contract {
 public:
  std::string_view type_name() const override { return "Contract_PM"; }
  std::vector<std::string> field_names() const override { return {"published"}; }
  std::int64_t field(std::string_view name) const override;

  bool publish(chain::TxContext& ctx, const crypto::Preimage& x);
  bool published(const crypto::Hash& h, Tick t) const;
  std::optional<Tick> timestamp(const crypto::Hash& h) const;

 private:
  std::map<crypto::Hash, Tick> timestamp_;
};

class ContractLinked : public pay::ContractPay {
 public:
  ContractLinked(PartyId left, PartyId right, chain::Address pm, Money amount, Tick expiry)
      : ContractPay(left, right), pm_(pm), amount_(amount), expiry_(expiry) {}

  std::string_view type_name() const override { return "Contract_Linked"; }
  void aux_output(chain::TxContext& ctx, const Bytes& out) override;

  struct Resolution {
    Tick at;
    bool to_right;
  };
  const std::optional<Resolution>& resolution() const { return resolution_; }

 private:
  chain::Address pm_;
  Money amount_;
  Tick expiry_;
  std::optional<Resolution> resolution_;
};

// One party's side of a linked-payment channel.
class LinkedApp : public state::ChannelApp {
 public:
  LinkedApp(pay::Side side, sim::Simulator& sim, Tick settle, Money amount)
      : sim_(sim), ledger_(side, settle), amount_(amount) {}

  state::Input next_input(std::int64_t round) override;
  void on_state(std::int64_t round, const Bytes& state, const std::optional<Bytes>& out,
                state::CommitPath path) override;

  // Requests a command; it is resent every round until it has taken effect
  // or become moot.
  void want(Cmd c, const crypto::Hash& h = {});
  Cmd wanted() const { return want_; }

  Flag flag() const { return flag_; }
  const std::optional<crypto::Hash>& hash() const { return h_; }
  pay::PayLedger& ledger() { return ledger_; }
  const pay::PayLedger& ledger() const { return ledger_; }
  const std::optional<LinkedState>& last_state() const { return last_; }
  std::int64_t last_round() const { return last_round_; }
  // First time each flag was observed.
  const std::map<Flag, Tick>& seen() const { return seen_; }

  std::function<void(Flag)> on_flag;

 private:
  sim::Simulator& sim_;
  pay::PayLedger ledger_;
  Money amount_;
  Cmd want_ = Cmd::None;
  crypto::Hash want_h_{};
  bool reserved_ = false;
  Flag flag_ = Flag::Init;
  std::optional<crypto::Hash> h_;
  std::optional<LinkedState> last_;
  std::int64_t last_round_ = -1;
  std::map<Flag, Tick> seen_;
};

// One hop of the path: Contract_Linked, its state channel and both apps.
class LinkedHop {
 public:
  LinkedHop(sim::Simulator& sim, chain::Chain& chain, crypto::KeyRegistry& keys, std::uint64_t sid, PartyId left,
            PartyId right, chain::Address pm, Money amount, Tick expiry);

  void start(state::Behavior left, state::Behavior right);
  chain::SubmitStatus deposit(pay::Side s, Money x);

  LinkedApp& app(pay::Side s) { return *apps_[pay::idx(s)]; }
  const LinkedApp& app(pay::Side s) const { return *apps_[pay::idx(s)]; }
  ContractLinked& contract() { return *contract_; }
  const ContractLinked& contract() const { return *contract_; }
  state::StateChannel& channel() { return *channel_; }
  const state::StateChannel& channel() const { return *channel_; }
  PartyId party_of(pay::Side s) const { return parties_[pay::idx(s)]; }

 private:
  chain::Chain& chain_;
  std::array<PartyId, 2> parties_;
  ContractLinked* contract_ = nullptr;
  std::unique_ptr<state::StateChannel> channel_;
  std::array<std::unique_ptr<LinkedApp>, 2> apps_;
};

// Party behaviours for linked-payment runs. Everything except Honest marks
// the party corrupt.
enum class Behavior : std::uint8_t {
  Honest,
  Petty,           // withholds off-chain cooperation, acts on-chain at the last safe moment
  Crash,           // stops at a random time
  CancelEarly,     // cancels its incoming hop as soon as it is inflight
  Withhold,        // never reveals or publishes the preimage
  PublishLate,     // reveals and publishes only after the expiry
  RefuseSign,      // sends no off-chain channel messages at all
  RandomDispute,   // raises spurious channel disputes
  WrongPreimage,   // forwards a different hash and spreads a bogus preimage
};
std::string_view to_string(Behavior b);
inline constexpr int kBehaviorCount = 9;

enum class Model : std::uint8_t { ConstantLocktime, StaggeredHtlc };

struct LinkedRunConfig {
  int ell = 3;  // number of parties on the path
  Money amount = dollars(1);
  Tick delta = 10;
  Tick unit = 4;
  Tick dispute_pad = 3;
  Tick message_bound = 1;
  // Balance each hop's payer deposits; a missing entry defaults to amount.
  std::vector<Money> balances;
  std::vector<Behavior> behaviors;  // size ell; missing entries are Honest
  std::uint64_t seed = 1;
  // Randomise message delays in [1, message_bound] and confirmations in
  // [1, delta]; otherwise every message takes 1 tick and every tx confirms
  // in 1 tick.
  bool random_schedule = false;
  crypto::Backend backend = crypto::Backend::TestDouble;
  bool log_events = false;
};

struct HopOutcome {
  Flag flag = Flag::Init;  // Complete or Cancel when terminal
  bool via_dispute = false;
  std::optional<Tick> open_at;
  std::optional<Tick> close_at;

  Tick lock() const { return open_at && close_at ? *close_at - *open_at : 0; }
};

struct HopDispute {
  int hop = 0;
  state::DisputeRecord record;
};

struct LinkedOutcome {
  Model model = Model::ConstantLocktime;
  int ell = 0;
  Money amount;
  Tick delta = 0;
  Tick T = 0;
  Tick expiry = 0;
  Tick dispute = 0;
  Tick check_at = 0;
  std::vector<HopOutcome> hops;
  std::vector<bool> honest;
  // Net change of each party's funds across its channels.
  std::vector<Money> net;
  std::size_t txs = 0;
  std::size_t deposit_txs = 0;
  std::size_t pm_txs = 0;
  std::size_t channel_disputes = 0;
  bool conserved = true;
  std::uint64_t safety_violations = 0;
  std::uint64_t signature_forgeries = 0;
  std::vector<std::string> exceptions;  // F_Linked assertion failures
  std::string trace;                    // event log when requested
  std::string chain_trace;              // chain tx log and final ledger when requested
  std::vector<Money> bal_left;          // each hop payer's starting balance
  std::vector<HopDispute> disputes;

  Tick max_lock() const;
  // Time-integral of escrowed money over all hops, in minor units × ticks.
  std::int64_t collateral_integral() const;
  std::optional<Tick> completed_at() const;
  bool honest_intermediaries_whole() const;
};

// Runs one linked payment of `amount` along P_1..P_ell with the
// constant-locktime protocol and checks it against F_Linked.
LinkedOutcome run_linked_payment(const LinkedRunConfig& cfg);

// Replays an outcome's hop transitions into F_Linked and returns every
// assertion failure. `bal_left` is each hop payer's starting balance.
std::vector<std::string> ideal_exceptions(const LinkedOutcome& o, const std::vector<Money>& bal_left);

// Same path with the staggered-locktime HTLC construction.
LinkedOutcome run_htlc_baseline(const LinkedRunConfig& cfg);

// Per-hop deadlines of the staggered construction: T_{ell-1} equals the
// constant-locktime expiry and every earlier hop adds delta + grace.
std::vector<Tick> htlc_deadlines(const LinkedTimers& t, Tick grace = 1);

// Time F_Linked's assertions are evaluated at.
Tick check_time(const LinkedTimers& t, bool all_honest);
// Latency bound of one honest off-chain round, used for the optimistic
// completion bound (ell + 2 rounds).
inline Tick honest_round_ticks(Tick unit) { return 2 * unit + 1; }

// The ideal linked-payment functionality. Hop i joins P_i and P_{i+1}.
class FLinkedOracle {
 public:
  FLinkedOracle(int ell, Money amount, std::vector<bool> honest, std::vector<Money> bal_left);

  void open(int i, Tick now);
  void cancel(int i, Tick now);
  void complete(int i, Tick now);
  // Evaluates the three assertions; appends to errors() and returns false
  // on failure.
  bool check(Tick now);

  Flag flag(int i) const { return flags_.at(static_cast<std::size_t>(i)); }
  Money bal_left(int i) const { return bal_[static_cast<std::size_t>(i)][0]; }
  Money bal_right(int i) const { return bal_[static_cast<std::size_t>(i)][1]; }
  bool any_corrupt() const;
  const std::vector<std::string>& errors() const { return errors_; }

 private:
  int hops() const { return static_cast<int>(flags_.size()); }
  bool honest(int p) const { return honest_.at(static_cast<std::size_t>(p)); }

  Money amount_;
  std::vector<bool> honest_;
  std::vector<Flag> flags_;
  std::vector<std::array<Money, 2>> bal_;
  bool short_funded_ = false;
  std::vector<std::string> errors_;
};

// Randomised linked-payment family used by the fuzz tests and the
// acceptance run.
struct FuzzCase {
  LinkedRunConfig cfg;
};
FuzzCase make_fuzz_case(std::uint64_t seed, int max_ell = 5);

struct FuzzSummary {
  std::size_t runs = 0;
  std::size_t exceptions = 0;
  std::size_t intermediary_losses = 0;
  std::size_t conservation_failures = 0;
  std::size_t safety_failures = 0;
  std::size_t pm_used = 0;
  Tick max_close_after_dispute = 0;
  std::vector<std::uint64_t> failing_seeds;

  friend bool operator==(const FuzzSummary&, const FuzzSummary&) = default;
};

FuzzSummary fuzz_serial(std::uint64_t first_seed, std::size_t runs, int max_ell = 5);
FuzzSummary fuzz_parallel(std::uint64_t first_seed, std::size_t runs, int max_ell = 5);

}  // namespace chanlab::linked
