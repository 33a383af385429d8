#pragma once

#include <array>
#include <deque>
#include <memory>
#include <optional>
#include <vector>

#include "chanlab/codec.hpp"
#include "chanlab/statechannel.hpp"

namespace chanlab::pay {

enum class Side : std::uint8_t { L = 0, R = 1 };
constexpr std::size_t idx(Side s) { return static_cast<std::size_t>(s); }
constexpr Side other(Side s) { return s == Side::L ? Side::R : Side::L; }

struct PayCoreState {
  std::array<Money, 2> cred{};
  std::array<std::vector<Money>, 2> arr;

  friend bool operator==(const PayCoreState&, const PayCoreState&) = default;
};

struct PayInput {
  std::vector<Money> arr;
  Money wd;

  bool empty() const { return arr.empty() && wd == Money(0); }
  friend bool operator==(const PayInput&, const PayInput&) = default;
};

struct Deposits {
  std::array<Money, 2> d{};
  friend bool operator==(const Deposits&, const Deposits&) = default;
};

struct Withdrawals {
  std::array<Money, 2> wd{};
  friend bool operator==(const Withdrawals&, const Withdrawals&) = default;
};

void write(codec::Writer& w, const PayCoreState& s);
std::optional<PayCoreState> read_core(codec::Reader& r);
void write(codec::Writer& w, const PayInput& in);
// Rejects non-positive payment amounts and negative withdrawals.
std::optional<PayInput> read_input(codec::Reader& r);

Bytes encode(const PayCoreState& s);
Bytes encode(const PayInput& in);
Bytes encode(const Deposits& d);
Bytes encode(const Withdrawals& w);
std::optional<PayCoreState> decode_state(const Bytes& b);
std::optional<PayInput> decode_input(const Bytes& b);
std::optional<Deposits> decode_deposits(const Bytes& b);
std::optional<Withdrawals> decode_withdrawals(const Bytes& b);

// The pay step on decoded values: clamps each side's payments greedily to
// its available balance, then drops a withdrawal that no longer fits.
// Returns the withdrawals if either is nonzero.
std::optional<Withdrawals> apply_core(PayCoreState& s, std::array<PayInput, 2> in, const Deposits& dep);

class PayUpdate : public state::UpdateFunction {
 public:
  Bytes initial_state() const override { return encode(PayCoreState{}); }
  state::UpdateResult apply(const Bytes& state, const std::vector<state::Input>& inputs, const Bytes& aux_in,
                            Tick now) const override;
};

// Holds both parties' deposits as escrow and pays out withdrawals.
class ContractPay : public state::AuxContract {
 public:
  ContractPay(PartyId left, PartyId right) : parties_{left, right} {}

  std::string_view type_name() const override { return "Contract_Pay"; }
  std::vector<std::string> field_names() const override { return {"deposits_L", "deposits_R"}; }
  std::int64_t field(std::string_view name) const override;

  Bytes aux_in() const override { return encode(deposits_); }
  void aux_output(chain::TxContext& ctx, const Bytes& out) override;

  // Credits ctx.coins to the submitter's side. False for a stranger.
  bool deposit(chain::TxContext& ctx);

  PartyId party_of(Side s) const { return parties_[idx(s)]; }
  std::optional<Side> side_of(PartyId p) const;
  const Deposits& deposits() const { return deposits_; }
  Money paid_out(Side s) const { return paid_out_[idx(s)]; }
  // (time, side, amount) for every payout.
  struct PayoutRecord {
    Tick at;
    Side side;
    Money amount;
  };
  const std::vector<PayoutRecord>& payouts() const { return payout_log_; }

 protected:
  void credit(chain::TxContext& ctx, Side s, Money x);
  void pay_withdrawals(chain::TxContext& ctx, const Withdrawals& w);

 private:
  std::array<PartyId, 2> parties_;
  Deposits deposits_;
  std::array<Money, 2> paid_out_{};
  std::vector<PayoutRecord> payout_log_;
};

struct Received {
  Tick at;
  Money amount;
  std::int64_t round;
};

// Party-local payment bookkeeping shared by the plain and the linked
// channel apps.
class PayLedger {
 public:
  PayLedger(Side side, Tick settle) : side_(side), settle_(settle) {}

  Side side() const { return side_; }

  // Deposit totals as announced on-chain; a value only counts once it has
  // been visible for the settle time.
  void observe_deposits(const Deposits& d, Tick now) { seen_.push_back({now, d}); }
  Money settled_deposits(Tick now) const;

  Money available(Tick now) const;
  bool pay(Money x, Tick now);
  bool withdraw(Money x, Tick now);
  // Hands the buffered commands to the next round and clears them.
  PayInput take_input();
  // Processes a committed core state: records incoming payments.
  void on_state(std::int64_t round, const PayCoreState& s, Tick now);
  // Adjusts for value moved outside the pay core (conditional payments).
  void adjust(Money delta) { extra_ += delta; }

  Money sent() const { return sent_; }
  Money received() const { return received_; }
  Money withdrawn() const { return wd_total_; }
  const std::vector<Received>& receipts() const { return receipts_; }

 private:
  Side side_;
  Tick settle_;
  std::vector<std::pair<Tick, Deposits>> seen_;
  std::vector<Money> arr_;
  Money wd_pending_;
  Money sent_;
  Money received_;
  Money wd_total_;
  Money extra_;
  std::vector<Received> receipts_;
};

class PayApp : public state::ChannelApp {
 public:
  PayApp(Side side, sim::Simulator& sim, Tick settle) : sim_(sim), ledger_(side, settle) {}

  state::Input next_input(std::int64_t round) override;
  void on_state(std::int64_t round, const Bytes& state, const std::optional<Bytes>& out,
                state::CommitPath path) override;

  PayLedger& ledger() { return ledger_; }
  const PayLedger& ledger() const { return ledger_; }
  // Replaces the input a corrupt party submits; nullopt means honest.
  std::function<state::Input(std::int64_t round, const PayInput& honest)> override_input;

 private:
  sim::Simulator& sim_;
  PayLedger ledger_;
};

struct PayChannelConfig {
  std::uint64_t sid = 1;
  PartyId left = party(0);
  PartyId right = party(1);
  state::Timing timing;
};

// A duplex payment channel: Contract_Pay, the underlying state channel and
// both parties' apps.
class PayChannel {
 public:
  PayChannel(sim::Simulator& sim, chain::Chain& chain, crypto::KeyRegistry& keys, PayChannelConfig cfg);

  void start(state::Behavior left = {}, state::Behavior right = {});
  void stop() { channel_->stop(); }

  // Submits an on-chain deposit; coins leave the party's balance now.
  chain::SubmitStatus deposit(Side s, Money x);
  bool pay(Side s, Money x) { return app(s).ledger().pay(x, sim_.now()); }
  bool withdraw(Side s, Money x) { return app(s).ledger().withdraw(x, sim_.now()); }
  Money available(Side s) const { return apps_[idx(s)]->ledger().available(sim_.now()); }

  PayApp& app(Side s) { return *apps_[idx(s)]; }
  ContractPay& contract() { return *contract_; }
  state::StateChannel& channel() { return *channel_; }
  PartyId party_of(Side s) const { return s == Side::L ? cfg_.left : cfg_.right; }

 private:
  sim::Simulator& sim_;
  chain::Chain& chain_;
  PayChannelConfig cfg_;
  ContractPay* contract_ = nullptr;
  std::unique_ptr<state::StateChannel> channel_;
  std::array<std::unique_ptr<PayApp>, 2> apps_;
};

// Delay constants of the ideal functionality, in ticks.
struct PayBounds {
  Tick honest_receive;
  Tick corrupt_receive;
  Tick withdraw;
  static PayBounds for_delta(Tick delta);
};

// The ideal payment channel. The caller plays the ideal-world adversary: it
// chooses when deliveries and payouts happen; the oracle checks each against
// its queue and the declared bounds.
class FPayOracle {
 public:
  FPayOracle(PayBounds bounds, std::array<bool, 2> honest) : bounds_(bounds), honest_(honest) {}

  void deposit(Side s, Money x) { bal_[idx(s)] += x; }
  bool pay(Side s, Money x, Tick now);
  bool withdraw(Side s, Money x, Tick now);
  // Delivery of the oldest outstanding payment from `from`. False if none is
  // outstanding, the amount differs, or the bound was exceeded.
  bool deliver(Side from, Money x, Tick now);
  // Coin payout to `s`. Payouts may come in any order; only the running
  // total is checked against accepted withdrawals.
  bool payout(Side s, Money x, Tick now);
  // Flags any payment or withdrawal whose deadline has passed unserved.
  bool check(Tick now);

  Money balance(Side s) const { return bal_[idx(s)]; }
  std::size_t outstanding_payments(Side from) const { return pending_pay_[idx(from)].size(); }
  Money outstanding_withdrawals(Side s) const;
  std::vector<std::string>& errors() { return errors_; }

 private:
  struct Pending {
    Money amount;
    Tick deadline;
    bool flagged = false;
  };
  PayBounds bounds_;
  std::array<bool, 2> honest_;
  std::array<Money, 2> bal_{};
  std::array<std::deque<Pending>, 2> pending_pay_;
  std::array<std::vector<Pending>, 2> pending_wd_;
  std::array<Money, 2> paid_{};
  std::array<bool, 2> wd_flagged_{};
  std::vector<std::string> errors_;
};

}  // namespace chanlab::pay
