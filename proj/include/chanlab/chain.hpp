#pragma once

#include <any>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "chanlab/common.hpp"
#include "chanlab/simkernel.hpp"

namespace chanlab::chain {

enum class Address : std::uint32_t {};
constexpr std::uint32_t index_of(Address a) { return static_cast<std::uint32_t>(a); }

struct ChainConfig {
  Tick delta = 10;
};

class Chain;
class Contract;

struct ChainEvent {
  Address emitter{};
  std::string name;
  std::string args;
  Tick emitted_at = 0;
  std::uint64_t tx_id = 0;
  std::any payload;
};

struct Payout {
  Address from{};
  PartyId to{};
  Money amount;
};

struct TxRecord {
  std::uint64_t id = 0;
  std::uint64_t exec_index = 0;
  PartyId submitter{};
  Address target{};
  std::string method;
  std::string args;
  Money coins;
  Tick submitted_at = 0;
  Tick confirmed_at = -1;
  bool applied = false;
  std::vector<std::string> events;
  std::vector<Payout> payouts;
  Money escrow_after;  // target escrow once the tx finished
};

// Execution context of one confirmed transaction. `self` is the contract
// currently executing; it changes across nested calls.
class TxContext {
 public:
  Chain& chain;
  const Tick now;
  const PartyId submitter;
  const Money coins;

  Address self() const { return self_; }

  // Moves coins out of the executing contract's escrow. Throws
  // std::logic_error on escrow underflow.
  void pay(PartyId to, Money amount);
  void emit(std::string name, std::string args, std::any payload = {});

  // Synchronous call into another contract. Returns nullopt if the address
  // is not deployed or is not a T.
  template <class T, class F>
  auto call(Address to, F&& f) -> std::optional<decltype(f(std::declval<T&>(), std::declval<TxContext&>()))>;

 private:
  friend class Chain;
  TxContext(Chain& c, Tick t, PartyId s, Money m, Address self, TxRecord& rec)
      : chain(c), now(t), submitter(s), coins(m), self_(self), record_(rec) {}

  Address self_;
  TxRecord& record_;
};

class Contract {
 public:
  virtual ~Contract() = default;
  virtual std::string_view type_name() const = 0;
  // Integer fields readable by parties through Chain::read.
  virtual std::vector<std::string> field_names() const { return {}; }
  virtual std::int64_t field(std::string_view name) const;

  Address address() const { return address_; }

 private:
  friend class Chain;
  Address address_{};
};

using ConfirmPolicy = std::function<Tick(const TxRecord& tx, Tick delta)>;
using ViewPolicy = std::function<Tick(PartyId reader, Tick delta)>;
using EventDelayPolicy = std::function<Tick(PartyId receiver, const ChainEvent& ev, Tick delta)>;

enum class SubmitStatus { Accepted, InsufficientCoins, UnknownContract };

class Chain {
 public:
  using Body = std::function<bool(TxContext&)>;
  using Listener = std::function<void(const ChainEvent&)>;

  Chain(sim::Simulator& sim, ChainConfig cfg);

  Chain(const Chain&) = delete;
  Chain& operator=(const Chain&) = delete;

  sim::Simulator& simulator() { return sim_; }
  Tick delta() const { return cfg_.delta; }
  Tick now() const { return sim_.now(); }

  template <class T, class... Args>
  T& deploy(Args&&... args) {
    auto c = std::make_unique<T>(std::forward<Args>(args)...);
    T& ref = *c;
    adopt(std::move(c));
    return ref;
  }
  Contract* contract(Address a) const;
  template <class T>
  T* get(Address a) const {
    return dynamic_cast<T*>(contract(a));
  }

  void mint(PartyId p, Money amount);
  Money balance(PartyId p) const;
  Money escrow(Address a) const;
  Money in_flight() const { return in_flight_; }
  Money minted() const { return minted_; }

  // Attached coins leave the submitter's balance immediately and are held in
  // flight until confirmation. A discarded body refunds them.
  SubmitStatus submit(PartyId submitter, Address target, std::string method, std::string args, Money coins, Body body);

  void subscribe(PartyId p, Address emitter, Listener fn);

  // Value of a contract field as seen by `reader`, whose view may lag the
  // chain head by up to delta ticks. Throws std::invalid_argument for an
  // unknown field and std::out_of_range for an unknown contract.
  std::int64_t read(PartyId reader, Address a, std::string_view field) const;
  std::int64_t read_at(Address a, std::string_view field, Tick view_time) const;

  void set_confirm_policy(ConfirmPolicy p) { confirm_policy_ = std::move(p); }
  void set_view_policy(ViewPolicy p) { view_policy_ = std::move(p); }
  void set_event_delay_policy(EventDelayPolicy p) { event_policy_ = std::move(p); }

  const std::vector<TxRecord>& transactions() const { return txs_; }
  std::size_t confirmed_count() const;
  std::size_t confirmed_count_to(Address a) const;
  std::size_t pending_count() const;

  bool conserved() const;
  std::uint64_t conservation_checks() const { return checks_; }
  std::uint64_t conservation_violations() const { return violations_; }
  // Every accepted tx confirmed within delta of submission.
  bool live() const;

  // Credits coins without recording a mint. Used only to exercise the
  // conservation checker.
  void inject_fault(PartyId p, Money amount);

  std::string trace_jsonl() const;
  // One line with every party balance, contract escrow and per-party coins
  // still in flight.
  std::string ledger_jsonl() const;

 private:
  friend class TxContext;

  void adopt(std::unique_ptr<Contract> c);
  void confirm(std::uint64_t tx_id, Body body);
  void snapshot(Tick t);
  void deliver(const ChainEvent& ev);
  void check();

  struct Subscription {
    PartyId party;
    Address emitter;
    Listener fn;
  };
  struct Snapshot {
    Tick time;
    std::vector<std::int64_t> values;
  };

  sim::Simulator& sim_;
  ChainConfig cfg_;
  std::vector<std::unique_ptr<Contract>> contracts_;
  std::vector<std::vector<std::string>> field_names_;
  std::vector<std::vector<Snapshot>> history_;
  std::vector<Money> escrow_;
  std::map<std::uint32_t, Money> balances_;
  Money minted_;
  Money in_flight_;
  std::vector<TxRecord> txs_;
  std::vector<Subscription> subs_;
  std::vector<std::pair<Tick, std::pair<PartyId, Money>>> mints_;
  ConfirmPolicy confirm_policy_;
  ViewPolicy view_policy_;
  EventDelayPolicy event_policy_;
  std::uint64_t exec_counter_ = 0;
  std::uint64_t checks_ = 0;
  std::uint64_t violations_ = 0;
};

template <class T, class F>
auto TxContext::call(Address to, F&& f) -> std::optional<decltype(f(std::declval<T&>(), std::declval<TxContext&>()))> {
  T* callee = chain.get<T>(to);
  if (!callee) return std::nullopt;
  const Address saved = self_;
  self_ = to;
  struct Restore {
    TxContext& c;
    Address a;
    ~Restore() { c.self_ = a; }
  } restore{*this, saved};
  return f(*callee, *this);
}

}  // namespace chanlab::chain
