#pragma once

#include <cstdint>
#include <functional>
#include <queue>
#include <string>
#include <string_view>
#include <vector>

#include "chanlab/common.hpp"

namespace chanlab::sim {

struct Endpoint {
  enum class Kind : std::uint8_t { None, Party, Contract };
  Kind kind = Kind::None;
  std::uint32_t id = 0;

  static Endpoint none() { return {}; }
  static Endpoint of(PartyId p) { return {Kind::Party, index_of(p)}; }
  static Endpoint contract(std::uint32_t addr) { return {Kind::Contract, addr}; }
  std::string label() const;
};

struct EventRecord {
  Tick time = 0;
  std::uint64_t seq = 0;
  std::string kind;
  Endpoint source;
  Endpoint target;
  std::string summary;

  std::string line() const;
};

using EventHandle = std::uint64_t;

// Chooses the delay for one point-to-point message. The simulator clamps the
// result into [base, max].
using DelayPolicy = std::function<Tick(PartyId from, PartyId to, Tick base, Tick max)>;

class Simulator {
 public:
  using Action = std::function<void()>;

  explicit Simulator(Tick adversary_bound = 1);

  Simulator(const Simulator&) = delete;
  Simulator& operator=(const Simulator&) = delete;

  Tick now() const { return now_; }

  // Throws std::logic_error if at < now().
  EventHandle schedule(Tick at, std::string_view kind, Endpoint target, Action fn,
                       Endpoint source = {}, std::string summary = {});
  EventHandle schedule_in(Tick delay, std::string_view kind, Endpoint target, Action fn) {
    return schedule(now_ + delay, kind, target, std::move(fn));
  }
  bool cancel(EventHandle h);

  void run_until(Tick t);
  // Processes events until the queue drains or the next event is past horizon.
  void run(Tick horizon = kNever);
  bool idle() const { return queue_.empty(); }
  Tick next_event_time() const;

  void register_party(PartyId p);
  bool known(PartyId p) const;
  void set_delay_policy(DelayPolicy policy) { policy_ = std::move(policy); }
  Tick adversary_bound() const { return bound_; }

  // Delivers after DelayPolicy(from, to, 1, adversary_bound) ticks. Messages
  // to an unregistered party are dropped and logged.
  void send(PartyId from, PartyId to, std::string_view kind, Action deliver, std::string summary = {});

  void enable_log(bool on) { logging_ = on; }
  bool logging() const { return logging_; }
  const std::vector<EventRecord>& log() const { return log_; }
  std::string log_text() const;

  std::uint64_t fired() const { return fired_; }
  std::uint64_t dropped() const { return dropped_; }
  std::uint64_t messages_sent() const { return sent_; }

 private:
  struct Pending {
    Tick at;
    std::uint64_t seq;
    std::string_view kind;
    Endpoint source;
    Endpoint target;
    std::string summary;
    Action fn;
  };
  struct Later {
    bool operator()(const Pending& a, const Pending& b) const {
      return a.at != b.at ? a.at > b.at : a.seq > b.seq;
    }
  };

  bool fire_next();

  Tick now_ = 0;
  Tick bound_;
  std::uint64_t next_seq_ = 0;
  std::priority_queue<Pending, std::vector<Pending>, Later> queue_;
  std::vector<bool> cancelled_;
  std::vector<bool> parties_;
  DelayPolicy policy_;
  bool logging_ = false;
  std::vector<EventRecord> log_;
  std::uint64_t fired_ = 0;
  std::uint64_t dropped_ = 0;
  std::uint64_t sent_ = 0;
};

}  // namespace chanlab::sim
