#include <algorithm>
#include <sstream>
#include <stdexcept>

#include "chanlab/simkernel.hpp"

namespace chanlab::sim {

std::string Endpoint::label() const {
  switch (kind) {
    case Kind::Party:
      return "P" + std::to_string(id);
    case Kind::Contract:
      return "C" + std::to_string(id);
    case Kind::None:
      break;
  }
  return "-";
}

std::string EventRecord::line() const {
  std::ostringstream os;
  os << time << ' ' << seq << ' ' << kind << ' ' << source.label() << ' ' << target.label();
  if (!summary.empty()) os << ' ' << summary;
  return os.str();
}

Simulator::Simulator(Tick adversary_bound) : bound_(adversary_bound) {
  if (adversary_bound < 1) throw std::invalid_argument("adversary bound must be >= 1");
}

EventHandle Simulator::schedule(Tick at, std::string_view kind, Endpoint target, Action fn, Endpoint source,
                                std::string summary) {
  if (at < now_) {
    throw std::logic_error("event scheduled in the past: at=" + std::to_string(at) +
                           " now=" + std::to_string(now_));
  }
  const std::uint64_t seq = next_seq_++;
  cancelled_.push_back(false);
  queue_.push(Pending{at, seq, kind, source, target, std::move(summary), std::move(fn)});
  return seq;
}

bool Simulator::cancel(EventHandle h) {
  if (h >= cancelled_.size() || cancelled_[h]) return false;
  cancelled_[h] = true;
  return true;
}

Tick Simulator::next_event_time() const { return queue_.empty() ? kNever : queue_.top().at; }

bool Simulator::fire_next() {
  // priority_queue::top is const; the action is moved out via const_cast,
  // which is safe because the element is popped immediately afterwards.
  auto& top = const_cast<Pending&>(queue_.top());
  Pending ev = std::move(top);
  queue_.pop();
  if (cancelled_[ev.seq]) return false;
  cancelled_[ev.seq] = true;
  now_ = ev.at;
  ++fired_;
  if (logging_) {
    log_.push_back(EventRecord{ev.at, ev.seq, std::string(ev.kind), ev.source, ev.target, std::move(ev.summary)});
  }
  if (ev.fn) ev.fn();
  return true;
}

void Simulator::run_until(Tick t) {
  while (!queue_.empty() && queue_.top().at <= t) fire_next();
  now_ = std::max(now_, t);
}

void Simulator::run(Tick horizon) {
  while (!queue_.empty() && queue_.top().at <= horizon) fire_next();
}

void Simulator::register_party(PartyId p) {
  const auto i = index_of(p);
  if (parties_.size() <= i) parties_.resize(i + 1, false);
  parties_[i] = true;
}

bool Simulator::known(PartyId p) const {
  const auto i = index_of(p);
  return i < parties_.size() && parties_[i];
}

void Simulator::send(PartyId from, PartyId to, std::string_view kind, Action deliver, std::string summary) {
  ++sent_;
  if (!known(to)) {
    ++dropped_;
    if (logging_) {
      log_.push_back(EventRecord{now_, next_seq_++, "drop:" + std::string(kind), Endpoint::of(from), Endpoint::of(to),
                                 std::move(summary)});
      cancelled_.push_back(true);
    }
    return;
  }
  Tick d = 1;
  if (policy_) d = std::clamp<Tick>(policy_(from, to, 1, bound_), 1, bound_);
  schedule(now_ + d, kind, Endpoint::of(to), std::move(deliver), Endpoint::of(from), std::move(summary));
}

std::string Simulator::log_text() const {
  std::string out;
  for (const auto& r : log_) {
    out += r.line();
    out += '\n';
  }
  return out;
}

}  // namespace chanlab::sim
