#include "chanlab/chain.hpp"

#include <algorithm>
#include "json.hpp"
#include <stdexcept>

namespace chanlab::chain {

std::int64_t Contract::field(std::string_view name) const {
  throw std::invalid_argument("unknown contract field: " + std::string(name));
}

void TxContext::pay(PartyId to, Money amount) {
  if (amount < Money(0)) throw std::logic_error("negative payout");
  auto& esc = chain.escrow_.at(index_of(self_));
  if (esc < amount) {
    throw std::logic_error("escrow underflow at contract " + std::to_string(index_of(self_)));
  }
  esc -= amount;
  chain.balances_[chanlab::index_of(to)] += amount;
  record_.payouts.push_back(Payout{self_, to, amount});
}

void TxContext::emit(std::string name, std::string args, std::any payload) {
  record_.events.push_back(name);
  chain.deliver(ChainEvent{self_, std::move(name), std::move(args), now, record_.id, std::move(payload)});
}

Chain::Chain(sim::Simulator& sim, ChainConfig cfg) : sim_(sim), cfg_(cfg) {
  if (cfg.delta < 1) throw std::invalid_argument("delta must be >= 1");
}

void Chain::adopt(std::unique_ptr<Contract> c) {
  c->address_ = static_cast<Address>(contracts_.size());
  field_names_.push_back(c->field_names());
  std::vector<std::int64_t> initial;
  for (const auto& f : field_names_.back()) initial.push_back(c->field(f));
  history_.push_back({Snapshot{sim_.now(), std::move(initial)}});
  escrow_.push_back(Money(0));
  contracts_.push_back(std::move(c));
}

Contract* Chain::contract(Address a) const {
  const auto i = index_of(a);
  return i < contracts_.size() ? contracts_[i].get() : nullptr;
}

void Chain::mint(PartyId p, Money amount) {
  if (amount < Money(0)) throw std::invalid_argument("negative mint");
  balances_[chanlab::index_of(p)] += amount;
  minted_ += amount;
  mints_.push_back({sim_.now(), {p, amount}});
}

Money Chain::balance(PartyId p) const {
  auto it = balances_.find(chanlab::index_of(p));
  return it == balances_.end() ? Money(0) : it->second;
}

Money Chain::escrow(Address a) const { return escrow_.at(index_of(a)); }

SubmitStatus Chain::submit(PartyId submitter, Address target, std::string method, std::string args, Money coins,
                           Body body) {
  if (!contract(target)) return SubmitStatus::UnknownContract;
  if (coins < Money(0) || balance(submitter) < coins) return SubmitStatus::InsufficientCoins;
  balances_[chanlab::index_of(submitter)] -= coins;
  in_flight_ += coins;

  TxRecord rec;
  rec.id = txs_.size();
  rec.submitter = submitter;
  rec.target = target;
  rec.method = std::move(method);
  rec.args = std::move(args);
  rec.coins = coins;
  rec.submitted_at = sim_.now();
  Tick d = 1;
  if (confirm_policy_) d = std::clamp<Tick>(confirm_policy_(rec, cfg_.delta), 1, cfg_.delta);
  const std::uint64_t id = rec.id;
  const std::string summary = rec.method;
  txs_.push_back(std::move(rec));
  sim_.schedule(
      sim_.now() + d, "tx", sim::Endpoint::contract(index_of(target)),
      [this, id, body = std::move(body)]() mutable { confirm(id, std::move(body)); }, sim::Endpoint::of(submitter),
      summary);
  return SubmitStatus::Accepted;
}

void Chain::confirm(std::uint64_t tx_id, Body body) {
  TxRecord& rec = txs_[tx_id];
  rec.confirmed_at = sim_.now();
  rec.exec_index = exec_counter_++;
  in_flight_ -= rec.coins;
  escrow_[index_of(rec.target)] += rec.coins;
  TxContext ctx(*this, sim_.now(), rec.submitter, rec.coins, rec.target, rec);
  rec.applied = body ? body(ctx) : true;
  if (!rec.applied) {
    escrow_[index_of(rec.target)] -= rec.coins;
    balances_[chanlab::index_of(rec.submitter)] += rec.coins;
  }
  rec.escrow_after = escrow_[index_of(rec.target)];
  snapshot(sim_.now());
  check();
}

void Chain::snapshot(Tick t) {
  for (std::size_t i = 0; i < contracts_.size(); ++i) {
    const auto& names = field_names_[i];
    if (names.empty()) continue;
    std::vector<std::int64_t> values;
    values.reserve(names.size());
    for (const auto& f : names) values.push_back(contracts_[i]->field(f));
    auto& hist = history_[i];
    if (hist.back().values == values) continue;
    if (hist.back().time == t) {
      hist.back().values = std::move(values);
    } else {
      hist.push_back(Snapshot{t, std::move(values)});
    }
  }
}

void Chain::deliver(const ChainEvent& ev) {
  for (const auto& s : subs_) {
    if (s.emitter != ev.emitter) continue;
    Tick d = 0;
    if (event_policy_) d = std::clamp<Tick>(event_policy_(s.party, ev, cfg_.delta), 0, cfg_.delta);
    auto fn = s.fn;
    sim_.schedule(
        sim_.now() + d, "chain-event", sim::Endpoint::of(s.party), [fn, ev] { fn(ev); },
        sim::Endpoint::contract(index_of(ev.emitter)), sim_.logging() ? ev.name + " " + ev.args : std::string());
  }
}

void Chain::subscribe(PartyId p, Address emitter, Listener fn) {
  subs_.push_back(Subscription{p, emitter, std::move(fn)});
}

std::int64_t Chain::read_at(Address a, std::string_view field, Tick view_time) const {
  const auto i = index_of(a);
  if (i >= contracts_.size()) throw std::out_of_range("read from undeployed contract");
  const auto& names = field_names_[i];
  auto it = std::find(names.begin(), names.end(), field);
  if (it == names.end()) throw std::invalid_argument("unknown contract field: " + std::string(field));
  const auto col = static_cast<std::size_t>(it - names.begin());
  const auto& hist = history_[i];
  auto pos = std::upper_bound(hist.begin(), hist.end(), view_time,
                              [](Tick t, const Snapshot& s) { return t < s.time; });
  if (pos == hist.begin()) return hist.front().values[col];
  return std::prev(pos)->values[col];
}

std::int64_t Chain::read(PartyId reader, Address a, std::string_view field) const {
  Tick lag = 0;
  if (view_policy_) lag = std::clamp<Tick>(view_policy_(reader, cfg_.delta), 0, cfg_.delta);
  return read_at(a, field, sim_.now() - lag);
}

std::size_t Chain::confirmed_count() const {
  return static_cast<std::size_t>(
      std::count_if(txs_.begin(), txs_.end(), [](const TxRecord& t) { return t.confirmed_at >= 0; }));
}

std::size_t Chain::confirmed_count_to(Address a) const {
  return static_cast<std::size_t>(std::count_if(
      txs_.begin(), txs_.end(), [a](const TxRecord& t) { return t.confirmed_at >= 0 && t.target == a; }));
}

std::size_t Chain::pending_count() const { return txs_.size() - confirmed_count(); }

bool Chain::conserved() const {
  Money total = in_flight_;
  for (const auto& [_, b] : balances_) {
    if (b < Money(0)) return false;
    total += b;
  }
  for (auto e : escrow_) {
    if (e < Money(0)) return false;
    total += e;
  }
  return total == minted_;
}

void Chain::check() {
  ++checks_;
  if (!conserved()) ++violations_;
}

bool Chain::live() const {
  const Tick now = sim_.now();
  for (const auto& t : txs_) {
    if (t.confirmed_at < 0) {
      if (now - t.submitted_at > cfg_.delta) return false;
    } else if (t.confirmed_at - t.submitted_at < 1 || t.confirmed_at - t.submitted_at > cfg_.delta) {
      return false;
    }
  }
  return true;
}

void Chain::inject_fault(PartyId p, Money amount) {
  balances_[chanlab::index_of(p)] += amount;
  check();
}

std::string Chain::trace_jsonl() const {
  using nlohmann::json;
  std::string out;
  for (const auto& [t, m] : mints_) {
    json j{{"kind", "mint"}, {"t", t}, {"party", chanlab::index_of(m.first)}, {"coins", m.second.units()}};
    out += j.dump();
    out += '\n';
  }
  std::vector<const TxRecord*> order;
  for (const auto& t : txs_)
    if (t.confirmed_at >= 0) order.push_back(&t);
  std::stable_sort(order.begin(), order.end(),
                   [](const TxRecord* a, const TxRecord* b) { return a->exec_index < b->exec_index; });
  for (const TxRecord* t : order) {
    json payouts = json::array();
    for (const auto& p : t->payouts)
      payouts.push_back({index_of(p.from), chanlab::index_of(p.to), p.amount.units()});
    json j{{"kind", "tx"},
           {"id", t->id},
           {"t_submit", t->submitted_at},
           {"t_confirm", t->confirmed_at},
           {"submitter", chanlab::index_of(t->submitter)},
           {"contract", index_of(t->target)},
           {"contract_type", std::string(contract(t->target)->type_name())},
           {"method", t->method},
           {"args", t->args},
           {"coins", t->coins.units()},
           {"applied", t->applied},
           {"events_emitted", t->events},
           {"payouts", payouts},
           {"escrow_after", t->escrow_after.units()}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::string Chain::ledger_jsonl() const {
  using nlohmann::json;
  json balances = json::array();
  for (const auto& [p, m] : balances_) balances.push_back({p, m.units()});
  json escrows = json::array();
  for (std::size_t a = 0; a < escrow_.size(); ++a) escrows.push_back({a, escrow_[a].units()});
  std::map<std::uint32_t, std::int64_t> pending;
  for (const auto& t : txs_)
    if (t.confirmed_at < 0 && t.coins > Money(0)) pending[chanlab::index_of(t.submitter)] += t.coins.units();
  json flight = json::array();
  for (const auto& [p, c] : pending) flight.push_back({p, c});
  json j{{"kind", "ledger"}, {"t", sim_.now()}, {"balances", balances}, {"escrows", escrows}, {"in_flight", flight}};
  return j.dump() + "\n";
}

}  // namespace chanlab::chain
