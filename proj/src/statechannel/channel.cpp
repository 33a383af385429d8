#include "json.hpp"
#include <stdexcept>

#include "chanlab/statechannel.hpp"

namespace chanlab::state {

Endpoint::Endpoint(StateChannel& ch, std::size_t index, ChannelApp& app, Behavior behavior)
    : ch_(ch), index_(index), app_(app), behavior_(std::move(behavior)) {}

PartyId Endpoint::id() const { return ch_.cfg_.parties[index_]; }

bool Endpoint::sends_offchain() const { return mode_ != Mode::Stopped && (!behavior_.offchain || behavior_.offchain()); }

void Endpoint::send(std::size_t to, std::string_view kind, std::function<void(Endpoint&)> fn) {
  if (!sends_offchain()) return;
  StateChannel& ch = ch_;
  ch.sim_.send(id(), ch.cfg_.parties[to], kind, [&ch, to, fn = std::move(fn)] { fn(ch.endpoint(to)); });
}

void Endpoint::set_timer(Tick at, std::function<void()> fn) {
  clear_timer();
  const std::uint64_t e = epoch_;
  timer_ = ch_.sim_.schedule(at, "timeout", sim::Endpoint::of(id()), [this, e, fn = std::move(fn)] {
    if (e != epoch_ || mode_ == Mode::Stopped) return;
    timer_.reset();
    fn();
  });
}

void Endpoint::clear_timer() {
  if (timer_) ch_.sim_.cancel(*timer_);
  timer_.reset();
}

Input Endpoint::input_for(std::int64_t r) {
  if (input_round_ != r) {
    cur_input_ = app_.next_input(r);
    input_round_ = r;
  }
  return cur_input_;
}

void Endpoint::start() {
  state_ = ch_.update_->initial_state();
  Bytes aux;
  if (auto* a = ch_.chain_.get<AuxContract>(ch_.aux_)) aux = a->aux_in();
  aux_history_.push_back({ch_.sim_.now(), std::move(aux)});
  schedule_start();
}

void Endpoint::stop() {
  clear_timer();
  ++epoch_;
  mode_ = Mode::Stopped;
}

void Endpoint::schedule_start() {
  const std::uint64_t e = ++epoch_;
  ch_.sim_.schedule(ch_.sim_.now(), "round-start", sim::Endpoint::of(id()), [this, e] {
    if (e == epoch_ && mode_ == Mode::Fast) start_round();
  });
}

void Endpoint::start_round() {
  const std::int64_t r = last_round_ + 1;
  cur_round_ = r;
  proposal_.reset();
  sigs_.assign(ch_.size(), std::nullopt);
  const Input v = input_for(r);
  const Timing& t = ch_.cfg_.timing;
  if (is_leader()) {
    inbox_[r].insert_or_assign(0, v);
    set_timer(ch_.sim_.now() + t.input_wait + 1, [this, r] {
      if (cur_round_ == r && mode_ == Mode::Fast) escalate(r);
    });
    maybe_batch(r);
  } else {
    const std::size_t me = index_;
    send(0, "INPUT", [me, r, v](Endpoint& leader) { leader.on_input(me, r, v); });
    set_timer(ch_.sim_.now() + t.batch_wait + 1, [this, r] {
      if (cur_round_ == r && mode_ == Mode::Fast) escalate(r);
    });
  }
}

void Endpoint::on_input(std::size_t from, std::int64_t r, Input v) {
  if (!is_leader() || mode_ == Mode::Stopped || r <= last_round_) return;
  inbox_[r].try_emplace(from, std::move(v));
  if (r == cur_round_ && mode_ == Mode::Fast) maybe_batch(r);
}

void Endpoint::maybe_batch(std::int64_t r) {
  if (cur_round_ != r || proposal_ || mode_ != Mode::Fast) return;
  auto& box = inbox_[r];
  if (box.size() < ch_.size()) return;
  std::vector<Input> inputs(ch_.size());
  for (auto& [j, v] : box) inputs[j] = v;
  inbox_.erase(inbox_.begin(), inbox_.upper_bound(r));

  const Tick now = ch_.sim_.now();
  Bytes aux = aux_history_.back().second;
  UpdateResult res = ch_.update_->apply(state_, inputs, aux, now);
  if (behavior_.sign_filter && !behavior_.sign_filter(r, state_, res.state)) return;
  Bytes msg = evidence_message(ch_.cfg_.sid, r, res.state, res.out);
  sigs_[0] = ch_.keys_.sign(id(), kSignContext, msg);
  proposal_ = Proposal{r, aux, inputs, now, std::move(res), std::move(msg)};

  for (std::size_t j = 1; j < ch_.size(); ++j) {
    send(j, "BATCH", [r, aux, inputs, now](Endpoint& e) { e.on_batch(r, aux, inputs, now); });
  }
  set_timer(now + ch_.cfg_.timing.commit_wait + 1, [this, r] {
    if (cur_round_ == r && mode_ == Mode::Fast) escalate(r);
  });
  if (ch_.size() == 1) on_sign(0, r, *sigs_[0]);
}

bool Endpoint::aux_recent(const Bytes& v) const {
  const Tick now = ch_.sim_.now();
  for (std::size_t k = aux_history_.size(); k-- > 0;) {
    if (k + 1 < aux_history_.size() && aux_history_[k + 1].first < now - ch_.chain_.delta()) return false;
    if (aux_history_[k].second == v) return true;
  }
  return false;
}

void Endpoint::on_batch(std::int64_t r, Bytes aux_in, std::vector<Input> inputs, Tick t_batch) {
  if (is_leader() || mode_ != Mode::Fast || r != cur_round_ || proposal_) return;
  const Tick now = ch_.sim_.now();
  if (inputs.size() != ch_.size() || input_round_ != r || inputs[index_] != cur_input_) return;
  if (!aux_recent(aux_in)) return;
  if (t_batch > now || now - t_batch > ch_.cfg_.batch_skew) return;

  UpdateResult res = ch_.update_->apply(state_, inputs, aux_in, t_batch);
  if (behavior_.sign_filter && !behavior_.sign_filter(r, state_, res.state)) return;
  Bytes msg = evidence_message(ch_.cfg_.sid, r, res.state, res.out);
  crypto::Signature sig = ch_.keys_.sign(id(), kSignContext, msg);
  proposal_ = Proposal{r, std::move(aux_in), std::move(inputs), t_batch, std::move(res), std::move(msg)};
  const std::size_t me = index_;
  send(0, "SIGN", [me, r, sig](Endpoint& leader) { leader.on_sign(me, r, sig); });
  set_timer(now + ch_.cfg_.timing.commit_wait + 1, [this, r] {
    if (cur_round_ == r && mode_ == Mode::Fast) escalate(r);
  });
}

void Endpoint::on_sign(std::size_t from, std::int64_t r, crypto::Signature sig) {
  if (!is_leader() || mode_ != Mode::Fast || r != cur_round_ || !proposal_ || from >= ch_.size()) return;
  if (!ch_.keys_.verify(ch_.cfg_.parties[from], kSignContext, proposal_->message, sig)) return;
  sigs_[from] = std::move(sig);
  for (const auto& s : sigs_)
    if (!s) return;

  RoundEvidence ev{r, proposal_->result.state, proposal_->result.out, {}};
  for (auto& s : sigs_) ev.sigs.push_back(*s);
  if (behavior_.send_commit) {
    for (std::size_t j = 1; j < ch_.size(); ++j) {
      send(j, "COMMIT", [ev](Endpoint& e) { e.on_commit(ev); });
    }
  }
  commit_local(ev);
}

void Endpoint::on_commit(RoundEvidence ev) {
  if (is_leader() || mode_ != Mode::Fast || ev.round != cur_round_ || !proposal_) return;
  if (ev.state != proposal_->result.state || ev.out != proposal_->result.out) return;
  if (!ch_.contract_->evidence_valid(ev)) return;
  commit_local(ev);
}

void Endpoint::commit_local(const RoundEvidence& ev) {
  clear_timer();
  last_round_ = ev.round;
  last_commit_ = ev;
  state_ = ev.state;
  proposal_.reset();
  ch_.record_commit(ev.round, ev.state, ev.out, CommitPath::Offchain, id());
  app_.on_state(ev.round, ev.state, ev.out, CommitPath::Offchain);
  if (ev.out) {
    if (is_leader() && behavior_.submit_evidence) submit_evidence(ev);
    ch_.sim_.schedule(ch_.sim_.now() + ch_.chain_.delta() + 1, "evidence-retry", sim::Endpoint::of(id()), [this, ev] {
      if (mode_ == Mode::Stopped || !behavior_.submit_evidence) return;
      if (!ch_.contract_->applied().contains(ev.round)) submit_evidence(ev);
    });
  }
  schedule_start();
}

void Endpoint::escalate(std::int64_t r) {
  if (mode_ != Mode::Fast) return;
  clear_timer();
  ++epoch_;
  mode_ = Mode::Escalated;
  proposal_.reset();
  if (!behavior_.escalate) return;
  ContractState* c = ch_.contract_;
  std::optional<RoundEvidence> lc = last_commit_;
  ch_.chain_.submit(id(), c->address(), "dispute", "r=" + std::to_string(r), Money(0),
                    [c, lc, r](chain::TxContext& ctx) {
                      bool any = false;
                      if (lc) any = c->evidence(ctx, *lc) || any;
                      return c->dispute(ctx, r) || any;
                    });
  const std::uint64_t e = epoch_;
  ch_.sim_.schedule(ch_.sim_.now() + ch_.chain_.delta() + 1, "watchdog", sim::Endpoint::of(id()), [this, e] {
    if (e == epoch_ && mode_ == Mode::Escalated) resync();
  });
}

void Endpoint::force_dispute() {
  if (mode_ == Mode::Fast) escalate(last_round_ + 1);
}

void Endpoint::raise_dispute(std::int64_t r) {
  ContractState* c = ch_.contract_;
  ch_.chain_.submit(id(), c->address(), "dispute", "r=" + std::to_string(r), Money(0),
                    [c, r](chain::TxContext& ctx) { return c->dispute(ctx, r); });
}

void Endpoint::resync() {
  const ContractState& c = *ch_.contract_;
  if (c.best_round() > last_round_) {
    const auto& ev = c.best_evidence();
    if (ev && ev->round == c.best_round()) {
      adopt(ev->round, ev->state, ev->out, *ev, CommitPath::Offchain);
    } else {
      adopt(c.best_round(), c.state(), std::nullopt, std::nullopt, CommitPath::Onchain);
    }
    if (c.flag() == ContractState::Flag::Dispute) {
      on_dispute_event(DisputeEvent{c.best_round() + 1, *c.deadline(), std::nullopt});
    } else {
      mode_ = Mode::Fast;
      schedule_start();
    }
  } else if (c.flag() == ContractState::Flag::Dispute && c.best_round() == last_round_) {
    on_dispute_event(DisputeEvent{c.best_round() + 1, *c.deadline(), std::nullopt});
  } else {
    mode_ = Mode::Fast;
    escalate(last_round_ + 1);
  }
}

void Endpoint::on_dispute_event(const DisputeEvent& e) {
  if (mode_ == Mode::Stopped) return;
  if (e.round <= last_round_) {
    if (behavior_.respond_disputes && last_commit_ && last_commit_->round >= e.round) submit_evidence(*last_commit_);
    return;
  }
  if (e.round > last_round_ + 1 && e.prior && e.prior->round == e.round - 1) {
    adopt(e.prior->round, e.prior->state, e.prior->out, *e.prior, CommitPath::Offchain);
  }
  if (e.round != last_round_ + 1) return;
  clear_timer();
  ++epoch_;
  mode_ = Mode::Pending;
  pending_round_ = e.round;
  proposal_.reset();
  const Input v = input_for(e.round);
  if (behavior_.respond_disputes) submit_input(e.round, v);
  const std::int64_t r = e.round;
  const std::uint64_t ep = epoch_;
  if (behavior_.resolve) {
    ch_.sim_.schedule(std::max(e.deadline, ch_.sim_.now()), "resolve", sim::Endpoint::of(id()), [this, r, ep] {
      if (ep == epoch_ && mode_ == Mode::Pending && pending_round_ == r) submit_resolve(r);
    });
  }
  ch_.sim_.schedule(std::max(e.deadline, ch_.sim_.now()) + ch_.chain_.delta() + 1, "watchdog",
                    sim::Endpoint::of(id()), [this, r, ep] {
                      if (ep == epoch_ && mode_ == Mode::Pending && pending_round_ == r) resync();
                    });
}

void Endpoint::on_offchain_event(const OffchainEvent& e) {
  if (mode_ == Mode::Stopped) return;
  const RoundEvidence& ev = e.evidence;
  if (ev.round > last_round_) {
    adopt(ev.round, ev.state, ev.out, ev, CommitPath::Offchain);
    mode_ = Mode::Fast;
    schedule_start();
  } else if (mode_ != Mode::Fast) {
    mode_ = Mode::Fast;
    schedule_start();
  }
}

void Endpoint::on_onchain_event(const OnchainEvent& e) {
  if (mode_ == Mode::Stopped || e.round != last_round_ + 1) return;
  adopt(e.round, e.state, e.out, std::nullopt, CommitPath::Onchain);
  mode_ = Mode::Fast;
  schedule_start();
}

void Endpoint::on_aux_event(const Bytes& value) { aux_history_.push_back({ch_.sim_.now(), value}); }

void Endpoint::adopt(std::int64_t r, const Bytes& state, const std::optional<Bytes>& out,
                     std::optional<RoundEvidence> ev, CommitPath path) {
  clear_timer();
  ++epoch_;
  last_round_ = r;
  last_commit_ = std::move(ev);
  state_ = state;
  proposal_.reset();
  ch_.record_commit(r, state, out, path, id());
  app_.on_state(r, state, out, path);
}

void Endpoint::submit_evidence(const RoundEvidence& ev) {
  ContractState* c = ch_.contract_;
  ch_.chain_.submit(id(), c->address(), "evidence", "r=" + std::to_string(ev.round), Money(0),
                    [c, ev](chain::TxContext& ctx) { return c->evidence(ctx, ev); });
}

void Endpoint::submit_input(std::int64_t r, const Input& v) {
  ContractState* c = ch_.contract_;
  ch_.chain_.submit(id(), c->address(), "input", "r=" + std::to_string(r), Money(0),
                    [c, r, v](chain::TxContext& ctx) { return c->input(ctx, r, v); });
}

void Endpoint::submit_resolve(std::int64_t r) {
  ContractState* c = ch_.contract_;
  ch_.chain_.submit(id(), c->address(), "resolve", "r=" + std::to_string(r), Money(0),
                    [c, r](chain::TxContext& ctx) { return c->resolve(ctx, r); });
}

StateChannel::StateChannel(sim::Simulator& sim, chain::Chain& chain, crypto::KeyRegistry& keys, ChannelConfig cfg,
                           std::shared_ptr<const UpdateFunction> update, chain::Address aux)
    : sim_(sim), chain_(chain), keys_(keys), cfg_(std::move(cfg)), update_(std::move(update)), aux_(aux) {
  if (cfg_.parties.empty()) throw std::invalid_argument("state channel needs at least one party");
  if (cfg_.batch_skew <= 0) cfg_.batch_skew = sim_.adversary_bound();
  for (Tick* w : {&cfg_.timing.input_wait, &cfg_.timing.batch_wait, &cfg_.timing.commit_wait}) {
    if (*w <= 0) *w = 2 * sim_.adversary_bound();
  }
  contract_ = &chain_.deploy<ContractState>(cfg_.sid, cfg_.parties, update_, aux_, keys_, chain_.delta());
  contract_->set_observer(
      [this](std::string_view name, const std::any& payload, Tick now) { observe_contract(name, payload, now); });
}

Endpoint& StateChannel::attach(ChannelApp& app, Behavior behavior) {
  const std::size_t i = endpoints_.size();
  if (i >= cfg_.parties.size()) throw std::logic_error("too many endpoints attached");
  endpoints_.push_back(std::make_unique<Endpoint>(*this, i, app, std::move(behavior)));
  Endpoint* e = endpoints_.back().get();
  const PartyId p = cfg_.parties[i];
  sim_.register_party(p);
  chain_.subscribe(p, contract_->address(), [e](const chain::ChainEvent& ev) {
    if (ev.name == "EventDispute") {
      e->on_dispute_event(std::any_cast<const DisputeEvent&>(ev.payload));
    } else if (ev.name == "EventOffchain") {
      e->on_offchain_event(std::any_cast<const OffchainEvent&>(ev.payload));
    } else if (ev.name == "EventOnchain") {
      e->on_onchain_event(std::any_cast<const OnchainEvent&>(ev.payload));
    }
  });
  chain_.subscribe(p, aux_, [e](const chain::ChainEvent& ev) {
    if (ev.name == kAuxInputEvent) e->on_aux_event(std::any_cast<const Bytes&>(ev.payload));
  });
  return *e;
}

void StateChannel::start() {
  if (endpoints_.size() != cfg_.parties.size()) throw std::logic_error("not every party has an endpoint");
  for (auto& e : endpoints_) e->start();
}

void StateChannel::stop() {
  for (auto& e : endpoints_) e->stop();
}

void StateChannel::record_commit(std::int64_t r, const Bytes& state, const std::optional<Bytes>& out,
                                 CommitPath path, std::optional<PartyId> by) {
  if (path == CommitPath::Offchain) {
    for (const auto& d : disputes_) {
      const bool open = !d.offchain_at && !d.onchain_at;
      if (d.round == r - 1 && open && !d.first_offchain_commit) ++stats_.commits_past_dispute;
    }
  }
  if (by && !keys_.honest(*by)) return;
  auto it = committed_.find(r);
  if (it != committed_.end()) {
    if (it->second.state != state) ++stats_.safety_violations;
    return;
  }
  CommittedRound c{r, state, out, path, sim_.now(), std::nullopt, std::nullopt};
  for (auto d = disputes_.rbegin(); d != disputes_.rend(); ++d) {
    if (d->round == r) {
      c.dispute_at = d->raised_at;
      c.deadline = d->deadline;
      break;
    }
  }
  committed_.emplace(r, std::move(c));
  if (path == CommitPath::Offchain) {
    ++stats_.offchain_rounds;
  } else {
    ++stats_.onchain_rounds;
  }
}

void StateChannel::observe_contract(std::string_view name, const std::any& payload, Tick now) {
  if (name == "EventDispute") {
    const auto& e = std::any_cast<const DisputeEvent&>(payload);
    DisputeRecord d{e.round, now, e.deadline, std::nullopt, std::nullopt, std::nullopt};
    auto it = committed_.find(e.round);
    if (it != committed_.end() && it->second.path == CommitPath::Offchain && it->second.commit_time < now) {
      d.first_offchain_commit = it->second.commit_time;
    }
    disputes_.push_back(d);
    ++stats_.disputes;
  } else if (name == "EventOffchain" || name == "EventOnchain") {
    const bool onchain = name == "EventOnchain";
    const std::int64_t r = onchain ? std::any_cast<const OnchainEvent&>(payload).round
                                   : std::any_cast<const OffchainEvent&>(payload).round;
    if (onchain) {
      const auto& e = std::any_cast<const OnchainEvent&>(payload);
      record_commit(e.round, e.state, e.out, CommitPath::Onchain);
    }
    for (auto d = disputes_.rbegin(); d != disputes_.rend(); ++d) {
      if (d->round != r || d->offchain_at || d->onchain_at) continue;
      (onchain ? d->onchain_at : d->offchain_at) = now;
      check_dispute(*d, false);
      break;
    }
  }
}

void StateChannel::check_dispute(DisputeRecord& d, bool final) {
  const Tick delta = chain_.delta();
  const bool resolved = d.offchain_at || d.onchain_at;
  if (!resolved) {
    if (final && sim_.now() > d.raised_at + 2 * delta) ++stats_.late_resolutions;
    return;
  }
  const bool in_time = (d.offchain_at && *d.offchain_at <= d.raised_at + delta) ||
                       (d.onchain_at && *d.onchain_at <= d.raised_at + 2 * delta);
  if (!in_time) ++stats_.late_resolutions;
  if (d.first_offchain_commit && !(d.offchain_at && *d.offchain_at <= d.raised_at + 2 * delta)) {
    ++stats_.lost_offchain_commits;
  }
}

void StateChannel::finalize_checks() {
  for (auto& d : disputes_) {
    if (!d.offchain_at && !d.onchain_at) check_dispute(d, true);
  }
}

std::string StateChannel::trace_jsonl() const {
  using nlohmann::json;
  std::string out;
  for (const auto& [r, c] : committed_) {
    json j{{"sid", cfg_.sid},
           {"r", r},
           {"path", c.path == CommitPath::Offchain ? "offchain" : "onchain"},
           {"commit_time", c.commit_time}};
    if (c.dispute_at) {
      j["dispute_window"] = {*c.dispute_at, *c.deadline};
    } else {
      j["dispute_window"] = nullptr;
    }
    out += j.dump();
    out += '\n';
  }
  return out;
}

}  // namespace chanlab::state
