#include <stdexcept>

#include "chanlab/codec.hpp"
#include "chanlab/statechannel.hpp"

namespace chanlab::state {

Bytes evidence_message(std::uint64_t sid, std::int64_t round, const Bytes& state, const std::optional<Bytes>& out) {
  codec::Writer w;
  w.str("round").i64(static_cast<std::int64_t>(sid)).i64(round).bytes(state).opt_bytes(out);
  return w.take();
}

ContractState::ContractState(std::uint64_t sid, std::vector<PartyId> parties, std::shared_ptr<const UpdateFunction> update,
                             chain::Address aux, const crypto::KeyRegistry& keys, Tick delta)
    : sid_(sid),
      parties_(std::move(parties)),
      update_(std::move(update)),
      aux_(aux),
      keys_(keys),
      delta_(delta),
      state_(update_->initial_state()) {}

std::int64_t ContractState::field(std::string_view name) const {
  if (name == "bestRound") return best_round_;
  if (name == "flag") return static_cast<std::int64_t>(flag_);
  if (name == "deadline") return deadline_.value_or(-1);
  return Contract::field(name);
}

bool ContractState::evidence_valid(const RoundEvidence& ev) const {
  if (ev.sigs.size() != parties_.size()) return false;
  const Bytes msg = evidence_message(sid_, ev.round, ev.state, ev.out);
  for (std::size_t i = 0; i < parties_.size(); ++i) {
    if (!keys_.verify(parties_[i], kSignContext, msg, ev.sigs[i])) return false;
  }
  return true;
}

void ContractState::set_best_round(std::int64_t r) {
  if (r <= best_round_) ++regressions_;
  best_round_ = r;
}

void ContractState::apply_output(chain::TxContext& ctx, std::int64_t r, const std::optional<Bytes>& out) {
  if (!out || applied_.contains(r)) return;
  applied_.insert(r);
  ++aux_calls_[r];
  ctx.call<AuxContract>(aux_, [&](AuxContract& a, chain::TxContext& c) {
    a.aux_output(c, *out);
    return true;
  });
}

void ContractState::notify(chain::TxContext& ctx, std::string name, std::string args, std::any payload) {
  if (observer_) observer_(name, payload, ctx.now);
  ctx.emit(std::move(name), std::move(args), std::move(payload));
}

bool ContractState::evidence(chain::TxContext& ctx, const RoundEvidence& ev) {
  if (ev.round <= best_round_) {
    // A skipped round may still carry an output that was never applied.
    if (!ev.out || applied_.contains(ev.round) || !evidence_valid(ev)) return false;
    apply_output(ctx, ev.round, ev.out);
    return true;
  }
  if (!evidence_valid(ev)) return false;
  const bool was_dispute = flag_ == Flag::Dispute;
  const std::int64_t cleared = best_round_ + 1;
  flag_ = Flag::Ok;
  deadline_.reset();
  set_best_round(ev.round);
  state_ = ev.state;
  best_evidence_ = ev;
  if (was_dispute) {
    notify(ctx, "EventOffchain", "r=" + std::to_string(cleared) + " evidence=" + std::to_string(ev.round),
             OffchainEvent{cleared, ev});
  }
  apply_output(ctx, ev.round, ev.out);
  return true;
}

bool ContractState::dispute(chain::TxContext& ctx, std::int64_t r) {
  if (r != best_round_ + 1 || flag_ != Flag::Ok) return false;
  flag_ = Flag::Dispute;
  deadline_ = ctx.now + delta_;
  notify(ctx, "EventDispute", "r=" + std::to_string(r) + " deadline=" + std::to_string(*deadline_),
           DisputeEvent{r, *deadline_, best_evidence_});
  return true;
}

bool ContractState::input(chain::TxContext& ctx, std::int64_t r, const Input& v) {
  for (std::size_t j = 0; j < parties_.size(); ++j) {
    if (parties_[j] != ctx.submitter) continue;
    onchain_inputs_.try_emplace({r, j}, v);
    return true;
  }
  return false;
}

bool ContractState::resolve(chain::TxContext& ctx, std::int64_t r) {
  if (r != best_round_ + 1 || flag_ != Flag::Dispute || !deadline_ || ctx.now < *deadline_) return false;
  std::vector<Input> inputs(parties_.size());
  for (std::size_t j = 0; j < parties_.size(); ++j) {
    auto it = onchain_inputs_.find({r, j});
    if (it != onchain_inputs_.end()) inputs[j] = it->second;
  }
  Bytes aux_in;
  if (auto* a = dynamic_cast<const AuxContract*>(ctx.chain.contract(aux_))) aux_in = a->aux_in();
  UpdateResult res = update_->apply(state_, inputs, aux_in, ctx.now);
  state_ = res.state;
  best_evidence_.reset();
  flag_ = Flag::Ok;
  deadline_.reset();
  set_best_round(r);
  notify(ctx, "EventOnchain", "r=" + std::to_string(r), OnchainEvent{r, res.state, res.out});
  apply_output(ctx, r, res.out);
  return true;
}

FStateOracle::FStateOracle(std::size_t parties, std::shared_ptr<const UpdateFunction> update)
    : parties_(parties), update_(std::move(update)), state_(update_->initial_state()) {}

const UpdateResult& FStateOracle::step(const std::vector<Input>& received, const Bytes& aux_in, Tick now) {
  std::vector<Input> inputs(parties_);
  for (std::size_t i = 0; i < parties_ && i < received.size(); ++i) inputs[i] = received[i];
  UpdateResult res = update_->apply(state_, inputs, aux_in, now);
  state_ = res.state;
  ++round_;
  history_.push_back(std::move(res));
  return history_.back();
}

void FStateOracle::advance_ptr(std::size_t j) {
  if (j >= aux_buf_.size()) throw std::out_of_range("aux pointer beyond buffer");
  ptr_ = std::max(ptr_, j);
}

const Bytes& FStateOracle::current_aux() const {
  static const Bytes kEmpty;
  return aux_buf_.empty() ? kEmpty : aux_buf_[ptr_];
}

}  // namespace chanlab::state
