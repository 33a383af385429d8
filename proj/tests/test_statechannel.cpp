#include "catch_amalgamated.hpp"

#include <random>

#include "chanlab/accumulator.hpp"

using namespace chanlab;
using namespace chanlab::state;

namespace {

Input in(std::int64_t v) { return encode_int(v); }

AccumulatorRig::Script default_script() {
  return [](std::size_t i, std::int64_t r) { return in(static_cast<std::int64_t>(10 * (i + 1) + r + 1)); };
}

RoundEvidence sign_all(AccumulatorRig& rig, std::int64_t r, const Bytes& state, std::optional<Bytes> out = {}) {
  RoundEvidence ev{r, state, std::move(out), {}};
  const Bytes msg = evidence_message(rig.opt.sid, r, state, ev.out);
  for (std::size_t i = 0; i < rig.opt.parties; ++i) ev.sigs.push_back(rig.keys.sign(party(i), kSignContext, msg));
  return ev;
}

// Runs a transaction body against the channel contract at the next tick.
bool exec(AccumulatorRig& rig, PartyId who, std::function<bool(ContractState&, chain::TxContext&)> body) {
  ContractState* c = &rig.channel->contract();
  bool result = false;
  rig.chain.submit(who, c->address(), "test", "", Money(0), [&, c](chain::TxContext& ctx) {
    result = body(*c, ctx);
    return result;
  });
  rig.sim.run_until(rig.sim.now() + 1);
  return result;
}

std::vector<std::string> contract_events(const AccumulatorRig& rig) {
  std::vector<std::string> out;
  for (const auto& tx : rig.chain.transactions())
    for (const auto& e : tx.events) out.push_back(e);
  return out;
}

// Oracle run: every party's scripted input reaches every round.
std::vector<Bytes> oracle_states(const AccumulatorRig& rig, const AccumulatorRig::Script& script, std::int64_t rounds,
                                 const Bytes& aux = encode_int(0)) {
  FStateOracle f(rig.opt.parties, rig.update);
  std::vector<Bytes> out;
  for (std::int64_t r = 0; r < rounds; ++r) {
    std::vector<Input> v;
    for (std::size_t i = 0; i < rig.opt.parties; ++i) v.push_back(script(i, r));
    out.push_back(f.step(v, aux, 0).state);
  }
  return out;
}

}  // namespace

TEST_CASE("contract evidence is accepted monotonically", "[statechannel][contract]") {
  AccumulatorRig rig({}, default_script());
  CHECK(exec(rig, party(0), [&](ContractState& c, chain::TxContext& ctx) {
    return c.evidence(ctx, sign_all(rig, 2, encode_int(5)));
  }));
  CHECK(rig.channel->contract().best_round() == 2);
  CHECK(exec(rig, party(0), [&](ContractState& c, chain::TxContext& ctx) {
    return c.evidence(ctx, sign_all(rig, 5, encode_int(9)));
  }));
  CHECK(rig.channel->contract().best_round() == 5);
  CHECK_FALSE(exec(rig, party(0), [&](ContractState& c, chain::TxContext& ctx) {
    return c.evidence(ctx, sign_all(rig, 5, encode_int(1)));
  }));
  CHECK(rig.channel->contract().state() == encode_int(9));
}

TEST_CASE("contract rejects evidence with a bad or missing signature", "[statechannel][contract]") {
  AccumulatorRig rig({}, default_script());
  RoundEvidence ev = sign_all(rig, 0, encode_int(5));
  ev.state = encode_int(6);
  CHECK_FALSE(exec(rig, party(0), [&](ContractState& c, chain::TxContext& ctx) { return c.evidence(ctx, ev); }));
  RoundEvidence short_ev = sign_all(rig, 0, encode_int(5));
  short_ev.sigs.pop_back();
  CHECK_FALSE(exec(rig, party(0), [&](ContractState& c, chain::TxContext& ctx) { return c.evidence(ctx, short_ev); }));
  RoundEvidence other_sid = sign_all(rig, 0, encode_int(5));
  const Bytes msg = evidence_message(99, 0, encode_int(5), std::nullopt);
  other_sid.sigs[1] = rig.keys.sign(party(1), kSignContext, msg);
  CHECK_FALSE(exec(rig, party(0), [&](ContractState& c, chain::TxContext& ctx) { return c.evidence(ctx, other_sid); }));
  CHECK(rig.channel->contract().best_round() == -1);
}

TEST_CASE("dispute sets a deadline delta ahead and guards round and flag", "[statechannel][contract]") {
  RigOptions o;
  o.delta = 10;
  AccumulatorRig rig(o, default_script());
  exec(rig, party(0), [&](ContractState& c, chain::TxContext& ctx) {
    return c.evidence(ctx, sign_all(rig, 4, encode_int(1)));
  });
  CHECK_FALSE(exec(rig, party(1), [](ContractState& c, chain::TxContext& ctx) { return c.dispute(ctx, 7); }));
  rig.sim.run_until(19);
  CHECK(exec(rig, party(1), [](ContractState& c, chain::TxContext& ctx) { return c.dispute(ctx, 5); }));
  CHECK(rig.sim.now() == 20);
  CHECK(rig.channel->contract().deadline() == std::optional<Tick>(30));
  CHECK(rig.channel->contract().flag() == ContractState::Flag::Dispute);
  CHECK_FALSE(exec(rig, party(1), [](ContractState& c, chain::TxContext& ctx) { return c.dispute(ctx, 5); }));
}

TEST_CASE("evidence during a dispute clears it and emits EventOffchain", "[statechannel][contract]") {
  AccumulatorRig rig({}, default_script());
  exec(rig, party(0), [&](ContractState& c, chain::TxContext& ctx) {
    return c.evidence(ctx, sign_all(rig, 2, encode_int(1)));
  });
  exec(rig, party(1), [](ContractState& c, chain::TxContext& ctx) { return c.dispute(ctx, 3); });
  exec(rig, party(0), [&](ContractState& c, chain::TxContext& ctx) {
    return c.evidence(ctx, sign_all(rig, 3, encode_int(2)));
  });
  CHECK(rig.channel->contract().flag() == ContractState::Flag::Ok);
  CHECK(contract_events(rig) == std::vector<std::string>{"EventDispute", "EventOffchain"});
  REQUIRE(rig.channel->disputes().size() == 1);
  CHECK(rig.channel->disputes()[0].round == 3);
  CHECK(rig.channel->disputes()[0].offchain_at.has_value());
}

TEST_CASE("on-chain inputs are first-write and unguarded by round", "[statechannel][contract]") {
  RigOptions o;
  o.delta = 2;
  AccumulatorRig rig(o, default_script());
  CHECK(exec(rig, party(1), [](ContractState& c, chain::TxContext& ctx) { return c.input(ctx, 0, in(4)); }));
  CHECK(exec(rig, party(1), [](ContractState& c, chain::TxContext& ctx) { return c.input(ctx, 0, in(9)); }));
  CHECK(exec(rig, party(0), [](ContractState& c, chain::TxContext& ctx) { return c.input(ctx, 0, in(1)); }));
  CHECK(exec(rig, party(1), [](ContractState& c, chain::TxContext& ctx) { return c.input(ctx, 42, in(1)); }));
  exec(rig, party(0), [](ContractState& c, chain::TxContext& ctx) { return c.dispute(ctx, 0); });
  rig.sim.run_until(rig.sim.now() + 2);
  CHECK(exec(rig, party(0), [](ContractState& c, chain::TxContext& ctx) { return c.resolve(ctx, 0); }));
  // 7·0 + 1·1 + 2·4: P1's first write (4) wins.
  CHECK(decode_int(rig.channel->contract().state()) == 9);
}

TEST_CASE("resolve fills missing inputs with the default and respects the deadline", "[statechannel][contract]") {
  RigOptions o;
  o.delta = 5;
  AccumulatorRig rig(o, default_script());
  exec(rig, party(0), [&](ContractState& c, chain::TxContext& ctx) {
    return c.evidence(ctx, sign_all(rig, 4, encode_int(3)));
  });
  exec(rig, party(1), [](ContractState& c, chain::TxContext& ctx) { return c.dispute(ctx, 5); });
  const Tick deadline = *rig.channel->contract().deadline();
  exec(rig, party(0), [](ContractState& c, chain::TxContext& ctx) { return c.input(ctx, 5, in(2)); });
  rig.sim.run_until(deadline - 2);
  CHECK_FALSE(exec(rig, party(0), [](ContractState& c, chain::TxContext& ctx) { return c.resolve(ctx, 5); }));
  CHECK(rig.sim.now() == deadline - 1);
  CHECK_FALSE(exec(rig, party(0), [](ContractState& c, chain::TxContext& ctx) { return c.resolve(ctx, 4); }));
  CHECK(exec(rig, party(0), [](ContractState& c, chain::TxContext& ctx) { return c.resolve(ctx, 5); }));
  CHECK(decode_int(rig.channel->contract().state()) == 7 * 3 + 2);
  CHECK(rig.channel->contract().best_round() == 5);
  CHECK(contract_events(rig).back() == "EventOnchain");
}

TEST_CASE("resolve uses the aux value current at resolve time", "[statechannel][contract]") {
  // Replay: two aux updates land during the dispute window; only the second
  // is visible to resolve.
  RigOptions o;
  o.delta = 4;
  AccumulatorRig rig(o, default_script());
  exec(rig, party(0), [](ContractState& c, chain::TxContext& ctx) { return c.dispute(ctx, 0); });
  rig.set_aux(party(0), 100);
  rig.sim.run_until(rig.sim.now() + 1);
  rig.set_aux(party(1), 250);
  rig.sim.run_until(rig.sim.now() + 4);
  CHECK(exec(rig, party(0), [](ContractState& c, chain::TxContext& ctx) { return c.resolve(ctx, 0); }));
  CHECK(decode_int(rig.channel->contract().state()) == 250);
}

TEST_CASE("aux output runs exactly once per round even under re-entrant replay", "[statechannel][contract]") {
  AccumulatorRig rig({}, default_script());
  RoundEvidence ev = sign_all(rig, 0, encode_int(1), encode_int(8));
  ContractState* c = &rig.channel->contract();
  int reentries = 0;
  rig.aux->on_output = [&](chain::TxContext& ctx) {
    ++reentries;
    // Replaying the same evidence from inside the callee must be a no-op.
    ctx.call<ContractState>(c->address(), [&](ContractState& cs, chain::TxContext& inner) {
      return cs.evidence(inner, ev);
    });
  };
  exec(rig, party(0), [&](ContractState& cs, chain::TxContext& ctx) { return cs.evidence(ctx, ev); });
  exec(rig, party(1), [&](ContractState& cs, chain::TxContext& ctx) { return cs.evidence(ctx, ev); });
  CHECK(rig.aux->outputs().size() == 1);
  CHECK(reentries == 1);
  // A skipped round's output still applies once.
  RoundEvidence later = sign_all(rig, 3, encode_int(2));
  exec(rig, party(0), [&](ContractState& cs, chain::TxContext& ctx) { return cs.evidence(ctx, later); });
  RoundEvidence skipped = sign_all(rig, 2, encode_int(7), encode_int(5));
  CHECK(exec(rig, party(0), [&](ContractState& cs, chain::TxContext& ctx) { return cs.evidence(ctx, skipped); }));
  CHECK_FALSE(exec(rig, party(0), [&](ContractState& cs, chain::TxContext& ctx) { return cs.evidence(ctx, skipped); }));
  CHECK(rig.aux->outputs().size() == 2);
  CHECK(rig.channel->contract().best_round() == 3);
  for (auto [r, n] : rig.channel->contract().aux_calls()) CHECK(n == 1);
}

TEST_CASE("honest parties commit rounds off-chain without touching the chain", "[statechannel][protocol]") {
  for (std::size_t n : {2, 3}) {
    RigOptions o;
    o.parties = n;
    o.delta = 10;
    auto script = default_script();
    AccumulatorRig rig(o, script);
    rig.start();
    REQUIRE(rig.run_until_round(5, 200));
    CHECK(rig.chain.transactions().empty());
    // One round costs four ticks: INPUT, BATCH, SIGN, COMMIT.
    CHECK(rig.channel->committed().at(5).commit_time == 4 * 5 + 3);
    const auto expect = oracle_states(rig, script, 6);
    for (std::int64_t r = 0; r <= 5; ++r) {
      CHECK(rig.channel->committed().at(r).state == expect[static_cast<std::size_t>(r)]);
      CHECK(rig.channel->committed().at(r).path == CommitPath::Offchain);
    }
    CHECK(rig.channel->stats().safety_violations == 0);
  }
}

TEST_CASE("withheld COMMIT escalates and settles on-chain within the dispute bound", "[statechannel][protocol]") {
  RigOptions o;
  o.delta = 10;
  auto script = default_script();
  AccumulatorRig rig(o, script);
  Behavior leader;
  leader.send_commit = false;
  rig.keys.set_honest(party(0), false);
  rig.start({leader, {}});
  REQUIRE(rig.run_until_round(2, 500));
  const auto& disputes = rig.channel->disputes();
  REQUIRE_FALSE(disputes.empty());
  const DisputeRecord& d = disputes.front();
  CHECK(d.round == 0);
  // The leader holds COMMIT(0) and answers with evidence.
  REQUIRE(d.offchain_at.has_value());
  CHECK(*d.offchain_at <= d.raised_at + o.delta);
  rig.channel->finalize_checks();
  CHECK(rig.channel->stats().late_resolutions == 0);
  CHECK(rig.channel->stats().commits_past_dispute == 0);
  CHECK(rig.channel->stats().lost_offchain_commits == 0);
  CHECK(rig.channel->stats().safety_violations == 0);
  const auto expect = oracle_states(rig, script, 3);
  for (std::int64_t r = 0; r <= 2; ++r) CHECK(rig.channel->committed().at(r).state == expect[static_cast<std::size_t>(r)]);
}

TEST_CASE("a silent leader forces on-chain rounds that still include honest inputs", "[statechannel][protocol]") {
  RigOptions o;
  o.delta = 6;
  auto script = default_script();
  AccumulatorRig rig(o, script);
  Behavior silent;
  silent.offchain = [] { return false; };
  silent.escalate = false;
  silent.respond_disputes = false;
  silent.resolve = false;
  rig.keys.set_honest(party(0), false);
  rig.start({silent, {}});
  REQUIRE(rig.run_until_round(1, 500));
  for (std::int64_t r = 0; r <= 1; ++r) {
    const auto& c = rig.channel->committed().at(r);
    CHECK(c.path == CommitPath::Onchain);
    REQUIRE(c.dispute_at.has_value());
    CHECK(c.commit_time <= *c.dispute_at + 2 * o.delta);
  }
  // Leader input is ⊥ on-chain: s1 = 7·0 + 2·v(P2,0).
  CHECK(decode_int(rig.channel->committed().at(0).state) == 2 * 21);
  rig.channel->finalize_checks();
  CHECK(rig.channel->stats().late_resolutions == 0);
}

TEST_CASE("dispute of an already-settled round is answered with evidence", "[statechannel][protocol]") {
  RigOptions o;
  o.delta = 10;
  AccumulatorRig rig(o, default_script());
  rig.start();
  REQUIRE(rig.run_until_round(3, 200));
  // Corrupt P2 disputes round 0, which is settled off-chain but not on-chain.
  rig.channel->endpoint(1).raise_dispute(0);
  rig.sim.run_until(rig.sim.now() + 3 * o.delta);
  REQUIRE(rig.channel->disputes().size() == 1);
  const auto& d = rig.channel->disputes()[0];
  REQUIRE(d.offchain_at.has_value());
  CHECK(*d.offchain_at <= d.raised_at + o.delta);
  CHECK(rig.channel->contract().best_round() >= 3);
  rig.channel->finalize_checks();
  CHECK(rig.channel->stats().late_resolutions == 0);
  CHECK(rig.channel->stats().lost_offchain_commits == 0);
}

TEST_CASE("COMMIT arriving after EventDispute is ignored in favour of the on-chain input", "[statechannel][protocol]") {
  RigOptions o;
  o.delta = 5;
  o.message_bound = 4;
  AccumulatorRig rig(o, default_script());
  // Delay only COMMIT messages (P0 -> P1 after the leader has all SIGNs).
  rig.sim.set_delay_policy([&rig](PartyId from, PartyId, Tick base, Tick max) {
    return from == party(0) && rig.sim.now() >= 3 ? max : base;
  });
  rig.start();
  rig.sim.run_until(3);
  REQUIRE(rig.channel->endpoint(0).last_round() == 0);
  // Corrupt leader opens a dispute on the round it just committed.
  rig.channel->endpoint(0).raise_dispute(0);
  rig.sim.run_until(40);
  std::vector<std::string> p1;
  for (const auto& tx : rig.chain.transactions())
    if (tx.submitter == party(1)) p1.push_back(tx.method);
  REQUIRE_FALSE(p1.empty());
  CHECK(p1.front() == "input");
  CHECK(std::find(p1.begin(), p1.end(), "evidence") == p1.end());
}

TEST_CASE("input asked for during a dispute is used in the resolved round", "[statechannel][protocol]") {
  RigOptions o;
  o.delta = 6;
  auto script = default_script();
  AccumulatorRig rig(o, script);
  Behavior leader;
  leader.send_commit = false;
  leader.respond_disputes = false;
  leader.submit_evidence = false;
  leader.escalate = false;
  rig.keys.set_honest(party(0), false);
  rig.start({leader, {}});
  REQUIRE(rig.run_until_round(3, 1000));
  // Each round's input was requested exactly once per party.
  for (const auto& app : rig.apps) {
    for (std::int64_t r = 0; r <= 3; ++r) CHECK(std::count(app->asked.begin(), app->asked.end(), r) == 1);
  }
  // Every round settles on-chain with the leader's input missing.
  std::int64_t s = 0;
  for (std::int64_t r = 0; r <= 3; ++r) {
    s = 7 * s + 2 * (21 + r);
    const auto& c = rig.channel->committed().at(r);
    CHECK(c.path == CommitPath::Onchain);
    CHECK(decode_int(c.state) == s);
  }
  CHECK(rig.channel->stats().safety_violations == 0);
}

TEST_CASE("stale aux value in a BATCH blocks the fast path", "[statechannel][protocol]") {
  RigOptions o;
  o.delta = 4;
  auto script = default_script();
  AccumulatorRig rig(o, script);
  // The leader keeps proposing the initial aux value after it was replaced
  // long ago: once older than delta the follower refuses to sign.
  rig.start();
  REQUIRE(rig.run_until_round(0, 50));
  rig.set_aux(party(1), 5);
  REQUIRE(rig.run_until_round(4, 400));
  // After the update, states include the new aux term.
  const auto& c = rig.channel->committed();
  bool saw_new = false;
  for (auto& [r, cr] : c) {
    if (r > 0 && (decode_int(cr.state).value() - 7 * decode_int(c.at(r - 1).state).value()) % 1000 !=
                     (1 * (11 + r) + 2 * (21 + r)) % 1000)
      saw_new = true;
  }
  CHECK(saw_new);
  CHECK(rig.channel->stats().safety_violations == 0);
}

TEST_CASE("F_State oracle treats a silent party as bottom and keeps going", "[statechannel][oracle]") {
  auto u = std::make_shared<AccumulatorUpdate>();
  FStateOracle f(2, u);
  f.step({in(3), std::nullopt}, encode_int(0), 0);
  f.step({std::nullopt, std::nullopt}, encode_int(0), 0);
  CHECK(f.round() == 1);
  CHECK(decode_int(f.state()) == 7 * 3);
}

TEST_CASE("F_State aux pointer only moves forward", "[statechannel][oracle]") {
  FStateOracle f(1, std::make_shared<AccumulatorUpdate>());
  f.append_aux(encode_int(1));
  f.append_aux(encode_int(2));
  f.advance_ptr(1);
  f.advance_ptr(0);
  CHECK(f.current_aux() == encode_int(2));
  CHECK_THROWS(f.advance_ptr(5));
}

TEST_CASE("committed trace equals the oracle under enumerated delay schedules", "[statechannel][equivalence]") {
  // Every assignment of {1, bound} to the first 10 messages, 3 rounds.
  constexpr int kBits = 10;
  auto script = default_script();
  for (std::uint32_t mask = 0; mask < (1u << kBits); ++mask) {
    RigOptions o;
    o.delta = 3;
    o.message_bound = 3;
    AccumulatorRig rig(o, script);
    int k = 0;
    rig.sim.set_delay_policy([&k, mask](PartyId, PartyId, Tick base, Tick max) {
      const int i = k++;
      return i < kBits && ((mask >> i) & 1u) ? max : base;
    });
    rig.start();
    REQUIRE(rig.run_until_round(2, 2000));
    const auto expect = oracle_states(rig, script, 3);
    for (std::int64_t r = 0; r <= 2; ++r) {
      REQUIRE(rig.channel->committed().at(r).state == expect[static_cast<std::size_t>(r)]);
    }
    rig.channel->finalize_checks();
    REQUIRE(rig.channel->stats().late_resolutions == 0);
    REQUIRE(rig.channel->stats().safety_violations == 0);
  }
}

TEST_CASE("three-party channel matches the oracle under random schedules and confirmation delays",
          "[statechannel][equivalence]") {
  auto script = default_script();
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    RigOptions o;
    o.parties = 3;
    o.delta = 5;
    o.message_bound = 3;
    AccumulatorRig rig(o, script);
    std::mt19937_64 rng(seed);
    rig.sim.set_delay_policy([&rng](PartyId, PartyId, Tick base, Tick max) {
      return std::uniform_int_distribution<Tick>(base, max)(rng);
    });
    rig.chain.set_confirm_policy([&rng](const chain::TxRecord&, Tick d) {
      return std::uniform_int_distribution<Tick>(1, d)(rng);
    });
    rig.start();
    REQUIRE(rig.run_until_round(5, 5000));
    const auto expect = oracle_states(rig, script, 6);
    for (std::int64_t r = 0; r <= 5; ++r) {
      REQUIRE(rig.channel->committed().at(r).state == expect[static_cast<std::size_t>(r)]);
    }
    rig.channel->finalize_checks();
    CHECK(rig.channel->stats().late_resolutions == 0);
    CHECK(rig.channel->stats().commits_past_dispute == 0);
    CHECK(rig.channel->stats().lost_offchain_commits == 0);
    CHECK(rig.keys.audit_violations() == 0);
    CHECK(rig.channel->contract().bestround_regressions() == 0);
    CHECK(rig.chain.conservation_violations() == 0);
  }
}

TEST_CASE("channel trace export has one record per committed round", "[statechannel]") {
  AccumulatorRig rig({}, default_script());
  rig.start();
  REQUIRE(rig.run_until_round(2, 100));
  rig.channel->stop();
  const std::string t = rig.channel->trace_jsonl();
  CHECK(std::count(t.begin(), t.end(), '\n') == static_cast<long>(rig.channel->committed().size()));
  CHECK(t.find("\"path\":\"offchain\"") != std::string::npos);
}
