#include "catch_amalgamated.hpp"
#include <algorithm>
#include <functional>
#include <random>

#include <stdexcept>

#include "chanlab/simkernel.hpp"

using namespace chanlab;
using chanlab::sim::Endpoint;
using chanlab::sim::Simulator;

TEST_CASE("scheduled event fires at its time", "[simkernel]") {
  Simulator s;
  Tick seen = -1;
  s.schedule(5, "m", Endpoint::of(party(1)), [&] { seen = s.now(); });
  s.run_until(10);
  CHECK(seen == 5);
  CHECK(s.now() == 10);
}

TEST_CASE("equal-time events fire in insertion order", "[simkernel]") {
  Simulator s;
  std::vector<int> order;
  s.schedule(5, "a", {}, [&] { order.push_back(1); });
  s.schedule(2, "b", {}, [&] { order.push_back(0); });
  s.schedule(5, "c", {}, [&] { order.push_back(2); });
  s.schedule(2, "d", {}, [&] { order.push_back(-1); });
  s.run_until(5);
  CHECK(order == std::vector<int>{0, -1, 1, 2});
}

TEST_CASE("cancelled event never fires", "[simkernel]") {
  Simulator s;
  bool fired = false;
  auto h = s.schedule(5, "m", {}, [&] { fired = true; });
  CHECK(s.cancel(h));
  CHECK_FALSE(s.cancel(h));
  s.run_until(20);
  CHECK_FALSE(fired);
}

TEST_CASE("scheduling in the past is a hard fault", "[simkernel]") {
  Simulator s;
  s.run_until(10);
  CHECK_THROWS_AS(s.schedule(9, "m", {}, [] {}), std::logic_error);
}

TEST_CASE("empty queue advances time", "[simkernel]") {
  Simulator s;
  s.run_until(100);
  CHECK(s.now() == 100);
  CHECK(s.fired() == 0);
}

TEST_CASE("same-tick re-entrant event runs after the current one", "[simkernel]") {
  Simulator s;
  std::vector<std::string> trace;
  s.schedule(2, "outer", {}, [&] {
    trace.push_back("outer-begin");
    s.schedule(2, "inner", {}, [&] { trace.push_back("inner@" + std::to_string(s.now())); });
    trace.push_back("outer-end");
  });
  s.schedule(2, "sibling", {}, [&] { trace.push_back("sibling"); });
  s.run_until(2);
  CHECK(trace == std::vector<std::string>{"outer-begin", "outer-end", "sibling", "inner@2"});
}

TEST_CASE("honest message takes one tick, including self-sends", "[simkernel]") {
  Simulator s(4);
  s.register_party(party(0));
  s.register_party(party(1));
  s.run_until(3);
  Tick got_b = -1, got_self = -1;
  s.send(party(0), party(1), "m", [&] { got_b = s.now(); });
  s.send(party(0), party(0), "m", [&] { got_self = s.now(); });
  s.run_until(10);
  CHECK(got_b == 4);
  CHECK(got_self == 4);
}

TEST_CASE("delay policy outputs are clamped into [1, bound]", "[simkernel]") {
  // Enumerate every value a policy could return and compare against the
  // clamped delivery time.
  for (Tick want = -2; want <= 7; ++want) {
    Simulator s(4);
    s.register_party(party(0));
    s.register_party(party(1));
    s.set_delay_policy([want](PartyId, PartyId, Tick, Tick) { return want; });
    s.run_until(3);
    Tick got = -1;
    s.send(party(0), party(1), "m", [&] { got = s.now(); });
    s.run_until(20);
    const Tick expect = 3 + std::clamp<Tick>(want, 1, 4);
    CHECK(got == expect);
  }
}

TEST_CASE("message to an unknown party is dropped and counted", "[simkernel]") {
  Simulator s;
  s.enable_log(true);
  s.register_party(party(0));
  bool delivered = false;
  s.send(party(0), party(9), "m", [&] { delivered = true; });
  s.run_until(5);
  CHECK_FALSE(delivered);
  CHECK(s.dropped() == 1);
  REQUIRE(s.log().size() == 1);
  CHECK(s.log()[0].kind == "drop:m");
}

namespace {
std::string run_scenario(std::uint64_t seed) {
  Simulator s(3);
  s.enable_log(true);
  std::mt19937_64 rng(seed);
  for (int i = 0; i < 4; ++i) s.register_party(party(i));
  s.set_delay_policy([&rng](PartyId, PartyId, Tick base, Tick max) {
    return std::uniform_int_distribution<Tick>(base, max)(rng);
  });
  std::function<void(int, int)> bounce = [&](int who, int hops) {
    if (hops == 0) return;
    s.send(party(who), party((who + 1) % 4), "ping", [&, who, hops] { bounce((who + 1) % 4, hops - 1); },
           "hops=" + std::to_string(hops));
  };
  bounce(0, 30);
  bounce(2, 30);
  s.run_until(500);
  return s.log_text();
}
}  // namespace

TEST_CASE("identical seed gives a byte-identical event log", "[simkernel]") {
  const std::string a = run_scenario(7);
  const std::string b = run_scenario(7);
  CHECK(a == b);
  CHECK(a != run_scenario(8));
}

TEST_CASE("run_until leaves nothing due unfired", "[simkernel]") {
  Simulator s;
  int fired = 0;
  for (Tick t = 0; t < 50; t += 3) s.schedule(t, "x", {}, [&] { ++fired; });
  s.run_until(30);
  CHECK(fired == 11);
  CHECK(s.next_event_time() == 33);
}
