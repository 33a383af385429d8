#include <benchmark/benchmark.h>

#include <numeric>

#include "chanlab/linkedpay.hpp"
#include "chanlab/netsim.hpp"

using namespace chanlab;

static void BM_FuzzSerial(benchmark::State& st) {
  for (auto _ : st) benchmark::DoNotOptimize(linked::fuzz_serial(1, static_cast<std::size_t>(st.range(0))));
  st.SetItemsProcessed(st.iterations() * st.range(0));
}
BENCHMARK(BM_FuzzSerial)->Arg(200)->Unit(benchmark::kMillisecond);

static void BM_FuzzParallel(benchmark::State& st) {
  for (auto _ : st) benchmark::DoNotOptimize(linked::fuzz_parallel(1, static_cast<std::size_t>(st.range(0))));
  st.SetItemsProcessed(st.iterations() * st.range(0));
}
BENCHMARK(BM_FuzzParallel)->Arg(200)->Unit(benchmark::kMillisecond);

namespace {

struct FlareFixture {
  net::Graph g = net::gen_ws(500, 4, 0.3, 1);
  net::FlareTables t = net::flare_build(g, 2, 6, 1);
  std::vector<int> sources = std::vector<int>(20);
  FlareFixture() { std::iota(sources.begin(), sources.end(), 0); }
};

}  // namespace

static void BM_FlareAccessibilitySerial(benchmark::State& st) {
  static const FlareFixture f;
  for (auto _ : st) benchmark::DoNotOptimize(net::flare_accessibility(f.g, f.t, f.sources, 10));
}
BENCHMARK(BM_FlareAccessibilitySerial)->Unit(benchmark::kMillisecond);

static void BM_FlareAccessibilityParallel(benchmark::State& st) {
  static const FlareFixture f;
  for (auto _ : st) benchmark::DoNotOptimize(net::flare_accessibility_parallel(f.g, f.t, f.sources, 10));
}
BENCHMARK(BM_FlareAccessibilityParallel)->Unit(benchmark::kMillisecond);

static void BM_WorldRun(benchmark::State& st) {
  net::WorldConfig c;
  c.warmup = 6000;
  c.measure = 6000;
  c.request_rate = 4.0;
  for (auto _ : st) benchmark::DoNotOptimize(net::run_world(c));
}
BENCHMARK(BM_WorldRun)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
