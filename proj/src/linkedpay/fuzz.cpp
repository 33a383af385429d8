#include <algorithm>
#include <random>

#include "chanlab/linkedpay.hpp"

namespace chanlab::linked {

FuzzCase make_fuzz_case(std::uint64_t seed, int max_ell) {
  std::mt19937_64 rng(seed ^ 0x5851F42D4C957F2DULL);
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  FuzzCase c;
  LinkedRunConfig& cfg = c.cfg;
  cfg.seed = seed;
  cfg.ell = pick(2, std::max(2, max_ell));
  cfg.delta = pick(3, 8);
  cfg.amount = Money(pick(1, 5) * 100);
  cfg.random_schedule = true;
  bool all_honest = true;
  for (int i = 0; i < cfg.ell; ++i) {
    Behavior b = Behavior::Honest;
    if (pick(0, 99) < 35) b = static_cast<Behavior>(pick(1, kBehaviorCount - 1));
    all_honest = all_honest && b == Behavior::Honest;
    cfg.behaviors.push_back(b);
  }
  for (int i = 0; i + 1 < cfg.ell; ++i) {
    const bool short_funded = pick(0, 99) < 10;
    cfg.balances.push_back(short_funded ? cfg.amount - Money(1) : cfg.amount + Money(pick(0, 3) * 50));
  }
  cfg.message_bound = all_honest ? 1 : pick(1, 2);
  return c;
}

namespace {

struct CaseResult {
  bool exception = false;
  bool intermediary_loss = false;
  bool conservation = false;
  bool safety = false;
  bool pm_used = false;
  Tick close_after_dispute = 0;
};

CaseResult run_case(std::uint64_t seed, int max_ell) {
  const FuzzCase c = make_fuzz_case(seed, max_ell);
  const LinkedOutcome o = run_linked_payment(c.cfg);
  CaseResult r;
  r.exception = !o.exceptions.empty();
  r.intermediary_loss = !o.honest_intermediaries_whole();
  r.conservation = !o.conserved;
  r.safety = o.safety_violations != 0 || o.signature_forgeries != 0;
  r.pm_used = o.pm_txs != 0;
  for (const auto& h : o.hops) {
    if (h.close_at && *h.close_at > o.dispute) r.close_after_dispute = std::max(r.close_after_dispute, *h.close_at - o.dispute);
  }
  return r;
}

void merge(FuzzSummary& s, std::uint64_t seed, const CaseResult& r) {
  ++s.runs;
  s.exceptions += r.exception;
  s.intermediary_losses += r.intermediary_loss;
  s.conservation_failures += r.conservation;
  s.safety_failures += r.safety;
  s.pm_used += r.pm_used;
  s.max_close_after_dispute = std::max(s.max_close_after_dispute, r.close_after_dispute);
  if (r.exception || r.intermediary_loss || r.conservation || r.safety) s.failing_seeds.push_back(seed);
}

}  // namespace

FuzzSummary fuzz_serial(std::uint64_t first_seed, std::size_t runs, int max_ell) {
  FuzzSummary s;
  for (std::size_t k = 0; k < runs; ++k) merge(s, first_seed + k, run_case(first_seed + k, max_ell));
  return s;
}

FuzzSummary fuzz_parallel(std::uint64_t first_seed, std::size_t runs, int max_ell) {
  std::vector<CaseResult> results(runs);
  const auto n = static_cast<std::int64_t>(runs);
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t k = 0; k < n; ++k) {
    results[static_cast<std::size_t>(k)] = run_case(first_seed + static_cast<std::uint64_t>(k), max_ell);
  }
  FuzzSummary s;
  for (std::size_t k = 0; k < runs; ++k) merge(s, first_seed + k, results[k]);
  return s;
}

}  // namespace chanlab::linked
