#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "chanlab/linkedpay.hpp"
#include "chanlab/netsim.hpp"
#include "json.hpp"

namespace chanlab::cli {

enum ExitCode : int { kOk = 0, kConfigError = 1, kViolation = 2, kInternal = 3 };

// Invalid configuration; `path` names the offending field ("world.delta").
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string path, const std::string& what);
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

enum class ExperimentKind : std::uint8_t { Network, Linked };
enum class RateMode : std::uint8_t { Search, Fixed };

struct ExperimentConfig {
  std::string name = "experiment";
  ExperimentKind kind = ExperimentKind::Network;
  std::vector<std::uint64_t> seeds{1};
  std::vector<linked::Model> models{linked::Model::ConstantLocktime};

  // Network sweeps: the cross product of these lists with `seeds` and
  // `models`; every other world setting comes from `world`.
  std::vector<net::TopologyKind> topologies{net::TopologyKind::BA};
  std::vector<double> petty_rates{0.0};
  std::vector<bool> incremental{true};
  std::vector<bool> revive{false};
  RateMode rate_mode = RateMode::Search;
  net::WorldConfig world;
  net::SearchConfig search;

  // Linked-payment runs.
  int ell = 4;
  Tick linked_delta = 10;
  Money linked_amount = dollars(1);
  std::string behaviors = "honest";  // honest | petty | random | comma list
  bool traces = false;

  std::string out_dir;  // empty: $CHANLAB_OUT, else the working directory
  int threads = 0;      // 0: OpenMP default
  // Corrupts one run's ledger so the invariant path can be exercised.
  bool inject_fault = false;
};

nlohmann::json to_json(const ExperimentConfig& c);
// Throws ConfigError on unknown keys, wrong types or out-of-range values.
ExperimentConfig from_json(const nlohmann::json& j);
// Applies "a.b.c=value"; the value is parsed as JSON when it can be, else
// taken as a string.
void apply_override(nlohmann::json& j, const std::string& assignment);

std::vector<std::string> preset_names();
std::string preset_description(const std::string& name);
ExperimentConfig preset(const std::string& name);

// World configurations of a network sweep, in output order: topology, petty
// rate, incremental, revive, seed, model.
std::vector<net::WorldConfig> expand(const ExperimentConfig& c);
std::string config_id(const net::WorldConfig& w);

// Linked-payment run of one seed under `model`.
linked::LinkedRunConfig linked_config(const ExperimentConfig& c, std::uint64_t seed);
std::string linked_csv_header();
std::string linked_csv_row(const std::string& id, std::uint64_t seed, const linked::LinkedOutcome& o);

// JSON-lines trace of one linked payment: header, chain log, final ledger,
// hop outcomes and channel disputes. Needs an outcome run with log_events.
std::string linked_trace(const linked::LinkedOutcome& o);

struct CheckResult {
  std::string name;
  std::vector<std::string> failures;
  bool passed() const { return failures.empty(); }
};

struct VerifyReport {
  std::string error;  // non-empty when the trace could not be read
  std::vector<CheckResult> checks;
  bool ok() const;
};

VerifyReport verify_trace(std::istream& in);

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace chanlab::cli
