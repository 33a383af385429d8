#include <omp.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "chanlab/xcli.hpp"

namespace chanlab::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RunOptions {
  std::string source;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> models;
  std::string out;
  int threads = -1;
};

json load_source(const std::string& source) {
  if (fs::exists(source)) {
    std::ifstream in(source);
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError(source, "not valid JSON");
    return j;
  }
  for (const auto& name : preset_names())
    if (name == source) return to_json(preset(name));
  throw ConfigError(source, "no such file or preset");
}

ExperimentConfig resolve(const RunOptions& o, const std::vector<std::string>& extras) {
  json j = load_source(o.source);
  for (const auto& e : extras) {
    if (e.rfind("--", 0) != 0) throw ConfigError(e, "unexpected argument");
    apply_override(j, e.substr(2));
  }
  if (!o.seeds.empty()) j["seeds"] = o.seeds;
  if (!o.models.empty()) j["models"] = o.models;
  if (!o.out.empty()) j["output"]["dir"] = o.out;
  if (o.threads >= 0) j["threads"] = o.threads;
  ExperimentConfig c = from_json(j);
  if (c.out_dir.empty()) {
    const char* env = std::getenv("CHANLAB_OUT");
    c.out_dir = env && *env ? env : ".";
  }
  return c;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f << text;
}

std::vector<std::string> run_network(const ExperimentConfig& c, std::string& csv, std::ostream& err) {
  const auto cfgs = expand(c);
  err << "running " << cfgs.size() << " world configurations\n";
  std::vector<std::string> rows(cfgs.size());
  std::vector<std::vector<std::string>> viol(cfgs.size());
  const int n = static_cast<int>(cfgs.size());
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n; ++i) {
    const auto& w = cfgs[static_cast<std::size_t>(i)];
    if (c.rate_mode == RateMode::Search) {
      const auto r = net::measure_throughput_at_98(w, c.search);
      rows[static_cast<std::size_t>(i)] = net::csv_row(w, r.rate, r.metrics);
      viol[static_cast<std::size_t>(i)] = r.metrics.violations;
    } else {
      const auto m = net::run_world(w);
      rows[static_cast<std::size_t>(i)] = net::csv_row(w, w.request_rate, m);
      viol[static_cast<std::size_t>(i)] = m.violations;
    }
  }
  csv = net::csv_header() + "\n";
  for (const auto& r : rows) csv += r + "\n";

  std::vector<std::string> out;
  for (std::size_t i = 0; i < cfgs.size(); ++i)
    for (const auto& v : viol[i]) out.push_back(cfgs[i].config_id + " seed " + std::to_string(cfgs[i].seed) + ": " + v);

  if (c.inject_fault) {
    net::World probe(cfgs.front());
    probe.start(cfgs.front().warmup);
    probe.run_until(cfgs.front().warmup);
    probe.mutable_topology().channels.front().bal[0] += Money(1);
    for (const auto& v : probe.check_conservation()) out.push_back("injected fault: " + v);
  }
  return out;
}

std::vector<std::string> run_linked(const ExperimentConfig& c, std::string& csv, const fs::path& trace_dir) {
  struct Job {
    std::uint64_t seed;
    linked::Model model;
  };
  std::vector<Job> jobs;
  for (auto seed : c.seeds)
    for (auto m : c.models) jobs.push_back({seed, m});
  std::vector<linked::LinkedOutcome> outs(jobs.size());
  const int n = static_cast<int>(jobs.size());
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n; ++i) {
    const Job& job = jobs[static_cast<std::size_t>(i)];
    auto cfg = linked_config(c, job.seed);
    cfg.log_events = c.traces;
    outs[static_cast<std::size_t>(i)] = job.model == linked::Model::ConstantLocktime ? linked::run_linked_payment(cfg)
                                                                                       : linked::run_htlc_baseline(cfg);
  }

  csv = linked_csv_header() + "\n";
  std::vector<std::string> viol;
  if (c.traces) fs::create_directories(trace_dir);
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const auto& o = outs[i];
    const std::string tag = std::string(o.model == linked::Model::ConstantLocktime ? "S" : "L") + "-seed" +
                            std::to_string(jobs[i].seed);
    csv += linked_csv_row(c.name, jobs[i].seed, o) + "\n";
    for (const auto& e : o.exceptions) viol.push_back(tag + ": " + e);
    if (!o.conserved) viol.push_back(tag + ": channel funds not conserved");
    if (o.safety_violations) viol.push_back(tag + ": " + std::to_string(o.safety_violations) + " safety violations");
    if (c.traces) write_file(trace_dir / (tag + ".jsonl"), linked_trace(o));
  }
  return viol;
}

int cmd_run(const RunOptions& o, const std::vector<std::string>& extras, std::ostream& out, std::ostream& err) {
  const ExperimentConfig c = resolve(o, extras);
  if (c.threads > 0) omp_set_num_threads(c.threads);
  const fs::path dir(c.out_dir);
  fs::create_directories(dir);
  write_file(dir / (c.name + ".config.json"), to_json(c).dump(2) + "\n");

  std::string csv;
  const auto viol = c.kind == ExperimentKind::Network ? run_network(c, csv, err)
                                                      : run_linked(c, csv, dir / (c.name + ".traces"));
  write_file(dir / (c.name + ".csv"), csv);
  out << (dir / (c.name + ".csv")).string() << "\n";
  if (viol.empty()) return kOk;
  std::string text;
  for (const auto& v : viol) text += v + "\n";
  write_file(dir / (c.name + ".violations.txt"), text);
  err << "invariant violations:\n" << text;
  return kViolation;
}

int cmd_verify(const std::vector<std::string>& paths, std::ostream& out, std::ostream& err) {
  int code = kOk;
  for (const auto& p : paths) {
    std::ifstream in(p);
    if (!in) {
      err << p << ": cannot open\n";
      code = std::max(code, static_cast<int>(kConfigError));
      continue;
    }
    const VerifyReport rep = verify_trace(in);
    if (!rep.error.empty()) {
      err << p << ": " << rep.error << "\n";
      if (code == kOk) code = kConfigError;
      continue;
    }
    for (const auto& c : rep.checks) {
      out << p << ": " << c.name << (c.passed() ? " ok" : " FAILED") << "\n";
      for (const auto& f : c.failures) out << "  " << f << "\n";
    }
    if (!rep.ok()) code = kViolation;
  }
  return code;
}

int cmd_flare(const net::FlareReproParams& p, const std::string& out_path, std::ostream& out) {
  const auto rows = net::flare_repro(p);
  std::ostringstream os;
  os << "beacons,queries,reps,mean,sd,lo,hi\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%d,%d,%.4f,%.4f,%.4f,%.4f\n", r.beacons, r.queries, r.reps, r.mean, r.sd,
                  r.mean - 2 * r.sd, r.mean + 2 * r.sd);
    os << buf;
  }
  if (out_path.empty()) {
    out << os.str();
  } else {
    write_file(out_path, os.str());
    out << out_path << "\n";
  }
  return kOk;
}

int cmd_list(const std::string& show, std::ostream& out) {
  if (!show.empty()) {
    out << to_json(preset(show)).dump(2) << "\n";
    return kOk;
  }
  for (const auto& n : preset_names()) out << n << "\t" << preset_description(n) << "\n";
  return kOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"chanlab: payment-channel experiments"};
  app.require_subcommand(1);

  RunOptions ro;
  auto* run = app.add_subcommand("run", "run an experiment from a config file or preset");
  run->add_option("config", ro.source, "JSON config path or preset name")->required();
  run->add_option("--seed", ro.seeds, "seed (repeatable)");
  run->add_option("--model", ro.models, "S or L (repeatable)");
  run->add_option("--out", ro.out, "output directory");
  run->add_option("--threads", ro.threads, "worker threads");
  run->allow_extras();
  run->footer("Any config field can be set with --dotted.path=value, e.g. --network.timing.delta=300");

  std::vector<std::string> traces;
  auto* verify = app.add_subcommand("verify", "check exported linked-payment traces");
  verify->add_option("trace", traces, "trace files")->required();

  net::FlareReproParams fp;
  std::string flare_out;
  bool serial = false;
  auto* flare = app.add_subcommand("flare-repro", "Flare accessibility table");
  flare->add_option("--n", fp.n, "nodes")->check(CLI::Range(3, 1000000));
  flare->add_option("--k", fp.k, "ring degree")->check(CLI::Range(2, 1000));
  flare->add_option("--p", fp.p, "rewiring probability")->check(CLI::Range(0.0, 1.0));
  flare->add_option("--radius", fp.radius, "neighbourhood radius")->check(CLI::Range(0, 64));
  flare->add_option("--beacons", fp.beacons, "beacon counts")->check(CLI::Range(0, 1024));
  flare->add_option("--queries", fp.queries, "query limits")->check(CLI::Range(0, 1 << 20));
  flare->add_option("--sources", fp.sources, "sources per graph")->check(CLI::Range(1, 1000000));
  flare->add_option("--reps", fp.reps, "graphs")->check(CLI::Range(1, 100000));
  flare->add_option("--seed", fp.seed, "seed");
  flare->add_flag("--serial", serial, "single-threaded");
  flare->add_option("--out", flare_out, "CSV path (default stdout)");

  std::string show;
  auto* list = app.add_subcommand("list-configs", "list presets");
  list->add_option("--show", show, "print one preset as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    std::ostringstream help_out, msg;
    const int rc = app.exit(e, help_out, msg);
    out << help_out.str();
    err << msg.str();
    return rc == 0 ? kOk : kConfigError;
  }

  try {
    if (*run) return cmd_run(ro, run->remaining(), out, err);
    if (*verify) return cmd_verify(traces, out, err);
    if (*flare) {
      fp.parallel = !serial;
      if (fp.n <= fp.k) throw ConfigError("n", "must exceed k");
      return cmd_flare(fp, flare_out, out);
    }
    if (*list) return cmd_list(show, out);
  } catch (const ConfigError& e) {
    err << "config error at " << e.path() << ": " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kInternal;
  }
  return kInternal;
}

}  // namespace chanlab::cli
