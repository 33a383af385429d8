#include <algorithm>
#include <cctype>
#include <cstdio>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "chanlab/xcli.hpp"

namespace chanlab::cli {

using nlohmann::json;

ConfigError::ConfigError(std::string path, const std::string& what) : std::runtime_error(what), path_(std::move(path)) {}

namespace {

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

// Reads the keys of one object and rejects the ones nobody asked for.
class Obj {
 public:
  Obj(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  template <class F>
  void field(const std::string& key, F&& read) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it != j_.end()) read(*it, join(path_, key));
  }

  void done() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError(join(path_, k), "unknown key");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

std::int64_t as_int(const json& v, const std::string& path, std::int64_t lo, std::int64_t hi) {
  if (!v.is_number_integer()) throw ConfigError(path, "expected an integer");
  const auto x = v.get<std::int64_t>();
  if (x < lo || x > hi) {
    throw ConfigError(path, "must be in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
  return x;
}

double as_double(const json& v, const std::string& path, double lo, double hi) {
  if (!v.is_number()) throw ConfigError(path, "expected a number");
  const double x = v.get<double>();
  if (!(x >= lo && x <= hi)) {
    std::ostringstream os;
    os << "must be in [" << lo << ", " << hi << "]";
    throw ConfigError(path, os.str());
  }
  return x;
}

bool as_bool(const json& v, const std::string& path) {
  if (!v.is_boolean()) throw ConfigError(path, "expected true or false");
  return v.get<bool>();
}

std::string as_string(const json& v, const std::string& path) {
  if (!v.is_string()) throw ConfigError(path, "expected a string");
  return v.get<std::string>();
}

template <class T, class F>
std::vector<T> as_list(const json& v, const std::string& path, F&& item) {
  if (!v.is_array() || v.empty()) throw ConfigError(path, "expected a non-empty list");
  std::vector<T> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(item(v[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

constexpr std::int64_t kBig = std::int64_t{1} << 40;

linked::Model parse_model(const json& v, const std::string& path) {
  const std::string s = as_string(v, path);
  if (s == "S") return linked::Model::ConstantLocktime;
  if (s == "L") return linked::Model::StaggeredHtlc;
  throw ConfigError(path, "model must be S or L");
}

std::string model_name(linked::Model m) { return m == linked::Model::ConstantLocktime ? "S" : "L"; }

net::TopologyKind parse_topology(const json& v, const std::string& path) {
  const std::string s = as_string(v, path);
  if (s == "BA") return net::TopologyKind::BA;
  if (s == "WS") return net::TopologyKind::WS;
  throw ConfigError(path, "topology must be BA or WS");
}

json profiles_json(const net::Profiles& p) {
  return {{"consumer_prob", p.consumer_prob},
          {"latency_prob", p.latency_prob},
          {"latency_ticks", p.latency_ticks},
          {"high_prob", p.high_prob},
          {"high_capacity", p.high_capacity.units()},
          {"low_capacity", p.low_capacity.units()},
          {"amount_median", p.amount_median},
          {"amount_sigma", p.amount_sigma},
          {"amount_cv", p.amount_cv},
          {"freq_sigma", p.freq_sigma},
          {"max_payment", p.max_payment.units()}};
}

void read_profiles(const json& j, const std::string& path, net::Profiles& p) {
  Obj o(j, path);
  o.field("consumer_prob", [&](const json& v, const std::string& q) { p.consumer_prob = as_double(v, q, 0, 1); });
  o.field("latency_prob", [&](const json& v, const std::string& q) {
    const auto xs = as_list<double>(v, q, [](const json& x, const std::string& r) { return as_double(x, r, 0, 1); });
    if (xs.size() != 3) throw ConfigError(q, "expected three probabilities");
    std::copy(xs.begin(), xs.end(), p.latency_prob.begin());
  });
  o.field("latency_ticks", [&](const json& v, const std::string& q) {
    const auto xs = as_list<Tick>(v, q, [](const json& x, const std::string& r) { return as_int(x, r, 1, kBig); });
    if (xs.size() != 3) throw ConfigError(q, "expected three latencies");
    std::copy(xs.begin(), xs.end(), p.latency_ticks.begin());
  });
  o.field("high_prob", [&](const json& v, const std::string& q) { p.high_prob = as_double(v, q, 0, 1); });
  o.field("high_capacity", [&](const json& v, const std::string& q) { p.high_capacity = Money(as_int(v, q, 2, kBig)); });
  o.field("low_capacity", [&](const json& v, const std::string& q) { p.low_capacity = Money(as_int(v, q, 2, kBig)); });
  o.field("amount_median", [&](const json& v, const std::string& q) { p.amount_median = as_double(v, q, 1e-6, 1e9); });
  o.field("amount_sigma", [&](const json& v, const std::string& q) { p.amount_sigma = as_double(v, q, 0, 10); });
  o.field("amount_cv", [&](const json& v, const std::string& q) { p.amount_cv = as_double(v, q, 0, 10); });
  o.field("freq_sigma", [&](const json& v, const std::string& q) { p.freq_sigma = as_double(v, q, 0, 10); });
  o.field("max_payment", [&](const json& v, const std::string& q) { p.max_payment = Money(as_int(v, q, 1, kBig)); });
  o.done();
}

json network_json(const ExperimentConfig& c) {
  const net::WorldConfig& w = c.world;
  json topo = json::array();
  for (auto k : c.topologies) topo.push_back(std::string(net::to_string(k)));
  return {{"topologies", topo},
          {"petty_rates", c.petty_rates},
          {"incremental", c.incremental},
          {"revive", c.revive},
          {"rate_mode", c.rate_mode == RateMode::Search ? "search" : "fixed"},
          {"request_rate", w.request_rate},
          {"routing", w.routing == net::Routing::ShortestPath ? "SP" : "F"},
          {"fidelity", w.fidelity == net::Fidelity::Abstract ? "abstract" : "full"},
          {"topology", {{"n", w.topology.n}, {"ba_m", w.topology.ba_m}, {"ws_k", w.topology.ws_k}, {"ws_p", w.topology.ws_p}}},
          {"flare", {{"radius", w.flare.radius}, {"beacons", w.flare.beacons}, {"query_limit", w.flare.query_limit}}},
          {"profiles", profiles_json(w.profiles)},
          {"timing",
           {{"ticks_per_second", w.ticks_per_second},
            {"delta", w.delta},
            {"round_ticks", w.round_ticks},
            {"grace", w.grace},
            {"rebalance_interval", w.rebalance_interval},
            {"revive_interval", w.revive_interval},
            {"warmup", w.warmup},
            {"measure", w.measure}}},
          {"rebalance", {{"threshold", w.rebalance_threshold.units()}, {"topup_scale", w.topup_scale}}},
          {"search",
           {{"initial_rate", c.search.initial_rate},
            {"target", c.search.target},
            {"tolerance", c.search.tolerance},
            {"rate_precision", c.search.rate_precision},
            {"max_iter", c.search.max_iter},
            {"max_rate", c.search.max_rate}}}};
}

void read_network(const json& j, const std::string& path, ExperimentConfig& c) {
  net::WorldConfig& w = c.world;
  Obj o(j, path);
  o.field("topologies", [&](const json& v, const std::string& q) {
    c.topologies = as_list<net::TopologyKind>(v, q, parse_topology);
  });
  o.field("petty_rates", [&](const json& v, const std::string& q) {
    c.petty_rates = as_list<double>(v, q, [](const json& x, const std::string& r) { return as_double(x, r, 0, 1); });
  });
  o.field("incremental", [&](const json& v, const std::string& q) { c.incremental = as_list<bool>(v, q, as_bool); });
  o.field("revive", [&](const json& v, const std::string& q) { c.revive = as_list<bool>(v, q, as_bool); });
  o.field("rate_mode", [&](const json& v, const std::string& q) {
    const std::string s = as_string(v, q);
    if (s != "search" && s != "fixed") throw ConfigError(q, "must be search or fixed");
    c.rate_mode = s == "search" ? RateMode::Search : RateMode::Fixed;
  });
  o.field("request_rate", [&](const json& v, const std::string& q) { w.request_rate = as_double(v, q, 1e-9, 1e6); });
  o.field("routing", [&](const json& v, const std::string& q) {
    const std::string s = as_string(v, q);
    if (s != "SP" && s != "F") throw ConfigError(q, "must be SP or F");
    w.routing = s == "SP" ? net::Routing::ShortestPath : net::Routing::Flare;
  });
  o.field("fidelity", [&](const json& v, const std::string& q) {
    const std::string s = as_string(v, q);
    if (s != "abstract" && s != "full") throw ConfigError(q, "must be abstract or full");
    w.fidelity = s == "abstract" ? net::Fidelity::Abstract : net::Fidelity::Full;
  });
  o.field("topology", [&](const json& v, const std::string& q) {
    Obj t(v, q);
    t.field("n", [&](const json& x, const std::string& r) { w.topology.n = static_cast<int>(as_int(x, r, 3, 1000000)); });
    t.field("ba_m", [&](const json& x, const std::string& r) { w.topology.ba_m = static_cast<int>(as_int(x, r, 1, 1000)); });
    t.field("ws_k", [&](const json& x, const std::string& r) {
      w.topology.ws_k = static_cast<int>(as_int(x, r, 2, 1000));
      if (w.topology.ws_k % 2 != 0) throw ConfigError(r, "must be even");
    });
    t.field("ws_p", [&](const json& x, const std::string& r) { w.topology.ws_p = as_double(x, r, 0, 1); });
    t.done();
    if (w.topology.n <= w.topology.ba_m) throw ConfigError(join(q, "n"), "must exceed ba_m");
    if (w.topology.n <= w.topology.ws_k) throw ConfigError(join(q, "n"), "must exceed ws_k");
  });
  o.field("flare", [&](const json& v, const std::string& q) {
    Obj f(v, q);
    f.field("radius", [&](const json& x, const std::string& r) { w.flare.radius = static_cast<int>(as_int(x, r, 0, 64)); });
    f.field("beacons", [&](const json& x, const std::string& r) { w.flare.beacons = static_cast<int>(as_int(x, r, 0, 1024)); });
    f.field("query_limit",
            [&](const json& x, const std::string& r) { w.flare.query_limit = static_cast<int>(as_int(x, r, 0, 1 << 20)); });
    f.done();
  });
  o.field("profiles", [&](const json& v, const std::string& q) { read_profiles(v, q, w.profiles); });
  o.field("timing", [&](const json& v, const std::string& q) {
    Obj t(v, q);
    t.field("ticks_per_second", [&](const json& x, const std::string& r) { w.ticks_per_second = as_int(x, r, 1, kBig); });
    t.field("delta", [&](const json& x, const std::string& r) { w.delta = as_int(x, r, 1, kBig); });
    t.field("round_ticks", [&](const json& x, const std::string& r) { w.round_ticks = as_int(x, r, 1, kBig); });
    t.field("grace", [&](const json& x, const std::string& r) { w.grace = as_int(x, r, 0, kBig); });
    t.field("rebalance_interval", [&](const json& x, const std::string& r) { w.rebalance_interval = as_int(x, r, 0, kBig); });
    t.field("revive_interval", [&](const json& x, const std::string& r) { w.revive_interval = as_int(x, r, 0, kBig); });
    t.field("warmup", [&](const json& x, const std::string& r) { w.warmup = as_int(x, r, 0, kBig); });
    t.field("measure", [&](const json& x, const std::string& r) { w.measure = as_int(x, r, 1, kBig); });
    t.done();
  });
  o.field("rebalance", [&](const json& v, const std::string& q) {
    Obj r(v, q);
    r.field("threshold", [&](const json& x, const std::string& p) { w.rebalance_threshold = Money(as_int(x, p, 0, kBig)); });
    r.field("topup_scale", [&](const json& x, const std::string& p) { w.topup_scale = as_double(x, p, 0, 1e6); });
    r.done();
  });
  o.field("search", [&](const json& v, const std::string& q) {
    Obj s(v, q);
    net::SearchConfig& sc = c.search;
    s.field("initial_rate", [&](const json& x, const std::string& r) { sc.initial_rate = as_double(x, r, 1e-6, 1e9); });
    s.field("target", [&](const json& x, const std::string& r) { sc.target = as_double(x, r, 0, 1); });
    s.field("tolerance", [&](const json& x, const std::string& r) { sc.tolerance = as_double(x, r, 0, 1); });
    s.field("rate_precision", [&](const json& x, const std::string& r) { sc.rate_precision = as_double(x, r, 1e-9, 1); });
    s.field("max_iter", [&](const json& x, const std::string& r) { sc.max_iter = static_cast<int>(as_int(x, r, 0, 1000)); });
    s.field("max_rate", [&](const json& x, const std::string& r) { sc.max_rate = as_double(x, r, 1e-6, 1e12); });
    s.done();
  });
  o.done();
}

void check_behaviors(const std::string& s, const std::string& path) {
  if (s == "honest" || s == "petty" || s == "random") return;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    bool known = false;
    for (int b = 0; b < linked::kBehaviorCount; ++b) known = known || linked::to_string(static_cast<linked::Behavior>(b)) == item;
    if (!known) throw ConfigError(path, "unknown behaviour '" + item + "'");
  }
}

}  // namespace

json to_json(const ExperimentConfig& c) {
  json models = json::array();
  for (auto m : c.models) models.push_back(model_name(m));
  return {{"name", c.name},
          {"kind", c.kind == ExperimentKind::Network ? "network" : "linked"},
          {"seeds", c.seeds},
          {"models", models},
          {"network", network_json(c)},
          {"linked",
           {{"ell", c.ell},
            {"delta", c.linked_delta},
            {"amount", c.linked_amount.units()},
            {"behaviors", c.behaviors},
            {"traces", c.traces}}},
          {"output", {{"dir", c.out_dir}}},
          {"threads", c.threads},
          {"inject_fault", c.inject_fault}};
}

ExperimentConfig from_json(const json& j) {
  ExperimentConfig c;
  Obj o(j, "");
  o.field("name", [&](const json& v, const std::string& q) {
    c.name = as_string(v, q);
    const bool ok = !c.name.empty() && std::all_of(c.name.begin(), c.name.end(), [](char ch) {
      return std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_' || ch == '.';
    });
    if (!ok) throw ConfigError(q, "must be a non-empty file-name-safe string");
  });
  o.field("kind", [&](const json& v, const std::string& q) {
    const std::string s = as_string(v, q);
    if (s != "network" && s != "linked") throw ConfigError(q, "must be network or linked");
    c.kind = s == "network" ? ExperimentKind::Network : ExperimentKind::Linked;
  });
  o.field("seeds", [&](const json& v, const std::string& q) {
    c.seeds = as_list<std::uint64_t>(v, q, [](const json& x, const std::string& r) {
      return static_cast<std::uint64_t>(as_int(x, r, 0, std::numeric_limits<std::int64_t>::max()));
    });
  });
  o.field("models", [&](const json& v, const std::string& q) { c.models = as_list<linked::Model>(v, q, parse_model); });
  o.field("network", [&](const json& v, const std::string& q) { read_network(v, q, c); });
  o.field("linked", [&](const json& v, const std::string& q) {
    Obj l(v, q);
    l.field("ell", [&](const json& x, const std::string& r) { c.ell = static_cast<int>(as_int(x, r, 2, 64)); });
    l.field("delta", [&](const json& x, const std::string& r) { c.linked_delta = as_int(x, r, 1, 1000000); });
    l.field("amount", [&](const json& x, const std::string& r) { c.linked_amount = Money(as_int(x, r, 1, kBig)); });
    l.field("behaviors", [&](const json& x, const std::string& r) {
      c.behaviors = as_string(x, r);
      check_behaviors(c.behaviors, r);
    });
    l.field("traces", [&](const json& x, const std::string& r) { c.traces = as_bool(x, r); });
    l.done();
  });
  o.field("output", [&](const json& v, const std::string& q) {
    Obj out(v, q);
    out.field("dir", [&](const json& x, const std::string& r) { c.out_dir = as_string(x, r); });
    out.done();
  });
  o.field("threads", [&](const json& v, const std::string& q) { c.threads = static_cast<int>(as_int(v, q, 0, 4096)); });
  o.field("inject_fault", [&](const json& v, const std::string& q) { c.inject_fault = as_bool(v, q); });
  o.done();
  if (c.inject_fault && c.kind != ExperimentKind::Network) {
    throw ConfigError("inject_fault", "only network experiments support fault injection");
  }
  return c;
}

void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError(assignment, "override must look like key.path=value");
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError(path, "empty key in override path");
    if (!node->is_object()) throw ConfigError(path.substr(0, start ? start - 1 : 0), "not an object");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

std::vector<std::string> preset_names() { return {"smoke", "desk", "incremental", "flare-routing", "linked-fuzz", "linked-trace"}; }

std::string preset_description(const std::string& name) {
  if (name == "smoke") return "small BA world, S and L at petty 0 and 0.5, fixed rate";
  if (name == "desk") return "n=200 BA and WS, 10 seeds, S and L, petty 0/0.25/0.5, throughput search";
  if (name == "incremental") return "n=200 BA and WS, 10 seeds, incremental deposits on and off";
  if (name == "flare-routing") return "n=200 WS world routed with Flare tables, fixed rate";
  if (name == "linked-fuzz") return "100 randomized linked payments per model";
  if (name == "linked-trace") return "one petty linked payment per model with exported traces";
  throw ConfigError(name, "unknown preset");
}

ExperimentConfig preset(const std::string& name) {
  preset_description(name);
  ExperimentConfig c;
  c.name = name;
  c.models = {linked::Model::ConstantLocktime, linked::Model::StaggeredHtlc};
  std::vector<std::uint64_t> ten(10);
  std::iota(ten.begin(), ten.end(), 1);
  if (name == "smoke") {
    c.world.topology.n = 60;
    c.world.delta = 300;
    c.world.warmup = 1000;
    c.world.measure = 3000;
    c.world.request_rate = 1.0;
    c.rate_mode = RateMode::Fixed;
    c.petty_rates = {0.0, 0.5};
  } else if (name == "desk") {
    c.seeds = ten;
    c.topologies = {net::TopologyKind::BA, net::TopologyKind::WS};
    c.petty_rates = {0.0, 0.25, 0.5};
  } else if (name == "incremental") {
    c.seeds = ten;
    c.models = {linked::Model::ConstantLocktime};
    c.topologies = {net::TopologyKind::BA, net::TopologyKind::WS};
    c.incremental = {true, false};
  } else if (name == "flare-routing") {
    c.topologies = {net::TopologyKind::WS};
    c.world.routing = net::Routing::Flare;
    c.world.delta = 600;
    c.world.warmup = 6000;
    c.world.measure = 12000;
    c.rate_mode = RateMode::Fixed;
  } else if (name == "linked-fuzz") {
    c.kind = ExperimentKind::Linked;
    c.seeds.resize(100);
    std::iota(c.seeds.begin(), c.seeds.end(), 1);
    c.ell = 5;
    c.behaviors = "random";
  } else if (name == "linked-trace") {
    c.kind = ExperimentKind::Linked;
    c.behaviors = "honest,petty,honest,petty";
    c.traces = true;
  }
  return c;
}

std::string config_id(const net::WorldConfig& w) {
  char petty[32];
  std::snprintf(petty, sizeof petty, "%.2f", w.petty_rate);
  return std::string(net::to_string(w.topology.kind)) + "-" + model_name(w.model) + "-p" + petty + "-i" +
         (w.incremental ? "1" : "0") + "-r" + (w.revive ? "1" : "0");
}

std::vector<net::WorldConfig> expand(const ExperimentConfig& c) {
  std::vector<net::WorldConfig> out;
  for (auto topo : c.topologies)
    for (double petty : c.petty_rates)
      for (bool inc : c.incremental)
        for (bool rev : c.revive)
          for (std::uint64_t seed : c.seeds)
            for (auto model : c.models) {
              net::WorldConfig w = c.world;
              w.topology.kind = topo;
              w.petty_rate = petty;
              w.incremental = inc;
              w.revive = rev;
              w.seed = seed;
              w.model = model;
              w.config_id = config_id(w);
              out.push_back(w);
            }
  return out;
}

linked::LinkedRunConfig linked_config(const ExperimentConfig& c, std::uint64_t seed) {
  if (c.behaviors == "random") return linked::make_fuzz_case(seed, c.ell).cfg;
  linked::LinkedRunConfig r;
  r.ell = c.ell;
  r.delta = c.linked_delta;
  r.amount = c.linked_amount;
  r.seed = seed;
  r.behaviors.assign(static_cast<std::size_t>(c.ell), linked::Behavior::Honest);
  if (c.behaviors == "petty") {
    std::fill(r.behaviors.begin(), r.behaviors.end(), linked::Behavior::Petty);
  } else if (c.behaviors != "honest") {
    std::stringstream in(c.behaviors);
    std::string item;
    std::size_t i = 0;
    while (std::getline(in, item, ',') && i < r.behaviors.size()) {
      for (int b = 0; b < linked::kBehaviorCount; ++b)
        if (linked::to_string(static_cast<linked::Behavior>(b)) == item) r.behaviors[i] = static_cast<linked::Behavior>(b);
      ++i;
    }
  }
  return r;
}

std::string linked_csv_header() {
  return "config_id,seed,model,ell,delta,amount,txs,deposit_txs,pm_txs,channel_disputes,max_lock,"
         "collateral_integral,completed_at,exceptions,conserved,safety_violations";
}

std::string linked_csv_row(const std::string& id, std::uint64_t seed, const linked::LinkedOutcome& o) {
  std::ostringstream os;
  const auto done = o.completed_at();
  os << id << ',' << seed << ',' << model_name(o.model) << ',' << o.ell << ',' << o.delta << ',' << o.amount.units()
     << ',' << o.txs << ',' << o.deposit_txs << ',' << o.pm_txs << ',' << o.channel_disputes << ',' << o.max_lock()
     << ',' << o.collateral_integral() << ',' << (done ? std::to_string(*done) : std::string()) << ','
     << o.exceptions.size() << ',' << (o.conserved ? 1 : 0) << ',' << o.safety_violations;
  return os.str();
}

}  // namespace chanlab::cli
