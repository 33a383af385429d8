#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "chanlab/common.hpp"
#include "chanlab/linkedpay.hpp"
#include "chanlab/simkernel.hpp"

namespace chanlab::net {

// Mixes a run seed with a stream tag so that independent parts of a run
// (graph, attributes, workload, ...) draw from unrelated generators.
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream);

struct Graph {
  int n = 0;
  std::vector<std::vector<int>> adj;            // ascending
  std::vector<std::pair<int, int>> edges;       // u < v, ascending

  int degree(int v) const { return static_cast<int>(adj[static_cast<std::size_t>(v)].size()); }
  bool has_edge(int u, int v) const;
  // Index into `edges`, or -1.
  int edge_index(int u, int v) const;
};

// Builds adjacency and the sorted edge list from an edge set.
Graph make_graph(int n, std::vector<std::pair<int, int>> edges);

Graph gen_ba(int n, int m_attach, std::uint64_t seed);
Graph gen_ws(int n, int k, double p_rewire, std::uint64_t seed);
double largest_component_fraction(const Graph& g);
// Hop distances from `s`; -1 where unreachable.
std::vector<int> bfs_distances(const Graph& g, int s);

enum class TopologyKind : std::uint8_t { BA, WS };
std::string_view to_string(TopologyKind k);

struct TopologySpec {
  TopologyKind kind = TopologyKind::BA;
  int n = 200;
  int ba_m = 2;
  int ws_k = 4;
  double ws_p = 0.3;
};

// Regenerates with derived seeds until the largest component holds at least
// 99% of the nodes.
Graph gen_topology(const TopologySpec& spec, std::uint64_t seed);

enum class Role : std::uint8_t { Consumer, Merchant };

// Synthetic stand-ins for the workload dataset.
struct Profiles {
  double consumer_prob = 1.0 / 3.0;
  std::array<double, 3> latency_prob{0.925, 0.049, 0.026};
  std::array<Tick, 3> latency_ticks{1, 10, 100};  // 100 ms, 1 s, 10 s
  double high_prob = 0.2;
  Money high_capacity = dollars(800);
  Money low_capacity = dollars(50);
  double amount_median = 8.0;  // dollars
  double amount_sigma = 0.5;   // of the log of a consumer's mean amount
  double amount_cv = 0.5;      // per-payment sd as a fraction of the mean
  double freq_sigma = 0.5;     // of the log of a node's spend/receive frequency
  Money max_payment = dollars(20);
};

Role sample_role(std::mt19937_64& rng, const Profiles& p);
Tick sample_latency(std::mt19937_64& rng, const Profiles& p);
Money sample_capacity(std::mt19937_64& rng, const Profiles& p);

struct NodeAttr {
  Role role = Role::Merchant;
  Tick latency = 1;
  double freq = 1.0;         // relative spend (consumer) or receive (merchant) frequency
  double amount_mean = 0.0;  // cents
  double amount_sd = 0.0;    // cents
};

struct Channel {
  int u = 0;  // u < v; bal[0] is u's side
  int v = 0;
  Money capacity;
  std::array<Money, 2> bal{};
};

struct Topology {
  Graph g;
  std::vector<NodeAttr> nodes;
  std::vector<Channel> channels;  // channels[k] spans g.edges[k]

  int side_of(int ch, int node) const { return channels[static_cast<std::size_t>(ch)].u == node ? 0 : 1; }
  // Balance `from` can send to `to`, or nothing if they share no channel.
  std::optional<Money> available(int from, int to) const;
};

Topology assign_attributes(Graph g, std::uint64_t seed, const Profiles& p);

enum class Status : std::uint8_t { Pending, Success, Failed };

struct PaymentRequest {
  int sender = 0;
  int recipient = 0;
  Money amount;
  Tick created_at = 0;
  Status status = Status::Pending;
  std::optional<Tick> completed_at;
};

// Draws consumers by spend frequency and merchants by receive frequency;
// amounts come from the sender's normal, resampled until positive and
// clamped to max_payment.
class RequestSampler {
 public:
  RequestSampler(const Topology& t, const Profiles& p);
  PaymentRequest draw(std::mt19937_64& rng, Tick now) const;
  bool usable() const { return !consumers_.empty() && !merchants_.empty(); }

 private:
  const Topology* topo_;
  Money max_payment_;
  std::vector<int> consumers_;
  std::vector<int> merchants_;
  mutable std::discrete_distribution<std::size_t> pick_consumer_;
  mutable std::discrete_distribution<std::size_t> pick_merchant_;
};

PaymentRequest gen_request(const Topology& t, std::mt19937_64& rng, const Profiles& p = {});

using Path = std::vector<int>;
// Whether the directed hop from -> to may carry the payment.
using HopFilter = std::function<bool(int from, int to)>;

// Fewest hops over usable edges; among equally short paths the
// lexicographically smallest node sequence.
std::optional<Path> shortest_path(const Graph& g, int s, int t, const HopFilter& usable);
std::optional<Path> route_shortest(const Topology& t, int s, int d, Money amount);

struct FlareParams {
  int radius = 2;
  int beacons = 6;
  int query_limit = 10;
};

struct FlareTable {
  std::vector<int> nodes;                  // ascending, includes the owner
  std::vector<std::pair<int, int>> edges;  // u < v, ascending
  std::vector<int> beacons;                // ascending XOR distance from the owner
};

struct FlareTables {
  int radius = 0;
  std::vector<std::uint64_t> ids;
  std::vector<FlareTable> tables;
};

std::uint64_t flare_id(int node);
FlareTables flare_build(const Graph& g, int radius, int beacons, std::uint64_t seed);

struct FlareRoute {
  std::optional<Path> path;
  int queries = 0;
};

FlareRoute flare_route(const Graph& g, const FlareTables& t, int s, int d, int query_limit,
                       const HopFilter& usable = {});

// Fraction of (source, other node) pairs that flare_route connects.
double flare_accessibility(const Graph& g, const FlareTables& t, const std::vector<int>& sources, int query_limit);
double flare_accessibility_parallel(const Graph& g, const FlareTables& t, const std::vector<int>& sources,
                                    int query_limit);

struct FlareReproParams {
  int n = 500;
  int k = 4;
  double p = 0.3;
  int radius = 2;
  std::vector<int> beacons{0, 6, 12};
  std::vector<int> queries{10};
  int sources = 10;
  int reps = 30;
  std::uint64_t seed = 1;
  bool parallel = true;
};

struct FlareReproRow {
  int beacons = 0;
  int queries = 0;
  double mean = 0;  // accessible nodes, percent
  double sd = 0;
  int reps = 0;
};

std::vector<FlareReproRow> flare_repro(const FlareReproParams& p);

enum class Routing : std::uint8_t { ShortestPath, Flare };
enum class Fidelity : std::uint8_t { Abstract, Full };

struct WorldConfig {
  std::string config_id = "default";
  TopologySpec topology;
  Profiles profiles;
  linked::Model model = linked::Model::ConstantLocktime;
  Routing routing = Routing::ShortestPath;
  FlareParams flare;
  bool incremental = true;
  bool revive = false;
  double petty_rate = 0.0;
  double request_rate = 1.0;  // requests per second
  Tick ticks_per_second = 10;
  Tick delta = 6000;
  Tick round_ticks = 10;
  Tick grace = 1;
  Tick rebalance_interval = 100;
  Tick revive_interval = 300;
  Money rebalance_threshold = dollars(20);
  // A top-up deposits this multiple of the node's initial outlay, split
  // evenly over its channels.
  double topup_scale = 1.0;
  Tick warmup = 36000;
  Tick measure = 36000;
  Fidelity fidelity = Fidelity::Abstract;
  std::uint64_t seed = 1;
};

struct RunMetrics {
  std::size_t attempts = 0;
  std::size_t successes = 0;
  std::size_t failures = 0;
  double success_rate = 0;
  double throughput_tps = 0;
  double mean_duration = 0;  // seconds
  double p99_duration = 0;   // seconds
  std::int64_t collateral_integral = 0;  // cents x ticks
  std::size_t onchain_txs = 0;
  std::size_t unresolved = 0;
  std::vector<std::string> violations;
};

// Per-hop completion offsets from the open time of one payment.
struct HopSchedule {
  std::vector<Tick> complete;  // index i: hop P_i -> P_{i+1}
  bool cancelled = false;
};

// Timer ladder shared by the abstract and full models for one payment of
// `hops` hops opened at t0.
struct PaymentTimers {
  Tick crit = 0;                 // constant-locktime last safe moment
  Tick dispute = 0;              // constant-locktime on-chain resolution point
  std::vector<Tick> htlc_claim;  // per hop: T_i - delta
};
PaymentTimers payment_timers(const WorldConfig& cfg, Tick t0, int hops);

// Completion times of an opened payment under the abstract model. Honest
// completions ripple back from the recipient with each receiver's latency.
// Constant-locktime: a petty recipient holds every hop and a petty
// intermediary holds its outgoing hop until T_Crit; the delay does not
// reach other hops. Staggered HTLC: a petty receiver of hop
// i claims at T_i - delta and the hops upstream ripple from there.
HopSchedule abstract_schedule(const WorldConfig& cfg, const Topology& t, const Path& path,
                              const std::vector<bool>& petty, Tick t0);

class World {
 public:
  explicit World(const WorldConfig& cfg);
  World(const WorldConfig& cfg, Topology topo, std::vector<bool> petty);

  World(const World&) = delete;
  World& operator=(const World&) = delete;

  // Starts the Poisson request stream (until `arrivals_until`) and the
  // periodic rebalancing.
  void start(Tick arrivals_until = kNever);
  // Routes now and opens every hop; returns the request index.
  std::size_t submit(int sender, int recipient, Money amount);
  std::size_t submit_path(const Path& path, Money amount);
  void run_until(Tick t);
  // Runs until no payment is pending.
  void drain();
  Tick now() const { return sim_.now(); }

  void rebalance_onchain();
  void rebalance_revive();

  const Topology& topology() const { return topo_; }
  Topology& mutable_topology() { return topo_; }
  const std::vector<PaymentRequest>& requests() const { return requests_; }
  const std::vector<bool>& petty() const { return petty_; }
  bool paused(int ch) const { return paused_until_[static_cast<std::size_t>(ch)] > now(); }
  Money escrow(int ch) const { return escrow_[static_cast<std::size_t>(ch)]; }
  Money pending_topup(int ch, int side) const { return topup_[static_cast<std::size_t>(ch)][static_cast<std::size_t>(side)]; }
  std::size_t onchain_txs() const { return onchain_txs_; }
  std::size_t revive_shifts() const { return revive_shifts_; }
  std::int64_t collateral_of(std::size_t request) const { return collateral_[request]; }
  const std::vector<Tick>& hop_times(std::size_t request) const { return hop_done_[request]; }
  // Every channel satisfies bal_L + bal_R + escrow = capacity + confirmed top-ups.
  std::vector<std::string> check_conservation() const;

  RunMetrics metrics(Tick from, Tick to) const;

 private:
  struct Open {
    std::size_t request;
    Path path;
    std::vector<int> channels;
    std::size_t done = 0;
  };

  bool usable(int from, int to, Money amount) const;
  void arrive();
  void open(std::size_t req, const Path& path);
  void complete_hop(std::size_t open_id, std::size_t hop);
  void finish(std::size_t open_id, bool ok);
  HopSchedule schedule_for(const Path& path, Tick t0);
  void periodic_rebalance();
  void periodic_revive();

  WorldConfig cfg_;
  Topology topo_;
  std::vector<bool> petty_;
  sim::Simulator sim_;
  std::mt19937_64 arrivals_;
  std::mt19937_64 workload_;
  std::optional<RequestSampler> sampler_;
  std::optional<FlareTables> flare_;
  std::vector<PaymentRequest> requests_;
  std::vector<std::int64_t> collateral_;
  std::vector<std::vector<Tick>> hop_done_;
  std::vector<Open> opens_;
  std::size_t pending_ = 0;
  double next_arrival_ = 0;
  Tick arrivals_until_ = kNever;
  std::vector<Money> escrow_;
  std::vector<Tick> paused_until_;
  std::vector<std::array<Money, 2>> topup_;
  std::vector<Money> funded_;  // capacity plus confirmed top-ups
  std::vector<std::array<Money, 2>> initial_bal_;
  std::vector<bool> topping_up_;
  std::size_t onchain_txs_ = 0;
  std::size_t revive_shifts_ = 0;
  std::map<std::pair<std::uint64_t, int>, HopSchedule> full_cache_;
};

RunMetrics run_world(const WorldConfig& cfg);

struct SearchConfig {
  double initial_rate = 2.0;
  double target = 0.98;
  double tolerance = 0.0025;
  double rate_precision = 0.01;  // stop once (hi - lo) / hi falls below this
  int max_iter = 14;
  double max_rate = 1e4;
};

struct ThroughputResult {
  double rate = 0;  // highest evaluated rate within the target band
  double lo = 0;    // bracketing interval
  double hi = 0;
  bool converged = false;
  int evaluations = 0;
  RunMetrics metrics;
};

ThroughputResult measure_throughput_at_98(const WorldConfig& cfg, const SearchConfig& s = {});

// Runs every configuration; results are in input order either way.
std::vector<ThroughputResult> sweep_serial(const std::vector<WorldConfig>& cfgs, const SearchConfig& s = {});
std::vector<ThroughputResult> sweep_parallel(const std::vector<WorldConfig>& cfgs, const SearchConfig& s = {});

// Greedy cancellation of directed skew cycles. Returns the number of cycle
// shifts applied. Each node's total channel balance is unchanged.
std::size_t cancel_skew_cycles(Topology& t, const std::vector<bool>& frozen = {});

std::string csv_header();
std::string csv_row(const WorldConfig& cfg, double request_rate, const RunMetrics& m);

}  // namespace chanlab::net
