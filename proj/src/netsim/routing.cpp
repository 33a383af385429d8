#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "chanlab/crypto.hpp"
#include "chanlab/netsim.hpp"

namespace chanlab::net {

std::optional<Path> shortest_path(const Graph& g, int s, int t, const HopFilter& usable) {
  if (s == t) return Path{s};
  // Distances to t over usable hops, then a greedy lowest-id walk from s.
  std::vector<int> dist(static_cast<std::size_t>(g.n), -1);
  std::queue<int> q;
  dist[static_cast<std::size_t>(t)] = 0;
  q.push(t);
  while (!q.empty()) {
    const int v = q.front();
    q.pop();
    for (int u : g.adj[static_cast<std::size_t>(v)]) {
      if (dist[static_cast<std::size_t>(u)] >= 0 || !usable(u, v)) continue;
      dist[static_cast<std::size_t>(u)] = dist[static_cast<std::size_t>(v)] + 1;
      if (u == s) break;
      q.push(u);
    }
    if (dist[static_cast<std::size_t>(s)] >= 0) break;
  }
  if (dist[static_cast<std::size_t>(s)] < 0) return std::nullopt;
  Path p{s};
  int cur = s;
  while (cur != t) {
    const int want = dist[static_cast<std::size_t>(cur)] - 1;
    for (int w : g.adj[static_cast<std::size_t>(cur)]) {
      if (dist[static_cast<std::size_t>(w)] == want && usable(cur, w)) {
        cur = w;
        break;
      }
    }
    p.push_back(cur);
  }
  return p;
}

std::optional<Path> route_shortest(const Topology& t, int s, int d, Money amount) {
  return shortest_path(t.g, s, d, [&](int a, int b) { return t.available(a, b).value_or(Money(0)) >= amount; });
}

std::uint64_t flare_id(int node) {
  Bytes b(4);
  for (int i = 0; i < 4; ++i) b[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(static_cast<std::uint32_t>(node) >> (8 * i));
  const crypto::Hash h = crypto::hash("flare-id", b);
  std::uint64_t id = 0;
  for (int i = 0; i < 8; ++i) id = (id << 8) | h.digest[static_cast<std::size_t>(i)];
  return id;
}

namespace {

// Growing subgraph known to one node.
class Known {
 public:
  void add(int u, int v) {
    if (u > v) std::swap(u, v);
    if (!keys_.insert((static_cast<std::uint64_t>(u) << 32) | static_cast<std::uint32_t>(v)).second) return;
    edges_.emplace_back(u, v);
    adj_[u].push_back(v);
    adj_[v].push_back(u);
  }
  void add_all(const std::vector<std::pair<int, int>>& es) {
    for (const auto& [u, v] : es) add(u, v);
  }
  void add_node(int v) { adj_.try_emplace(v); }
  bool knows(int v) const { return adj_.count(v) != 0; }

  std::vector<int> nodes() const {
    std::vector<int> out;
    out.reserve(adj_.size());
    for (const auto& [v, _] : adj_) out.push_back(v);
    std::sort(out.begin(), out.end());
    return out;
  }

  std::optional<Path> path(int s, int t, const HopFilter& usable = {}) const {
    if (!knows(s) || !knows(t)) return std::nullopt;
    if (s == t) return Path{s};
    std::unordered_map<int, int> parent{{s, s}};
    std::queue<int> q;
    q.push(s);
    while (!q.empty()) {
      const int u = q.front();
      q.pop();
      for (int v : adj_.at(u)) {
        if (parent.count(v) || (usable && !usable(u, v))) continue;
        parent.emplace(v, u);
        if (v == t) {
          Path p{t};
          for (int x = t; x != s;) p.push_back(x = parent.at(x));
          std::reverse(p.begin(), p.end());
          return p;
        }
        q.push(v);
      }
    }
    return std::nullopt;
  }

  const std::vector<std::pair<int, int>>& edges() const { return edges_; }

 private:
  std::unordered_set<std::uint64_t> keys_;
  std::vector<std::pair<int, int>> edges_;
  std::unordered_map<int, std::vector<int>> adj_;
};

std::vector<std::pair<int, int>> path_edges(const Path& p) {
  std::vector<std::pair<int, int>> out;
  for (std::size_t i = 0; i + 1 < p.size(); ++i) out.emplace_back(std::min(p[i], p[i + 1]), std::max(p[i], p[i + 1]));
  return out;
}

FlareTable neighborhood(const Graph& g, int v, int radius) {
  std::unordered_map<int, int> dist{{v, 0}};
  std::queue<int> q;
  q.push(v);
  while (!q.empty()) {
    const int u = q.front();
    q.pop();
    if (dist[u] == radius) continue;
    for (int w : g.adj[static_cast<std::size_t>(u)]) {
      if (dist.count(w)) continue;
      dist.emplace(w, dist[u] + 1);
      q.push(w);
    }
  }
  FlareTable t;
  for (const auto& [u, d] : dist) t.nodes.push_back(u);
  std::sort(t.nodes.begin(), t.nodes.end());
  for (int u : t.nodes) {
    for (int w : g.adj[static_cast<std::size_t>(u)]) {
      if (u < w && dist.count(w) && std::min(dist[u], dist[w]) < radius) t.edges.emplace_back(u, w);
    }
  }
  std::sort(t.edges.begin(), t.edges.end());
  return t;
}

void finish_table(FlareTable& t) {
  std::set<int> nodes(t.nodes.begin(), t.nodes.end());
  for (const auto& [u, v] : t.edges) {
    nodes.insert(u);
    nodes.insert(v);
  }
  t.nodes.assign(nodes.begin(), nodes.end());
  std::sort(t.edges.begin(), t.edges.end());
  t.edges.erase(std::unique(t.edges.begin(), t.edges.end()), t.edges.end());
}

void select_beacons(FlareTables& ft, int v, int count) {
  const auto& ids = ft.ids;
  const std::uint64_t me = ids[static_cast<std::size_t>(v)];
  auto dist = [&](int w) { return ids[static_cast<std::size_t>(w)] ^ me; };
  auto closer = [&](int a, int b) { return dist(a) != dist(b) ? dist(a) < dist(b) : a < b; };

  FlareTable& mine = ft.tables[static_cast<std::size_t>(v)];
  Known known;
  known.add_node(v);
  known.add_all(mine.edges);
  std::set<int> asked;
  auto top = [&] {
    std::vector<int> c = known.nodes();
    c.erase(std::remove(c.begin(), c.end(), v), c.end());
    std::sort(c.begin(), c.end(), closer);
    if (static_cast<int>(c.size()) > count) c.resize(static_cast<std::size_t>(count));
    return c;
  };
  while (true) {
    std::optional<int> cand;
    for (int c : top()) {
      if (!asked.count(c)) {
        cand = c;
        break;
      }
    }
    if (!cand) break;
    asked.insert(*cand);
    // The candidate hands over paths to anything it knows that is closer.
    const FlareTable& theirs = ft.tables[static_cast<std::size_t>(*cand)];
    Known view;
    view.add_node(*cand);
    view.add_all(theirs.edges);
    for (int w : theirs.nodes) {
      if (known.knows(w) || !closer(w, *cand)) continue;
      if (auto p = view.path(*cand, w)) known.add_all(path_edges(*p));
    }
  }
  mine.beacons = top();
  for (int b : mine.beacons) {
    if (auto p = known.path(v, b)) {
      const auto es = path_edges(*p);
      mine.edges.insert(mine.edges.end(), es.begin(), es.end());
    }
  }
  finish_table(mine);
}

}  // namespace

FlareTables flare_build(const Graph& g, int radius, int beacons, std::uint64_t seed) {
  FlareTables ft;
  ft.radius = radius;
  ft.ids.resize(static_cast<std::size_t>(g.n));
  ft.tables.resize(static_cast<std::size_t>(g.n));
  for (int v = 0; v < g.n; ++v) {
    ft.ids[static_cast<std::size_t>(v)] = flare_id(v);
    ft.tables[static_cast<std::size_t>(v)] = neighborhood(g, v, radius);
  }
  if (beacons <= 0) return ft;
  std::vector<int> order(static_cast<std::size_t>(g.n));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  for (int v : order) select_beacons(ft, v, beacons);
  return ft;
}

FlareRoute flare_route(const Graph&, const FlareTables& t, int s, int d, int query_limit, const HopFilter& usable) {
  FlareRoute r;
  Known known;
  known.add_node(s);
  known.add_all(t.tables[static_cast<std::size_t>(s)].edges);
  if ((r.path = known.path(s, d, usable))) return r;
  known.add_node(d);
  known.add_all(t.tables[static_cast<std::size_t>(d)].edges);
  if ((r.path = known.path(s, d, usable))) return r;
  const std::uint64_t target = t.ids[static_cast<std::size_t>(d)];
  std::set<int> queried{s, d};
  while (r.queries < query_limit) {
    std::optional<int> next;
    for (int v : known.nodes()) {
      if (queried.count(v)) continue;
      const std::uint64_t dv = t.ids[static_cast<std::size_t>(v)] ^ target;
      if (!next || dv < (t.ids[static_cast<std::size_t>(*next)] ^ target)) next = v;
    }
    if (!next) break;
    queried.insert(*next);
    ++r.queries;
    known.add_all(t.tables[static_cast<std::size_t>(*next)].edges);
    if ((r.path = known.path(s, d, usable))) return r;
  }
  return r;
}

namespace {

std::vector<std::pair<int, int>> pairs_for(const Graph& g, const std::vector<int>& sources) {
  std::vector<std::pair<int, int>> pairs;
  for (int s : sources)
    for (int d = 0; d < g.n; ++d)
      if (d != s) pairs.emplace_back(s, d);
  return pairs;
}

}  // namespace

double flare_accessibility(const Graph& g, const FlareTables& t, const std::vector<int>& sources, int query_limit) {
  const auto pairs = pairs_for(g, sources);
  if (pairs.empty()) return 0.0;
  std::int64_t ok = 0;
  for (const auto& [s, d] : pairs) ok += flare_route(g, t, s, d, query_limit).path ? 1 : 0;
  return static_cast<double>(ok) / static_cast<double>(pairs.size());
}

double flare_accessibility_parallel(const Graph& g, const FlareTables& t, const std::vector<int>& sources,
                                    int query_limit) {
  const auto pairs = pairs_for(g, sources);
  if (pairs.empty()) return 0.0;
  const auto n = static_cast<std::int64_t>(pairs.size());
  std::int64_t ok = 0;
#pragma omp parallel for schedule(dynamic, 16) reduction(+ : ok)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto& [s, d] = pairs[static_cast<std::size_t>(i)];
    ok += flare_route(g, t, s, d, query_limit).path ? 1 : 0;
  }
  return static_cast<double>(ok) / static_cast<double>(pairs.size());
}

std::vector<FlareReproRow> flare_repro(const FlareReproParams& p) {
  // samples[b][q] holds one accessibility percentage per repetition.
  std::vector<std::vector<std::vector<double>>> samples(p.beacons.size(),
                                                        std::vector<std::vector<double>>(p.queries.size()));
  for (int rep = 0; rep < p.reps; ++rep) {
    const auto r = static_cast<std::uint64_t>(rep);
    const Graph g = gen_ws(p.n, p.k, p.p, stream_seed(p.seed, 10 + 3 * r));
    std::mt19937_64 rng(stream_seed(p.seed, 11 + 3 * r));
    std::vector<int> nodes(static_cast<std::size_t>(g.n));
    std::iota(nodes.begin(), nodes.end(), 0);
    std::shuffle(nodes.begin(), nodes.end(), rng);
    nodes.resize(static_cast<std::size_t>(std::min(p.sources, g.n)));
    for (std::size_t bi = 0; bi < p.beacons.size(); ++bi) {
      const FlareTables t = flare_build(g, p.radius, p.beacons[bi], stream_seed(p.seed, 12 + 3 * r));
      for (std::size_t qi = 0; qi < p.queries.size(); ++qi) {
        const double acc = p.parallel ? flare_accessibility_parallel(g, t, nodes, p.queries[qi])
                                      : flare_accessibility(g, t, nodes, p.queries[qi]);
        samples[bi][qi].push_back(100.0 * acc);
      }
    }
  }
  std::vector<FlareReproRow> rows;
  for (std::size_t bi = 0; bi < p.beacons.size(); ++bi) {
    for (std::size_t qi = 0; qi < p.queries.size(); ++qi) {
      const auto& xs = samples[bi][qi];
      FlareReproRow row;
      row.beacons = p.beacons[bi];
      row.queries = p.queries[qi];
      row.reps = static_cast<int>(xs.size());
      if (!xs.empty()) row.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
      if (xs.size() > 1) {
        double ss = 0;
        for (double x : xs) ss += (x - row.mean) * (x - row.mean);
        row.sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
      }
      rows.push_back(row);
    }
  }
  return rows;
}

}  // namespace chanlab::net
