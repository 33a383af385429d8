#include <istream>
#include <map>
#include <sstream>

#include "chanlab/xcli.hpp"

namespace chanlab::cli {

using nlohmann::json;

namespace {

json opt(const std::optional<Tick>& t) { return t ? json(*t) : json(nullptr); }

std::optional<Tick> opt_tick(const json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<Tick>();
}

linked::Flag parse_flag(const std::string& s) {
  for (int f = 0; f <= static_cast<int>(linked::Flag::Dispute); ++f)
    if (linked::to_string(static_cast<linked::Flag>(f)) == s) return static_cast<linked::Flag>(f);
  throw std::runtime_error("unknown flag '" + s + "'");
}

struct Parsed {
  json header;
  std::vector<std::pair<int, json>> chain;  // line number, record
  std::optional<std::pair<int, json>> ledger;
  std::vector<json> hops;
  std::vector<json> disputes;
};

Parsed parse(std::istream& in) {
  Parsed p;
  std::string line;
  int no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("kind")) {
      throw std::runtime_error("line " + std::to_string(no) + ": not a trace record");
    }
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "header") {
      if (j.value("format", "") != "chanlab-linked-trace") throw std::runtime_error("unrecognised trace format");
      p.header = j;
    } else if (kind == "mint" || kind == "tx") {
      p.chain.emplace_back(no, j);
    } else if (kind == "ledger") {
      p.ledger.emplace(no, j);
    } else if (kind == "hop") {
      p.hops.push_back(j);
    } else if (kind == "dispute") {
      p.disputes.push_back(j);
    } else {
      throw std::runtime_error("line " + std::to_string(no) + ": unknown record kind '" + kind + "'");
    }
  }
  if (p.header.is_null()) throw std::runtime_error("missing header line");
  if (!p.ledger) throw std::runtime_error("missing ledger line");
  return p;
}

CheckResult check_conservation(const Parsed& p) {
  CheckResult r{"conservation", {}};
  std::map<std::int64_t, std::int64_t> bal;
  std::map<std::int64_t, std::int64_t> esc;
  std::int64_t minted = 0;
  for (const auto& [no, j] : p.chain) {
    const std::string at = "line " + std::to_string(no);
    if (j.at("kind") == "mint") {
      bal[j.at("party").get<std::int64_t>()] += j.at("coins").get<std::int64_t>();
      minted += j.at("coins").get<std::int64_t>();
      continue;
    }
    const auto contract = j.at("contract").get<std::int64_t>();
    const auto coins = j.at("coins").get<std::int64_t>();
    if (coins < 0) r.failures.push_back(at + ": negative coins");
    if (j.at("applied").get<bool>()) {
      bal[j.at("submitter").get<std::int64_t>()] -= coins;
      esc[contract] += coins;
    }
    for (const auto& po : j.at("payouts")) {
      const auto from = po.at(0).get<std::int64_t>();
      const auto amt = po.at(2).get<std::int64_t>();
      if (amt < 0) r.failures.push_back(at + ": negative payout");
      esc[from] -= amt;
      bal[po.at(1).get<std::int64_t>()] += amt;
      if (esc[from] < 0) r.failures.push_back(at + ": contract " + std::to_string(from) + " pays out more than it holds");
    }
    if (esc[contract] != j.at("escrow_after").get<std::int64_t>()) {
      r.failures.push_back(at + ": escrow of contract " + std::to_string(contract) + " is " +
                           std::to_string(j.at("escrow_after").get<std::int64_t>()) + " but the replay gives " +
                           std::to_string(esc[contract]));
    }
  }

  const auto& [lno, ledger] = *p.ledger;
  const std::string at = "line " + std::to_string(lno);
  std::map<std::int64_t, std::int64_t> flight;
  for (const auto& e : ledger.at("in_flight")) flight[e.at(0).get<std::int64_t>()] += e.at(1).get<std::int64_t>();
  std::int64_t held = 0;
  std::map<std::int64_t, std::int64_t> listed;
  for (const auto& e : ledger.at("balances")) {
    listed[e.at(0).get<std::int64_t>()] = e.at(1).get<std::int64_t>();
    held += e.at(1).get<std::int64_t>();
    if (e.at(1).get<std::int64_t>() < 0) r.failures.push_back(at + ": negative balance");
  }
  for (const auto& [party, b] : bal) {
    const std::int64_t have = listed.count(party) ? listed[party] : 0;
    const std::int64_t fl = flight.count(party) ? flight[party] : 0;
    if (have + fl != b) {
      r.failures.push_back(at + ": party " + std::to_string(party) + " holds " + std::to_string(have) + " + " +
                           std::to_string(fl) + " in flight but the replay gives " + std::to_string(b));
    }
  }
  for (const auto& e : ledger.at("escrows")) {
    const auto a = e.at(0).get<std::int64_t>();
    const auto v = e.at(1).get<std::int64_t>();
    held += v;
    const std::int64_t want = esc.count(a) ? esc[a] : 0;
    if (v != want) {
      r.failures.push_back(at + ": escrow of contract " + std::to_string(a) + " is " + std::to_string(v) +
                           " but the replay gives " + std::to_string(want));
    }
  }
  for (const auto& [party, c] : flight) held += c;
  if (held != minted) {
    r.failures.push_back(at + ": " + std::to_string(held) + " units held against " + std::to_string(minted) + " minted");
  }

  std::int64_t net = 0;
  for (const auto& v : p.header.at("net")) net += v.get<std::int64_t>();
  if (net != 0) r.failures.push_back("header: party net changes sum to " + std::to_string(net));
  return r;
}

CheckResult check_disputes(const Parsed& p) {
  CheckResult r{"dispute_timing", {}};
  const Tick delta = p.header.at("delta").get<Tick>();
  const Tick end = p.ledger->second.at("t").get<Tick>();
  for (const auto& d : p.disputes) {
    const Tick raised = d.at("raised_at").get<Tick>();
    const auto off = opt_tick(d, "offchain_at");
    const auto on = opt_tick(d, "onchain_at");
    const std::string who =
        "hop " + std::to_string(d.at("hop").get<int>()) + " round " + std::to_string(d.at("round").get<std::int64_t>());
    if (off) {
      if (*off > raised + delta) {
        r.failures.push_back(who + ": off-chain resolution at " + std::to_string(*off) + " after " +
                             std::to_string(raised + delta));
      }
    } else if (on) {
      if (*on > raised + 2 * delta) {
        r.failures.push_back(who + ": on-chain resolution at " + std::to_string(*on) + " after " +
                             std::to_string(raised + 2 * delta));
      }
    } else if (end > raised + 2 * delta) {
      r.failures.push_back(who + ": raised at " + std::to_string(raised) + " and never resolved");
    }
  }
  return r;
}

CheckResult check_ideal(const Parsed& p) {
  CheckResult r{"f_linked", {}};
  const json& h = p.header;
  linked::LinkedOutcome o;
  o.model = h.at("model") == "S" ? linked::Model::ConstantLocktime : linked::Model::StaggeredHtlc;
  o.ell = h.at("ell").get<int>();
  o.amount = Money(h.at("amount").get<std::int64_t>());
  o.delta = h.at("delta").get<Tick>();
  o.T = h.at("T").get<Tick>();
  o.expiry = h.at("expiry").get<Tick>();
  o.dispute = h.at("dispute").get<Tick>();
  o.check_at = h.at("check_at").get<Tick>();
  o.honest = h.at("honest").get<std::vector<bool>>();
  for (const auto& v : h.at("net")) o.net.emplace_back(v.get<std::int64_t>());
  std::vector<Money> bal_left;
  for (const auto& v : h.at("bal_left")) bal_left.emplace_back(v.get<std::int64_t>());
  if (static_cast<int>(o.honest.size()) != o.ell || static_cast<int>(p.hops.size()) != o.ell - 1) {
    r.failures.push_back("header and hop records disagree on the path length");
    return r;
  }
  o.hops.resize(p.hops.size());
  for (const auto& j : p.hops) {
    const auto i = j.at("i").get<std::size_t>();
    if (i >= o.hops.size()) throw std::runtime_error("hop index out of range");
    auto& hop = o.hops[i];
    hop.flag = parse_flag(j.at("flag").get<std::string>());
    hop.via_dispute = j.at("via_dispute").get<bool>();
    hop.open_at = opt_tick(j, "open_at");
    hop.close_at = opt_tick(j, "close_at");
  }
  r.failures = linked::ideal_exceptions(o, bal_left);
  if (!o.honest_intermediaries_whole()) r.failures.push_back("an honest party ends with less than it started");
  return r;
}

}  // namespace

bool VerifyReport::ok() const {
  if (!error.empty()) return false;
  for (const auto& c : checks)
    if (!c.passed()) return false;
  return true;
}

std::string linked_trace(const linked::LinkedOutcome& o) {
  std::vector<std::int64_t> bal_left;
  for (Money m : o.bal_left) bal_left.push_back(m.units());
  std::vector<std::int64_t> net;
  for (Money m : o.net) net.push_back(m.units());
  json header{{"kind", "header"},
              {"format", "chanlab-linked-trace"},
              {"version", 1},
              {"model", o.model == linked::Model::ConstantLocktime ? "S" : "L"},
              {"ell", o.ell},
              {"amount", o.amount.units()},
              {"delta", o.delta},
              {"T", o.T},
              {"expiry", o.expiry},
              {"dispute", o.dispute},
              {"check_at", o.check_at},
              {"honest", o.honest},
              {"bal_left", bal_left},
              {"net", net}};
  std::string out = header.dump() + "\n" + o.chain_trace;
  for (std::size_t i = 0; i < o.hops.size(); ++i) {
    const auto& h = o.hops[i];
    json j{{"kind", "hop"},
           {"i", i},
           {"flag", std::string(linked::to_string(h.flag))},
           {"via_dispute", h.via_dispute},
           {"open_at", opt(h.open_at)},
           {"close_at", opt(h.close_at)}};
    out += j.dump() + "\n";
  }
  for (const auto& d : o.disputes) {
    json j{{"kind", "dispute"},
           {"hop", d.hop},
           {"round", d.record.round},
           {"raised_at", d.record.raised_at},
           {"deadline", d.record.deadline},
           {"offchain_at", opt(d.record.offchain_at)},
           {"onchain_at", opt(d.record.onchain_at)}};
    out += j.dump() + "\n";
  }
  return out;
}

VerifyReport verify_trace(std::istream& in) {
  VerifyReport rep;
  try {
    const Parsed p = parse(in);
    rep.checks.push_back(check_conservation(p));
    rep.checks.push_back(check_disputes(p));
    rep.checks.push_back(check_ideal(p));
  } catch (const std::exception& e) {
    rep.checks.clear();
    rep.error = e.what();
  }
  return rep;
}

}  // namespace chanlab::cli
