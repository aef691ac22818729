// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracles/oracles.hpp"
#include "support/instances.hpp"
#include "support/runs.hpp"

using namespace scm;
using namespace scm::sim;

namespace {

constexpr double kProtocolSeconds = 1.0;
constexpr int kSchedulerInstances = 200;
constexpr int kSchedulerMaxOps = 6;
constexpr int kSchedulerMaxCells = 3;
constexpr double kMakespanSlack = 0.15;
constexpr double kMakespanShare = 0.95;
constexpr double kSchedulerSeconds = 60.0;
constexpr int kNegotiationCases = 1000;
constexpr int kBullwhipSeeds = 20;
constexpr double kPassLow = 0.9;
constexpr double kPassHigh = 1.1;
constexpr double kBatchMin = 1.5;
constexpr double kScriptRelErr = 1e-9;
constexpr double kBullwhipSeconds = 30.0;

const std::vector<std::string> kScenarios{"automotive.json", "automotive_disruption.json", "insufficient_capacity.json",
                                          "two_echelon.json", "two_echelon_batch.json"};

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& why) {
    if (!ok && pass) {
      pass = false;
      detail = why;
    }
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// Protocol log pattern

/// A message or protocol event in log order.
struct Item {
  const Message* msg = nullptr;
  const ProtocolEvent* event = nullptr;
};

std::vector<Item> timeline(const World& w) {
  std::vector<Item> out;
  const auto& log = w.mail.log();
  std::size_t ev = 0;
  for (std::size_t i = 0; i <= log.size(); ++i) {
    while (ev < w.events.size() && w.events[ev].after_message <= i) out.push_back({nullptr, &w.events[ev++]});
    if (i < log.size()) out.push_back({&log[i], nullptr});
  }
  return out;
}

using Pred = std::function<bool(const Item&)>;

Pred msg(const std::string& from, const std::string& to, Performative p, ConversationId conv) {
  return [=](const Item& it) {
    return it.msg && it.msg->from == AgentId(from) && it.msg->to == AgentId(to) && it.msg->performative == p &&
           it.msg->conversation == conv;
  };
}

Pred event(const std::string& kind, ConversationId conv) {
  return [=](const Item& it) { return it.event && it.event->kind == kind && it.event->conversation == conv; };
}

/// Each step is a set of patterns that must all appear after the previous step.
bool matches(const std::vector<Item>& items, const std::vector<std::vector<Pred>>& steps, std::string& failed) {
  std::size_t cursor = 0;
  for (std::size_t s = 0; s < steps.size(); ++s) {
    std::size_t next = cursor;
    for (const auto& p : steps[s]) {
      std::size_t i = cursor;
      while (i < items.size() && !p(items[i])) ++i;
      if (i == items.size()) {
        failed = "step " + std::to_string(s + 1);
        return false;
      }
      next = std::max(next, i + 1);
    }
    cursor = next;
  }
  return true;
}

Outcome protocol_conformance() {
  Outcome out;
  const auto t0 = std::chrono::steady_clock::now();
  const auto sim = support::run(support::scenario("automotive.json"));
  const auto& w = sim->world();
  const OrderId order("O1");
  const auto& entry = w.orders.at(order);
  out.require(entry.contract.has_value(), "O1 has no contract");
  if (!out.pass) return out;

  const NegotiationSummary* neg = nullptr;
  for (const auto& [_, n] : w.negotiations)
    if (n.order == order) neg = &n;
  out.require(neg != nullptr, "no negotiation for O1");
  if (!out.pass) return out;

  const auto& log = w.mail.log();
  ConversationId rfq{};
  for (const auto& m : log)
    if (m.performative == Performative::RequestSupplyVector && m.from == AgentId(w.customer.str())) {
      rfq = m.conversation;
      break;
    }
  const std::string cust = w.customer.str();
  const std::string oem = neg->enterprise.str();
  const auto c = neg->conversation;
  std::vector<Pred> ask;
  std::vector<Pred> reply;
  std::vector<Pred> award;
  std::vector<Pred> accept;
  for (const auto& l : sim->scenario().suppliers) {
    if (l.buyer != neg->enterprise) continue;
    const std::string s = l.supplier.str() + "/dispo";
    ask.push_back(msg(oem + "/dispo", s, Performative::RequestSupplyVector, c));
    reply.push_back(msg(s, oem + "/dispo", Performative::SupplyVector, c));
    award.push_back(msg(oem + "/dispo", s, Performative::Award, c));
    accept.push_back(msg(s, oem + "/dispo", Performative::Accept, c));
  }
  out.require(ask.size() == 2, "expected two component suppliers");
  const std::vector<std::vector<Pred>> steps{
      {msg(cust, oem + "/dispo", Performative::RequestSupplyVector, rfq)},
      {event("initiate", c)},
      {msg(oem + "/dispo", oem + "/planner", Performative::CallForQuote, c)},
      {msg(oem + "/planner", oem + "/dispo", Performative::Quote, c)},
      ask,
      reply,
      {event("scenarios", c)},
      {event("selected", c)},
      {msg(oem + "/dispo", cust, Performative::SupplyVector, rfq)},
      {msg(cust, oem + "/dispo", Performative::Award, rfq)},
      award,
      accept,
      {msg(oem + "/dispo", cust, Performative::Accept, rfq)},
      {event("closed", c)},
  };
  std::string failed;
  out.require(matches(timeline(w), steps, failed), "log pattern broken at " + failed);
  out.require(w.contracts.at(*entry.contract).history.size() >= 2, "contract never accepted");
  const double secs = seconds_since(t0);
  out.require(secs < kProtocolSeconds, "took " + std::to_string(secs) + " s");
  if (out.pass) out.detail = "O1 pattern matched in " + std::to_string(secs) + " s";
  return out;
}

// ---------------------------------------------------------------------------
// Endangerment flows

const OrderId* notice_order(const Message& m) {
  if (const auto* e = std::get_if<body::Endangerment>(&m.payload)) return &e->event.order;
  return nullptr;
}

Outcome endangerment_flows() {
  Outcome out;
  const auto base = support::scenario("automotive.json");
  // theta follows the contracted lead time: agreed due minus the acceptance tick
  Tick theta = 0;
  {
    const auto clean = support::run(base);
    const auto& entry = clean->world().contracts.at(*clean->world().orders.at(OrderId("O1")).contract);
    Tick accepted = 0;
    for (const auto& h : entry.history)
      if (h.at("event") == "Accept") accepted = h.at("tick").get<Tick>();
    theta = endangerment_threshold(entry.current.agreed_due - accepted, base.params.theta_pct);
  }
  int minor = 0;
  int major = 0;
  for (Tick extra = 1; extra <= theta + 6; ++extra) {
    auto s = base;
    s.disruptions.push_back(support::shipment_delay("O1", 30, extra));
    const auto sim = support::run(s);
    const auto& log = sim->world().mail.log();
    std::multiset<std::string> got;
    std::optional<std::size_t> reneg;
    for (std::size_t i = 0; i < log.size(); ++i) {
      const auto* o = notice_order(log[i]);
      if (o == nullptr || *o != OrderId("O1")) continue;
      got.insert(to_string(log[i].performative));
      if (log[i].performative == Performative::RenegotiateRequest) reneg = i;
    }
    const std::string tag = "extra " + std::to_string(extra) + ": ";
    if (extra <= theta) {
      ++minor;
      out.require(got == std::multiset<std::string>{"EndangermentNotice", "RescheduleRequest"}, tag + "minor set");
      continue;
    }
    ++major;
    out.require(got == std::multiset<std::string>{"EndangermentNotice", "RenegotiateRequest"}, tag + "major set");
    if (!reneg) continue;
    const auto& contract = *sim->world().orders.at(OrderId("O1")).contract;
    bool resolved = false;
    for (std::size_t i = *reneg + 1; i < log.size() && !resolved; ++i) {
      if (const auto* a = std::get_if<body::AmendMsg>(&log[i].payload))
        resolved = a->contract == contract && log[i].performative == Performative::Amend;
      if (log[i].performative == Performative::Cancel)
        if (const auto* c = std::get_if<body::CancelMsg>(&log[i].payload)) resolved = c->contract == contract;
    }
    out.require(resolved, tag + "no Amend or Cancel after RenegotiateRequest");
  }
  for (const auto& name : {"automotive.json", "two_echelon.json", "two_echelon_batch.json"}) {
    const auto sim = support::run(support::scenario(name));
    out.require(sim->world().endangerments.empty() && support::count(*sim, Performative::EndangermentNotice) == 0,
                std::string(name) + " raised a false endangerment");
  }
  if (out.pass)
    out.detail = "theta " + std::to_string(theta) + ", " + std::to_string(minor) + " minor and " +
                 std::to_string(major) + " major delays, clean runs silent";
  return out;
}

// ---------------------------------------------------------------------------
// Scheduler oracle

Outcome scheduler_oracle() {
  Outcome out;
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(2024);
  int near = 0;
  for (int i = 0; i < kSchedulerInstances; ++i) {
    const auto in = support::random_instance(rng, kSchedulerMaxOps, kSchedulerMaxCells);
    const auto sched = plan(support::to_jobs(in), PlannerPolicy::discrete(), support::to_shop(in));
    const auto want = support::sorted(oracle::dispatch(in.jobs, in.cells, 400));
    out.require(support::to_slots(sched) == want, "instance " + std::to_string(i) + " differs from the oracle");
    const int best = oracle::optimal_makespan(in.jobs, in.cells);
    if (oracle::makespan(want) <= (1.0 + kMakespanSlack) * best) ++near;
  }
  const double share = static_cast<double>(near) / kSchedulerInstances;
  out.require(share >= kMakespanShare, "only " + std::to_string(share) + " within 15% of optimum");
  const double secs = seconds_since(t0);
  out.require(secs < kSchedulerSeconds, "took " + std::to_string(secs) + " s");
  if (out.pass)
    out.detail = std::to_string(kSchedulerInstances) + " instances identical, " + std::to_string(near) +
                 " within 15% of optimum, " + std::to_string(secs) + " s";
  return out;
}

// ---------------------------------------------------------------------------
// Negotiation safety and liveness

struct Case {
  std::string text;
  int max_rounds = 1;
  Tick latency = 0;
  Tick window = 0;
};

/// A customer, an OEM and up to two components with one or two suppliers each,
/// under spike demand in the first twelve ticks.
Case random_chain(std::mt19937_64& rng) {
  auto pick = [&](Tick lo, Tick hi) { return uniform_int(rng, lo, hi); };
  Case out;
  const int ncomp = static_cast<int>(pick(0, 2));
  const int max_rounds = static_cast<int>(pick(1, 3));
  out.max_rounds = max_rounds;
  json s;
  json ents = json::array({{{"id", "market"}, {"role", "customer"}}});
  json products = json::array();
  json links = json::array({{{"supplier", "oem"}, {"product", "kit"}, {"buyer", "market"}}});
  json bom = json::array();
  auto firm = [&](const std::string& id, const std::string& role, const std::string& product, int cells) {
    json cs = json::array();
    for (int c = 0; c < cells; ++c) cs.push_back(id + "-c" + std::to_string(c));
    json policy = json{{"kind", "discrete"}};
    if (pick(0, 1) == 1) {
      const Tick window = pick(1, 4);
      out.window = std::max(out.window, window);
      policy = json{{"kind", "batch"}, {"window", window}, {"max_lot", pick(2, 8)}};
    }
    return json{{"id", id},
                {"role", role},
                {"policy", policy},
                {"cells", cs},
                {"routings",
                 json::array({{{"product", product},
                               {"operations", json::array({{{"id", "work"},
                                                            {"eligible_cells", cs},
                                                            {"unit_time", pick(1, 3)},
                                                            {"setup_time", pick(0, 2)},
                                                            {"cost_rate", pick(10, 100)}}})}}})}};
  };
  ents.push_back(firm("oem", "manufacturer", "kit", static_cast<int>(pick(1, 2))));
  for (int k = 0; k < ncomp; ++k) {
    const std::string part = "part" + std::to_string(k);
    bom.push_back({{"component", part}, {"quantity_per_unit", pick(1, 2)}});
    products.push_back({{"id", part}});
    const int nsup = static_cast<int>(pick(1, 2));
    for (int j = 0; j < nsup; ++j) {
      const std::string id = "sup" + std::to_string(k) + std::to_string(j);
      ents.push_back(firm(id, "supplier", part, static_cast<int>(pick(1, 2))));
      links.push_back({{"supplier", id}, {"product", part}, {"buyer", "oem"}});
    }
  }
  products.push_back({{"id", "kit"}, {"bom", bom}});
  json spikes = json::array();
  for (Tick t = 0; t < 12; ++t)
    if (pick(0, 2) == 0) spikes.push_back(t);
  const Tick ttl = pick(1, 6);
  s["enterprises"] = ents;
  s["products"] = products;
  s["suppliers"] = links;
  s["demand"] = {{"product", "kit"},
                 {"model", {{"kind", "spike"}, {"base", 0}, {"spike_size", pick(1, 6)}, {"spike_times", spikes}}},
                 {"interval", 1},
                 {"lead_time", pick(4, 25)},
                 {"unit_price", pick(50, 2000)}};
  json dis = json::array();
  if (pick(0, 3) == 0) dis.push_back({{"kind", "cell_down"}, {"cell", "oem-c0"}, {"start", pick(2, 10)}, {"end", pick(11, 20)}});
  s["disruptions"] = dis;
  s["params"] = {{"ttl", ttl}, {"max_rounds", max_rounds}, {"transit_time", pick(0, 2)}};
  out.latency = pick(0, 2);
  s["network"] = {{"default_latency", out.latency}};
  s["horizon"] = 12 + 3 * ttl * max_rounds + 60;
  s["seed"] = pick(1, 1000000);
  out.text = s.dump();
  return out;
}

Outcome negotiation_properties() {
  Outcome out;
  std::mt19937_64 rng(99);
  int negotiations = 0;
  int failed = 0;
  int in_flight = 0;
  for (int i = 0; i < kNegotiationCases && out.pass; ++i) {
    const auto c = random_chain(rng);
    const int max_rounds = c.max_rounds;
    std::unique_ptr<Simulation> sim;
    try {
      sim = support::run(load_scenario_text(c.text, "case " + std::to_string(i)));
    } catch (const Error& e) {
      out.require(false, "case " + std::to_string(i) + " threw " + e.what());
      break;
    }
    const auto& w = sim->world();
    const std::string tag = "case " + std::to_string(i) + ": ";
    for (const auto& [conv, n] : w.negotiations) {
      ++negotiations;
      const bool terminal = n.phase == NegotiationPhase::Closed || n.phase == NegotiationPhase::Failed;
      // a round trip takes at most two latencies plus a lot window and one tick
      const Tick bound = max_rounds * (2 + static_cast<Tick>(n.components)) * (2 * c.latency + c.window + 1);
      const Tick age = sim->scenario().horizon - n.opened;
      if (!terminal && age <= bound) ++in_flight;
      out.require(terminal || age <= bound, tag + "negotiation " + std::to_string(conv.value) + " never terminated");
      out.require(n.round <= max_rounds, tag + "round bound exceeded");
      out.require(n.exchanges <= max_rounds * (2 + static_cast<int>(n.components)), tag + "exchange bound exceeded");
      if (n.phase != NegotiationPhase::Failed) continue;
      ++failed;
      for (const auto& m : n.members)
        for (const auto& [_, c] : w.contracts)
          out.require(!(c.current.order == m && c.current.state == ContractState::Active),
                      tag + "failed negotiation left an active contract");
    }
    std::map<OrderId, int> active;
    for (const auto& [_, c] : w.contracts)
      if (c.current.state == ContractState::Active) ++active[c.current.order];
    for (const auto& [o, k] : active) out.require(k <= 1, tag + "duplicate active contracts for " + o.str());
  }
  if (out.pass)
    out.detail = std::to_string(kNegotiationCases) + " chains, " + std::to_string(negotiations) + " negotiations, " +
                 std::to_string(failed) + " failed cleanly, " + std::to_string(in_flight) + " in flight at the horizon";
  return out;
}

// ---------------------------------------------------------------------------
// Bullwhip

Outcome bullwhip_property() {
  Outcome out;
  const auto t0 = std::chrono::steady_clock::now();
  double lo = 1e300;
  double hi = -1e300;
  double batch_min = 1e300;
  double worst = 0.0;
  for (const char* name : {"two_echelon.json", "two_echelon_batch.json"}) {
    const bool batch = std::string(name) == "two_echelon_batch.json";
    for (int seed = 1; seed <= kBullwhipSeeds; ++seed) {
      auto s = support::scenario(name);
      s.seed = static_cast<std::uint64_t>(seed);
      const auto sim = support::run(s);
      const auto r = sim->report().at("bullwhip").at("oem");
      const std::string tag = std::string(name) + " seed " + std::to_string(seed) + ": ";
      out.require(r.at("value").is_number(), tag + "undefined ratio");
      if (!r.at("value").is_number()) continue;
      const double got = r.at("value").get<double>();
      const auto series = oracle::read_series(sim->series_csv());
      const double want = oracle::cv2_ratio(series.at("oem"), series.at(sim->world().customer.str()));
      const double rel = std::abs(got - want) / std::abs(want);
      worst = std::max(worst, rel);
      out.require(rel <= kScriptRelErr, tag + "script mismatch " + std::to_string(rel));
      if (batch) {
        batch_min = std::min(batch_min, got);
        out.require(got > kBatchMin, tag + "batch ratio " + std::to_string(got));
      } else {
        lo = std::min(lo, got);
        hi = std::max(hi, got);
        out.require(got >= kPassLow && got <= kPassHigh, tag + "pass-through ratio " + std::to_string(got));
      }
    }
  }
  const double secs = seconds_since(t0);
  out.require(secs < kBullwhipSeconds, "took " + std::to_string(secs) + " s");
  if (out.pass) {
    std::ostringstream os;
    os << "pass-through [" << lo << ", " << hi << "], batch min " << batch_min << ", max rel err " << worst << ", "
       << secs << " s";
    out.detail = os.str();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Determinism, conservation, tracing

std::vector<ScenarioFile> ci_scenarios() {
  std::vector<ScenarioFile> out;
  for (const auto& n : kScenarios) out.push_back(support::scenario(n));
  for (Tick extra : {1, 5, 10}) {
    auto s = support::scenario("automotive.json");
    s.disruptions.push_back(support::shipment_delay("O1", 30, extra));
    out.push_back(s);
  }
  return out;
}

Outcome determinism() {
  Outcome out;
  const auto all = ci_scenarios();
  for (std::size_t i = 0; i < all.size(); ++i) {
    const auto a = support::run(all[i]);
    const auto b = support::run(all[i]);
    const std::string tag = "scenario " + std::to_string(i) + ": ";
    out.require(render(a->report()) == render(b->report()), tag + "report differs");
    out.require(support::log_text(*a) == support::log_text(*b), tag + "log differs");
    out.require(a->series_csv() == b->series_csv(), tag + "series differs");
  }
  if (out.pass) out.detail = std::to_string(all.size()) + " scenarios byte-identical";
  return out;
}

Outcome conservation() {
  Outcome out;
  const auto all = ci_scenarios();
  for (std::size_t i = 0; i < all.size(); ++i) {
    const auto sim = support::run(all[i]);
    const auto r = sim->report();
    const auto& c = r.at("conservation");
    const auto q = [&](const char* k) { return c.at(k).get<Quantity>(); };
    const std::string tag = "scenario " + std::to_string(i) + ": ";
    out.require(q("demanded") == q("delivered") + q("in_transit") + q("in_production") + q("failed"), tag + "units");
    out.require(q("received") == q("delivered"), tag + "received units");
    out.require(q("shipped_open") == q("in_transit"), tag + "units in transit");

    const auto& w = sim->world();
    Money ledger = 0;
    for (const auto& p : w.payments) {
      if (w.is_customer(p.from)) ledger += p.amount;
      if (w.is_customer(p.to)) ledger -= p.amount;
    }
    for (const auto& [_, cost] : w.production_cost) ledger -= cost;
    const auto& p = r.at("profit");
    Money sum = 0;
    for (const auto& [_, e] : p.at("enterprises").items()) sum += e.at("profit").get<Money>();
    const Money chain = p.at("chain").get<Money>();
    out.require(chain == sum, tag + "chain profit is not the sum of enterprise profits");
    out.require(chain == p.at("customer_revenue").get<Money>() - p.at("production_cost").get<Money>() -
                             p.at("external_penalties").get<Money>(),
                tag + "profit identity");
    out.require(chain == ledger, tag + "profit differs from the payment ledger");
  }
  if (out.pass) out.detail = std::to_string(all.size()) + " scenarios exact";
  return out;
}

HistoryEntry scripted_entry(const std::string& order, const std::string& supplier, Tick delivered) {
  HistoryEntry e;
  e.run = "scripted";
  auto& r = e.record;
  r.order = OrderId(order);
  r.contract = ContractId("C" + order);
  r.seller = EnterpriseId(supplier);
  r.buyer = EnterpriseId("oem");
  r.product = ProductId("part");
  r.quantity = 1;
  r.lot_size = 1;
  r.agreed_due = 30;
  r.original_due = 30;
  for (std::size_t k = 0; k < kMilestoneCount; ++k) r.milestones[k].kind = static_cast<MilestoneKind>(k);
  r.at(MilestoneKind::Delivered).actual = delivered;
  r.at(MilestoneKind::Delivered).projected = delivered;
  r.set_status(delivered <= 30 ? TrackingStatus::Completed : TrackingStatus::Failed);
  e.contract = Contract{r.contract, r.order, r.buyer, r.seller, 30, 100, 1, 1, ContractState::Fulfilled};
  return e;
}

Outcome tracing_oracle() {
  Outcome out;
  HistoryStore store;
  std::vector<oracle::Delivery> raw;
  for (int i = 0; i < 10; ++i) {
    const Tick s = i < 8 ? 33 : 30;
    const Tick t = i < 1 ? 34 : 29;
    store.record(scripted_entry("S" + std::to_string(i), "S", s));
    store.record(scripted_entry("T" + std::to_string(i), "T", t));
    raw.push_back({"S", 30, s});
    raw.push_back({"T", 30, t});
  }
  const auto freq = oracle::late_frequency(raw);
  const auto r = analyze(store);
  out.require(r.ranking.size() == 2, "ranking has " + std::to_string(r.ranking.size()) + " entries");
  if (!out.pass) return out;
  out.require(r.ranking[0].supplier == EnterpriseId("S") && r.ranking[1].supplier == EnterpriseId("T"), "order");
  out.require(r.ranking[0].frequency == 0.8 && r.ranking[1].frequency == 0.1, "frequencies");
  out.require(r.ranking[0].frequency == freq.at("S") && r.ranking[1].frequency == freq.at("T"), "oracle mismatch");
  if (out.pass) out.detail = "[S 0.8, T 0.1]";
  return out;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"protocol conformance", protocol_conformance},
      {"endangerment flows", endangerment_flows},
      {"scheduler oracle equivalence", scheduler_oracle},
      {"negotiation safety and liveness", negotiation_properties},
      {"bullwhip property", bullwhip_property},
      {"determinism", determinism},
      {"conservation and profit identity", conservation},
      {"tracing oracle", tracing_oracle},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    if (!o.pass) ++failures;
    std::cout << (o.pass ? "PASS" : "FAIL") << ' ' << (i + 1) << ' ' << criteria[i].first << ": " << o.detail
              << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
