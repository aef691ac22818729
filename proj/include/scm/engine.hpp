#pragma once

// Deterministic tick loop. Each tick runs, in order: (1) customer demand,
// (2-3) message delivery and agent steps in ascending agent id until the
// mailboxes are quiet, (4) production progress, (5) scheduled disruptions,
// (6) logistics. Messages sent in phases 4-6 are handled on the next tick.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "scm/agents.hpp"
#include "scm/metrics.hpp"
#include "scm/scenario.hpp"
#include "scm/tracing.hpp"
#include "scm/world.hpp"

namespace scm::sim {

/// Uniform integer in [lo, hi] by rejection, so results do not depend on
/// the standard library's distribution implementation.
inline std::int64_t uniform_int(std::mt19937_64& rng, std::int64_t lo, std::int64_t hi) {
  const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
  if (span == 0) return static_cast<std::int64_t>(rng());
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % span;
  std::uint64_t x = rng();
  while (x >= limit) x = rng();
  return lo + static_cast<std::int64_t>(x % span);
}

inline Network make_network(const ScenarioFile& s) {
  Network net;
  net.default_latency = s.default_latency;
  for (const auto& l : s.latencies) net.pair_latency[{l.from, l.to}] = l.latency;
  return net;
}

class Simulation {
 public:
  explicit Simulation(ScenarioFile scenario, Network net)
      : scenario_(std::move(scenario)), world_(scenario_, std::move(net)), rng_(scenario_.seed) {
    world_.run_id = config_digest(scenario_) + "-" + std::to_string(scenario_.seed);
    for (const auto& spec : scenario_.enterprises) {
      if (spec.role == Role::Customer) {
        customer_ = add(std::make_unique<CustomerAgent>(spec.id));
        continue;
      }
      auto ent = std::make_unique<Enterprise>();
      ent->spec = spec;
      for (const auto& c : spec.cells) ent->shop.cells[c] = Cell{c, {}};
      for (const auto& r : spec.routings) ent->shop.routings[r.product] = r;
      auto& e = *ent;
      enterprises_[spec.id] = std::move(ent);
      auto* planner = add(std::make_unique<PlannerAgent>(e, world_));
      planners_[spec.id] = planner;
      add(std::make_unique<DispoAgent>(e, *planner, world_));
      add(std::make_unique<AttAgent>(e, world_));
    }
    scc_ = add(std::make_unique<SccAgent>());
  }

  explicit Simulation(ScenarioFile scenario) : Simulation(scenario, make_network(scenario)) {}

  Simulation(const Simulation&) = delete;
  Simulation& operator=(const Simulation&) = delete;

  /// Runs every tick up to the horizon. Throws Error(Infeasible) when a
  /// disruption leaves committed work with no feasible schedule.
  void run() {
    for (Tick t = 0; t < scenario_.horizon; ++t) step(t);
    world_.now = scenario_.horizon;
  }

  const World& world() const noexcept { return world_; }
  World& world() noexcept { return world_; }
  const ScenarioFile& scenario() const noexcept { return scenario_; }
  const HistoryStore& history() const { return scc_->history(); }
  const Enterprise& enterprise(const EnterpriseId& id) const { return *enterprises_.at(id); }

  json report() const;
  std::string series_csv() const;
  void write_log(std::ostream& os) const { write_message_log(os, world_.mail.log()); }

  static constexpr int kMaxPasses = 10000;

 private:
  template <class A>
  A* add(std::unique_ptr<A> a) {
    A* raw = a.get();
    world_.mail.register_agent(a->id());
    agents_[a->id()] = std::move(a);
    return raw;
  }

  void step(Tick t) {
    world_.now = t;
    demand(t);
    deliver(t);
    production(t);
    disruptions(t);
    logistics(t);
  }

  void demand(Tick t) {
    const auto& d = scenario_.demand;
    if (d.interval <= 0 || t % d.interval != 0) return;
    Quantity q = d.level(t);
    if (d.noise > 0) q += uniform_int(rng_, -d.noise, d.noise);
    q = std::max<Quantity>(0, q);
    world_.add_series(world_.customer, q);
    if (q > 0) customer_->place(d.product, q, world_);
  }

  void deliver(Tick t) {
    for (int pass = 0; pass < kMaxPasses; ++pass) {
      bool any = false;
      for (auto& [id, agent] : agents_) {
        auto batch = world_.mail.poll(id, t);
        if (batch.empty()) continue;
        any = true;
        agent->receive(std::move(batch), world_);
      }
      if (any) continue;
      for (auto& [_, agent] : agents_) agent->settle(world_);
      bool more = false;
      for (const auto& [id, _] : agents_) more = more || world_.mail.has_deliverable(id, t);
      if (!more) return;
    }
    fail(ErrorCode::InvalidArgument, "message exchange did not settle at tick " + std::to_string(t));
  }

  void production(Tick t) {
    for (auto& [eid, ent] : enterprises_) {
      auto* planner = planners_.at(eid);
      const auto att = World::att_of(eid);
      for (auto& [jid, job] : ent->jobs) {
        if (job.finished) continue;
        const auto& sched = ent->shop.schedule;
        if (!sched.start.contains(jid)) {
          job.finished = true;  // dropped
          continue;
        }
        if (!job.started && sched.start.at(jid) <= t) {
          std::optional<Tick> missing;
          for (const auto& [_, sub] : job.subs) {
            if (ent->arrived.contains(sub)) continue;
            auto e = ent->expected_arrival.find(sub);
            const Tick at = e == ent->expected_arrival.end() ? DispoAgent::kUnknownArrival : e->second;
            missing = std::max(missing.value_or(t + 1), std::max(at + DispoAgent::kReceiving, t + 1));
          }
          if (missing) {
            planner->component_delay(world_, jid, std::min(*missing, DispoAgent::kUnknownArrival), t);
            continue;
          }
          job.started = true;
          for (const auto& m : job.members) {
            if (world_.order(m).order.status == OrderStatus::Contracted) world_.set_status(m, OrderStatus::InProduction);
            world_.send(World::planner_of(eid), att, ConversationId{}, Performative::Confirm,
                        body::MilestoneMsg{m, MilestoneKind::ProductionStarted, sched.start.at(jid)});
          }
        }
        if (!job.started) continue;
        for (const auto& b : sched.bookings) {
          if (b.job != jid || b.span.end > t || job.charged.contains(b.op_index)) continue;
          job.charged.insert(b.op_index);
          world_.production_cost[eid] += b.cost;
        }
        const Tick done = sched.completion.at(jid);
        if (done > t) continue;
        job.finished = true;
        for (const auto& m : job.members) {
          world_.send(World::planner_of(eid), att, ConversationId{}, Performative::Confirm,
                      body::MilestoneMsg{m, MilestoneKind::ProductionFinished, done});
          const auto& entry = world_.order(m);
          if (!entry.contract) continue;
          const auto& c = world_.contract(*entry.contract);
          if (c.state != ContractState::Active) continue;
          world_.shipments.push_back(Shipment{m, c.id, c.seller, c.buyer, entry.order.quantity, done, 0, {}, 0});
        }
      }
    }
  }

  void disruptions(Tick t) {
    for (const auto& d : scenario_.disruptions) {
      if (d.interval.start != t) continue;
      if (d.kind == DisruptionKind::CellDown) {
        for (auto& [eid, ent] : enterprises_) {
          if (!ent->shop.cells.contains(CellId(d.target))) continue;
          planners_.at(eid)->outage(world_, CellId(d.target), d.interval);
        }
        continue;
      }
      const OrderId order(d.target);
      auto it = world_.orders.find(order);
      if (it == world_.orders.end() || !it->second.contract) {
        world_.warnings.push_back("shipment delay for uncontracted order " + d.target + " ignored");
        continue;
      }
      if (it->second.delivered_at) {
        world_.warnings.push_back("shipment delay for delivered order " + d.target + " ignored");
        continue;
      }
      bool applied = false;
      for (auto& s : world_.shipments) {
        if (s.order != order || !s.shipped_at) continue;
        s.extra += d.extra;
        s.arrive_at += d.extra;
        applied = true;
      }
      if (!applied) world_.pending_delays[order] += d.extra;
      const auto& c = world_.contract(*it->second.contract);
      world_.send(World::logistics(), World::att_of(c.seller), ConversationId{}, Performative::Confirm,
                  body::ShipmentDelayMsg{order, d.extra});
    }
  }

  void logistics(Tick t) {
    std::vector<Shipment> keep;
    for (auto& s : world_.shipments) {
      const auto& c = world_.contract(s.contract);
      if (!s.shipped_at) {
        if (c.state == ContractState::Cancelled) continue;
        const auto p = world_.pending_delays.find(s.order);
        const Tick known = p == world_.pending_delays.end() ? 0 : p->second;
        if (t < std::max(s.ready_at, c.agreed_due - world_.transit() - known)) {
          keep.push_back(s);
          continue;
        }
        s.shipped_at = t;
        if (p != world_.pending_delays.end()) {
          s.extra += p->second;
          world_.pending_delays.erase(p);
        }
        s.arrive_at = t + world_.transit() + s.extra;
        world_.set_status(s.order, OrderStatus::Shipped);
        world_.send(World::logistics(), World::att_of(s.seller), ConversationId{}, Performative::Confirm,
                    body::MilestoneMsg{s.order, MilestoneKind::Shipped, t});
      }
      if (s.arrive_at > t) {
        keep.push_back(s);
        continue;
      }
      arrive(s, t);
    }
    world_.shipments = std::move(keep);
  }

  void arrive(const Shipment& s, Tick t) {
    auto& entry = world_.order(s.order);
    entry.delivered_at = t;
    world_.send(World::logistics(), World::att_of(s.seller), ConversationId{}, Performative::Confirm,
                body::MilestoneMsg{s.order, MilestoneKind::Delivered, t});
    if (world_.contract(s.contract).state != ContractState::Active) {
      world_.warnings.push_back("order " + s.order.str() + " arrived after its contract was cancelled");
      return;
    }
    const auto& c = world_.transition(s.contract, contract_event::Fulfill{});
    world_.set_status(s.order, OrderStatus::Delivered);
    world_.pay(c.buyer, c.seller, c.agreed_price, "price", c.id);
    world_.pay(c.seller, c.buyer, c.penalty_rate * std::max<Tick>(0, t - c.agreed_due), "penalty", c.id);
    if (world_.is_customer(c.buyer)) world_.customer_received += s.quantity;
    else enterprises_.at(c.buyer)->arrived.insert(s.order);
  }

  ScenarioFile scenario_;
  World world_;
  std::mt19937_64 rng_;
  std::map<EnterpriseId, std::unique_ptr<Enterprise>> enterprises_;
  std::map<EnterpriseId, PlannerAgent*> planners_;
  std::map<AgentId, std::unique_ptr<Agent>> agents_;
  CustomerAgent* customer_ = nullptr;
  SccAgent* scc_ = nullptr;
};

// ---------------------------------------------------------------------------
// Report

namespace detail {

inline json opt_tick(const std::optional<Tick>& t) { return t ? json(*t) : json(nullptr); }

/// Last order of the replacement chain starting at `head`.
inline const OrderEntry& chain_tail(const World& w, const OrderEntry& head) {
  const OrderEntry* e = &head;
  while (e->replaced_by) e = &w.orders.at(*e->replaced_by);
  return *e;
}

inline std::optional<Tick> contracted_due(const World& w, const OrderEntry& e) {
  if (!e.contract) return std::nullopt;
  return w.contracts.at(*e.contract).current.agreed_due;
}

}  // namespace detail

inline json Simulation::report() const {
  const auto& w = world_;
  json r = json::object();
  r["format"] = 1;
  r["digest"] = config_digest(scenario_);
  r["seed"] = scenario_.seed;
  r["horizon"] = scenario_.horizon;
  r["run"] = w.run_id;

  // orders
  json orders = json::array();
  for (const auto& [id, e] : w.orders) {
    const auto due = detail::contracted_due(w, e);
    json slip = nullptr;
    if (due && e.delivered_at) slip = *e.delivered_at - *due;
    orders.push_back(json{{"id", id},
                          {"buyer", e.order.customer},
                          {"seller", e.order.supplier},
                          {"product", e.order.product},
                          {"quantity", e.order.quantity},
                          {"from_customer", e.from_customer},
                          {"parent", e.order.parent ? json(*e.order.parent) : json(nullptr)},
                          {"status", e.order.status},
                          {"contract", e.contract ? json(*e.contract) : json(nullptr)},
                          {"contracted_due", detail::opt_tick(due)},
                          {"delivered_at", detail::opt_tick(e.delivered_at)},
                          {"slip", slip},
                          {"replaces", e.replaces ? json(*e.replaces) : json(nullptr)},
                          {"replaced_by", e.replaced_by ? json(*e.replaced_by) : json(nullptr)}});
  }
  r["orders"] = std::move(orders);

  // fill rate and lateness over customer demand chains
  std::size_t due_chains = 0;
  std::size_t filled = 0;
  Tick late_sum = 0;
  Tick late_max = 0;
  std::size_t delivered = 0;
  Quantity demanded = 0;
  Quantity units_delivered = 0;
  Quantity units_transit = 0;
  Quantity units_production = 0;
  Quantity units_failed = 0;
  for (const auto& [id, e] : w.orders) {
    if (!e.from_customer) continue;
    if (e.delivered_at) {
      const auto due = detail::contracted_due(w, e);
      const Tick late = due ? std::max<Tick>(0, *e.delivered_at - *due) : 0;
      if (e.order.status == OrderStatus::Delivered) {
        ++delivered;
        late_sum += late;
        late_max = std::max(late_max, late);
      }
    }
    if (e.replaces) continue;
    const auto& tail = detail::chain_tail(w, e);
    demanded += e.order.quantity;
    switch (tail.order.status) {
      case OrderStatus::Delivered: units_delivered += tail.order.quantity; break;
      case OrderStatus::Shipped: units_transit += tail.order.quantity; break;
      case OrderStatus::Failed: units_failed += tail.order.quantity; break;
      default: units_production += tail.order.quantity; break;
    }
    if (e.order.due >= scenario_.horizon) continue;
    ++due_chains;
    const auto due = detail::contracted_due(w, tail);
    if (tail.order.status == OrderStatus::Delivered && due && *tail.delivered_at <= *due) ++filled;
  }
  r["fill_rate"] = due_chains == 0 ? 1.0 : static_cast<double>(filled) / static_cast<double>(due_chains);
  r["fill"] = json{{"due", due_chains}, {"on_time", filled}};
  r["lateness"] = json{{"delivered", delivered},
                       {"mean", delivered == 0 ? 0.0 : static_cast<double>(late_sum) / static_cast<double>(delivered)},
                       {"max", late_max}};

  // profit
  std::map<EnterpriseId, json> ent;
  for (const auto& spec : scenario_.enterprises) {
    if (spec.role == Role::Customer) continue;
    ent[spec.id] = json{{"revenue", 0},       {"purchases", 0}, {"penalties_paid", 0}, {"penalties_received", 0},
                        {"production_cost", 0}, {"profit", 0}};
  }
  Money customer_paid = 0;
  Money external_penalties = 0;
  for (const auto& p : w.payments) {
    const bool price = p.kind == "price";
    if (ent.contains(p.to)) ent[p.to][price ? "revenue" : "penalties_received"] = ent[p.to][price ? "revenue" : "penalties_received"].get<Money>() + p.amount;
    if (ent.contains(p.from)) ent[p.from][price ? "purchases" : "penalties_paid"] = ent[p.from][price ? "purchases" : "penalties_paid"].get<Money>() + p.amount;
    if (price && w.is_customer(p.from)) customer_paid += p.amount;
    if (!price && w.is_customer(p.to)) external_penalties += p.amount;
  }
  Money total_production = 0;
  Money chain = 0;
  json per = json::object();
  for (auto& [id, j] : ent) {
    const Money cost = w.production_cost.contains(id) ? w.production_cost.at(id) : 0;
    total_production += cost;
    j["production_cost"] = cost;
    const Money profit = j["revenue"].get<Money>() - j["purchases"].get<Money>() - j["penalties_paid"].get<Money>() +
                         j["penalties_received"].get<Money>() - cost;
    j["profit"] = profit;
    chain += profit;
    per[id.str()] = j;
  }
  r["profit"] = json{{"chain", chain},
                     {"customer_revenue", customer_paid},
                     {"production_cost", total_production},
                     {"external_penalties", external_penalties},
                     {"enterprises", per}};

  // bullwhip
  json bw = json::object();
  std::vector<double> dem;
  for (auto q : w.series.at(w.customer)) dem.push_back(static_cast<double>(q));
  for (const auto& [id, s] : w.series) {
    if (w.is_customer(id)) continue;
    std::vector<double> up;
    for (auto q : s) up.push_back(static_cast<double>(q));
    try {
      bw[id.str()] = bullwhip_ratio(up, dem);
    } catch (const Error&) {
      bw[id.str()] = json{{"value", nullptr}, {"flag", "empty_window"}};
    }
  }
  r["bullwhip"] = std::move(bw);

  json contracts = json::array();
  for (const auto& [id, c] : w.contracts) contracts.push_back(json{{"contract", c.current}, {"history", c.history}});
  r["contracts"] = std::move(contracts);

  r["tracing"] = analyze(history());
  r["history"] = history().entries();

  json counts = json::object();
  for (const auto& m : w.mail.log()) {
    const auto k = to_string(m.performative);
    counts[k] = counts.value(k, 0) + 1;
  }
  r["messages"] = json{{"total", w.mail.log().size()}, {"by_performative", counts}};

  json endangerments = json::array();
  for (const auto& t : w.endangerments) endangerments.push_back(json{{"owner", t.owner}, {"event", t.event}});
  r["endangerments"] = std::move(endangerments);

  json negs = json::array();
  for (const auto& [conv, n] : w.negotiations) {
    negs.push_back(json{{"conversation", conv},
                        {"enterprise", n.enterprise},
                        {"order", n.order},
                        {"members", n.members},
                        {"procurement", n.procurement},
                        {"components", n.components},
                        {"phase", n.phase},
                        {"round", n.round},
                        {"exchanges", n.exchanges},
                        {"opened", n.opened},
                        {"closed", detail::opt_tick(n.closed)}});
  }
  r["negotiations"] = std::move(negs);

  json events = json::array();
  for (const auto& e : w.events) {
    events.push_back(json{{"after_message", e.after_message},
                          {"tick", e.tick},
                          {"enterprise", e.enterprise},
                          {"conversation", e.conversation},
                          {"kind", e.kind},
                          {"detail", e.detail}});
  }
  r["events"] = std::move(events);
  r["warnings"] = w.warnings;

  Quantity shipped_to_customer = 0;
  for (const auto& s : w.shipments)
    if (s.shipped_at && w.is_customer(s.buyer) && w.contract(s.contract).state == ContractState::Active)
      shipped_to_customer += s.quantity;
  r["conservation"] = json{{"demanded", demanded},         {"delivered", units_delivered},
                           {"in_transit", units_transit},  {"in_production", units_production},
                           {"failed", units_failed},       {"received", w.customer_received},
                           {"shipped_open", shipped_to_customer}};
  return r;
}

inline std::string Simulation::series_csv() const {
  std::ostringstream os;
  os << "tick,enterprise,quantity\n";
  for (Tick t = 0; t < scenario_.horizon; ++t) {
    for (const auto& [id, s] : world_.series) os << t << ',' << id.str() << ',' << s[static_cast<std::size_t>(t)] << '\n';
  }
  return os.str();
}

/// Report rendered with stable key order and a trailing newline.
inline std::string render(const json& report) { return report.dump(2) + "\n"; }

}  // namespace scm::sim
