#pragma once

// Shared simulation state: the post office, the order and contract ledgers,
// logistics shipments, payments and per-enterprise order series. Agents
// own their decisions; this is the notary and bookkeeping they write to.

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "scm/core_model.hpp"
#include "scm/negotiation.hpp"
#include "scm/planner.hpp"
#include "scm/protocol.hpp"
#include "scm/scenario.hpp"
#include "scm/tracking.hpp"

namespace scm::sim {

struct OrderEntry {
  Order order;
  /// Placed by the end customer.
  bool from_customer = false;
  std::optional<ContractId> contract;
  std::optional<OrderId> replaces;
  std::optional<OrderId> replaced_by;
  std::optional<Tick> delivered_at;
};

struct ContractEntry {
  Contract current;
  /// One row per state change: tick, event, version, state, due, price.
  std::vector<json> history;
};

struct Payment {
  Tick tick = 0;
  EnterpriseId from;
  EnterpriseId to;
  Money amount = 0;
  /// "price" or "penalty".
  std::string kind;
  ContractId contract;
};

struct Shipment {
  OrderId order;
  ContractId contract;
  EnterpriseId seller;
  EnterpriseId buyer;
  Quantity quantity = 0;
  Tick ready_at = 0;
  Tick extra = 0;
  std::optional<Tick> shipped_at;
  Tick arrive_at = 0;
};

struct NegotiationSummary {
  ConversationId conversation;
  EnterpriseId enterprise;
  OrderId order;
  std::vector<OrderId> members;
  bool procurement = false;
  std::size_t components = 0;
  NegotiationPhase phase = NegotiationPhase::QuotingOwn;
  int round = 1;
  int exchanges = 0;
  Tick opened = 0;
  std::optional<Tick> closed;
};

/// Internal protocol steps that produce no message of their own.
struct ProtocolEvent {
  /// Number of messages sent before the event.
  std::size_t after_message = 0;
  Tick tick = 0;
  EnterpriseId enterprise;
  ConversationId conversation;
  std::string kind;
  json detail;
};

struct Tracked {
  EnterpriseId owner;
  EndangermentEvent event;
};

class World {
 public:
  World(const ScenarioFile& scenario, Network net)
      : mail(std::move(net)), scenario_(scenario), bom_(scenario.bom()) {
    const auto h = static_cast<std::size_t>(std::max<Tick>(0, scenario.horizon));
    for (const auto& e : scenario.enterprises) {
      series[e.id] = std::vector<Quantity>(h, 0);
      if (e.role == Role::Customer) customer = e.id;
    }
  }

  const ScenarioFile& scenario() const noexcept { return scenario_; }
  const SimParams& params() const noexcept { return scenario_.params; }
  const BomRegistry& bom() const noexcept { return bom_; }

  Mail mail;
  Tick now = 0;
  EnterpriseId customer;
  std::string run_id;

  std::map<OrderId, OrderEntry> orders;
  std::map<ContractId, ContractEntry> contracts;
  std::map<ConversationId, NegotiationSummary> negotiations;
  std::vector<ProtocolEvent> events;
  std::vector<Shipment> shipments;
  std::map<OrderId, Tick> pending_delays;
  std::vector<Payment> payments;
  std::map<EnterpriseId, Money> production_cost;
  std::map<EnterpriseId, std::vector<Quantity>> series;
  std::vector<Tracked> endangerments;
  std::vector<std::string> warnings;
  /// Units received by the end customer on fulfilled contracts.
  Quantity customer_received = 0;
  std::size_t customer_notices = 0;

  // -- ids and addressing ---------------------------------------------------

  OrderId new_order_id() { return OrderId("O" + std::to_string(next_order_++)); }
  OrderId new_lot_id() { return OrderId("L" + std::to_string(next_lot_++)); }
  ContractId new_contract_id() { return ContractId("C" + std::to_string(next_contract_++)); }

  bool is_customer(const EnterpriseId& e) const { return e == customer; }
  static AgentId dispo_of(const EnterpriseId& e) { return AgentId(e.str() + "/dispo"); }
  static AgentId planner_of(const EnterpriseId& e) { return AgentId(e.str() + "/planner"); }
  static AgentId att_of(const EnterpriseId& e) { return AgentId(e.str() + "/att"); }
  static AgentId scc() { return AgentId("scc"); }
  static AgentId logistics() { return AgentId("logistics"); }
  /// Who negotiates on behalf of `e`.
  AgentId trader(const EnterpriseId& e) const { return is_customer(e) ? AgentId(e.str()) : dispo_of(e); }
  /// Who receives tracking notices for `e`.
  AgentId tracker(const EnterpriseId& e) const { return is_customer(e) ? AgentId(e.str()) : att_of(e); }

  Tick transit() const { return params().transit_time; }
  Money penalty_rate(Money price) const { return params().penalty_rate.value_or(default_penalty_rate(price)); }

  void send(const AgentId& from, const AgentId& to, ConversationId conv, Performative p, Payload body) {
    Message m;
    m.from = from;
    m.to = to;
    m.conversation = conv;
    m.performative = p;
    m.payload = std::move(body);
    mail.send(std::move(m), now);
  }

  void event(const EnterpriseId& e, ConversationId conv, std::string kind, json detail = json::object()) {
    events.push_back({mail.log().size(), now, e, conv, std::move(kind), std::move(detail)});
  }

  // -- orders ---------------------------------------------------------------

  OrderEntry& add_order(Order o, bool from_customer = false) {
    check_order(o, o.parent && orders.contains(*o.parent) ? &orders.at(*o.parent).order : nullptr);
    const auto id = o.id;
    auto [it, fresh] = orders.emplace(id, OrderEntry{std::move(o), from_customer, {}, {}, {}, {}});
    if (!fresh) fail(ErrorCode::InvalidArgument, "duplicate order " + id.str());
    return it->second;
  }

  OrderEntry& order(const OrderId& id) {
    auto it = orders.find(id);
    if (it == orders.end()) fail(ErrorCode::UnknownTarget, "order " + id.str());
    return it->second;
  }

  void set_status(const OrderId& id, OrderStatus s) {
    auto it = orders.find(id);
    if (it != orders.end()) it->second.order.status = s;
  }

  // -- contracts ------------------------------------------------------------

  const Contract& open_contract(Contract draft) {
    const auto id = draft.id;
    auto& e = contracts[id];
    e.current = std::move(draft);
    log_contract(e, "draft");
    return e.current;
  }

  const Contract& contract(const ContractId& id) const {
    auto it = contracts.find(id);
    if (it == contracts.end()) fail(ErrorCode::UnknownTarget, "contract " + id.str());
    return it->second.current;
  }

  const Contract& transition(const ContractId& id, const ContractEvent& ev) {
    auto it = contracts.find(id);
    if (it == contracts.end()) fail(ErrorCode::UnknownTarget, "contract " + id.str());
    it->second.current = contract_transition(it->second.current, ev);
    log_contract(it->second, event_name(ev));
    if (it->second.current.state == ContractState::Active) {
      auto& o = order(it->second.current.order);
      o.contract = id;
    }
    return it->second.current;
  }

  // -- bookkeeping ----------------------------------------------------------

  void add_series(const EnterpriseId& e, Quantity q) {
    auto& s = series[e];
    if (now >= 0 && static_cast<std::size_t>(now) < s.size()) s[static_cast<std::size_t>(now)] += q;
  }

  void pay(const EnterpriseId& from, const EnterpriseId& to, Money amount, std::string kind, const ContractId& c) {
    if (amount == 0) return;
    payments.push_back({now, from, to, amount, std::move(kind), c});
  }

 private:
  void log_contract(ContractEntry& e, const std::string& ev) {
    const auto& c = e.current;
    e.history.push_back(json{{"tick", now},
                             {"event", ev},
                             {"version", c.version},
                             {"state", c.state},
                             {"agreed_due", c.agreed_due},
                             {"agreed_price", c.agreed_price}});
  }

  const ScenarioFile& scenario_;
  BomRegistry bom_;
  std::uint64_t next_order_ = 1;
  std::uint64_t next_lot_ = 1;
  std::uint64_t next_contract_ = 1;
};

}  // namespace scm::sim
