#pragma once

// Inter-enterprise negotiation: supply vectors, candidate scenarios, their
// enumeration and profit-based selection, and the terms used when a contract
// is renegotiated. The message-driven protocol that uses these lives in
// agents.hpp.

#include <algorithm>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "scm/core_model.hpp"
#include "scm/planner.hpp"

namespace scm {

/// A supplier's reply: what it would charge, when it would finish, and how
/// loaded it is.
struct SupplyVector {
  EnterpriseId supplier;
  ProductId product;
  Quantity quantity = 0;
  Money cost = 0;
  Tick completion = 0;
  double load = 0.0;
  Tick quoted_at = 0;
  friend bool operator==(const SupplyVector&, const SupplyVector&) = default;
};

inline void to_json(json& j, const SupplyVector& s) {
  j = json{{"supplier", s.supplier}, {"product", s.product},     {"quantity", s.quantity}, {"cost", s.cost},
           {"completion", s.completion}, {"load", s.load}, {"quoted_at", s.quoted_at}};
}
inline void from_json(const json& j, SupplyVector& s) {
  j.at("supplier").get_to(s.supplier);
  j.at("product").get_to(s.product);
  j.at("quantity").get_to(s.quantity);
  j.at("cost").get_to(s.cost);
  j.at("completion").get_to(s.completion);
  j.at("load").get_to(s.load);
  j.at("quoted_at").get_to(s.quoted_at);
}

struct OwnProduction {
  Tick start = 0;
  Tick completion = 0;
  Money cost = 0;
  friend bool operator==(const OwnProduction&, const OwnProduction&) = default;
};

inline void to_json(json& j, const OwnProduction& o) {
  j = json{{"start", o.start}, {"completion", o.completion}, {"cost", o.cost}};
}
inline void from_json(const json& j, OwnProduction& o) {
  j.at("start").get_to(o.start);
  j.at("completion").get_to(o.completion);
  j.at("cost").get_to(o.cost);
}

struct Scenario {
  OrderId order;
  std::map<ProductId, SupplyVector> component_sources;
  OwnProduction own_production;
  Money total_cost = 0;
  Tick delivery = 0;

  /// Supplier ids in component order; the lexicographic tie-break key.
  std::vector<std::string> identity() const {
    std::vector<std::string> ids;
    for (const auto& [_, sv] : component_sources) ids.push_back(sv.supplier.str());
    return ids;
  }
  friend bool operator==(const Scenario&, const Scenario&) = default;
};

inline void to_json(json& j, const Scenario& s) {
  json sources = json::object();
  for (const auto& [p, sv] : s.component_sources) sources[p.str()] = sv;
  j = json{{"order", s.order},
           {"component_sources", sources},
           {"own_production", s.own_production},
           {"total_cost", s.total_cost},
           {"delivery", s.delivery}};
}

enum class NegotiationPhase { QuotingOwn, QuotingComponents, Selecting, Awarding, Closed, Failed };

NLOHMANN_JSON_SERIALIZE_ENUM(NegotiationPhase, {
                                                   {NegotiationPhase::QuotingOwn, "quoting_own"},
                                                   {NegotiationPhase::QuotingComponents, "quoting_components"},
                                                   {NegotiationPhase::Selecting, "selecting"},
                                                   {NegotiationPhase::Awarding, "awarding"},
                                                   {NegotiationPhase::Closed, "closed"},
                                                   {NegotiationPhase::Failed, "failed"},
                                               })

inline bool is_terminal(NegotiationPhase p) { return p == NegotiationPhase::Closed || p == NegotiationPhase::Failed; }

/// Per-conversation negotiation bookkeeping.
struct NegotiationState {
  ConversationId conversation;
  NegotiationPhase phase = NegotiationPhase::QuotingOwn;
  std::optional<QuoteResult> own_quote;
  std::map<ProductId, std::vector<SupplyVector>> vectors;
  int round = 1;
  Tick deadline = 0;
  /// Request waves sent so far (own quote, supply-vector rounds, award rounds,
  /// offers to the buyer); bounded by the liveness property.
  int exchanges = 0;

  /// Moves forward only; terminal phases are sticky.
  void advance(NegotiationPhase next) {
    if (is_terminal(phase)) return;
    if (next == NegotiationPhase::QuotingComponents && phase == NegotiationPhase::Awarding) {
      // a re-quote round after a rejected award goes back to sourcing
      phase = next;
      return;
    }
    if (static_cast<int>(next) < static_cast<int>(phase)) {
      fail(ErrorCode::IllegalTransition, "negotiation phase cannot move backwards");
    }
    phase = next;
  }
};

/// Opens the negotiation for a freshly requested order: the order moves to
/// Negotiating and the state starts in QuotingOwn with a TTL deadline.
inline NegotiationState initiate(Order& order, ConversationId conversation, Tick now, Tick ttl) {
  if (order.status != OrderStatus::Requested) fail(ErrorCode::AlreadyNegotiating, "order " + order.id.str());
  order.status = OrderStatus::Negotiating;
  NegotiationState st;
  st.conversation = conversation;
  st.deadline = now + ttl;
  return st;
}

// ---------------------------------------------------------------------------
// Scenario enumeration and selection

struct ScenarioInputs {
  /// The order (or lot aggregate) being negotiated.
  Order order;
  Tick now = 0;
  /// Own production timing for a given earliest start.
  std::function<QuoteResult(Tick earliest_start)> own_timing;
  /// Components that must be sourced from suppliers.
  std::vector<ComponentDemand> components;
  /// Offers per component.
  std::map<ProductId, std::vector<SupplyVector>> offers;
  /// Transit from a supplier to us.
  std::function<Tick(const EnterpriseId&)> transit_in = [](const EnterpriseId&) { return Tick{0}; };
  /// Transit from us to the buyer.
  Tick transit_out = 0;
  std::size_t cap = 100;
};

namespace detail {
inline bool cheaper(const Scenario& a, const Scenario& b) {
  if (a.total_cost != b.total_cost) return a.total_cost < b.total_cost;
  return a.identity() < b.identity();
}
}  // namespace detail

/// Cartesian product of supplier choices, each completed with own production
/// after the latest component arrival. Late scenarios (delivery > due) are
/// dropped; at most `cap` of the cheapest survive, sorted by (total_cost,
/// supplier ids).
inline std::vector<Scenario> enumerate_scenarios(const ScenarioInputs& in) {
  std::vector<ProductId> parts;
  for (const auto& c : in.components) {
    auto it = in.offers.find(c.product);
    if (it == in.offers.end() || it->second.empty()) return {};
    parts.push_back(c.product);
  }

  std::map<Tick, QuoteResult> timing_cache;
  auto own_at = [&](Tick earliest) {
    auto it = timing_cache.find(earliest);
    if (it == timing_cache.end()) it = timing_cache.emplace(earliest, in.own_timing(earliest)).first;
    return it->second;
  };

  std::vector<Scenario> out;
  std::vector<std::size_t> pick(parts.size(), 0);
  while (true) {
    Scenario s;
    s.order = in.order.id;
    Tick ready = in.now;
    Money cost = 0;
    for (std::size_t i = 0; i < parts.size(); ++i) {
      const auto& sv = in.offers.at(parts[i])[pick[i]];
      s.component_sources[parts[i]] = sv;
      ready = std::max(ready, sv.completion + in.transit_in(sv.supplier));
      cost += sv.cost;
    }
    const auto own = own_at(ready);
    s.own_production = {own.start, own.completion, own.cost};
    s.total_cost = cost + own.cost;
    s.delivery = own.completion + in.transit_out;
    if (s.delivery <= in.order.due) out.push_back(std::move(s));

    std::size_t i = 0;
    for (; i < parts.size(); ++i) {
      if (++pick[i] < in.offers.at(parts[i]).size()) break;
      pick[i] = 0;
    }
    if (i == parts.size()) break;
  }

  std::sort(out.begin(), out.end(), detail::cheaper);
  if (out.size() > in.cap) out.resize(in.cap);
  return out;
}

/// Profit of fulfilling `order` through `s`, charging `penalty_rate` per tick
/// of lateness against the order's due.
inline Money scenario_profit(const Scenario& s, const Order& order, Money penalty_rate) {
  return order.price - s.total_cost - penalty_rate * std::max<Tick>(0, s.delivery - order.due);
}

/// The most profitable scenario; among equal profits the latest own
/// production start wins, then the lexicographically smallest supplier ids.
inline Scenario select_best(const std::vector<Scenario>& scenarios, const Order& order, Money penalty_rate) {
  if (scenarios.empty()) fail(ErrorCode::NoFeasibleScenario, "order " + order.id.str());
  const Scenario* best = &scenarios.front();
  Money best_profit = scenario_profit(*best, order, penalty_rate);
  for (const auto& s : scenarios) {
    const Money p = scenario_profit(s, order, penalty_rate);
    bool better = p > best_profit;
    if (p == best_profit) {
      if (s.own_production.start != best->own_production.start) {
        better = s.own_production.start > best->own_production.start;
      } else {
        better = s.identity() < best->identity();
      }
    }
    if (better) {
      best = &s;
      best_profit = p;
    }
  }
  return *best;
}

// ---------------------------------------------------------------------------
// Renegotiation terms

struct AmendTerms {
  Tick new_due = 0;
  Money new_price = 0;
};

/// Seller's proposal after a major slip: move the due date to the projected
/// delivery and knock the lateness penalty off the price (never below zero).
inline AmendTerms amendment_terms(const Contract& c, Tick projected_delivery) {
  if (c.state != ContractState::Active) {
    fail(ErrorCode::IllegalTransition, "renegotiation on " + std::string(to_string(c.state)) + " contract " + c.id.str());
  }
  const Tick slip = std::max<Tick>(0, projected_delivery - c.agreed_due);
  return {projected_delivery, std::max<Money>(0, c.agreed_price - c.penalty_rate * slip)};
}

/// The buyer accepts an amendment iff the new due date still fits within its
/// own latest acceptable arrival.
inline bool buyer_accepts(const AmendTerms& terms, Tick latest_acceptable) { return terms.new_due <= latest_acceptable; }

}  // namespace scm
