#pragma once

// Shared domain vocabulary: identifiers, bills of materials, orders and
// contracts, plus BOM explosion and the contract state machine.

#include <algorithm>
#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "scm/error.hpp"

namespace scm {

using json = nlohmann::json;

/// Simulation time in whole ticks.
using Tick = std::int64_t;
/// Fixed-point currency in cents.
using Money = std::int64_t;
using Quantity = std::int64_t;

/// Opaque string identifier, distinct per tag so ids of different kinds
/// cannot be mixed up.
template <class Tag>
class Id {
 public:
  Id() = default;
  explicit Id(std::string value) : value_(std::move(value)) {}
  explicit Id(const char* value) : value_(value) {}

  const std::string& str() const noexcept { return value_; }
  bool empty() const noexcept { return value_.empty(); }

  friend auto operator<=>(const Id&, const Id&) = default;
  friend bool operator==(const Id&, const Id&) = default;

 private:
  std::string value_;
};

template <class Tag>
void to_json(json& j, const Id<Tag>& id) {
  j = id.str();
}

template <class Tag>
void from_json(const json& j, Id<Tag>& id) {
  id = Id<Tag>(j.get<std::string>());
}

using ProductId = Id<struct ProductTag>;
using EnterpriseId = Id<struct EnterpriseTag>;
using OrderId = Id<struct OrderTag>;
using ContractId = Id<struct ContractTag>;
using CellId = Id<struct CellTag>;
using OperationId = Id<struct OperationTag>;

/// Conversation ids are integers handed out in creation order.
struct ConversationId {
  std::uint64_t value = 0;
  friend auto operator<=>(const ConversationId&, const ConversationId&) = default;
};

inline void to_json(json& j, const ConversationId& c) { j = c.value; }
inline void from_json(const json& j, ConversationId& c) { c.value = j.get<std::uint64_t>(); }

// ---------------------------------------------------------------------------
// Bills of materials

struct BomEntry {
  ProductId component;
  Quantity quantity_per_unit = 1;
  friend bool operator==(const BomEntry&, const BomEntry&) = default;
};

inline void to_json(json& j, const BomEntry& e) {
  j = json{{"component", e.component}, {"quantity_per_unit", e.quantity_per_unit}};
}
inline void from_json(const json& j, BomEntry& e) {
  j.at("component").get_to(e.component);
  j.at("quantity_per_unit").get_to(e.quantity_per_unit);
}

/// Product -> direct components. A product with an empty list is a leaf.
class BomRegistry {
 public:
  BomRegistry() = default;

  /// Adds or replaces a product's BOM. Rejects non-positive quantities and
  /// duplicate components; acyclicity is checked by `find_cycle`.
  void add(const ProductId& product, std::vector<BomEntry> entries = {}) {
    for (std::size_t i = 0; i < entries.size(); ++i) {
      if (entries[i].quantity_per_unit < 1) {
        fail(ErrorCode::InvalidArgument,
             "quantity_per_unit must be >= 1 for " + entries[i].component.str() + " in " + product.str());
      }
      for (std::size_t k = 0; k < i; ++k) {
        if (entries[k].component == entries[i].component) {
          fail(ErrorCode::InvalidArgument,
               "component " + entries[i].component.str() + " listed twice in " + product.str());
        }
      }
    }
    bom_[product] = std::move(entries);
  }

  bool contains(const ProductId& product) const { return bom_.contains(product); }

  const std::vector<BomEntry>& components(const ProductId& product) const {
    auto it = bom_.find(product);
    if (it == bom_.end()) fail(ErrorCode::UnknownProduct, product.str());
    return it->second;
  }

  const std::map<ProductId, std::vector<BomEntry>>& entries() const noexcept { return bom_; }

  /// Returns one cycle (as a closed path) if the parent->component graph has
  /// one, otherwise an empty vector. Components missing from the registry are
  /// treated as leaves here.
  std::vector<ProductId> find_cycle() const {
    enum class Mark { White, Grey, Black };
    std::map<ProductId, Mark> mark;
    std::vector<ProductId> path;
    std::vector<ProductId> cycle;

    std::function<bool(const ProductId&)> visit = [&](const ProductId& p) {
      mark[p] = Mark::Grey;
      path.push_back(p);
      if (auto it = bom_.find(p); it != bom_.end()) {
        for (const auto& e : it->second) {
          auto m = mark.contains(e.component) ? mark[e.component] : Mark::White;
          if (m == Mark::Grey) {
            auto start = std::find(path.begin(), path.end(), e.component);
            cycle.assign(start, path.end());
            cycle.push_back(e.component);
            return true;
          }
          if (m == Mark::White && visit(e.component)) return true;
        }
      }
      path.pop_back();
      mark[p] = Mark::Black;
      return false;
    };

    for (const auto& [p, _] : bom_) {
      if (!mark.contains(p) && visit(p)) return cycle;
    }
    return {};
  }

 private:
  std::map<ProductId, std::vector<BomEntry>> bom_;
};

inline void to_json(json& j, const BomRegistry& r) {
  j = json::object();
  for (const auto& [p, entries] : r.entries()) j[p.str()] = entries;
}
inline void from_json(const json& j, BomRegistry& r) {
  r = BomRegistry{};
  for (const auto& [key, value] : j.items()) r.add(ProductId(key), value.get<std::vector<BomEntry>>());
}

struct ComponentDemand {
  ProductId product;
  Quantity quantity = 0;
  friend bool operator==(const ComponentDemand&, const ComponentDemand&) = default;
};

/// Full-depth component demand for `quantity` units of `product`, multiplied
/// down the tree and aggregated per component, sorted by product id.
/// Intermediate components appear alongside leaves; the root never does.
inline std::vector<ComponentDemand> explode_bom(const ProductId& product, Quantity quantity,
                                                const BomRegistry& registry) {
  if (!registry.contains(product)) fail(ErrorCode::UnknownProduct, product.str());
  if (quantity < 1) fail(ErrorCode::InvalidArgument, "explode_bom quantity must be >= 1");

  std::map<ProductId, Quantity> totals;
  std::vector<ProductId> stack;

  std::function<void(const ProductId&, Quantity)> descend = [&](const ProductId& p, Quantity q) {
    if (std::find(stack.begin(), stack.end(), p) != stack.end()) {
      fail(ErrorCode::CyclicBom, "cycle through " + p.str());
    }
    stack.push_back(p);
    if (registry.contains(p)) {
      for (const auto& e : registry.components(p)) {
        const Quantity need = q * e.quantity_per_unit;
        totals[e.component] += need;
        descend(e.component, need);
      }
    }
    stack.pop_back();
  };
  descend(product, quantity);

  std::vector<ComponentDemand> out;
  out.reserve(totals.size());
  for (const auto& [p, q] : totals) out.push_back({p, q});
  return out;
}

// ---------------------------------------------------------------------------
// Orders

enum class OrderStatus { Requested, Negotiating, Contracted, InProduction, Shipped, Delivered, Failed };

NLOHMANN_JSON_SERIALIZE_ENUM(OrderStatus, {
                                              {OrderStatus::Requested, "requested"},
                                              {OrderStatus::Negotiating, "negotiating"},
                                              {OrderStatus::Contracted, "contracted"},
                                              {OrderStatus::InProduction, "inproduction"},
                                              {OrderStatus::Shipped, "shipped"},
                                              {OrderStatus::Delivered, "delivered"},
                                              {OrderStatus::Failed, "failed"},
                                          })

struct Order {
  OrderId id;
  EnterpriseId customer;
  EnterpriseId supplier;
  ProductId product;
  Quantity quantity = 1;
  Tick due = 0;
  Money price = 0;
  std::optional<OrderId> parent;
  OrderStatus status = OrderStatus::Requested;
  Tick created = 0;

  friend bool operator==(const Order&, const Order&) = default;
};

inline void to_json(json& j, const Order& o) {
  j = json{{"id", o.id},           {"customer", o.customer}, {"supplier", o.supplier},
           {"product", o.product}, {"quantity", o.quantity}, {"due", o.due},
           {"price", o.price},     {"status", o.status},     {"created", o.created}};
  j["parent"] = o.parent ? json(*o.parent) : json(nullptr);
}
inline void from_json(const json& j, Order& o) {
  j.at("id").get_to(o.id);
  j.at("customer").get_to(o.customer);
  j.at("supplier").get_to(o.supplier);
  j.at("product").get_to(o.product);
  j.at("quantity").get_to(o.quantity);
  j.at("due").get_to(o.due);
  j.at("price").get_to(o.price);
  j.at("status").get_to(o.status);
  o.created = j.value("created", Tick{0});
  if (j.contains("parent") && !j["parent"].is_null()) {
    o.parent = j["parent"].get<OrderId>();
  } else {
    o.parent.reset();
  }
}

/// Checks the Order invariants; `parent` is the parent order when this is a
/// suborder.
inline void check_order(const Order& o, const Order* parent = nullptr) {
  if (o.quantity < 1) fail(ErrorCode::InvalidArgument, "order " + o.id.str() + ": quantity must be >= 1");
  if (o.due < o.created) fail(ErrorCode::InvalidArgument, "order " + o.id.str() + ": due precedes creation");
  if (parent != nullptr && parent->supplier == o.supplier) {
    fail(ErrorCode::InvalidArgument, "suborder " + o.id.str() + " has the same supplier as its parent");
  }
}

// ---------------------------------------------------------------------------
// Contracts

enum class ContractState { Draft, Active, Amended, Fulfilled, Cancelled };

NLOHMANN_JSON_SERIALIZE_ENUM(ContractState, {
                                                {ContractState::Draft, "draft"},
                                                {ContractState::Active, "active"},
                                                {ContractState::Amended, "amended"},
                                                {ContractState::Fulfilled, "fulfilled"},
                                                {ContractState::Cancelled, "cancelled"},
                                            })

constexpr std::string_view to_string(ContractState s) noexcept {
  switch (s) {
    case ContractState::Draft: return "Draft";
    case ContractState::Active: return "Active";
    case ContractState::Amended: return "Amended";
    case ContractState::Fulfilled: return "Fulfilled";
    case ContractState::Cancelled: return "Cancelled";
  }
  return "?";
}

struct Contract {
  ContractId id;
  OrderId order;
  EnterpriseId buyer;
  EnterpriseId seller;
  Tick agreed_due = 0;
  Money agreed_price = 0;
  Money penalty_rate = 0;
  int version = 1;
  ContractState state = ContractState::Draft;

  friend bool operator==(const Contract&, const Contract&) = default;
};

inline void to_json(json& j, const Contract& c) {
  j = json{{"id", c.id},
           {"order", c.order},
           {"buyer", c.buyer},
           {"seller", c.seller},
           {"agreed_due", c.agreed_due},
           {"agreed_price", c.agreed_price},
           {"penalty_rate", c.penalty_rate},
           {"version", c.version},
           {"state", c.state}};
}
inline void from_json(const json& j, Contract& c) {
  j.at("id").get_to(c.id);
  j.at("order").get_to(c.order);
  j.at("buyer").get_to(c.buyer);
  j.at("seller").get_to(c.seller);
  j.at("agreed_due").get_to(c.agreed_due);
  j.at("agreed_price").get_to(c.agreed_price);
  j.at("penalty_rate").get_to(c.penalty_rate);
  j.at("version").get_to(c.version);
  j.at("state").get_to(c.state);
}

/// 1% of the agreed price per tick late.
inline Money default_penalty_rate(Money agreed_price) { return agreed_price / 100; }

namespace contract_event {
struct Accept {
  friend bool operator==(const Accept&, const Accept&) = default;
};
struct Amend {
  Tick new_due = 0;
  Money new_price = 0;
  friend bool operator==(const Amend&, const Amend&) = default;
};
struct Fulfill {
  friend bool operator==(const Fulfill&, const Fulfill&) = default;
};
struct Cancel {
  friend bool operator==(const Cancel&, const Cancel&) = default;
};
}  // namespace contract_event

using ContractEvent =
    std::variant<contract_event::Accept, contract_event::Amend, contract_event::Fulfill, contract_event::Cancel>;

inline std::string event_name(const ContractEvent& e) {
  return std::visit(
      [](const auto& ev) -> std::string {
        using T = std::decay_t<decltype(ev)>;
        if constexpr (std::is_same_v<T, contract_event::Accept>) return "Accept";
        if constexpr (std::is_same_v<T, contract_event::Amend>) return "Amend";
        if constexpr (std::is_same_v<T, contract_event::Fulfill>) return "Fulfill";
        return "Cancel";
      },
      e);
}

inline void to_json(json& j, const ContractEvent& e) {
  j = json{{"event", event_name(e)}};
  if (const auto* a = std::get_if<contract_event::Amend>(&e)) {
    j["new_due"] = a->new_due;
    j["new_price"] = a->new_price;
  }
}
inline void from_json(const json& j, ContractEvent& e) {
  const auto name = j.at("event").get<std::string>();
  if (name == "Accept") e = contract_event::Accept{};
  else if (name == "Amend") e = contract_event::Amend{j.at("new_due").get<Tick>(), j.at("new_price").get<Money>()};
  else if (name == "Fulfill") e = contract_event::Fulfill{};
  else if (name == "Cancel") e = contract_event::Cancel{};
  else fail(ErrorCode::Parse, "unknown contract event " + name);
}

/// Applies one event to a contract value. Legal moves:
/// Draft -Accept-> Active; Active -Amend-> (Amended ->) Active with version+1;
/// Active -Fulfill-> Fulfilled; Active -Cancel-> Cancelled.
/// Anything else raises IllegalTransition.
inline Contract contract_transition(Contract contract, const ContractEvent& event) {
  auto illegal = [&]() {
    fail(ErrorCode::IllegalTransition,
         "contract " + contract.id.str() + ": " + std::string(to_string(contract.state)) + " + " + event_name(event));
  };
  std::visit(
      [&](const auto& ev) {
        using T = std::decay_t<decltype(ev)>;
        if constexpr (std::is_same_v<T, contract_event::Accept>) {
          if (contract.state != ContractState::Draft) illegal();
          contract.state = ContractState::Active;
        } else if constexpr (std::is_same_v<T, contract_event::Amend>) {
          if (contract.state != ContractState::Active) illegal();
          if (ev.new_price < 0) fail(ErrorCode::InvalidArgument, "amended price must be >= 0");
          contract.state = ContractState::Amended;
          contract.agreed_due = ev.new_due;
          contract.agreed_price = ev.new_price;
          contract.version += 1;
          contract.state = ContractState::Active;
        } else if constexpr (std::is_same_v<T, contract_event::Fulfill>) {
          if (contract.state != ContractState::Active) illegal();
          contract.state = ContractState::Fulfilled;
        } else {
          if (contract.state != ContractState::Active) illegal();
          contract.state = ContractState::Cancelled;
        }
      },
      event);
  return contract;
}

/// Replays an event log starting from a Draft contract.
inline Contract replay_contract(Contract draft, const std::vector<ContractEvent>& log) {
  for (const auto& e : log) draft = contract_transition(std::move(draft), e);
  return draft;
}

// ---------------------------------------------------------------------------
// Partial orders (operation-level work units assigned to a cell)

struct PartialOrder {
  OrderId parent;
  OperationId operation;
  CellId cell;
  Quantity quantity = 1;
  Tick due = 0;
  friend bool operator==(const PartialOrder&, const PartialOrder&) = default;
};

inline void to_json(json& j, const PartialOrder& p) {
  j = json{{"parent", p.parent}, {"operation", p.operation}, {"cell", p.cell}, {"quantity", p.quantity}, {"due", p.due}};
}
inline void from_json(const json& j, PartialOrder& p) {
  j.at("parent").get_to(p.parent);
  j.at("operation").get_to(p.operation);
  j.at("cell").get_to(p.cell);
  j.at("quantity").get_to(p.quantity);
  j.at("due").get_to(p.due);
}

inline void check_partial_order(const PartialOrder& p, const Order& parent) {
  if (p.quantity < 1 || p.quantity > parent.quantity) {
    fail(ErrorCode::InvalidArgument, "partial order quantity out of range for " + parent.id.str());
  }
  if (p.due > parent.due) fail(ErrorCode::InvalidArgument, "partial order due after parent due " + parent.id.str());
}

}  // namespace scm

template <class Tag>
struct std::hash<scm::Id<Tag>> {
  std::size_t operator()(const scm::Id<Tag>& id) const noexcept { return std::hash<std::string>{}(id.str()); }
};
