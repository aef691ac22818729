#pragma once

// Scenario files: parsing, validation and the canonical form used for the
// report digest.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "scm/core_model.hpp"
#include "scm/planner.hpp"

namespace scm {

enum class Role { Customer, Manufacturer, Supplier };

NLOHMANN_JSON_SERIALIZE_ENUM(Role, {
                                       {Role::Customer, "customer"},
                                       {Role::Manufacturer, "manufacturer"},
                                       {Role::Supplier, "supplier"},
                                   })

struct EnterpriseSpec {
  EnterpriseId id;
  Role role = Role::Manufacturer;
  PlannerPolicy policy;
  std::vector<CellId> cells;
  std::vector<Routing> routings;
};

struct ProductSpec {
  ProductId id;
  std::vector<BomEntry> bom;
};

/// `supplier` makes `product` for `buyer`.
struct SupplyLink {
  EnterpriseId supplier;
  ProductId product;
  EnterpriseId buyer;
  friend bool operator==(const SupplyLink&, const SupplyLink&) = default;
};

enum class DemandKind { Constant, Seasonal, Spike };

NLOHMANN_JSON_SERIALIZE_ENUM(DemandKind, {
                                             {DemandKind::Constant, "constant"},
                                             {DemandKind::Seasonal, "seasonal"},
                                             {DemandKind::Spike, "spike"},
                                         })

struct DemandSpec {
  ProductId product;
  DemandKind kind = DemandKind::Constant;
  /// Constant level, or the base of the seasonal and spike models.
  Quantity base = 1;
  double amplitude = 0.0;
  Tick period = 1;
  Quantity spike_size = 0;
  std::vector<Tick> spike_times;
  /// Ticks between demand orders.
  Tick interval = 1;
  /// Uniform integer noise in [-noise, +noise] added to every draw.
  Quantity noise = 0;
  /// Customer due date = order tick + lead_time.
  Tick lead_time = 30;
  Money unit_price = 10000;

  /// Deterministic part of the demand at tick t (before noise).
  Quantity level(Tick t) const {
    switch (kind) {
      case DemandKind::Constant: return base;
      case DemandKind::Seasonal: {
        constexpr double kTwoPi = 6.283185307179586;
        const double v = static_cast<double>(base) +
                         amplitude * std::sin(kTwoPi * static_cast<double>(t) / static_cast<double>(period));
        return static_cast<Quantity>(std::llround(v));
      }
      case DemandKind::Spike: {
        for (Tick s : spike_times)
          if (s == t) return base + spike_size;
        return base;
      }
    }
    return base;
  }
};

enum class DisruptionKind { CellDown, ShipmentDelay };

NLOHMANN_JSON_SERIALIZE_ENUM(DisruptionKind, {
                                                 {DisruptionKind::CellDown, "cell_down"},
                                                 {DisruptionKind::ShipmentDelay, "shipment_delay"},
                                             })

struct DisruptionSpec {
  DisruptionKind kind = DisruptionKind::CellDown;
  /// Cell id for CellDown, order id for ShipmentDelay.
  std::string target;
  /// CellDown: the outage (open end = permanent). ShipmentDelay: start is
  /// the injection tick.
  Interval interval;
  Tick extra = 0;
};

struct SimParams {
  int theta_pct = 10;
  std::size_t k = 100;
  Tick ttl = 20;
  int max_rounds = 3;
  /// Penalty per tick of lateness; unset means 1% of the contract price.
  std::optional<Money> penalty_rate;
  Tick transit_time = 2;
  /// End customer's tolerance for an amended due date.
  Tick customer_slack = 5;
  /// Seller markup on its total cost, in percent.
  int markup_pct = 10;
  friend bool operator==(const SimParams&, const SimParams&) = default;
};

struct LatencySpec {
  std::string from;
  std::string to;
  Tick latency = 0;
};

struct ScenarioFile {
  std::vector<EnterpriseSpec> enterprises;
  std::vector<ProductSpec> products;
  std::vector<SupplyLink> suppliers;
  DemandSpec demand;
  std::vector<DisruptionSpec> disruptions;
  SimParams params;
  Tick horizon = 100;
  std::uint64_t seed = 1;
  Tick default_latency = 0;
  std::vector<LatencySpec> latencies;

  const EnterpriseSpec* enterprise(const EnterpriseId& id) const {
    for (const auto& e : enterprises)
      if (e.id == id) return &e;
    return nullptr;
  }
  const EnterpriseSpec* customer() const {
    for (const auto& e : enterprises)
      if (e.role == Role::Customer) return &e;
    return nullptr;
  }
  BomRegistry bom() const {
    BomRegistry r;
    for (const auto& p : products) r.add(p.id, p.bom);
    return r;
  }
  std::vector<EnterpriseId> suppliers_of(const ProductId& product, const EnterpriseId& buyer) const {
    std::vector<EnterpriseId> out;
    for (const auto& l : suppliers)
      if (l.product == product && l.buyer == buyer) out.push_back(l.supplier);
    std::sort(out.begin(), out.end());
    return out;
  }
};

// ---------------------------------------------------------------------------
// JSON

inline void to_json(json& j, const EnterpriseSpec& e) {
  json cells = json::array();
  for (const auto& c : e.cells) cells.push_back(json{{"id", c}});
  j = json{{"id", e.id}, {"role", e.role}};
  if (e.role != Role::Customer) {
    j["policy"] = e.policy;
    j["cells"] = cells;
    j["routings"] = e.routings;
  }
}

inline void from_json(const json& j, EnterpriseSpec& e) {
  j.at("id").get_to(e.id);
  j.at("role").get_to(e.role);
  if (!j.at("role").is_string() || (j["role"] != "customer" && j["role"] != "manufacturer" && j["role"] != "supplier")) {
    fail(ErrorCode::Validation, "enterprise " + e.id.str() + " has unknown role " + j["role"].dump());
  }
  e.policy = j.contains("policy") ? j["policy"].get<PlannerPolicy>() : PlannerPolicy::discrete();
  e.cells.clear();
  for (const auto& c : j.value("cells", json::array())) e.cells.push_back(c.is_string() ? c.get<CellId>() : c.at("id").get<CellId>());
  e.routings = j.value("routings", json::array()).get<std::vector<Routing>>();
}

inline void to_json(json& j, const ProductSpec& p) { j = json{{"id", p.id}, {"bom", p.bom}}; }
inline void from_json(const json& j, ProductSpec& p) {
  j.at("id").get_to(p.id);
  p.bom = j.value("bom", json::array()).get<std::vector<BomEntry>>();
}

inline void to_json(json& j, const SupplyLink& l) {
  j = json{{"supplier", l.supplier}, {"product", l.product}, {"buyer", l.buyer}};
}
inline void from_json(const json& j, SupplyLink& l) {
  j.at("supplier").get_to(l.supplier);
  j.at("product").get_to(l.product);
  j.at("buyer").get_to(l.buyer);
}

inline void to_json(json& j, const DemandSpec& d) {
  json model{{"kind", d.kind}};
  switch (d.kind) {
    case DemandKind::Constant: model["level"] = d.base; break;
    case DemandKind::Seasonal:
      model["base"] = d.base;
      model["amplitude"] = d.amplitude;
      model["period"] = d.period;
      break;
    case DemandKind::Spike:
      model["base"] = d.base;
      model["spike_size"] = d.spike_size;
      model["spike_times"] = d.spike_times;
      break;
  }
  j = json{{"product", d.product},   {"model", model},           {"interval", d.interval},
           {"noise", d.noise},       {"lead_time", d.lead_time}, {"unit_price", d.unit_price}};
}

inline void from_json(const json& j, DemandSpec& d) {
  j.at("product").get_to(d.product);
  const auto& m = j.at("model");
  const auto kind = m.at("kind").get<std::string>();
  if (kind == "constant") {
    d.kind = DemandKind::Constant;
    m.at("level").get_to(d.base);
  } else if (kind == "seasonal") {
    d.kind = DemandKind::Seasonal;
    m.at("base").get_to(d.base);
    m.at("amplitude").get_to(d.amplitude);
    m.at("period").get_to(d.period);
  } else if (kind == "spike") {
    d.kind = DemandKind::Spike;
    m.at("base").get_to(d.base);
    m.at("spike_size").get_to(d.spike_size);
    d.spike_times = m.value("spike_times", std::vector<Tick>{});
  } else {
    fail(ErrorCode::Validation, "unknown demand model " + kind);
  }
  d.interval = j.value("interval", Tick{1});
  d.noise = j.value("noise", Quantity{0});
  d.lead_time = j.value("lead_time", Tick{30});
  d.unit_price = j.value("unit_price", Money{10000});
}

inline void to_json(json& j, const DisruptionSpec& d) {
  if (d.kind == DisruptionKind::CellDown) {
    j = json{{"kind", d.kind}, {"cell", d.target}, {"start", d.interval.start}};
    j["end"] = d.interval.end >= kForever ? json(nullptr) : json(d.interval.end);
  } else {
    j = json{{"kind", d.kind}, {"order", d.target}, {"at", d.interval.start}, {"extra", d.extra}};
  }
}

inline void from_json(const json& j, DisruptionSpec& d) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "cell_down") {
    d.kind = DisruptionKind::CellDown;
    j.at("cell").get_to(d.target);
    d.interval.start = j.at("start").get<Tick>();
    d.interval.end = (!j.contains("end") || j["end"].is_null()) ? kForever : j["end"].get<Tick>();
  } else if (kind == "shipment_delay") {
    d.kind = DisruptionKind::ShipmentDelay;
    j.at("order").get_to(d.target);
    d.interval.start = j.at("at").get<Tick>();
    d.interval.end = d.interval.start + 1;
    j.at("extra").get_to(d.extra);
  } else {
    fail(ErrorCode::Validation, "unknown disruption kind " + kind);
  }
}

inline void to_json(json& j, const SimParams& p) {
  j = json{{"theta_pct", p.theta_pct},         {"k", p.k},
           {"ttl", p.ttl},                     {"max_rounds", p.max_rounds},
           {"transit_time", p.transit_time},   {"customer_slack", p.customer_slack},
           {"markup_pct", p.markup_pct}};
  j["penalty_rate"] = p.penalty_rate ? json(*p.penalty_rate) : json(nullptr);
}

inline void from_json(const json& j, SimParams& p) {
  const SimParams d;
  p.theta_pct = j.value("theta_pct", d.theta_pct);
  p.k = j.value("k", d.k);
  p.ttl = j.value("ttl", d.ttl);
  p.max_rounds = j.value("max_rounds", d.max_rounds);
  p.transit_time = j.value("transit_time", d.transit_time);
  p.customer_slack = j.value("customer_slack", d.customer_slack);
  p.markup_pct = j.value("markup_pct", d.markup_pct);
  if (j.contains("penalty_rate") && !j["penalty_rate"].is_null()) p.penalty_rate = j["penalty_rate"].get<Money>();
  else p.penalty_rate.reset();
}

inline void to_json(json& j, const ScenarioFile& s) {
  json lat = json::array();
  for (const auto& l : s.latencies) lat.push_back(json{{"from", l.from}, {"to", l.to}, {"latency", l.latency}});
  j = json{{"enterprises", s.enterprises},
           {"products", s.products},
           {"suppliers", s.suppliers},
           {"demand", s.demand},
           {"disruptions", s.disruptions},
           {"params", s.params},
           {"horizon", s.horizon},
           {"seed", s.seed},
           {"network", json{{"default_latency", s.default_latency}, {"pairs", lat}}}};
}

inline void from_json(const json& j, ScenarioFile& s) {
  for (const char* key : {"enterprises", "products", "suppliers", "demand"}) {
    if (!j.contains(key)) fail(ErrorCode::Validation, std::string("missing section `") + key + "`");
  }
  j.at("enterprises").get_to(s.enterprises);
  j.at("products").get_to(s.products);
  j.at("suppliers").get_to(s.suppliers);
  j.at("demand").get_to(s.demand);
  s.disruptions = j.value("disruptions", json::array()).get<std::vector<DisruptionSpec>>();
  s.params = j.value("params", json::object()).get<SimParams>();
  s.horizon = j.value("horizon", Tick{100});
  s.seed = j.value("seed", std::uint64_t{1});
  const auto net = j.value("network", json::object());
  s.default_latency = net.value("default_latency", Tick{0});
  s.latencies.clear();
  for (const auto& l : net.value("pairs", json::array())) {
    s.latencies.push_back({l.at("from").get<std::string>(), l.at("to").get<std::string>(), l.at("latency").get<Tick>()});
  }
}

// ---------------------------------------------------------------------------
// Parsing

/// Byte offset to 1-based (line, column).
inline std::pair<std::size_t, std::size_t> line_column(std::string_view text, std::size_t offset) {
  std::size_t line = 1;
  std::size_t col = 1;
  for (std::size_t i = 0; i < offset && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

/// Parses a JSON document; syntax errors become Parse errors naming the line
/// and column.
inline json parse_json(const std::string& text, const std::string& source = "<input>") {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    const auto [line, col] = line_column(text, e.byte == 0 ? 0 : e.byte - 1);
    fail(ErrorCode::Parse, source + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " + e.what());
  }
}

/// Parses a stream of concatenated JSON documents.
inline std::vector<json> parse_json_documents(const std::string& text, const std::string& source = "<input>") {
  std::vector<json> docs;
  std::size_t pos = 0;
  while (true) {
    pos = text.find_first_not_of(" \t\r\n", pos);
    if (pos == std::string::npos) break;
    std::istringstream is(text.substr(pos));
    json doc;
    try {
      is >> doc;
    } catch (const json::parse_error& e) {
      const auto [line, col] = line_column(text, pos + (e.byte == 0 ? 0 : e.byte - 1));
      fail(ErrorCode::Parse, source + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " + e.what());
    }
    const auto consumed = is.tellg();
    docs.push_back(std::move(doc));
    if (consumed < 0) break;
    pos += static_cast<std::size_t>(consumed);
  }
  if (docs.empty()) fail(ErrorCode::Parse, source + ":1:1: empty input");
  return docs;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::InvalidArgument, "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Structural decoding; type and shape errors surface as Validation errors.
inline ScenarioFile decode_scenario(const json& doc) {
  if (!doc.is_object()) fail(ErrorCode::Validation, "scenario must be an object");
  try {
    return doc.get<ScenarioFile>();
  } catch (const json::exception& e) {
    fail(ErrorCode::Validation, e.what());
  }
}

// ---------------------------------------------------------------------------
// Validation

/// Every violated scenario invariant, in a stable order. Empty means valid.
inline std::vector<std::string> validate(const ScenarioFile& s) {
  std::vector<std::string> errors;
  auto err = [&](std::string m) { errors.push_back(std::move(m)); };

  if (s.horizon < 0) err("horizon must be >= 0");

  static const std::set<std::string> kReserved{"scc", "logistics"};
  std::set<EnterpriseId> ids;
  std::map<CellId, EnterpriseId> cell_owner;
  std::size_t customers = 0;
  for (const auto& e : s.enterprises) {
    if (e.id.str().empty() || e.id.str().find('/') != std::string::npos) err("invalid enterprise id '" + e.id.str() + "'");
    if (kReserved.contains(e.id.str())) err("enterprise id '" + e.id.str() + "' is reserved");
    if (!ids.insert(e.id).second) err("duplicate enterprise " + e.id.str());
    if (e.role == Role::Customer) {
      ++customers;
      continue;
    }
    for (const auto& c : e.cells) {
      auto [it, fresh] = cell_owner.emplace(c, e.id);
      if (!fresh) err("cell " + c.str() + " declared by both " + it->second.str() + " and " + e.id.str());
    }
    Shop shop;
    for (const auto& c : e.cells) shop.cells[c] = Cell{c, {}};
    std::set<ProductId> routed;
    for (const auto& r : e.routings) {
      if (!routed.insert(r.product).second) err("enterprise " + e.id.str() + " has two routings for " + r.product.str());
      shop.routings[r.product] = r;
    }
    for (auto& m : validate_routings(shop)) err("enterprise " + e.id.str() + ": " + m);
  }
  if (customers != 1) err("expected exactly one customer enterprise, found " + std::to_string(customers));

  std::set<ProductId> products;
  for (const auto& p : s.products)
    if (!products.insert(p.id).second) err("duplicate product " + p.id.str());
  for (const auto& p : s.products) {
    std::set<ProductId> seen;
    for (const auto& b : p.bom) {
      if (!products.contains(b.component)) err("product " + p.id.str() + " uses unknown component " + b.component.str());
      if (b.quantity_per_unit < 1) err("product " + p.id.str() + ": quantity_per_unit of " + b.component.str() + " < 1");
      if (!seen.insert(b.component).second) err("product " + p.id.str() + " lists " + b.component.str() + " twice");
    }
  }
  {
    BomRegistry reg;
    for (const auto& p : s.products) {
      std::vector<BomEntry> clean;
      std::set<ProductId> seen;
      for (const auto& b : p.bom)
        if (b.quantity_per_unit >= 1 && seen.insert(b.component).second) clean.push_back(b);
      if (!reg.contains(p.id)) reg.add(p.id, clean);
    }
    const auto cycle = reg.find_cycle();
    if (!cycle.empty()) {
      std::string path;
      for (const auto& p : cycle) path += (path.empty() ? "" : " -> ") + p.str();
      err("BOM cycle: " + path);
    }
  }

  for (const auto& e : s.enterprises) {
    for (const auto& r : e.routings)
      if (!products.contains(r.product)) err("enterprise " + e.id.str() + " routes unknown product " + r.product.str());
  }

  std::map<EnterpriseId, std::set<EnterpriseId>> upstream;
  for (const auto& l : s.suppliers) {
    const auto* sup = s.enterprise(l.supplier);
    const auto* buy = s.enterprise(l.buyer);
    const std::string tag = l.supplier.str() + " -> " + l.buyer.str() + " (" + l.product.str() + ")";
    if (sup == nullptr) err("supplier link " + tag + ": unknown supplier " + l.supplier.str());
    if (buy == nullptr) err("supplier link " + tag + ": unknown buyer " + l.buyer.str());
    if (!products.contains(l.product)) err("supplier link " + tag + ": unknown product " + l.product.str());
    if (l.supplier == l.buyer) err("supplier link " + tag + ": an enterprise cannot supply itself");
    if (sup != nullptr && sup->role == Role::Customer) err("supplier link " + tag + ": the customer cannot supply");
    if (sup != nullptr && sup->role != Role::Customer) {
      const bool routed = std::any_of(sup->routings.begin(), sup->routings.end(),
                                      [&](const Routing& r) { return r.product == l.product; });
      if (!routed) err("supplier link " + tag + ": " + l.supplier.str() + " has no routing for " + l.product.str());
    }
    upstream[l.buyer].insert(l.supplier);
  }
  {
    // buyer -> supplier graph must be acyclic
    std::map<EnterpriseId, int> mark;
    std::vector<EnterpriseId> stack;
    std::function<bool(const EnterpriseId&)> dfs = [&](const EnterpriseId& n) {
      mark[n] = 1;
      stack.push_back(n);
      for (const auto& m : upstream[n]) {
        if (mark[m] == 1) {
          std::string path;
          auto it = std::find(stack.begin(), stack.end(), m);
          for (; it != stack.end(); ++it) path += it->str() + " -> ";
          err("supplier cycle: " + path + m.str());
          return true;
        }
        if (mark[m] == 0 && dfs(m)) return true;
      }
      stack.pop_back();
      mark[n] = 2;
      return false;
    };
    for (const auto& [n, _] : upstream)
      if (mark[n] == 0 && dfs(n)) break;
  }

  const auto* cust = s.customer();
  if (!products.contains(s.demand.product)) err("demand product " + s.demand.product.str() + " is unknown");
  if (cust != nullptr && s.suppliers_of(s.demand.product, cust->id).empty()) {
    err("no supplier delivers " + s.demand.product.str() + " to the customer " + cust->id.str());
  }
  if (s.demand.base < 0) err("demand level must be >= 0");
  if (s.demand.interval < 1) err("demand interval must be >= 1");
  if (s.demand.noise < 0) err("demand noise must be >= 0");
  if (s.demand.lead_time < 1) err("demand lead_time must be >= 1");
  if (s.demand.unit_price < 0) err("demand unit_price must be >= 0");
  if (s.demand.kind == DemandKind::Seasonal && s.demand.period < 1) err("seasonal period must be >= 1");
  if (s.demand.kind == DemandKind::Spike) {
    for (Tick t : s.demand.spike_times)
      if (t < 0 || t >= std::max<Tick>(s.horizon, 1)) err("spike time " + std::to_string(t) + " outside the horizon");
  }

  for (const auto& d : s.disruptions) {
    if (d.kind == DisruptionKind::CellDown) {
      if (!cell_owner.contains(CellId{d.target})) err("disruption targets unknown cell " + d.target);
      if (d.interval.start < 0 || d.interval.start >= std::max<Tick>(s.horizon, 1)) {
        err("disruption on " + d.target + " starts outside the horizon");
      }
      if (d.interval.end <= d.interval.start) err("disruption on " + d.target + " has an empty interval");
    } else {
      if (d.target.empty()) err("shipment delay without an order id");
      if (d.extra < 1) err("shipment delay on " + d.target + " must add at least one tick");
      if (d.interval.start < 0 || d.interval.start >= std::max<Tick>(s.horizon, 1)) {
        err("shipment delay on " + d.target + " lies outside the horizon");
      }
    }
  }

  const auto& p = s.params;
  if (p.theta_pct < 0) err("params.theta_pct must be >= 0");
  if (p.k < 1) err("params.k must be >= 1");
  if (p.ttl < 0) err("params.ttl must be >= 0");
  if (p.max_rounds < 1) err("params.max_rounds must be >= 1");
  if (p.transit_time < 0) err("params.transit_time must be >= 0");
  if (p.customer_slack < 0) err("params.customer_slack must be >= 0");
  if (p.markup_pct < 0) err("params.markup_pct must be >= 0");
  if (p.penalty_rate && *p.penalty_rate < 0) err("params.penalty_rate must be >= 0");
  if (s.default_latency < 0) err("network.default_latency must be >= 0");
  for (const auto& l : s.latencies)
    if (l.latency < 0) err("latency " + l.from + " -> " + l.to + " must be >= 0");
  return errors;
}

/// Parses and validates; throws Parse or Validation (all messages joined).
inline ScenarioFile load_scenario_text(const std::string& text, const std::string& source = "<input>") {
  const auto doc = parse_json(text, source);
  auto s = decode_scenario(doc);
  const auto errors = validate(s);
  if (!errors.empty()) {
    std::string all;
    for (const auto& e : errors) all += (all.empty() ? "" : "\n") + e;
    fail(ErrorCode::Validation, all);
  }
  return s;
}

inline ScenarioFile load_scenario(const std::string& path) { return load_scenario_text(read_file(path), path); }

/// Hex FNV-1a of the canonical (sorted-key, compact) configuration.
inline std::string config_digest(const ScenarioFile& s) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(json(s).dump())));
  return buf;
}

}  // namespace scm
