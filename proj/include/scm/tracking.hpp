#pragma once

// Order tracking: milestone plans for contracted orders, rolling delivery
// projections, endangerment detection and classification, and the notices
// that route minor cases to rescheduling and major ones to renegotiation.

#include <algorithm>
#include <array>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "scm/core_model.hpp"

namespace scm {

enum class MilestoneKind { Confirmed, ProductionStarted, ProductionFinished, Shipped, Delivered };

NLOHMANN_JSON_SERIALIZE_ENUM(MilestoneKind, {
                                                {MilestoneKind::Confirmed, "confirmed"},
                                                {MilestoneKind::ProductionStarted, "production_started"},
                                                {MilestoneKind::ProductionFinished, "production_finished"},
                                                {MilestoneKind::Shipped, "shipped"},
                                                {MilestoneKind::Delivered, "delivered"},
                                            })

inline constexpr std::size_t kMilestoneCount = 5;

struct Milestone {
  MilestoneKind kind = MilestoneKind::Confirmed;
  Tick planned = 0;
  std::optional<Tick> actual;
  /// Current expectation; equals `actual` once that is set.
  Tick projected = 0;
  friend bool operator==(const Milestone&, const Milestone&) = default;
};

inline void to_json(json& j, const Milestone& m) {
  j = json{{"kind", m.kind}, {"planned", m.planned}, {"projected", m.projected}};
  j["actual"] = m.actual ? json(*m.actual) : json(nullptr);
}
inline void from_json(const json& j, Milestone& m) {
  j.at("kind").get_to(m.kind);
  j.at("planned").get_to(m.planned);
  j.at("projected").get_to(m.projected);
  if (j.contains("actual") && !j["actual"].is_null()) m.actual = j["actual"].get<Tick>();
  else m.actual.reset();
}

enum class TrackingStatus { OnTrack, Endangered, Recovered, Completed, Failed };

NLOHMANN_JSON_SERIALIZE_ENUM(TrackingStatus, {
                                                 {TrackingStatus::OnTrack, "on_track"},
                                                 {TrackingStatus::Endangered, "endangered"},
                                                 {TrackingStatus::Recovered, "recovered"},
                                                 {TrackingStatus::Completed, "completed"},
                                                 {TrackingStatus::Failed, "failed"},
                                             })

enum class Severity { Minor, Major };
NLOHMANN_JSON_SERIALIZE_ENUM(Severity, {{Severity::Minor, "minor"}, {Severity::Major, "major"}})

enum class EndangermentCause { CellDown, ComponentLate, MilestoneMissed };
NLOHMANN_JSON_SERIALIZE_ENUM(EndangermentCause, {
                                                    {EndangermentCause::CellDown, "cell_down"},
                                                    {EndangermentCause::ComponentLate, "component_late"},
                                                    {EndangermentCause::MilestoneMissed, "milestone_missed"},
                                                })

struct EndangermentEvent {
  OrderId order;
  ContractId contract;
  Tick detected_at = 0;
  Tick projected_delivery = 0;
  Tick slip = 0;
  Severity severity = Severity::Minor;
  EndangermentCause cause = EndangermentCause::MilestoneMissed;
  std::optional<CellId> cell;
  friend bool operator==(const EndangermentEvent&, const EndangermentEvent&) = default;
};

inline void to_json(json& j, const EndangermentEvent& e) {
  j = json{{"order", e.order},       {"contract", e.contract}, {"detected_at", e.detected_at},
           {"projected_delivery", e.projected_delivery}, {"slip", e.slip}, {"severity", e.severity},
           {"cause", e.cause}};
  j["cell"] = e.cell ? json(*e.cell) : json(nullptr);
}
inline void from_json(const json& j, EndangermentEvent& e) {
  j.at("order").get_to(e.order);
  j.at("contract").get_to(e.contract);
  j.at("detected_at").get_to(e.detected_at);
  j.at("projected_delivery").get_to(e.projected_delivery);
  j.at("slip").get_to(e.slip);
  j.at("severity").get_to(e.severity);
  j.at("cause").get_to(e.cause);
  if (j.contains("cell") && !j["cell"].is_null()) e.cell = j["cell"].get<CellId>();
  else e.cell.reset();
}

/// θ = ceil(theta_pct% of the contracted lead time), unless overridden.
inline Tick endangerment_threshold(Tick lead_time, int theta_pct, std::optional<Tick> override_theta = std::nullopt) {
  if (override_theta) return *override_theta;
  const Tick lead = std::max<Tick>(0, lead_time);
  return (lead * theta_pct + 99) / 100;
}

/// Minor for 0 < slip <= θ, Major beyond; no endangerment at all for slip <= 0.
inline std::optional<Severity> classify(Tick slip, Tick theta) {
  if (slip <= 0) return std::nullopt;
  return slip <= theta ? Severity::Minor : Severity::Major;
}

struct TrackingRecord {
  OrderId order;
  ContractId contract;
  EnterpriseId seller;
  EnterpriseId buyer;
  ProductId product;
  Quantity quantity = 0;
  Quantity lot_size = 0;
  int contract_version = 1;
  Tick agreed_due = 0;
  Tick original_due = 0;
  Tick lead_time = 0;
  Tick transit = 0;
  /// Extra delivery delay injected into the shipment.
  Tick shipment_delay = 0;
  int theta_pct = 10;
  std::optional<Tick> theta_override;
  std::array<Milestone, kMilestoneCount> milestones{};
  std::vector<OrderId> suborder_records;
  TrackingStatus status = TrackingStatus::OnTrack;
  std::vector<TrackingStatus> status_history{TrackingStatus::OnTrack};
  std::optional<Tick> last_notified_projection;
  std::vector<EndangermentEvent> endangerments;
  std::set<CellId> disrupted_cells;

  Milestone& at(MilestoneKind k) { return milestones[static_cast<std::size_t>(k)]; }
  const Milestone& at(MilestoneKind k) const { return milestones[static_cast<std::size_t>(k)]; }

  Tick theta() const { return endangerment_threshold(lead_time, theta_pct, theta_override); }
  Tick projected_delivery() const { return at(MilestoneKind::Delivered).projected; }
  Tick slip() const { return projected_delivery() - agreed_due; }
  bool finalized() const { return status == TrackingStatus::Completed || status == TrackingStatus::Failed; }

  void set_status(TrackingStatus s) {
    if (status == s) return;
    status = s;
    status_history.push_back(s);
  }
};

inline void to_json(json& j, const TrackingRecord& r) {
  j = json{{"order", r.order},
           {"contract", r.contract},
           {"seller", r.seller},
           {"buyer", r.buyer},
           {"product", r.product},
           {"quantity", r.quantity},
           {"lot_size", r.lot_size},
           {"contract_version", r.contract_version},
           {"agreed_due", r.agreed_due},
           {"original_due", r.original_due},
           {"lead_time", r.lead_time},
           {"transit", r.transit},
           {"shipment_delay", r.shipment_delay},
           {"theta_pct", r.theta_pct},
           {"milestones", r.milestones},
           {"suborder_records", r.suborder_records},
           {"status", r.status},
           {"status_history", r.status_history},
           {"endangerments", r.endangerments},
           {"disrupted_cells", r.disrupted_cells}};
  j["theta_override"] = r.theta_override ? json(*r.theta_override) : json(nullptr);
  j["last_notified_projection"] = r.last_notified_projection ? json(*r.last_notified_projection) : json(nullptr);
}

inline void from_json(const json& j, TrackingRecord& r) {
  j.at("order").get_to(r.order);
  j.at("contract").get_to(r.contract);
  j.at("seller").get_to(r.seller);
  j.at("buyer").get_to(r.buyer);
  j.at("product").get_to(r.product);
  j.at("quantity").get_to(r.quantity);
  j.at("lot_size").get_to(r.lot_size);
  j.at("contract_version").get_to(r.contract_version);
  j.at("agreed_due").get_to(r.agreed_due);
  j.at("original_due").get_to(r.original_due);
  j.at("lead_time").get_to(r.lead_time);
  j.at("transit").get_to(r.transit);
  j.at("shipment_delay").get_to(r.shipment_delay);
  j.at("theta_pct").get_to(r.theta_pct);
  j.at("milestones").get_to(r.milestones);
  j.at("suborder_records").get_to(r.suborder_records);
  j.at("status").get_to(r.status);
  j.at("status_history").get_to(r.status_history);
  j.at("endangerments").get_to(r.endangerments);
  j.at("disrupted_cells").get_to(r.disrupted_cells);
  if (!j.at("theta_override").is_null()) r.theta_override = j["theta_override"].get<Tick>();
  else r.theta_override.reset();
  if (!j.at("last_notified_projection").is_null()) r.last_notified_projection = j["last_notified_projection"].get<Tick>();
  else r.last_notified_projection.reset();
}

/// What the planner committed for the order, handed over at registration.
struct ScheduleExcerpt {
  Tick confirmed_at = 0;
  Tick production_start = 0;
  Tick production_finish = 0;
  Tick transit = 0;
  Quantity lot_size = 0;
  std::vector<OrderId> suborders;
};

namespace detail {

/// Shipment leaves at max(production finish, due - transit - known delay)
/// and arrives `transit` plus the delay later.
inline void project_shipping(TrackingRecord& r) {
  auto& shipped = r.at(MilestoneKind::Shipped);
  auto& delivered = r.at(MilestoneKind::Delivered);
  const auto& finished = r.at(MilestoneKind::ProductionFinished);
  if (!shipped.actual) shipped.projected = std::max(finished.projected, r.agreed_due - r.transit - r.shipment_delay);
  if (!delivered.actual) delivered.projected = shipped.projected + r.transit + r.shipment_delay;
}

}  // namespace detail

/// Builds the milestone plan for an active contract from the committed
/// schedule.
inline TrackingRecord register_contract(const Contract& contract, const Order& order, const ScheduleExcerpt& ex,
                                        int theta_pct = 10, std::optional<Tick> theta_override = std::nullopt) {
  if (contract.state != ContractState::Active) {
    fail(ErrorCode::NotActive, "contract " + contract.id.str() + " is " + std::string(to_string(contract.state)));
  }
  TrackingRecord r;
  r.order = contract.order;
  r.contract = contract.id;
  r.seller = contract.seller;
  r.buyer = contract.buyer;
  r.product = order.product;
  r.quantity = order.quantity;
  r.lot_size = ex.lot_size > 0 ? ex.lot_size : order.quantity;
  r.contract_version = contract.version;
  r.agreed_due = contract.agreed_due;
  r.original_due = contract.agreed_due;
  r.lead_time = contract.agreed_due - ex.confirmed_at;
  r.transit = ex.transit;
  r.theta_pct = theta_pct;
  r.theta_override = theta_override;
  r.suborder_records = ex.suborders;

  const std::array<Tick, 3> head{ex.confirmed_at, ex.production_start, ex.production_finish};
  for (std::size_t k = 0; k < kMilestoneCount; ++k) {
    r.milestones[k].kind = static_cast<MilestoneKind>(k);
    if (k < head.size()) r.milestones[k].projected = head[k];
  }
  detail::project_shipping(r);
  for (auto& m : r.milestones) m.planned = m.projected;
  return r;
}

/// Updates a record after its contract was amended.
inline void apply_amendment(TrackingRecord& r, const Contract& amended) {
  if (amended.version <= r.contract_version) return;
  r.contract_version = amended.version;
  r.agreed_due = amended.agreed_due;
  detail::project_shipping(r);
}

// ---------------------------------------------------------------------------
// Ingest

namespace ingest_event {
struct MilestoneReached {
  MilestoneKind kind = MilestoneKind::Confirmed;
  Tick actual = 0;
};
/// The delivery leg will take `extra` more ticks.
struct ShipmentDelayed {
  Tick extra = 0;
};
/// A component will only be on hand at `arrival`.
struct ComponentLate {
  Tick arrival = 0;
};
/// The planner's rescheduled timeline for the order's production.
struct Rescheduled {
  Tick start = 0;
  Tick finish = 0;
  EndangermentCause cause = EndangermentCause::CellDown;
  std::optional<CellId> cell;
};
}  // namespace ingest_event

using IngestEvent = std::variant<ingest_event::MilestoneReached, ingest_event::ShipmentDelayed,
                                 ingest_event::ComponentLate, ingest_event::Rescheduled>;

struct IngestResult {
  TrackingRecord record;
  std::optional<EndangermentEvent> endangerment;
};

/// Records one execution event and recomputes the delivery projection.
///
/// Remaining production milestones shift rigidly by the observed lateness;
/// shipping then follows the hold rule in project_shipping. An endangerment
/// is emitted when the projected slip is positive and either the event is a
/// disruption report, the milestone is Shipped or Delivered, or the slip
/// already exceeds θ (intermediate lateness within θ may still be absorbed).
/// Identical projections are reported only once.
inline IngestResult ingest(TrackingRecord r, const IngestEvent& event, Tick now) {
  if (r.finalized()) fail(ErrorCode::InvalidArgument, "record " + r.order.str() + " is already final");

  bool disruption = true;
  EndangermentCause cause = EndangermentCause::MilestoneMissed;
  std::optional<CellId> cell;
  bool final_leg = false;
  bool delivered_now = false;

  auto shift_production = [&](std::size_t from, Tick by) {
    for (std::size_t k = from; k <= static_cast<std::size_t>(MilestoneKind::ProductionFinished); ++k) {
      if (!r.milestones[k].actual) r.milestones[k].projected += by;
    }
  };

  if (const auto* m = std::get_if<ingest_event::MilestoneReached>(&event)) {
    disruption = false;
    const auto idx = static_cast<std::size_t>(m->kind);
    if (r.milestones[idx].actual) fail(ErrorCode::DuplicateMilestone, r.order.str());
    for (std::size_t k = 0; k < idx; ++k) {
      if (!r.milestones[k].actual) fail(ErrorCode::OutOfOrderMilestone, r.order.str());
      if (*r.milestones[k].actual > m->actual) fail(ErrorCode::OutOfOrderMilestone, r.order.str());
    }
    const Tick lateness = m->actual - r.milestones[idx].projected;
    r.milestones[idx].actual = m->actual;
    r.milestones[idx].projected = m->actual;
    shift_production(idx + 1, lateness);
    final_leg = m->kind == MilestoneKind::Shipped || m->kind == MilestoneKind::Delivered;
    delivered_now = m->kind == MilestoneKind::Delivered;
  } else if (const auto* s = std::get_if<ingest_event::ShipmentDelayed>(&event)) {
    r.shipment_delay += s->extra;
  } else if (const auto* c = std::get_if<ingest_event::ComponentLate>(&event)) {
    cause = EndangermentCause::ComponentLate;
    const auto& started = r.at(MilestoneKind::ProductionStarted);
    if (!started.actual && c->arrival > started.projected) {
      shift_production(static_cast<std::size_t>(MilestoneKind::ProductionStarted), c->arrival - started.projected);
    }
  } else {
    const auto& re = std::get<ingest_event::Rescheduled>(event);
    cause = re.cause;
    cell = re.cell;
    if (re.cell) r.disrupted_cells.insert(*re.cell);
    auto& st = r.at(MilestoneKind::ProductionStarted);
    auto& fin = r.at(MilestoneKind::ProductionFinished);
    if (!st.actual) st.projected = re.start;
    if (!fin.actual) fin.projected = re.finish;
  }
  detail::project_shipping(r);

  IngestResult out;
  const Tick slip = r.slip();
  if (delivered_now) {
    r.set_status(slip <= 0 ? TrackingStatus::Completed : TrackingStatus::Failed);
  } else if (slip <= 0) {
    if (r.status == TrackingStatus::Endangered) r.set_status(TrackingStatus::Recovered);
    r.last_notified_projection.reset();
  }

  const Tick theta = r.theta();
  const bool fires = slip > 0 && (disruption || final_leg || slip > theta);
  const bool fresh = !r.last_notified_projection || *r.last_notified_projection != r.projected_delivery();
  if (fires && fresh) {
    EndangermentEvent e;
    e.order = r.order;
    e.contract = r.contract;
    e.detected_at = now;
    e.projected_delivery = r.projected_delivery();
    e.slip = slip;
    e.severity = *classify(slip, theta);
    e.cause = cause;
    e.cell = cell;
    r.endangerments.push_back(e);
    r.last_notified_projection = e.projected_delivery;
    out.endangerment = e;
  }
  out.record = std::move(r);
  return out;
}

/// Closes a record whose contract was cancelled.
inline void finalize_failed(TrackingRecord& r) { r.set_status(TrackingStatus::Failed); }

// ---------------------------------------------------------------------------
// Notify

enum class NoticeRecipient { Buyer, LocalPlanner, Negotiator };

struct Notice {
  NoticeRecipient to = NoticeRecipient::Buyer;
  /// EndangermentNotice, RescheduleRequest or RenegotiateRequest.
  std::string performative;
  EndangermentEvent event;
};

/// The notice set for a fresh endangerment: the buyer is always told; minor
/// cases go to the local planner for rescheduling, major ones to the
/// negotiator for renegotiation.
inline std::vector<Notice> notify(TrackingRecord& r, const EndangermentEvent& e) {
  r.set_status(TrackingStatus::Endangered);
  std::vector<Notice> out;
  out.push_back({NoticeRecipient::Buyer, "EndangermentNotice", e});
  if (e.severity == Severity::Minor) out.push_back({NoticeRecipient::LocalPlanner, "RescheduleRequest", e});
  else out.push_back({NoticeRecipient::Negotiator, "RenegotiateRequest", e});
  return out;
}

/// Per-enterprise record store. Registration is idempotent per contract; a
/// newer contract version updates the terms in place.
class TrackingStore {
 public:
  const TrackingRecord& register_contract(const Contract& c, const Order& o, const ScheduleExcerpt& ex,
                                          int theta_pct = 10) {
    auto it = records_.find(o.id);
    if (it != records_.end()) {
      if (c.state != ContractState::Active) fail(ErrorCode::NotActive, c.id.str());
      apply_amendment(it->second, c);
      return it->second;
    }
    return records_.emplace(o.id, scm::register_contract(c, o, ex, theta_pct)).first->second;
  }

  bool contains(const OrderId& id) const { return records_.contains(id); }
  TrackingRecord& at(const OrderId& id) {
    auto it = records_.find(id);
    if (it == records_.end()) fail(ErrorCode::UnknownTarget, "no tracking record for " + id.str());
    return it->second;
  }
  const std::map<OrderId, TrackingRecord>& records() const noexcept { return records_; }

 private:
  std::map<OrderId, TrackingRecord> records_;
};

}  // namespace scm
