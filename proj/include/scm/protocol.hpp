#pragma once

// Message bodies exchanged by the simulation's agents and their JSON form
// for the message log.

#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "scm/core_model.hpp"
#include "scm/messaging.hpp"
#include "scm/negotiation.hpp"
#include "scm/planner.hpp"
#include "scm/tracing.hpp"
#include "scm/tracking.hpp"

namespace scm::body {

/// RequestSupplyVector: `order.due` is the latest acceptable completion at
/// the seller's site.
struct Rfq {
  Order order;
};

/// CallForQuote from a negotiator to its own planner.
struct QuoteRequest {
  OrderId order;
  ProductId product;
  Quantity quantity = 0;
  Tick earliest = 0;
};

/// Quote: the planner's answer plus a read-only snapshot of the shop so the
/// negotiator can time its own production after component arrival.
struct QuoteReply {
  OrderId order;
  bool feasible = true;
  QuoteResult quote;
  double load = 0.0;
  std::shared_ptr<const Shop> snapshot;
};

struct Offer {
  OrderId order;
  SupplyVector vector;
};

/// Award carries a contract draft; Accept carries the contract as the
/// sender now holds it (Active, or amended).
struct ContractMsg {
  Contract contract;
};

struct RejectMsg {
  OrderId order;
  std::optional<ContractId> contract;
  std::string reason;
};

struct CancelMsg {
  ContractId contract;
  OrderId order;
  std::string reason;
};

/// EndangermentNotice, RescheduleRequest and RenegotiateRequest.
struct Endangerment {
  EndangermentEvent event;
};

struct AmendMsg {
  ContractId contract;
  OrderId order;
  AmendTerms terms;
};

/// Confirm to the tracking agent: a contract to track (new or amended).
struct Registration {
  Contract contract;
  Order order;
  ScheduleExcerpt excerpt;
};

/// Confirm to the tracking agent: a contract is gone.
struct Cancellation {
  Contract contract;
};

/// Confirm to the tracking agent: execution event data.
struct MilestoneMsg {
  OrderId order;
  MilestoneKind kind = MilestoneKind::Confirmed;
  Tick actual = 0;
};

struct ShipmentDelayMsg {
  OrderId order;
  Tick extra = 0;
};

/// Confirm from a planner: the job's production timeline after a reschedule.
struct ScheduleUpdate {
  OrderId job;
  std::vector<OrderId> members;
  Tick start = 0;
  Tick finish = 0;
  EndangermentCause cause = EndangermentCause::CellDown;
  std::optional<CellId> cell;
};

struct Trace {
  HistoryEntry entry;
};

}  // namespace scm::body

namespace scm {

using Payload =
    std::variant<std::monostate, body::Rfq, body::QuoteRequest, body::QuoteReply, body::Offer, body::ContractMsg,
                 body::RejectMsg, body::CancelMsg, body::Endangerment, body::AmendMsg, body::Registration,
                 body::Cancellation, body::MilestoneMsg, body::ShipmentDelayMsg, body::ScheduleUpdate, body::Trace>;

using Message = Envelope<Payload>;
using Network = NetworkModel<Payload>;
using Mail = PostOffice<Payload>;

namespace body {

namespace detail {
inline json opt(const std::optional<ContractId>& c) { return c ? json(*c) : json(nullptr); }
inline json opt(const std::optional<CellId>& c) { return c ? json(*c) : json(nullptr); }
}  // namespace detail

/// Log form of a payload: the body fields plus a `type` tag. Quote snapshots
/// are summarized by their hash. Declared in `body` so argument-dependent
/// lookup finds it for the variant.
inline void to_json(json& j, const Payload& p) {
  std::visit(
      [&](const auto& b) {
        using T = std::decay_t<decltype(b)>;
        if constexpr (std::is_same_v<T, std::monostate>) {
          j = nullptr;
        } else if constexpr (std::is_same_v<T, body::Rfq>) {
          j = json{{"type", "rfq"}, {"order", b.order}};
        } else if constexpr (std::is_same_v<T, body::QuoteRequest>) {
          j = json{{"type", "quote_request"},
                   {"order", b.order},
                   {"product", b.product},
                   {"quantity", b.quantity},
                   {"earliest", b.earliest}};
        } else if constexpr (std::is_same_v<T, body::QuoteReply>) {
          j = json{{"type", "quote"},
                   {"order", b.order},
                   {"feasible", b.feasible},
                   {"start", b.quote.start},
                   {"completion", b.quote.completion},
                   {"cost", b.quote.cost},
                   {"load", b.load}};
          j["snapshot"] = b.snapshot ? json(shop_hash(*b.snapshot)) : json(nullptr);
        } else if constexpr (std::is_same_v<T, body::Offer>) {
          j = json{{"type", "supply_vector"}, {"order", b.order}, {"vector", b.vector}};
        } else if constexpr (std::is_same_v<T, body::ContractMsg>) {
          j = json{{"type", "contract"}, {"contract", b.contract}};
        } else if constexpr (std::is_same_v<T, body::RejectMsg>) {
          j = json{{"type", "reject"}, {"order", b.order}, {"contract", detail::opt(b.contract)}, {"reason", b.reason}};
        } else if constexpr (std::is_same_v<T, body::CancelMsg>) {
          j = json{{"type", "cancel"}, {"contract", b.contract}, {"order", b.order}, {"reason", b.reason}};
        } else if constexpr (std::is_same_v<T, body::Endangerment>) {
          j = json{{"type", "endangerment"}, {"event", b.event}};
        } else if constexpr (std::is_same_v<T, body::AmendMsg>) {
          j = json{{"type", "amend"},
                   {"contract", b.contract},
                   {"order", b.order},
                   {"new_due", b.terms.new_due},
                   {"new_price", b.terms.new_price}};
        } else if constexpr (std::is_same_v<T, body::Registration>) {
          j = json{{"type", "registration"},
                   {"contract", b.contract},
                   {"order", b.order.id},
                   {"start", b.excerpt.production_start},
                   {"finish", b.excerpt.production_finish}};
        } else if constexpr (std::is_same_v<T, body::Cancellation>) {
          j = json{{"type", "cancellation"}, {"contract", b.contract}};
        } else if constexpr (std::is_same_v<T, body::MilestoneMsg>) {
          j = json{{"type", "milestone"}, {"order", b.order}, {"kind", b.kind}, {"actual", b.actual}};
        } else if constexpr (std::is_same_v<T, body::ShipmentDelayMsg>) {
          j = json{{"type", "shipment_delay"}, {"order", b.order}, {"extra", b.extra}};
        } else if constexpr (std::is_same_v<T, body::ScheduleUpdate>) {
          j = json{{"type", "schedule_update"}, {"job", b.job},     {"members", b.members}, {"start", b.start},
                   {"finish", b.finish},         {"cause", b.cause}, {"cell", detail::opt(b.cell)}};
        } else if constexpr (std::is_same_v<T, body::Trace>) {
          j = json{{"type", "trace"}, {"order", b.entry.record.order}, {"status", b.entry.record.status}};
        }
      },
      p);
}

}  // namespace body

}  // namespace scm
