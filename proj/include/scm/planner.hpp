#pragma once

// Intra-enterprise production planning: quoting, load estimation, EDD list
// scheduling on unit-capacity cells under three policy flavours, and
// rescheduling after disruptions.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "scm/core_model.hpp"

namespace scm {

/// Sentinel end for downtime that never ends.
inline constexpr Tick kForever = std::numeric_limits<Tick>::max() / 4;

/// Half-open tick interval [start, end).
struct Interval {
  Tick start = 0;
  Tick end = 0;

  Tick length() const noexcept { return end - start; }
  bool overlaps(const Interval& o) const noexcept { return start < o.end && o.start < end; }
  friend auto operator<=>(const Interval&, const Interval&) = default;
};

inline Tick overlap_length(const Interval& a, const Interval& b) {
  return std::max<Tick>(0, std::min(a.end, b.end) - std::max(a.start, b.start));
}

inline void to_json(json& j, const Interval& i) {
  j = json{{"start", i.start}};
  j["end"] = i.end >= kForever ? json(nullptr) : json(i.end);
}
inline void from_json(const json& j, Interval& i) {
  j.at("start").get_to(i.start);
  i.end = (!j.contains("end") || j["end"].is_null()) ? kForever : j["end"].get<Tick>();
}

struct OperationSpec {
  OperationId id;
  std::vector<CellId> eligible_cells;
  Tick unit_time = 1;
  Tick setup_time = 0;
  Money cost_rate = 0;

  /// Cell occupation for a lot of `quantity` units (0 for an empty lot).
  Tick duration(Quantity quantity) const noexcept { return quantity <= 0 ? 0 : setup_time + unit_time * quantity; }
};

inline void to_json(json& j, const OperationSpec& o) {
  j = json{{"id", o.id},
           {"eligible_cells", o.eligible_cells},
           {"unit_time", o.unit_time},
           {"setup_time", o.setup_time},
           {"cost_rate", o.cost_rate}};
}
inline void from_json(const json& j, OperationSpec& o) {
  j.at("id").get_to(o.id);
  j.at("eligible_cells").get_to(o.eligible_cells);
  j.at("unit_time").get_to(o.unit_time);
  o.setup_time = j.value("setup_time", Tick{0});
  o.cost_rate = j.value("cost_rate", Money{0});
}

struct Routing {
  ProductId product;
  std::vector<OperationSpec> operations;
};

inline void to_json(json& j, const Routing& r) { j = json{{"product", r.product}, {"operations", r.operations}}; }
inline void from_json(const json& j, Routing& r) {
  j.at("product").get_to(r.product);
  j.at("operations").get_to(r.operations);
}

struct Cell {
  CellId id;
  std::vector<Interval> downtime;
};

/// A unit of production work: one order, or one lot of merged orders under
/// the batch policy. `first_op` > 0 when earlier operations already ran.
struct Job {
  OrderId id;
  ProductId product;
  Quantity quantity = 1;
  Tick release = 0;
  Tick due = 0;
  Tick components_ready = 0;
  std::size_t first_op = 0;
  std::vector<OrderId> members;

  static Job from_order(const Order& o, Tick release, Tick components_ready = 0) {
    return Job{o.id, o.product, o.quantity, release, o.due, components_ready, 0, {o.id}};
  }
};

inline void to_json(json& j, const Job& job) {
  j = json{{"id", job.id},
           {"product", job.product},
           {"quantity", job.quantity},
           {"release", job.release},
           {"due", job.due},
           {"components_ready", job.components_ready},
           {"first_op", job.first_op},
           {"members", job.members}};
}

struct Booking {
  CellId cell;
  OrderId job;
  std::size_t op_index = 0;
  OperationId operation;
  Interval span;
  Quantity quantity = 0;
  Money cost = 0;

  PartialOrder as_partial_order(Tick due) const { return PartialOrder{job, operation, cell, quantity, due}; }
};

inline void to_json(json& j, const Booking& b) {
  j = json{{"cell", b.cell},        {"order", b.job},         {"operation", b.operation}, {"op_index", b.op_index},
           {"start", b.span.start}, {"end", b.span.end},      {"quantity", b.quantity},   {"cost", b.cost}};
}

struct Schedule {
  std::vector<Booking> bookings;
  std::map<OrderId, Tick> start;
  std::map<OrderId, Tick> completion;
  std::map<OrderId, Money> cost;

  std::vector<const Booking*> bookings_of(const OrderId& job) const {
    std::vector<const Booking*> out;
    for (const auto& b : bookings)
      if (b.job == job) out.push_back(&b);
    std::sort(out.begin(), out.end(), [](auto* a, auto* b) { return a->op_index < b->op_index; });
    return out;
  }
};

inline void sort_bookings(std::vector<Booking>& bookings) {
  std::sort(bookings.begin(), bookings.end(), [](const Booking& a, const Booking& b) {
    if (a.cell != b.cell) return a.cell < b.cell;
    if (a.span.start != b.span.start) return a.span.start < b.span.start;
    return a.job < b.job;
  });
}

/// Recomputes per-job start/completion/cost from the booking list.
inline void summarize(Schedule& s) {
  sort_bookings(s.bookings);
  s.start.clear();
  s.completion.clear();
  s.cost.clear();
  for (const auto& b : s.bookings) {
    auto [it, fresh] = s.start.try_emplace(b.job, b.span.start);
    if (!fresh) it->second = std::min(it->second, b.span.start);
    auto& c = s.completion[b.job];
    c = std::max(c, b.span.end);
    s.cost[b.job] += b.cost;
  }
}

/// Report rows: (cell, order, operation, start, end, cost).
inline json schedule_rows(const Schedule& s) {
  json rows = json::array();
  for (const auto& b : s.bookings) rows.push_back(b);
  return rows;
}

struct Shop {
  std::map<CellId, Cell> cells;
  std::map<ProductId, Routing> routings;
  std::map<OrderId, Job> jobs;
  Schedule schedule;

  const Routing& routing(const ProductId& product) const {
    auto it = routings.find(product);
    if (it == routings.end()) fail(ErrorCode::NoRouting, product.str());
    return it->second;
  }
};

inline json shop_to_json(const Shop& shop) {
  json cells = json::object();
  for (const auto& [id, c] : shop.cells) cells[id.str()] = c.downtime;
  json routings = json::array();
  for (const auto& [_, r] : shop.routings) routings.push_back(r);
  json jobs = json::array();
  for (const auto& [_, job] : shop.jobs) jobs.push_back(job);
  return json{{"cells", cells}, {"routings", routings}, {"jobs", jobs}, {"bookings", schedule_rows(shop.schedule)}};
}

/// FNV-1a over the canonical JSON form; used to prove quoting is read-only.
inline std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::uint64_t shop_hash(const Shop& shop) { return fnv1a(shop_to_json(shop).dump()); }

/// Checks routing references against the shop's cells.
inline std::vector<std::string> validate_routings(const Shop& shop) {
  std::vector<std::string> errors;
  for (const auto& [product, r] : shop.routings) {
    if (r.operations.empty()) errors.push_back("routing for " + product.str() + " has no operations");
    for (const auto& op : r.operations) {
      if (op.unit_time < 1) errors.push_back("operation " + op.id.str() + " has unit_time < 1");
      if (op.setup_time < 0) errors.push_back("operation " + op.id.str() + " has negative setup_time");
      if (op.eligible_cells.empty()) errors.push_back("operation " + op.id.str() + " has no eligible cells");
      for (const auto& c : op.eligible_cells) {
        if (!shop.cells.contains(c)) errors.push_back("operation " + op.id.str() + " references missing cell " + c.str());
      }
    }
  }
  return errors;
}

// ---------------------------------------------------------------------------
// Policies

struct PlannerPolicy {
  enum class Kind { Discrete, Assembly, Batch };
  Kind kind = Kind::Discrete;
  Tick window = 0;
  Quantity max_lot = 1;

  static PlannerPolicy discrete() { return {Kind::Discrete, 0, 1}; }
  static PlannerPolicy assembly() { return {Kind::Assembly, 0, 1}; }
  static PlannerPolicy batch(Tick window, Quantity max_lot) {
    if (window < 0 || max_lot < 1) fail(ErrorCode::InvalidArgument, "batch policy needs window >= 0, max_lot >= 1");
    return {Kind::Batch, window, max_lot};
  }
  friend bool operator==(const PlannerPolicy&, const PlannerPolicy&) = default;
};

inline void to_json(json& j, const PlannerPolicy& p) {
  switch (p.kind) {
    case PlannerPolicy::Kind::Discrete: j = json{{"kind", "discrete"}}; break;
    case PlannerPolicy::Kind::Assembly: j = json{{"kind", "assembly"}}; break;
    case PlannerPolicy::Kind::Batch: j = json{{"kind", "batch"}, {"window", p.window}, {"max_lot", p.max_lot}}; break;
  }
}
inline void from_json(const json& j, PlannerPolicy& p) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "discrete") p = PlannerPolicy::discrete();
  else if (kind == "assembly") p = PlannerPolicy::assembly();
  else if (kind == "batch") p = PlannerPolicy::batch(j.at("window").get<Tick>(), j.at("max_lot").get<Quantity>());
  else fail(ErrorCode::Validation, "unknown planner policy " + kind);
}

// ---------------------------------------------------------------------------
// Slot search

namespace detail {

/// Busy intervals per cell (bookings plus downtime), sorted by start.
class Occupancy {
 public:
  Occupancy(const Shop& shop, const Schedule& schedule) {
    for (const auto& [id, cell] : shop.cells) {
      auto& v = busy_[id];
      v.insert(v.end(), cell.downtime.begin(), cell.downtime.end());
    }
    for (const auto& b : schedule.bookings) busy_[b.cell].push_back(b.span);
    for (auto& [_, v] : busy_) std::sort(v.begin(), v.end());
  }

  /// Earliest start >= ready of a free window of `duration` ticks, or
  /// kForever if the cell never has one.
  Tick earliest_start(const CellId& cell, Tick ready, Tick duration) const {
    auto it = busy_.find(cell);
    if (it == busy_.end()) return kForever;
    Tick t = ready;
    for (const auto& iv : it->second) {
      if (iv.end <= t) continue;
      if (iv.start >= t + duration) break;
      t = std::max(t, iv.end);
      if (t >= kForever) return kForever;
    }
    return t;
  }

  void add(const CellId& cell, Interval iv) {
    auto& v = busy_[cell];
    v.insert(std::upper_bound(v.begin(), v.end(), iv), iv);
  }

 private:
  std::map<CellId, std::vector<Interval>> busy_;
};

struct Placement {
  CellId cell;
  Interval span;
};

/// Earliest-finish eligible cell for one operation; ties go to the smaller
/// cell id.
inline std::optional<Placement> place(const Occupancy& occ, const OperationSpec& op, Tick ready, Tick duration) {
  std::optional<Placement> best;
  std::vector<CellId> cells = op.eligible_cells;
  std::sort(cells.begin(), cells.end());
  for (const auto& c : cells) {
    const Tick s = occ.earliest_start(c, ready, duration);
    if (s >= kForever) continue;
    if (!best || s + duration < best->span.end) best = Placement{c, {s, s + duration}};
  }
  return best;
}

inline Tick first_ready(const Job& job, const PlannerPolicy& policy) {
  Tick ready = job.release;
  if (policy.kind == PlannerPolicy::Kind::Assembly && job.first_op == 0) ready = std::max(ready, job.components_ready);
  return ready;
}

/// Serially inserts jobs in EDD order (due, then id) into `schedule`.
inline void schedule_jobs(std::vector<Job> jobs, const PlannerPolicy& policy, const Shop& shop, Schedule& schedule) {
  std::sort(jobs.begin(), jobs.end(), [](const Job& a, const Job& b) {
    if (a.due != b.due) return a.due < b.due;
    return a.id < b.id;
  });
  Occupancy occ(shop, schedule);
  for (const auto& job : jobs) {
    const auto& routing = shop.routing(job.product);
    Tick ready = first_ready(job, policy);
    for (std::size_t k = job.first_op; k < routing.operations.size(); ++k) {
      const auto& op = routing.operations[k];
      const Tick d = op.duration(job.quantity);
      auto p = place(occ, op, ready, d);
      if (!p) fail(ErrorCode::Infeasible, "operation " + op.id.str() + " of " + job.id.str() + " has no usable cell");
      occ.add(p->cell, p->span);
      schedule.bookings.push_back(Booking{p->cell, job.id, k, op.id, p->span, job.quantity, d * op.cost_rate});
      ready = p->span.end;
    }
  }
  summarize(schedule);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Operations

struct QuoteResult {
  Tick start = 0;
  Tick completion = 0;
  Money cost = 0;
  friend bool operator==(const QuoteResult&, const QuoteResult&) = default;
};

/// Completion and cost of producing `quantity` units starting no earlier
/// than `earliest_start`, by greedy earliest-slot insertion into the current
/// schedule. Never mutates `shop`.
inline QuoteResult quote(const ProductId& product, Quantity quantity, Tick earliest_start, const Shop& shop) {
  const auto& routing = shop.routing(product);
  if (quantity < 0) fail(ErrorCode::InvalidArgument, "negative quote quantity");
  if (quantity == 0) return {earliest_start, earliest_start, 0};

  detail::Occupancy occ(shop, shop.schedule);
  QuoteResult r{kForever, earliest_start, 0};
  Tick ready = earliest_start;
  for (const auto& op : routing.operations) {
    const Tick d = op.duration(quantity);
    auto p = detail::place(occ, op, ready, d);
    if (!p) fail(ErrorCode::Infeasible, "operation " + op.id.str() + " has no usable cell");
    occ.add(p->cell, p->span);
    r.start = std::min(r.start, p->span.start);
    r.cost += d * op.cost_rate;
    ready = p->span.end;
  }
  r.completion = ready;
  return r;
}

struct LoadReport {
  std::map<CellId, double> utilization;
  std::map<OrderId, Tick> earliest_completion;
};

/// Booked ticks / available ticks per cell inside `horizon`. A cell with no
/// available ticks in the window reports 1.0 (no spare capacity).
inline LoadReport estimate_load(const Interval& horizon, const Shop& shop, std::span<const Job> candidates = {}) {
  if (horizon.length() <= 0) fail(ErrorCode::InvalidArgument, "load horizon must be nonempty");
  LoadReport report;
  for (const auto& [id, cell] : shop.cells) {
    auto down = cell.downtime;
    std::sort(down.begin(), down.end());
    Tick downtime = 0;
    Tick covered_to = horizon.start;
    for (const auto& iv : down) {
      Interval clipped{std::max(iv.start, covered_to), iv.end};
      if (clipped.end <= clipped.start) continue;
      downtime += overlap_length(clipped, horizon);
      covered_to = std::max(covered_to, iv.end);
    }
    Tick booked = 0;
    for (const auto& b : shop.schedule.bookings)
      if (b.cell == id) booked += overlap_length(b.span, horizon);
    const Tick available = horizon.length() - downtime;
    report.utilization[id] =
        available <= 0 ? 1.0 : std::clamp(static_cast<double>(booked) / static_cast<double>(available), 0.0, 1.0);
  }
  for (const auto& job : candidates) {
    report.earliest_completion[job.id] = quote(job.product, job.quantity, job.release, shop).completion;
  }
  return report;
}

/// Mean utilization across all cells over `horizon`.
inline double mean_utilization(const LoadReport& r) {
  if (r.utilization.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& [_, u] : r.utilization) sum += u;
  return sum / static_cast<double>(r.utilization.size());
}

/// Greedy lot formation: per product, in arrival order (release, id), an
/// order joins the open lot while its release is within `window` of the
/// lot's first release and the lot stays within `max_lot`. Orders are never
/// split; an order larger than `max_lot` forms a lot of its own.
inline std::vector<Job> form_lots(std::vector<Job> jobs, Tick window, Quantity max_lot) {
  std::stable_sort(jobs.begin(), jobs.end(), [](const Job& a, const Job& b) {
    if (a.product != b.product) return a.product < b.product;
    if (a.release != b.release) return a.release < b.release;
    return a.id < b.id;
  });
  std::vector<Job> lots;
  std::optional<Job> open;
  Tick anchor = 0;
  for (auto& j : jobs) {
    const bool joins = open && open->product == j.product && j.release - anchor <= window &&
                       open->quantity + j.quantity <= max_lot;
    if (joins) {
      open->quantity += j.quantity;
      open->release = std::max(open->release, j.release);
      open->due = std::min(open->due, j.due);
      open->components_ready = std::max(open->components_ready, j.components_ready);
      open->members.insert(open->members.end(), j.members.begin(), j.members.end());
      continue;
    }
    if (open) lots.push_back(std::move(*open));
    anchor = j.release;
    if (j.members.empty()) j.members.push_back(j.id);
    open = std::move(j);
  }
  if (open) lots.push_back(std::move(*open));
  return lots;
}

/// Plans `jobs` on top of the shop's committed schedule and returns the
/// resulting full schedule. Discrete/Assembly: EDD list scheduling with
/// earliest-finish cell choice. Batch: jobs are first merged into lots.
inline Schedule plan(std::span<const Job> jobs, const PlannerPolicy& policy, const Shop& shop) {
  std::vector<Job> work(jobs.begin(), jobs.end());
  for (const auto& j : work) (void)shop.routing(j.product);
  if (policy.kind == PlannerPolicy::Kind::Batch) work = form_lots(std::move(work), policy.window, policy.max_lot);
  Schedule s = shop.schedule;
  detail::schedule_jobs(std::move(work), policy, shop, s);
  return s;
}

/// Plans and commits: the returned shop holds the new jobs and schedule.
inline Shop commit(Shop shop, std::span<const Job> jobs, const PlannerPolicy& policy) {
  std::vector<Job> work(jobs.begin(), jobs.end());
  for (const auto& j : work) (void)shop.routing(j.product);
  if (policy.kind == PlannerPolicy::Kind::Batch) work = form_lots(std::move(work), policy.window, policy.max_lot);
  for (const auto& j : work) shop.jobs[j.id] = j;
  detail::schedule_jobs(work, policy, shop, shop.schedule);
  return shop;
}

// ---------------------------------------------------------------------------
// Rescheduling

namespace disruption {
struct CellOutage {
  CellId cell;
  Interval interval;
};
struct ComponentDelay {
  OrderId job;
  Tick ready = 0;
};
struct Replan {
  OrderId job;
};
}  // namespace disruption

using PlanDisruption = std::variant<disruption::CellOutage, disruption::ComponentDelay, disruption::Replan>;

struct RescheduleResult {
  Shop shop;
  std::set<OrderId> replanned;
};

/// Repairs the committed schedule after a disruption. `now` is the earliest
/// tick new work may start: bookings starting before it have started, and
/// are kept unless they overlap a new outage (then they restart). Every
/// unstarted operation of the affected jobs, and of jobs sharing a cell with
/// them, is removed and re-planned in EDD order; all other bookings stay.
inline RescheduleResult reschedule(Shop shop, const PlanDisruption& d, const PlannerPolicy& policy, Tick now) {
  std::set<OrderId> affected;
  std::set<std::uint64_t> aborted;  // indices into bookings
  auto& bookings = shop.schedule.bookings;

  if (const auto* out = std::get_if<disruption::CellOutage>(&d)) {
    auto it = shop.cells.find(out->cell);
    if (it == shop.cells.end()) fail(ErrorCode::UnknownTarget, "cell " + out->cell.str());
    it->second.downtime.push_back(out->interval);
    std::sort(it->second.downtime.begin(), it->second.downtime.end());
    for (std::size_t i = 0; i < bookings.size(); ++i) {
      const auto& b = bookings[i];
      if (b.cell != out->cell || !b.span.overlaps(out->interval)) continue;
      affected.insert(b.job);
      if (b.span.start < now) aborted.insert(i);
    }
  } else if (const auto* late = std::get_if<disruption::ComponentDelay>(&d)) {
    auto it = shop.jobs.find(late->job);
    if (it == shop.jobs.end()) fail(ErrorCode::UnknownTarget, "job " + late->job.str());
    auto& job = it->second;
    job.components_ready = std::max(job.components_ready, late->ready);
    job.release = std::max(job.release, late->ready);
    const bool first_op_started = std::any_of(bookings.begin(), bookings.end(), [&](const Booking& b) {
      return b.job == job.id && b.op_index == job.first_op && b.span.start < now;
    });
    if (!first_op_started) affected.insert(job.id);
  } else {
    const auto& rp = std::get<disruption::Replan>(d);
    if (!shop.jobs.contains(rp.job)) fail(ErrorCode::UnknownTarget, "job " + rp.job.str());
    affected.insert(rp.job);
  }

  auto removable = [&](std::size_t i) { return bookings[i].span.start >= now || aborted.contains(i); };

  // One-step closure over cells touched by the affected jobs' open work.
  std::set<CellId> touched;
  for (std::size_t i = 0; i < bookings.size(); ++i)
    if (affected.contains(bookings[i].job) && removable(i)) touched.insert(bookings[i].cell);
  std::set<OrderId> replan = affected;
  for (const auto& b : bookings)
    if (b.span.start >= now && touched.contains(b.cell)) replan.insert(b.job);

  std::vector<Booking> kept;
  for (std::size_t i = 0; i < bookings.size(); ++i) {
    if (replan.contains(bookings[i].job) && removable(i)) continue;
    kept.push_back(bookings[i]);
  }
  bookings = std::move(kept);

  std::vector<Job> work;
  for (const auto& id : replan) {
    auto jt = shop.jobs.find(id);
    if (jt == shop.jobs.end()) continue;
    Job job = jt->second;
    const auto& routing = shop.routing(job.product);
    Tick ready = std::max(job.release, now);
    std::size_t next = job.first_op;
    for (const auto& b : bookings) {
      if (b.job != id) continue;
      next = std::max(next, b.op_index + 1);
      ready = std::max(ready, b.span.end);
    }
    if (next >= routing.operations.size()) continue;
    job.first_op = next;
    job.release = ready;
    work.push_back(job);
  }
  detail::schedule_jobs(std::move(work), policy, shop, shop.schedule);
  summarize(shop.schedule);
  return {std::move(shop), std::move(replan)};
}

/// Removes every booking of `job` that starts at or after `now`, and the job
/// itself when nothing of it has started.
inline Shop drop_unstarted(Shop shop, const OrderId& job, Tick now) {
  auto& b = shop.schedule.bookings;
  b.erase(std::remove_if(b.begin(), b.end(), [&](const Booking& x) { return x.job == job && x.span.start >= now; }),
          b.end());
  const bool any_left = std::any_of(b.begin(), b.end(), [&](const Booking& x) { return x.job == job; });
  if (!any_left) shop.jobs.erase(job);
  summarize(shop.schedule);
  return shop;
}

/// Invariant checks for an emitted schedule; returns human-readable
/// violations (empty when consistent).
inline std::vector<std::string> check_schedule(const Shop& shop, const PlannerPolicy& policy) {
  std::vector<std::string> v;
  const auto& bs = shop.schedule.bookings;
  for (std::size_t i = 0; i < bs.size(); ++i) {
    for (std::size_t k = i + 1; k < bs.size(); ++k) {
      if (bs[i].cell == bs[k].cell && bs[i].span.overlaps(bs[k].span)) {
        v.push_back("overlap on " + bs[i].cell.str() + ": " + bs[i].job.str() + " / " + bs[k].job.str());
      }
    }
    if (auto it = shop.cells.find(bs[i].cell); it != shop.cells.end()) {
      for (const auto& down : it->second.downtime) {
        if (down.overlaps(bs[i].span)) v.push_back("booking of " + bs[i].job.str() + " overlaps downtime");
      }
    }
  }
  for (const auto& [id, job] : shop.jobs) {
    auto mine = shop.schedule.bookings_of(id);
    for (std::size_t k = 1; k < mine.size(); ++k) {
      if (mine[k]->span.start < mine[k - 1]->span.end) v.push_back("precedence broken in " + id.str());
    }
    if (policy.kind == PlannerPolicy::Kind::Assembly && !mine.empty() && mine.front()->op_index == 0 &&
        mine.front()->span.start < job.components_ready) {
      v.push_back("assembly started before components arrived for " + id.str());
    }
  }
  return v;
}

}  // namespace scm
