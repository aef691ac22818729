#pragma once

// Chain-neutral history store and the descriptive pattern analysis run over
// finalized tracking records.

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "scm/core_model.hpp"
#include "scm/tracking.hpp"

namespace scm {

struct HistoryEntry {
  /// Distinguishes histories of different runs when they are merged.
  std::string run;
  TrackingRecord record;
  Contract contract;

  Tick delivered_at() const {
    const auto& d = record.at(MilestoneKind::Delivered);
    return d.actual ? *d.actual : d.projected;
  }
  bool late() const { return record.status == TrackingStatus::Failed || delivered_at() > record.original_due; }
  Tick slip() const { return std::max<Tick>(0, delivered_at() - record.original_due); }
};

inline void to_json(json& j, const HistoryEntry& e) {
  j = json{{"run", e.run}, {"record", e.record}, {"contract", e.contract}};
}
inline void from_json(const json& j, HistoryEntry& e) {
  j.at("run").get_to(e.run);
  j.at("record").get_to(e.record);
  j.at("contract").get_to(e.contract);
}

/// Append-only; one entry per (run, order).
class HistoryStore {
 public:
  /// Returns false when the entry was already stored.
  bool record(HistoryEntry entry) {
    if (!entry.record.finalized()) fail(ErrorCode::NotFinalized, "order " + entry.record.order.str());
    auto key = std::make_pair(entry.run, entry.record.order);
    if (!keys_.insert(std::move(key)).second) return false;
    entries_.push_back(std::move(entry));
    return true;
  }

  std::size_t size() const noexcept { return entries_.size(); }
  const std::vector<HistoryEntry>& entries() const noexcept { return entries_; }

 private:
  std::vector<HistoryEntry> entries_;
  std::set<std::pair<std::string, OrderId>> keys_;
};

inline void to_json(json& j, const HistoryStore& s) { j = s.entries(); }

struct SupplierStats {
  EnterpriseId supplier;
  std::size_t total = 0;
  std::size_t late = 0;
  double frequency = 0.0;
  /// Mean slip over the late deliveries only.
  double mean_slip = 0.0;
};

struct CellStats {
  CellId cell;
  std::size_t disruptions = 0;
};

struct ProductStats {
  ProductId product;
  std::size_t total = 0;
  std::size_t late = 0;
  double rate = 0.0;
};

/// Lot sizes grouped by powers of two: bucket b holds sizes in [b, 2b).
struct LotBucket {
  Quantity bucket = 1;
  std::size_t count = 0;
  double mean_slip = 0.0;
};

struct Hindrance {
  EnterpriseId supplier;
  double frequency = 0.0;
  double mean_slip = 0.0;
};

struct PatternReport {
  std::vector<SupplierStats> suppliers;
  std::vector<CellStats> cells;
  std::vector<ProductStats> products;
  std::vector<LotBucket> lot_sizes;
  std::vector<Hindrance> ranking;
};

inline void to_json(json& j, const SupplierStats& s) {
  j = json{{"supplier", s.supplier}, {"total", s.total}, {"late", s.late}, {"frequency", s.frequency},
           {"mean_slip", s.mean_slip}};
}
inline void to_json(json& j, const CellStats& c) { j = json{{"cell", c.cell}, {"disruptions", c.disruptions}}; }
inline void to_json(json& j, const ProductStats& p) {
  j = json{{"product", p.product}, {"total", p.total}, {"late", p.late}, {"rate", p.rate}};
}
inline void to_json(json& j, const LotBucket& b) {
  j = json{{"bucket", b.bucket}, {"count", b.count}, {"mean_slip", b.mean_slip}};
}
inline void to_json(json& j, const Hindrance& h) {
  j = json{{"supplier", h.supplier}, {"frequency", h.frequency}, {"mean_slip", h.mean_slip}};
}
inline void to_json(json& j, const PatternReport& r) {
  j = json{{"suppliers", r.suppliers},
           {"cells", r.cells},
           {"products", r.products},
           {"lot_sizes", r.lot_sizes},
           {"ranking", r.ranking}};
}

inline Quantity lot_bucket(Quantity lot_size) {
  Quantity b = 1;
  while (b * 2 <= lot_size) b *= 2;
  return b;
}

/// Pure function of the store's entries.
inline PatternReport analyze(const std::vector<HistoryEntry>& entries) {
  struct Acc {
    std::size_t total = 0;
    std::size_t late = 0;
    Tick late_slip = 0;
    Tick all_slip = 0;
  };
  std::map<EnterpriseId, Acc> by_supplier;
  std::map<CellId, std::size_t> by_cell;
  std::map<ProductId, Acc> by_product;
  std::map<Quantity, Acc> by_lot;

  for (const auto& e : entries) {
    const bool late = e.late();
    const Tick slip = e.slip();
    auto bump = [&](Acc& a) {
      ++a.total;
      a.all_slip += slip;
      if (late) {
        ++a.late;
        a.late_slip += slip;
      }
    };
    bump(by_supplier[e.record.seller]);
    bump(by_product[e.record.product]);
    bump(by_lot[lot_bucket(e.record.lot_size)]);
    for (const auto& c : e.record.disrupted_cells) ++by_cell[c];
  }

  PatternReport r;
  for (const auto& [id, a] : by_supplier) {
    SupplierStats s{id, a.total, a.late, static_cast<double>(a.late) / static_cast<double>(a.total), 0.0};
    if (a.late > 0) s.mean_slip = static_cast<double>(a.late_slip) / static_cast<double>(a.late);
    r.suppliers.push_back(s);
    if (a.late > 0) r.ranking.push_back({id, s.frequency, s.mean_slip});
  }
  for (const auto& [id, n] : by_cell) r.cells.push_back({id, n});
  for (const auto& [id, a] : by_product) {
    r.products.push_back({id, a.total, a.late, static_cast<double>(a.late) / static_cast<double>(a.total)});
  }
  for (const auto& [b, a] : by_lot) {
    r.lot_sizes.push_back({b, a.total, static_cast<double>(a.all_slip) / static_cast<double>(a.total)});
  }
  std::sort(r.ranking.begin(), r.ranking.end(), [](const Hindrance& a, const Hindrance& b) {
    if (a.frequency != b.frequency) return a.frequency > b.frequency;
    if (a.mean_slip != b.mean_slip) return a.mean_slip > b.mean_slip;
    return a.supplier < b.supplier;
  });
  return r;
}

inline PatternReport analyze(const HistoryStore& store) { return analyze(store.entries()); }

/// Collects history entries from a parsed document: a report (its `history`
/// section), a bare array of entries, or a single entry.
inline void collect_history(const json& doc, HistoryStore& store) {
  if (doc.is_object() && doc.contains("history")) {
    collect_history(doc["history"], store);
  } else if (doc.is_array()) {
    for (const auto& e : doc) store.record(e.get<HistoryEntry>());
  } else {
    store.record(doc.get<HistoryEntry>());
  }
}

}  // namespace scm
