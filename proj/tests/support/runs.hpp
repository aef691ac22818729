#pragma once

// Helpers for running scenarios from the scenarios/ directory in tests.

#include <algorithm>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "scm/scm.hpp"

namespace support {

inline scm::ScenarioFile scenario(const std::string& name) {
  return scm::load_scenario(std::string(SCM_SCENARIO_DIR) + "/" + name);
}

inline std::unique_ptr<scm::sim::Simulation> run(scm::ScenarioFile s) {
  auto sim = std::make_unique<scm::sim::Simulation>(std::move(s));
  sim->run();
  return sim;
}

inline std::string log_text(const scm::sim::Simulation& sim) {
  std::ostringstream os;
  sim.write_log(os);
  return os.str();
}

inline std::size_t count(const scm::sim::Simulation& sim, scm::Performative p) {
  const auto& log = sim.world().mail.log();
  return static_cast<std::size_t>(
      std::count_if(log.begin(), log.end(), [&](const auto& m) { return m.performative == p; }));
}

/// Index of the first message at or after `from` with performative `p`.
inline std::optional<std::size_t> find(const scm::sim::Simulation& sim, scm::Performative p, std::size_t from = 0) {
  const auto& log = sim.world().mail.log();
  for (std::size_t i = from; i < log.size(); ++i)
    if (log[i].performative == p) return i;
  return std::nullopt;
}

inline scm::DisruptionSpec shipment_delay(const std::string& order, scm::Tick at, scm::Tick extra) {
  return scm::DisruptionSpec{scm::DisruptionKind::ShipmentDelay, order, {at, at + 1}, extra};
}

inline scm::DisruptionSpec cell_down(const std::string& cell, scm::Tick start, scm::Tick end) {
  return scm::DisruptionSpec{scm::DisruptionKind::CellDown, cell, {start, end}, 0};
}

/// First gap of at least `len` ticks between two bookings of `cell`.
inline std::optional<scm::Interval> idle_gap(const scm::Shop& shop, const scm::CellId& cell, scm::Tick len) {
  std::vector<scm::Interval> spans;
  for (const auto& b : shop.schedule.bookings)
    if (b.cell == cell) spans.push_back(b.span);
  std::sort(spans.begin(), spans.end(), [](const auto& a, const auto& b) { return a.start < b.start; });
  for (std::size_t i = 1; i < spans.size(); ++i)
    if (spans[i].start - spans[i - 1].end >= len) return scm::Interval{spans[i - 1].end, spans[i - 1].end + len};
  return std::nullopt;
}

}  // namespace support
