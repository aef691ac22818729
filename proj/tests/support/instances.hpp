#pragma once

// Random small shop instances, in both the library's and the oracle's shape.

#include <random>
#include <string>
#include <vector>

#include "oracles/oracles.hpp"
#include "scm/engine.hpp"
#include "scm/planner.hpp"

namespace support {

struct Instance {
  int cells = 1;
  std::vector<oracle::JobSpec> jobs;
};

inline std::string cell_name(int c) { return "M" + std::to_string(c); }

/// At most `max_ops` operations spread over 1-4 jobs, on 1..max_cells cells.
inline Instance random_instance(std::mt19937_64& rng, int max_ops, int max_cells) {
  auto pick = [&](int lo, int hi) { return static_cast<int>(scm::sim::uniform_int(rng, lo, hi)); };
  Instance in;
  in.cells = pick(1, max_cells);
  int budget = pick(1, max_ops);
  const int njobs = pick(1, std::min(4, budget));
  for (int j = 0; j < njobs; ++j) {
    oracle::JobSpec job;
    job.id = "J" + std::to_string(j);
    const int left_jobs = njobs - j - 1;
    const int nops = j + 1 == njobs ? budget : pick(1, budget - left_jobs);
    budget -= nops;
    for (int k = 0; k < nops; ++k) {
      oracle::Op op;
      for (int c = 0; c < in.cells; ++c)
        if (pick(0, 1) == 1) op.cells.push_back(c);
      if (op.cells.empty()) op.cells.push_back(pick(0, in.cells - 1));
      op.unit = pick(1, 3);
      op.setup = pick(0, 2);
      op.rate = pick(1, 9);
      job.ops.push_back(op);
    }
    job.qty = pick(1, 3);
    job.release = pick(0, 6);
    job.due = pick(job.release + 1, 40);
    in.jobs.push_back(job);
  }
  return in;
}

inline scm::Shop to_shop(const Instance& in) {
  scm::Shop shop;
  for (int c = 0; c < in.cells; ++c) shop.cells[scm::CellId(cell_name(c))] = scm::Cell{scm::CellId(cell_name(c)), {}};
  for (const auto& j : in.jobs) {
    scm::Routing r;
    r.product = scm::ProductId("p" + j.id);
    for (std::size_t k = 0; k < j.ops.size(); ++k) {
      scm::OperationSpec op;
      op.id = scm::OperationId("op" + std::to_string(k));
      for (int c : j.ops[k].cells) op.eligible_cells.push_back(scm::CellId(cell_name(c)));
      op.unit_time = j.ops[k].unit;
      op.setup_time = j.ops[k].setup;
      op.cost_rate = j.ops[k].rate;
      r.operations.push_back(op);
    }
    shop.routings[r.product] = r;
  }
  return shop;
}

inline std::vector<scm::Job> to_jobs(const Instance& in) {
  std::vector<scm::Job> out;
  for (const auto& j : in.jobs) {
    scm::Job job;
    job.id = scm::OrderId(j.id);
    job.product = scm::ProductId("p" + j.id);
    job.quantity = j.qty;
    job.release = j.release;
    job.due = j.due;
    job.members = {job.id};
    out.push_back(job);
  }
  return out;
}

/// Library bookings in the oracle's shape, sorted the same way.
inline std::vector<oracle::Slot> to_slots(const scm::Schedule& s) {
  std::vector<oracle::Slot> out;
  for (const auto& b : s.bookings) {
    out.push_back({std::stoi(b.cell.str().substr(1)), b.job.str(), static_cast<int>(b.op_index),
                   static_cast<int>(b.span.start), static_cast<int>(b.span.end), b.cost});
  }
  auto key = [](const oracle::Slot& x) { return std::tie(x.job, x.op); };
  std::sort(out.begin(), out.end(), [&](const auto& a, const auto& b) { return key(a) < key(b); });
  return out;
}

inline std::vector<oracle::Slot> sorted(std::vector<oracle::Slot> v) {
  auto key = [](const oracle::Slot& x) { return std::tie(x.job, x.op); };
  std::sort(v.begin(), v.end(), [&](const auto& a, const auto& b) { return key(a) < key(b); });
  return v;
}

}  // namespace support
