#pragma once

// Chain metrics: order-variance amplification between echelons.

#include <optional>
#include <span>
#include <string>

#include "scm/core_model.hpp"

namespace scm {

struct Moments {
  double mean = 0.0;
  /// Population variance.
  double variance = 0.0;
};

inline Moments moments(std::span<const double> xs) {
  if (xs.empty()) fail(ErrorCode::EmptyWindow, "series is empty");
  double sum = 0.0;
  for (double x : xs) sum += x;
  const double mean = sum / static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, ss / static_cast<double>(xs.size())};
}

enum class BullwhipFlag { None, ConstantDemand, ZeroMean };

NLOHMANN_JSON_SERIALIZE_ENUM(BullwhipFlag, {
                                               {BullwhipFlag::None, nullptr},
                                               {BullwhipFlag::ConstantDemand, "constant_demand"},
                                               {BullwhipFlag::ZeroMean, "zero_mean"},
                                           })

struct BullwhipRatio {
  /// Empty when the ratio is undefined; `flag` says why.
  std::optional<double> value;
  BullwhipFlag flag = BullwhipFlag::None;
};

inline void to_json(json& j, const BullwhipRatio& b) {
  j = json{{"value", b.value ? json(*b.value) : json(nullptr)}, {"flag", b.flag}};
}

/// (Var(up)/mean(up)^2) / (Var(demand)/mean(demand)^2), population variance.
/// Two constant series give 1. A constant demand against a varying upstream,
/// or a series with zero mean, is undefined.
inline BullwhipRatio bullwhip_ratio(std::span<const double> upstream, std::span<const double> demand) {
  if (upstream.size() != demand.size()) fail(ErrorCode::InvalidArgument, "series lengths differ");
  const auto u = moments(upstream);
  const auto d = moments(demand);
  if (u.variance == 0.0 && d.variance == 0.0) return {1.0, BullwhipFlag::None};
  if (u.mean == 0.0 || d.mean == 0.0) return {{}, BullwhipFlag::ZeroMean};
  if (d.variance == 0.0) return {{}, BullwhipFlag::ConstantDemand};
  return {(u.variance / (u.mean * u.mean)) / (d.variance / (d.mean * d.mean)), BullwhipFlag::None};
}

}  // namespace scm
