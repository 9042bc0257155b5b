#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pisces/core.hpp"

namespace pisces {

enum class AggregationMode { Pace, Buffered, Sync };

inline std::string_view to_string(AggregationMode m) {
  switch (m) {
    case AggregationMode::Pace: return "pace";
    case AggregationMode::Buffered: return "buffered";
    case AggregationMode::Sync: return "sync";
  }
  return "pace";
}

struct LocalUpdate {
  ClientId client_id = 0;
  Version base_version = 0;
  std::vector<double> delta;
  std::size_t sample_count = 1;
  double mean_loss = 0.0;
  SimTime report_time = 0.0;
};

struct AggregationEvent {
  SimTime time = 0.0;
  Version new_version = 0;
  std::optional<double> interval;  // pace mode only
  std::vector<ClientId> contributors;
  std::vector<Version> staleness;  // parallel to contributors
};

/// Aggregations between a download at `base_version` and the application
/// that produced `applied_version`, not counting that application itself.
inline Version staleness_of(Version base_version, Version applied_version) {
  if (applied_version < base_version + 1) {
    throw Error(Errc::VersionOrderViolation,
                "applied " + std::to_string(applied_version) + " <= base " + std::to_string(base_version));
  }
  return applied_version - 1 - base_version;
}

struct PaceDecision {
  bool aggregate = false;
  double interval = std::numeric_limits<double>::infinity();
};

/// Adaptive pace control. The interval is the slowest running client's
/// profiled latency divided by the staleness bound; aggregation is due once
/// strictly more than one interval has elapsed since the last one.
inline PaceDecision pace_decision(std::span<const double> running_latencies, std::size_t bound, SimTime t_last,
                                  SimTime now) {
  if (bound == 0) throw Error(Errc::InvalidBound, "pace_decision: b must be >= 1");
  if (running_latencies.empty()) return {};
  double l_max = running_latencies.front();
  for (double l : running_latencies) l_max = std::max(l_max, l);
  const double interval = l_max / static_cast<double>(bound);
  return {now - t_last > interval, interval};
}

inline bool buffered_decision(std::size_t buffer_size, std::size_t goal) {
  if (goal == 0) throw Error(Errc::InvalidGoal, "buffered_decision: K must be >= 1");
  return buffer_size >= goal;
}

inline bool sync_decision(std::size_t outstanding, std::size_t buffer_size) {
  return outstanding == 0 && buffer_size > 0;
}

struct AggregationResult {
  ModelVector model;
  AggregationEvent event;
};

/// FedAvg with server rate 1: adds the sample-weighted mean of the buffered
/// deltas and bumps the version.
inline AggregationResult apply_aggregation(const ModelVector& global, std::span<const LocalUpdate> buffer,
                                           SimTime now = 0.0, std::optional<double> interval = std::nullopt) {
  if (buffer.empty()) throw Error(Errc::EmptyBuffer, "apply_aggregation");
  std::vector<std::vector<double>> deltas;
  std::vector<double> weights;
  deltas.reserve(buffer.size());
  weights.reserve(buffer.size());
  for (const auto& u : buffer) {
    if (u.base_version > global.version) {
      throw Error(Errc::VersionOrderViolation, "update from the future (client " + std::to_string(u.client_id) + ")");
    }
    if (u.delta.size() != global.dim()) throw Error(Errc::DimensionMismatch, "apply_aggregation");
    deltas.push_back(u.delta);
    weights.push_back(static_cast<double>(u.sample_count));
  }
  const auto mean = weighted_mean(deltas, weights);

  AggregationResult out;
  out.model.weights = global.weights;
  for (std::size_t k = 0; k < mean.size(); ++k) out.model.weights[k] += mean[k];
  out.model.version = global.version + 1;
  out.event.time = now;
  out.event.new_version = out.model.version;
  out.event.interval = interval;
  for (const auto& u : buffer) {
    out.event.contributors.push_back(u.client_id);
    out.event.staleness.push_back(staleness_of(u.base_version, out.model.version));
  }
  return out;
}

}  // namespace pisces
