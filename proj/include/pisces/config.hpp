#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pisces/aggregation.hpp"
#include "pisces/core.hpp"
#include "pisces/selection.hpp"
#include "pisces/tasks.hpp"

namespace pisces {

enum class PartitionScheme { Dirichlet, LatencySized, Iid };

inline std::string_view to_string(PartitionScheme s) {
  switch (s) {
    case PartitionScheme::Dirichlet: return "dirichlet";
    case PartitionScheme::LatencySized: return "latency_sized";
    case PartitionScheme::Iid: return "iid";
  }
  return "dirichlet";
}

struct TaskConfig {
  TaskKind kind = TaskKind::LinearRegression;
  std::size_t dim = 10;
  int n_classes = 10;
  std::size_t n_samples = 2000;
  std::size_t holdout_samples = 500;
  double noise = 0.0;
  double corruption_fraction = 0.0;
  double separation = 1.0;
  double spread = 1.0;

  bool operator==(const TaskConfig&) const = default;
};

struct PartitionConfig {
  PartitionScheme scheme = PartitionScheme::Dirichlet;
  std::vector<double> concentration;  // empty: 1.0 for every class; one entry: used for every class

  bool operator==(const PartitionConfig&) const = default;
};

struct LatencyConfig {
  double zipf_a = 1.2;
  double base_latency = 100.0;
  double jitter = 0.0;         // multiplicative uniform in [1 - j, 1 + j]
  double profile_noise = 0.0;  // multiplicative error on what the profiler records

  bool operator==(const LatencyConfig&) const = default;
};

struct SelectionParams {
  double beta = 0.5;
  std::size_t staleness_window = 5;
  double oort_alpha = 2.0;
  double oort_T = 0.0;  // 0: latency of the median-rank client
  std::optional<bool> blacklisting;  // unset: on for the pisces policy only
  int credits = 3;
  std::size_t pool_window = 5;
  std::optional<double> dbscan_eps;
  std::optional<std::size_t> dbscan_min_pts;
  std::size_t min_pool = 3;

  bool operator==(const SelectionParams&) const = default;
};

struct AggregationConfig {
  AggregationMode mode = AggregationMode::Pace;
  std::size_t bound = 0;  // b; 0: equal to the concurrency limit
  std::size_t goal = 0;   // K; 0: 20% of the concurrency limit (at least 1)

  bool operator==(const AggregationConfig&) const = default;
};

struct TrainingConfig {
  std::size_t local_steps = 5;
  std::vector<double> learning_rate{0.05};
  std::size_t batch_size = 32;

  bool operator==(const TrainingConfig&) const = default;
};

struct LoopConfig {
  double tick = 0.0;  // 0: base_latency / 100
  double horizon = 5000.0;
  std::optional<double> target_loss;
  std::size_t eval_every = 10;  // ticks between hold-out evaluations

  bool operator==(const LoopConfig&) const = default;
};

struct ScenarioConfig {
  std::size_t n_clients = 0;
  std::uint64_t seed = 1;
  Policy policy = Policy::Pisces;
  std::size_t concurrency = 20;
  TaskConfig task;
  PartitionConfig partition;
  LatencyConfig latency;
  SelectionParams selection;
  AggregationConfig aggregation;
  TrainingConfig training;
  LoopConfig loop;

  bool operator==(const ScenarioConfig&) const = default;

  bool blacklisting_enabled() const { return selection.blacklisting.value_or(policy == Policy::Pisces); }
};

/// Fills every derived default so the config is fully explicit.
inline ScenarioConfig resolve(ScenarioConfig c) {
  if (c.aggregation.bound == 0) c.aggregation.bound = c.concurrency;
  if (c.aggregation.goal == 0) {
    c.aggregation.goal = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(c.concurrency))));
  }
  if (c.loop.tick == 0.0) c.loop.tick = c.latency.base_latency / 100.0;
  if (c.partition.concentration.size() <= 1 && c.task.n_classes > 0) {
    const double a = c.partition.concentration.empty() ? 1.0 : c.partition.concentration[0];
    c.partition.concentration.assign(static_cast<std::size_t>(c.task.n_classes), a);
  }
  if (c.selection.oort_T == 0.0 && c.n_clients > 0) {
    const double median_rank = std::ceil(static_cast<double>(c.n_clients) / 2.0);
    c.selection.oort_T = c.latency.base_latency * std::pow(median_rank, -c.latency.zipf_a);
  }
  if (!c.selection.blacklisting) c.selection.blacklisting = c.policy == Policy::Pisces;
  return c;
}

/// Throws ValidationError naming the first offending field.
inline void validate(const ScenarioConfig& c) {
  auto fail = [](const std::string& field, const std::string& why = "") {
    throw Error(Errc::ValidationError, why.empty() ? field : field + ": " + why);
  };
  if (c.n_clients < 1) fail("n_clients", "must be >= 1");
  if (c.concurrency < 1) fail("concurrency", "must be >= 1");
  if (c.task.dim < 1) fail("task.dim", "must be >= 1");
  if (c.task.n_classes < 1) fail("task.n_classes", "must be >= 1");
  if (c.task.kind == TaskKind::SoftmaxClassification && c.task.n_classes < 2) fail("task.n_classes", "must be >= 2");
  if (c.task.n_samples < 1) fail("task.n_samples", "must be >= 1");
  if (c.task.holdout_samples < 1) fail("task.holdout_samples", "must be >= 1");
  if (c.task.noise < 0.0) fail("task.noise", "must be >= 0");
  if (c.task.corruption_fraction < 0.0 || c.task.corruption_fraction > 1.0) fail("task.corruption_fraction", "must be in [0, 1]");
  if (!(c.task.spread > 0.0)) fail("task.spread", "must be > 0");
  if (c.task.separation < 0.0) fail("task.separation", "must be >= 0");
  if (c.partition.concentration.size() != static_cast<std::size_t>(c.task.n_classes)) {
    fail("partition.concentration", "needs one entry per class");
  }
  for (double a : c.partition.concentration) {
    if (!(a > 0.0)) fail("partition.concentration", "entries must be > 0");
  }
  if (!(c.latency.zipf_a > 0.0)) fail("latency.zipf_a", "must be > 0");
  if (!(c.latency.base_latency > 0.0)) fail("latency.base_latency", "must be > 0");
  if (c.latency.jitter < 0.0 || c.latency.jitter >= 1.0) fail("latency.jitter", "must be in [0, 1)");
  if (c.latency.profile_noise < 0.0 || c.latency.profile_noise >= 1.0) fail("latency.profile_noise", "must be in [0, 1)");
  if (c.policy == Policy::Pisces && !(c.selection.beta > 0.0)) fail("selection.beta", "must be > 0");
  if (c.selection.staleness_window < 1) fail("selection.staleness_window", "must be >= 1");
  if (c.selection.oort_alpha < 0.0) fail("selection.oort_alpha", "must be >= 0");
  if (!(c.selection.oort_T > 0.0)) fail("selection.oort_T", "must be > 0");
  if (c.selection.credits < 1) fail("selection.credits", "must be >= 1");
  if (c.selection.pool_window < 1) fail("selection.pool_window", "must be >= 1");
  if (c.selection.dbscan_eps && !(*c.selection.dbscan_eps > 0.0)) fail("selection.dbscan_eps", "must be > 0");
  if (c.selection.dbscan_min_pts && *c.selection.dbscan_min_pts < 1) fail("selection.dbscan_min_pts", "must be >= 1");
  if (c.aggregation.bound < 1) fail("aggregation.b", "must be >= 1");
  if (c.aggregation.goal < 1) fail("aggregation.K", "must be >= 1");
  if (c.training.local_steps < 1) fail("training.local_steps", "must be >= 1");
  if (c.training.batch_size < 1) fail("training.batch_size", "must be >= 1");
  if (c.training.learning_rate.size() != 1 && c.training.learning_rate.size() != c.training.local_steps) {
    fail("training.learning_rate", "needs 1 or local_steps entries");
  }
  for (double e : c.training.learning_rate) {
    if (!(e > 0.0)) fail("training.learning_rate", "entries must be > 0");
  }
  if (!(c.loop.tick > 0.0)) fail("loop.tick", "must be > 0");
  if (!(c.loop.horizon >= 0.0) || !std::isfinite(c.loop.horizon)) fail("loop.horizon", "must be finite and >= 0");
  if (c.loop.eval_every < 1) fail("loop.eval_every", "must be >= 1");
}

}  // namespace pisces
