#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pisces/core.hpp"
#include "pisces/rng.hpp"

namespace pisces {

enum class TaskKind { LinearRegression, SoftmaxClassification };

inline std::string_view to_string(TaskKind k) {
  return k == TaskKind::LinearRegression ? "linear_regression" : "softmax_classification";
}

struct Sample {
  std::vector<double> x;
  int label = 0;       // class id; for regression the feature cluster the sample came from
  double target = 0;   // regression target (unused for classification)
};

struct Dataset {
  TaskKind kind = TaskKind::LinearRegression;
  std::size_t dim = 0;
  int n_classes = 1;
  std::vector<Sample> samples;

  std::size_t size() const noexcept { return samples.size(); }
  bool empty() const noexcept { return samples.empty(); }

  /// Regression: one weight per feature. Classification: row-major
  /// n_classes x dim weight matrix.
  std::size_t model_dim() const noexcept {
    return kind == TaskKind::LinearRegression ? dim : dim * static_cast<std::size_t>(n_classes);
  }

  std::vector<int> labels() const {
    std::vector<int> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(s.label);
    return out;
  }

  Dataset subset(std::span<const std::size_t> idx) const {
    Dataset d{kind, dim, n_classes, {}};
    d.samples.reserve(idx.size());
    for (std::size_t i : idx) d.samples.push_back(samples[i]);
    return d;
  }
};

// ---------------------------------------------------------------------------
// Losses and gradients

inline double sample_loss(const Dataset& d, std::span<const double> w, const Sample& s) {
  if (d.kind == TaskKind::LinearRegression) {
    const double r = dot(w, s.x) - s.target;
    return r * r;
  }
  const std::size_t dim = d.dim;
  double zmax = -std::numeric_limits<double>::infinity();
  std::vector<double> z(static_cast<std::size_t>(d.n_classes));
  for (int c = 0; c < d.n_classes; ++c) {
    z[c] = dot(w.subspan(c * dim, dim), s.x);
    zmax = std::max(zmax, z[c]);
  }
  double sum = 0.0;
  for (double zc : z) sum += std::exp(zc - zmax);
  return std::log(sum) + zmax - z[static_cast<std::size_t>(s.label)];
}

/// Adds `scale * grad(loss_s)` to `grad`.
inline void accumulate_gradient(const Dataset& d, std::span<const double> w, const Sample& s,
                                double scale, std::span<double> grad) {
  if (d.kind == TaskKind::LinearRegression) {
    const double r = dot(w, s.x) - s.target;
    const double f = 2.0 * r * scale;
    for (std::size_t k = 0; k < d.dim; ++k) grad[k] += f * s.x[k];
    return;
  }
  const std::size_t dim = d.dim;
  std::vector<double> z(static_cast<std::size_t>(d.n_classes));
  double zmax = -std::numeric_limits<double>::infinity();
  for (int c = 0; c < d.n_classes; ++c) {
    z[c] = dot(w.subspan(c * dim, dim), s.x);
    zmax = std::max(zmax, z[c]);
  }
  double sum = 0.0;
  for (double& zc : z) {
    zc = std::exp(zc - zmax);
    sum += zc;
  }
  for (int c = 0; c < d.n_classes; ++c) {
    const double p = z[c] / sum - (c == s.label ? 1.0 : 0.0);
    const double f = p * scale;
    double* row = grad.data() + c * dim;
    for (std::size_t k = 0; k < dim; ++k) row[k] += f * s.x[k];
  }
}

/// Gradient of the mean loss over `d`.
inline std::vector<double> full_gradient(const Dataset& d, std::span<const double> w) {
  std::vector<double> g(d.model_dim(), 0.0);
  const double scale = 1.0 / static_cast<double>(d.size());
  for (const auto& s : d.samples) accumulate_gradient(d, w, s, scale, g);
  return g;
}

inline double mean_loss(const Dataset& d, std::span<const double> w) {
  double acc = 0.0;
  for (const auto& s : d.samples) acc += sample_loss(d, w, s);
  return acc / static_cast<double>(d.size());
}

/// Mean loss of `model` on a hold-out set.
inline double evaluate(const ModelVector& model, const Dataset& holdout) {
  if (holdout.empty()) throw Error(Errc::EmptyHoldout, "evaluate");
  if (model.dim() != holdout.model_dim()) throw Error(Errc::DimensionMismatch, "evaluate");
  return mean_loss(holdout, model.weights);
}

// ---------------------------------------------------------------------------
// Synthetic tasks

struct TaskOptions {
  double separation = 1.0;   // std-dev of class cluster centres
  double spread = 1.0;       // within-cluster std-dev
};

/// Generating process of a synthetic task. Regression data is drawn from
/// Gaussian clusters (one per class id) with target w*.x + noise;
/// classification data is the same clusters labelled by cluster id.
struct TaskModel {
  TaskKind kind = TaskKind::LinearRegression;
  std::size_t dim = 0;
  int n_classes = 1;
  double noise = 0.0;
  TaskOptions options;
  std::vector<double> true_weights;               // regression only
  std::vector<std::vector<double>> class_means;

  Dataset draw(std::size_t n, RngStream& rng) const {
    Dataset d{kind, dim, n_classes, {}};
    d.samples.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      Sample s;
      s.label = static_cast<int>(rng.below(static_cast<std::uint64_t>(n_classes)));
      s.x.resize(dim);
      const auto& mu = class_means[static_cast<std::size_t>(s.label)];
      for (std::size_t k = 0; k < dim; ++k) s.x[k] = mu[k] + options.spread * rng.normal();
      if (kind == TaskKind::LinearRegression) {
        s.target = dot(true_weights, s.x);
        if (noise > 0.0) s.target += noise * rng.normal();
      } else {
        s.target = s.label;
      }
      d.samples.push_back(std::move(s));
    }
    return d;
  }
};

struct SyntheticTask {
  Dataset data;
  /// Regression: the generating weights w*. Classification: the class means,
  /// flattened row-major (n_classes x dim).
  std::vector<double> optimum;
  TaskModel model;
};

inline TaskModel make_task_model(TaskKind kind, int n_classes, std::size_t dim, double noise,
                                 RngStream rng, TaskOptions options = {}) {
  if (dim < 1 || n_classes < 1 || noise < 0.0 || !(options.spread > 0.0) || options.separation < 0.0) {
    throw Error(Errc::InvalidShape, "make_task_model");
  }
  if (kind == TaskKind::SoftmaxClassification && n_classes < 2) {
    throw Error(Errc::InvalidShape, "classification needs at least two classes");
  }
  TaskModel m{kind, dim, n_classes, noise, options, {}, {}};
  RngStream centres = rng.derive("centres");
  m.class_means.assign(static_cast<std::size_t>(n_classes), std::vector<double>(dim));
  for (auto& mu : m.class_means) {
    for (double& v : mu) v = options.separation * centres.normal();
  }
  if (kind == TaskKind::LinearRegression) {
    RngStream wr = rng.derive("weights");
    m.true_weights.resize(dim);
    for (double& v : m.true_weights) v = wr.normal();
  }
  return m;
}

inline SyntheticTask make_synthetic_task(TaskKind kind, int n_classes, std::size_t dim,
                                         std::size_t n_samples, double noise, std::uint64_t seed,
                                         TaskOptions options = {}) {
  if (n_samples < 1) throw Error(Errc::InvalidShape, "n_samples must be >= 1");
  RngStream root(seed, "task");
  SyntheticTask t;
  t.model = make_task_model(kind, n_classes, dim, noise, root, options);
  RngStream draws = root.derive("samples");
  t.data = t.model.draw(n_samples, draws);
  if (kind == TaskKind::LinearRegression) {
    t.optimum = t.model.true_weights;
  } else {
    for (const auto& mu : t.model.class_means) t.optimum.insert(t.optimum.end(), mu.begin(), mu.end());
  }
  return t;
}

/// Label corruption: regression targets are negated, class labels are
/// replaced by a uniformly drawn different class.
inline void flip_labels(Dataset& d, RngStream& rng) {
  for (auto& s : d.samples) {
    if (d.kind == TaskKind::LinearRegression) {
      s.target = -s.target;
    } else {
      const auto shift = 1 + rng.below(static_cast<std::uint64_t>(d.n_classes - 1));
      s.label = static_cast<int>((static_cast<std::uint64_t>(s.label) + shift) %
                                 static_cast<std::uint64_t>(d.n_classes));
      s.target = s.label;
    }
  }
}

// ---------------------------------------------------------------------------
// Partitioning

struct PartitionSpec {
  std::size_t n_clients = 1;
  std::vector<double> concentration;  // one entry per class
  RngStream rng;
};

using Partition = std::vector<std::vector<std::size_t>>;  // client -> sample indices

namespace detail {

inline void check_partition_inputs(std::span<const int> labels, std::size_t n_clients,
                                   std::span<const double> concentration) {
  if (labels.empty()) throw Error(Errc::EmptyLabels, "partition");
  if (n_clients < 1) throw Error(Errc::InvalidParams, "n_clients must be >= 1");
  if (concentration.empty()) throw Error(Errc::InvalidConcentration, "empty concentration");
  for (double a : concentration) {
    if (!(a > 0.0) || !std::isfinite(a)) throw Error(Errc::InvalidConcentration, "entries must be > 0");
  }
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= concentration.size()) {
      throw Error(Errc::InvalidConcentration, "label " + std::to_string(l) + " outside class range");
    }
  }
}

/// Splits `total` into integer counts proportional to `shares` (largest remainder).
inline std::vector<std::size_t> apportion(std::size_t total, std::span<const double> shares) {
  double sum = 0.0;
  for (double s : shares) sum += s;
  std::vector<std::size_t> counts(shares.size(), 0);
  std::vector<std::pair<double, std::size_t>> rema;
  std::size_t used = 0;
  for (std::size_t i = 0; i < shares.size(); ++i) {
    const double exact = static_cast<double>(total) * shares[i] / sum;
    counts[i] = static_cast<std::size_t>(std::floor(exact));
    used += counts[i];
    rema.emplace_back(exact - static_cast<double>(counts[i]), i);
  }
  std::stable_sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; used < total; ++k, ++used) ++counts[rema[k % rema.size()].second];
  return counts;
}

}  // namespace detail

/// Label-based Dirichlet (LDA) partition: for every class c the class's
/// samples are split across clients with proportions ~ Dir(alpha_c, ..., alpha_c).
inline Partition dirichlet_partition(std::span<const int> labels, const PartitionSpec& spec) {
  detail::check_partition_inputs(labels, spec.n_clients, spec.concentration);
  const std::size_t n_classes = spec.concentration.size();
  Partition out(spec.n_clients);
  RngStream rng = spec.rng.derive("dirichlet_partition");
  for (std::size_t c = 0; c < n_classes; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (static_cast<std::size_t>(labels[i]) == c) members.push_back(i);
    }
    const std::vector<double> alpha(spec.n_clients, spec.concentration[c]);
    const auto props = rng.dirichlet(alpha);
    if (members.empty()) continue;
    const auto order = rng.permutation(members.size());
    const auto counts = detail::apportion(members.size(), props);
    std::size_t pos = 0;
    for (std::size_t k = 0; k < spec.n_clients; ++k) {
      for (std::size_t j = 0; j < counts[k]; ++j) out[k].push_back(members[order[pos++]]);
    }
  }
  for (auto& idx : out) std::sort(idx.begin(), idx.end());
  return out;
}

/// Partition whose client sizes follow `size_weights` (e.g. proportional to
/// latency). Each client's label mix is drawn from Dir(alpha_i * concentration)
/// with alpha_i = n * share_i, so small clients get more skewed label
/// distributions. Exhausted classes are dropped from a client's mix.
inline Partition sized_dirichlet_partition(std::span<const int> labels, std::span<const double> size_weights,
                                           std::span<const double> concentration, RngStream rng) {
  detail::check_partition_inputs(labels, size_weights.size(), concentration);
  for (double w : size_weights) {
    if (!(w > 0.0)) throw Error(Errc::InvalidParams, "size weights must be > 0");
  }
  const std::size_t n_clients = size_weights.size();
  const std::size_t n_classes = concentration.size();
  std::vector<std::vector<std::size_t>> pools(n_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) pools[static_cast<std::size_t>(labels[i])].push_back(i);
  RngStream r = rng.derive("sized_dirichlet_partition");
  for (auto& pool : pools) {
    const auto order = r.permutation(pool.size());
    std::vector<std::size_t> shuffled(pool.size());
    for (std::size_t j = 0; j < pool.size(); ++j) shuffled[j] = pool[order[j]];
    pool = std::move(shuffled);
  }
  const auto quotas = detail::apportion(labels.size(), size_weights);
  double weight_sum = 0.0;
  for (double w : size_weights) weight_sum += w;

  Partition out(n_clients);
  for (std::size_t k = 0; k < n_clients; ++k) {
    const double scale = static_cast<double>(n_clients) * size_weights[k] / weight_sum;
    std::vector<double> alpha(n_classes);
    for (std::size_t c = 0; c < n_classes; ++c) alpha[c] = concentration[c] * scale;
    auto mix = r.dirichlet(alpha);
    for (std::size_t j = 0; j < quotas[k]; ++j) {
      double mass = 0.0;
      for (std::size_t c = 0; c < n_classes; ++c) {
        if (!pools[c].empty()) mass += mix[c];
      }
      std::size_t chosen = n_classes;
      if (mass > 0.0) {
        double u = r.uniform() * mass;
        for (std::size_t c = 0; c < n_classes; ++c) {
          if (pools[c].empty()) continue;
          chosen = c;
          if (u < mix[c]) break;
          u -= mix[c];
        }
      } else {
        for (std::size_t c = 0; c < n_classes; ++c) {
          if (!pools[c].empty()) {
            chosen = c;
            break;
          }
        }
      }
      out[k].push_back(pools[chosen].back());
      pools[chosen].pop_back();
    }
    std::sort(out[k].begin(), out[k].end());
  }
  return out;
}

inline void write_partition_csv(std::ostream& os, const Partition& partition, std::span<const int> labels) {
  std::vector<std::size_t> owner(labels.size(), 0);
  for (std::size_t k = 0; k < partition.size(); ++k) {
    for (std::size_t i : partition[k]) owner[i] = k;
  }
  os << "sample_id,client_id,label\n";
  for (std::size_t i = 0; i < labels.size(); ++i) os << i << ',' << owner[i] << ',' << labels[i] << '\n';
}

// ---------------------------------------------------------------------------
// Local training

struct TrainResult {
  std::vector<double> delta;              // w_Q - w_base
  std::vector<double> per_sample_losses;  // evaluated at w_base, one per sample
  std::size_t sample_count = 0;
  std::size_t q_steps = 0;
};

/// Q steps of mini-batch SGD from `base`. `eta` holds either one rate used for
/// every step or exactly Q per-step rates. Mini-batches walk a shuffled order
/// of the local data, reshuffling when it is exhausted; a batch size of at
/// least |B| means full-batch steps.
inline TrainResult local_sgd(const ModelVector& base, const Dataset& data, std::size_t q_steps,
                             std::span<const double> eta, std::size_t batch_size, RngStream rng) {
  if (data.empty()) throw Error(Errc::EmptyDataset, "local_sgd");
  if (q_steps < 1) throw Error(Errc::InvalidParams, "local_sgd: Q must be >= 1");
  if (batch_size < 1) throw Error(Errc::InvalidParams, "local_sgd: batch_size must be >= 1");
  if (eta.empty() || (eta.size() != 1 && eta.size() != q_steps)) {
    throw Error(Errc::InvalidParams, "local_sgd: eta schedule must have 1 or Q entries");
  }
  for (double e : eta) {
    if (!(e > 0.0) || !std::isfinite(e)) throw Error(Errc::NonPositiveLearningRate, "local_sgd");
  }
  if (base.dim() != data.model_dim()) throw Error(Errc::DimensionMismatch, "local_sgd");

  TrainResult out;
  out.sample_count = data.size();
  out.q_steps = q_steps;
  out.per_sample_losses.reserve(data.size());
  for (const auto& s : data.samples) out.per_sample_losses.push_back(sample_loss(data, base.weights, s));

  std::vector<double> w = base.weights;
  std::vector<double> grad(w.size());
  const std::size_t n = data.size();
  const bool full_batch = batch_size >= n;
  std::vector<std::size_t> order;
  std::size_t cursor = n;
  for (std::size_t q = 0; q < q_steps; ++q) {
    std::fill(grad.begin(), grad.end(), 0.0);
    if (full_batch) {
      const double scale = 1.0 / static_cast<double>(n);
      for (const auto& s : data.samples) accumulate_gradient(data, w, s, scale, grad);
    } else {
      const double scale = 1.0 / static_cast<double>(batch_size);
      for (std::size_t j = 0; j < batch_size; ++j) {
        if (cursor >= n) {
          order = rng.permutation(n);
          cursor = 0;
        }
        accumulate_gradient(data, w, data.samples[order[cursor++]], scale, grad);
      }
    }
    const double step = eta.size() == 1 ? eta[0] : eta[q];
    for (std::size_t k = 0; k < w.size(); ++k) w[k] -= step * grad[k];
  }
  out.delta.resize(w.size());
  for (std::size_t k = 0; k < w.size(); ++k) out.delta[k] = w[k] - base.weights[k];
  return out;
}

struct LossStatistic {
  double aggregate_rms = 0.0;  // |B| * sqrt(mean of squared per-sample losses)
  double mean_loss = 0.0;
};

inline LossStatistic loss_statistic(std::span<const double> per_sample_losses) {
  if (per_sample_losses.empty()) throw Error(Errc::EmptyLossSet, "loss_statistic");
  double sq = 0.0;
  double sum = 0.0;
  for (double l : per_sample_losses) {
    sq += l * l;
    sum += l;
  }
  const double n = static_cast<double>(per_sample_losses.size());
  return {n * std::sqrt(sq / n), sum / n};
}

inline LossStatistic loss_statistic(const TrainResult& r) { return loss_statistic(r.per_sample_losses); }

}  // namespace pisces
