#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace pisces {

using ClientId = std::uint32_t;
using Version = std::uint64_t;
using SimTime = double;

enum class Errc {
  EmptyInput,
  DimensionMismatch,
  NonPositiveWeight,
  NonFiniteInput,
  EmptyLabels,
  InvalidConcentration,
  InvalidShape,
  EmptyDataset,
  NonPositiveLearningRate,
  EmptyLossSet,
  InvalidWindow,
  NegativeInput,
  NonPositiveLatency,
  InvalidBound,
  InvalidGoal,
  EmptyBuffer,
  VersionOrderViolation,
  InvalidParams,
  ConfigInvalid,
  NonFiniteModel,
  EmptyHoldout,
  MissingIntervalField,
  UnmatchedSpan,
  PreconditionViolated,
  ParseError,
  ValidationError,
  LogParseError,
  IOError,
};

constexpr std::string_view errc_name(Errc c) {
  switch (c) {
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::NonPositiveWeight: return "NonPositiveWeight";
    case Errc::NonFiniteInput: return "NonFiniteInput";
    case Errc::EmptyLabels: return "EmptyLabels";
    case Errc::InvalidConcentration: return "InvalidConcentration";
    case Errc::InvalidShape: return "InvalidShape";
    case Errc::EmptyDataset: return "EmptyDataset";
    case Errc::NonPositiveLearningRate: return "NonPositiveLearningRate";
    case Errc::EmptyLossSet: return "EmptyLossSet";
    case Errc::InvalidWindow: return "InvalidWindow";
    case Errc::NegativeInput: return "NegativeInput";
    case Errc::NonPositiveLatency: return "NonPositiveLatency";
    case Errc::InvalidBound: return "InvalidBound";
    case Errc::InvalidGoal: return "InvalidGoal";
    case Errc::EmptyBuffer: return "EmptyBuffer";
    case Errc::VersionOrderViolation: return "VersionOrderViolation";
    case Errc::InvalidParams: return "InvalidParams";
    case Errc::ConfigInvalid: return "ConfigInvalid";
    case Errc::NonFiniteModel: return "NonFiniteModel";
    case Errc::EmptyHoldout: return "EmptyHoldout";
    case Errc::MissingIntervalField: return "MissingIntervalField";
    case Errc::UnmatchedSpan: return "UnmatchedSpan";
    case Errc::PreconditionViolated: return "PreconditionViolated";
    case Errc::ParseError: return "ParseError";
    case Errc::ValidationError: return "ValidationError";
    case Errc::LogParseError: return "LogParseError";
    case Errc::IOError: return "IOError";
  }
  return "Unknown";
}

/// Library-wide exception. `code()` identifies the failure class; the
/// message carries the offending field or value.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

/// Global model: dense weights plus the count of aggregations applied so far.
struct ModelVector {
  std::vector<double> weights;
  Version version = 0;

  std::size_t dim() const noexcept { return weights.size(); }
};

inline bool all_finite(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

/// Sum of squares, accumulated in ascending index order.
inline double l2_norm_sq(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) {
    if (!std::isfinite(x)) throw Error(Errc::NonFiniteInput, "l2_norm_sq");
    acc += x * x;
  }
  return acc;
}

/// Sum_i w_i * v_i / Sum_i w_i. Accumulation runs over ascending index so
/// results are bit-reproducible for a given input order.
inline std::vector<double> weighted_mean(std::span<const std::vector<double>> vectors,
                                         std::span<const double> weights) {
  if (vectors.empty()) throw Error(Errc::EmptyInput, "weighted_mean: no vectors");
  if (vectors.size() != weights.size()) {
    throw Error(Errc::DimensionMismatch, "weighted_mean: vector/weight count differs");
  }
  const std::size_t d = vectors.front().size();
  double total = 0.0;
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    if (vectors[i].size() != d) throw Error(Errc::DimensionMismatch, "weighted_mean: ragged vectors");
    if (!(weights[i] > 0.0) || !std::isfinite(weights[i])) {
      throw Error(Errc::NonPositiveWeight, "weighted_mean: weight " + std::to_string(i));
    }
    total += weights[i];
  }
  std::vector<double> out(d, 0.0);
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    const double w = weights[i];
    const auto& v = vectors[i];
    for (std::size_t k = 0; k < d; ++k) out[k] += w * v[k];
  }
  for (double& x : out) x /= total;
  return out;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) acc += a[k] * b[k];
  return acc;
}

}  // namespace pisces
