#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "pisces/core.hpp"
#include "pisces/dbscan.hpp"
#include "pisces/rng.hpp"

namespace pisces {

enum class Policy { Pisces, Oort, Random };

inline std::string_view to_string(Policy p) {
  switch (p) {
    case Policy::Pisces: return "pisces";
    case Policy::Oort: return "oort";
    case Policy::Random: return "random";
  }
  return "pisces";
}

/// What the coordinator knows about one client.
struct ClientProfile {
  ClientId id = 0;
  std::size_t sample_count = 0;
  std::vector<double> latency_history;
  double profiled_latency = 0.0;  // running mean of latency_history, or the cold-start value
  std::vector<Version> staleness_history;
  std::optional<double> last_aggregate_rms;
  int reliability_credits = 3;
  bool blacklisted = false;
  bool busy = false;

  bool eligible() const noexcept { return !blacklisted && !busy && sample_count > 0; }
};

/// Appends an observed end-to-end latency. The running mean is updated
/// incrementally, so a constant history keeps the profile bit-exact.
inline void observe_latency(ClientProfile& p, double observed) {
  if (!(observed > 0.0) || !std::isfinite(observed)) throw Error(Errc::NonPositiveLatency, "observe_latency");
  p.latency_history.push_back(observed);
  if (p.latency_history.size() == 1) {
    p.profiled_latency = observed;
  } else {
    p.profiled_latency += (observed - p.profiled_latency) / static_cast<double>(p.latency_history.size());
  }
}

struct SelectionConfig {
  std::size_t concurrency_limit = 20;
  double beta = 0.5;
  std::size_t ma_window = 5;
  double oort_alpha = 2.0;
  double oort_T = 1.0;
  Policy policy = Policy::Pisces;
};

// ---------------------------------------------------------------------------
// Scores

/// Mean of the most recent min(k, len) staleness values; 0 for an empty history.
inline double staleness_estimate(std::span<const Version> history, std::size_t k) {
  if (k == 0) throw Error(Errc::InvalidWindow, "staleness_estimate: k must be >= 1");
  if (history.empty()) return 0.0;
  const std::size_t m = std::min(k, history.size());
  double sum = 0.0;
  for (std::size_t j = history.size() - m; j < history.size(); ++j) sum += static_cast<double>(history[j]);
  return sum / static_cast<double>(m);
}

inline double pisces_utility(double aggregate_rms, double tau_est, double beta) {
  if (aggregate_rms < 0.0 || tau_est < 0.0) throw Error(Errc::NegativeInput, "pisces_utility");
  if (!(beta > 0.0)) throw Error(Errc::InvalidParams, "pisces_utility: beta must be > 0");
  return aggregate_rms / std::pow(tau_est + 1.0, beta);
}

inline double oort_utility(double aggregate_rms, double t_i, double T, double alpha) {
  if (!(t_i > 0.0)) throw Error(Errc::NonPositiveLatency, "oort_utility");
  if (aggregate_rms < 0.0) throw Error(Errc::NegativeInput, "oort_utility");
  if (!(T > 0.0) || alpha < 0.0) throw Error(Errc::InvalidParams, "oort_utility");
  if (T < t_i) return aggregate_rms * std::pow(T / t_i, alpha);
  return aggregate_rms;
}

// ---------------------------------------------------------------------------
// Policies

namespace detail {

inline std::vector<ClientId> unmeasured_first(std::span<const ClientProfile> profiles, std::size_t quota,
                                              std::vector<const ClientProfile*>& measured) {
  std::vector<ClientId> out;
  for (const auto& p : profiles) {
    if (!p.eligible()) continue;
    if (!p.last_aggregate_rms) {
      if (out.size() < quota) out.push_back(p.id);
    } else {
      measured.push_back(&p);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace detail

/// Deterministic top-utility selection. Clients with no loss report yet go
/// first (ascending id); the rest are ranked by pisces_utility, ties by id.
inline std::vector<ClientId> select_pisces(std::span<const ClientProfile> profiles, const SelectionConfig& cfg,
                                           std::size_t quota) {
  std::vector<const ClientProfile*> measured;
  auto out = detail::unmeasured_first(profiles, quota, measured);
  if (out.size() >= quota) return out;

  std::vector<std::pair<double, ClientId>> scored;
  scored.reserve(measured.size());
  for (const auto* p : measured) {
    const double tau = staleness_estimate(p->staleness_history, cfg.ma_window);
    scored.emplace_back(pisces_utility(*p->last_aggregate_rms, tau, cfg.beta), p->id);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  for (const auto& [u, id] : scored) {
    if (out.size() >= quota) break;
    out.push_back(id);
  }
  return out;
}

/// Weighted sampling without replacement; each draw is proportional to the
/// remaining weights, or uniform once they are all zero.
inline std::vector<std::size_t> sample_proportional(std::span<const double> weights, std::size_t quota,
                                                    RngStream& rng) {
  std::vector<std::size_t> remaining(weights.size());
  std::iota(remaining.begin(), remaining.end(), std::size_t{0});
  std::vector<std::size_t> out;
  while (out.size() < quota && !remaining.empty()) {
    double total = 0.0;
    for (std::size_t i : remaining) total += weights[i];
    std::size_t pick = remaining.size() - 1;
    if (total > 0.0) {
      double u = rng.uniform() * total;
      for (std::size_t j = 0; j < remaining.size(); ++j) {
        const double w = weights[remaining[j]];
        if (w <= 0.0) continue;
        pick = j;
        if (u < w) break;
        u -= w;
      }
    } else {
      pick = rng.below(remaining.size());
    }
    out.push_back(remaining[pick]);
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  return out;
}

/// Oort-style probabilistic selection: unmeasured clients first (ascending id),
/// then sampling proportional to oort_utility using the profiled latency as t_i.
inline std::vector<ClientId> select_oort(std::span<const ClientProfile> profiles, const SelectionConfig& cfg,
                                         std::size_t quota, RngStream& rng) {
  std::vector<const ClientProfile*> measured;
  auto out = detail::unmeasured_first(profiles, quota, measured);
  if (out.size() >= quota) return out;
  std::vector<double> utilities;
  utilities.reserve(measured.size());
  for (const auto* p : measured) {
    utilities.push_back(oort_utility(*p->last_aggregate_rms, p->profiled_latency, cfg.oort_T, cfg.oort_alpha));
  }
  for (std::size_t j : sample_proportional(utilities, quota - out.size(), rng)) out.push_back(measured[j]->id);
  return out;
}

inline std::vector<ClientId> select_random(std::span<const ClientProfile> profiles, std::size_t quota,
                                           RngStream& rng) {
  std::vector<ClientId> eligible;
  for (const auto& p : profiles) {
    if (p.eligible()) eligible.push_back(p.id);
  }
  std::vector<ClientId> out;
  const std::size_t take = std::min(quota, eligible.size());
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < take; ++i) {
    const std::size_t j = i + rng.below(eligible.size() - i);
    std::swap(eligible[i], eligible[j]);
    out.push_back(eligible[i]);
  }
  return out;
}

inline std::vector<ClientId> select_clients(std::span<const ClientProfile> profiles, const SelectionConfig& cfg,
                                            std::size_t quota, RngStream& rng) {
  switch (cfg.policy) {
    case Policy::Pisces: return select_pisces(profiles, cfg, quota);
    case Policy::Oort: return select_oort(profiles, cfg, quota, rng);
    case Policy::Random: return select_random(profiles, quota, rng);
  }
  return {};
}

// ---------------------------------------------------------------------------
// Reliability credits

struct PooledLoss {
  ClientId client = 0;
  double loss = 0.0;
  Version base_version = 0;
};

struct VersionWindow {
  Version lo = 0;
  Version hi = 0;
  bool contains(Version v) const noexcept { return v >= lo && v <= hi; }
};

struct OutlierParams {
  std::optional<double> eps;          // default: 2 * MAD of the pool, floored at 1e-6
  std::optional<std::size_t> min_pts; // default: max(2, ceil(pool / 10))
  std::size_t min_pool = 3;
};

inline double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double default_eps(std::span<const double> losses) {
  const double med = median_of({losses.begin(), losses.end()});
  std::vector<double> dev;
  dev.reserve(losses.size());
  for (double l : losses) dev.push_back(std::fabs(l - med));
  return std::max(2.0 * median_of(std::move(dev)), 1e-6);
}

inline std::size_t default_min_pts(std::size_t pool) {
  return std::max<std::size_t>(2, (pool + 9) / 10);
}

/// Clusters the pooled losses (latest entry per client, base versions inside
/// `window`) and takes one credit from every outlier. Returns the clients
/// whose credits reached zero in this call.
inline std::vector<ClientId> credit_update(std::span<ClientProfile> profiles, std::span<const PooledLoss> pool,
                                           VersionWindow window, const OutlierParams& params = {}) {
  std::vector<ClientId> ids;
  std::vector<double> losses;
  for (const auto& e : pool) {
    if (!window.contains(e.base_version) || !std::isfinite(e.loss)) continue;
    if (e.client >= profiles.size() || profiles[e.client].blacklisted) continue;
    auto it = std::find(ids.begin(), ids.end(), e.client);
    if (it == ids.end()) {
      ids.push_back(e.client);
      losses.push_back(e.loss);
    } else {
      losses[static_cast<std::size_t>(it - ids.begin())] = e.loss;
    }
  }
  std::vector<ClientId> newly;
  if (losses.size() < std::max<std::size_t>(params.min_pool, 1)) return newly;

  const double eps = params.eps.value_or(default_eps(losses));
  const std::size_t min_pts = params.min_pts.value_or(default_min_pts(losses.size()));
  const auto result = dbscan_1d(losses, eps, min_pts);
  for (std::size_t idx : result.outliers) {
    auto& p = profiles[ids[idx]];
    if (p.reliability_credits > 0) --p.reliability_credits;
    if (p.reliability_credits == 0 && !p.blacklisted) {
      p.blacklisted = true;
      newly.push_back(p.id);
    }
  }
  std::sort(newly.begin(), newly.end());
  return newly;
}

}  // namespace pisces
