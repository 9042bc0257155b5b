#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pisces/core.hpp"
#include "pisces/events.hpp"

namespace pisces {

// ---------------------------------------------------------------------------
// Log verifiers

struct Lemma1Violation {
  SimTime aggregation_time = 0.0;
  double interval = 0.0;
  SimTime other_time = 0.0;
};

struct SpanViolation {
  ClientId client = 0;
  SimTime start = 0.0;
  SimTime end = 0.0;
  std::vector<SimTime> aggregation_times;
};

struct VerifierReport {
  bool pass = true;
  std::size_t max_count = 0;  // m: most aggregations strictly inside one training span
  std::size_t bound = 0;
  bool strict_pass = true;    // m < b
  std::size_t spans_checked = 0;
  std::vector<SpanViolation> span_violations;
  std::vector<Lemma1Violation> lemma1_violations;
};

inline const RunStarted* find_header(const EventLog& log) {
  for (const auto& e : log) {
    if (const auto* h = e.as<RunStarted>()) return h;
  }
  return nullptr;
}

/// For every aggregation at T with interval I, reports any other aggregation
/// in [T - I, T). Aggregations less than one loop tick past T - I are
/// tolerated. `tick` defaults to the value recorded in the run header (0 when
/// there is none).
inline std::vector<Lemma1Violation> verify_lemma1(const EventLog& log, std::optional<double> tick = std::nullopt) {
  const auto* header = find_header(log);
  if (header && header->mode != AggregationMode::Pace) {
    throw Error(Errc::MissingIntervalField, std::string("log was produced in ") +
                                                std::string(to_string(header->mode)) +
                                                " mode; aggregation events carry no interval");
  }
  const double tolerance = tick.value_or(header ? header->tick : 0.0);

  std::vector<std::pair<SimTime, double>> aggs;
  for (const auto& e : log) {
    if (const auto* a = e.as<Aggregated>()) {
      if (!a->interval) {
        throw Error(Errc::MissingIntervalField, "aggregation at t=" + std::to_string(e.time) + " has no interval");
      }
      aggs.emplace_back(e.time, *a->interval);
    }
  }
  std::sort(aggs.begin(), aggs.end());

  std::vector<Lemma1Violation> out;
  for (std::size_t l = 0; l < aggs.size(); ++l) {
    const auto [t_l, interval] = aggs[l];
    const double lo = t_l - interval;
    for (std::size_t j = l; j-- > 0;) {
      const double t = aggs[j].first;
      if (t < lo) break;
      if (t >= t_l) continue;
      if (t - lo < tolerance) continue;
      out.push_back({t_l, interval, t});
    }
  }
  return out;
}

/// Counts aggregations strictly inside each (selection, report) span.
inline VerifierReport verify_thm1(const EventLog& log, std::size_t bound) {
  std::vector<SimTime> agg_times;
  for (const auto& e : log) {
    if (e.as<Aggregated>()) agg_times.push_back(e.time);
  }
  std::sort(agg_times.begin(), agg_times.end());

  VerifierReport report;
  report.bound = bound;
  std::map<ClientId, SimTime> open;
  for (const auto& e : log) {
    if (const auto* s = e.as<Selected>()) {
      open[s->client] = e.time;
    } else if (const auto* r = e.as<UpdateReported>()) {
      auto it = open.find(r->client);
      if (it == open.end()) {
        throw Error(Errc::UnmatchedSpan, "report from client " + std::to_string(r->client) + " at t=" +
                                             std::to_string(e.time) + " has no selection");
      }
      const SimTime start = it->second;
      const SimTime end = e.time;
      open.erase(it);
      auto first = std::upper_bound(agg_times.begin(), agg_times.end(), start);
      auto last = std::lower_bound(agg_times.begin(), agg_times.end(), end);
      const auto count = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, last - first));
      ++report.spans_checked;
      report.max_count = std::max(report.max_count, count);
      if (count > bound) report.span_violations.push_back({r->client, start, end, {first, last}});
    }
  }
  report.strict_pass = report.max_count < bound;
  report.pass = report.span_violations.empty();
  return report;
}

/// Both checks; pass requires no interval violation and m <= b.
inline VerifierReport verify_log(const EventLog& log, std::size_t bound, std::optional<double> tick = std::nullopt) {
  auto report = verify_thm1(log, bound);
  report.lemma1_violations = verify_lemma1(log, tick);
  report.pass = report.span_violations.empty() && report.lemma1_violations.empty();
  return report;
}

// ---------------------------------------------------------------------------
// Convergence bound calculator
//
// Preconditions on the training problem (not checked here): unbiased client
// stochastic gradients; local variance <= sigma_l_sq and global variance
// <= sigma_g_sq; squared gradient norms <= G; L-smooth client objectives.

struct BoundParams {
  double f0_minus_fstar = 0.0;
  double L_smooth = 1.0;
  double sigma_l_sq = 0.0;
  double sigma_g_sq = 0.0;
  double G = 0.0;
  std::size_t Q = 1;
  std::vector<double> eta_schedule;  // Q entries, or a single entry used for every step
  double b = 0.0;
  std::size_t T = 1;
};

inline double convergence_bound(const BoundParams& p) {
  auto bad = [](const std::string& what) { return Error(Errc::InvalidParams, what); };
  if (!(p.L_smooth > 0.0)) throw bad("L must be > 0");
  if (p.Q < 1) throw bad("Q must be >= 1");
  if (p.T < 1) throw bad("T must be >= 1");
  if (p.f0_minus_fstar < 0.0 || p.sigma_l_sq < 0.0 || p.sigma_g_sq < 0.0 || p.G < 0.0 || p.b < 0.0) {
    throw bad("f0 - f*, variances, G and b must be non-negative");
  }
  if (p.eta_schedule.empty() || (p.eta_schedule.size() != 1 && p.eta_schedule.size() != p.Q)) {
    throw bad("eta schedule must have 1 or Q entries");
  }
  const auto Q = static_cast<double>(p.Q);
  double alpha = 0.0;
  double beta = 0.0;
  for (std::size_t q = 0; q < p.Q; ++q) {
    const double eta = p.eta_schedule.size() == 1 ? p.eta_schedule[0] : p.eta_schedule[q];
    if (!(eta > 0.0)) throw bad("eta must be > 0");
    if (!(eta * Q <= 1.0 / p.L_smooth)) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "eta*Q <= 1/L violated at step %zu: %.9g * %zu > 1/%.9g", q, eta, p.Q,
                    p.L_smooth);
      throw Error(Errc::PreconditionViolated, buf);
    }
    alpha += eta;
    beta += eta * eta;
  }
  const double L = p.L_smooth;
  const double optimisation = 2.0 * p.f0_minus_fstar / (alpha * static_cast<double>(p.T));
  const double local_noise = 0.5 * L * (beta / alpha) * p.sigma_l_sq;
  const double staleness = 3.0 * L * L * Q * beta * (p.b * p.b + 1.0) * (p.sigma_l_sq + p.sigma_g_sq + p.G);
  return optimisation + local_noise + staleness;
}

// ---------------------------------------------------------------------------
// Metrics

struct MetricsSummary {
  std::optional<double> target_loss;
  std::optional<SimTime> time_to_target;
  std::size_t total_aggregations = 0;
  Version final_version = 0;
  std::vector<std::pair<SimTime, Version>> aggregation_timeline;
  std::map<ClientId, std::size_t> involvement;
  std::map<Version, std::size_t> staleness_histogram;
  Version max_staleness = 0;
  std::vector<std::pair<SimTime, ClientId>> blacklist_timeline;
  std::vector<std::pair<SimTime, double>> loss_series;
  std::optional<double> final_loss;
  SimTime end_time = 0.0;
  bool diverged = false;
};

inline MetricsSummary metrics_summary(const EventLog& log, std::optional<double> target_loss = std::nullopt) {
  MetricsSummary m;
  m.target_loss = target_loss;
  for (const auto& e : log) {
    m.end_time = std::max(m.end_time, e.time);
    if (const auto* a = e.as<Aggregated>()) {
      ++m.total_aggregations;
      m.final_version = std::max(m.final_version, a->version);
      m.aggregation_timeline.emplace_back(e.time, a->version);
      for (Version s : a->staleness) {
        ++m.staleness_histogram[s];
        m.max_staleness = std::max(m.max_staleness, s);
      }
    } else if (const auto* s = e.as<Selected>()) {
      ++m.involvement[s->client];
    } else if (const auto* b = e.as<Blacklisted>()) {
      m.blacklist_timeline.emplace_back(e.time, b->client);
    } else if (const auto* l = e.as<LossEvaluated>()) {
      m.loss_series.emplace_back(e.time, l->loss);
      m.final_loss = l->loss;
      if (target_loss && !m.time_to_target && l->loss <= *target_loss) m.time_to_target = e.time;
    } else if (e.as<Diverged>()) {
      m.diverged = true;
    }
  }
  return m;
}

inline nlohmann::ordered_json metrics_to_json(const MetricsSummary& m) {
  nlohmann::ordered_json j;
  j["diverged"] = m.diverged;
  j["end_time"] = m.end_time;
  j["target_loss"] = m.target_loss ? nlohmann::ordered_json(*m.target_loss) : nlohmann::ordered_json(nullptr);
  j["time_to_target"] = m.time_to_target ? nlohmann::ordered_json(*m.time_to_target) : nlohmann::ordered_json(nullptr);
  j["final_loss"] = m.final_loss && std::isfinite(*m.final_loss) ? nlohmann::ordered_json(*m.final_loss)
                                                                  : nlohmann::ordered_json(nullptr);
  j["total_aggregations"] = m.total_aggregations;
  j["final_version"] = m.final_version;
  j["max_staleness"] = m.max_staleness;
  auto& hist = j["staleness_histogram"] = nlohmann::ordered_json::object();
  for (const auto& [s, c] : m.staleness_histogram) hist[std::to_string(s)] = c;
  auto& inv = j["involvement"] = nlohmann::ordered_json::object();
  for (const auto& [id, c] : m.involvement) inv[std::to_string(id)] = c;
  auto& bl = j["blacklist_timeline"] = nlohmann::ordered_json::array();
  for (const auto& [t, id] : m.blacklist_timeline) bl.push_back({{"time", t}, {"client", id}});
  auto& agg = j["aggregation_timeline"] = nlohmann::ordered_json::array();
  for (const auto& [t, v] : m.aggregation_timeline) agg.push_back({{"time", t}, {"version", v}});
  auto& ls = j["loss_series"] = nlohmann::ordered_json::array();
  for (const auto& [t, l] : m.loss_series) {
    ls.push_back({{"time", t}, {"loss", std::isfinite(l) ? nlohmann::ordered_json(l) : nlohmann::ordered_json(nullptr)}});
  }
  return j;
}

}  // namespace pisces
