#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include "pisces/aggregation.hpp"
#include "pisces/analysis.hpp"
#include "pisces/config.hpp"
#include "pisces/core.hpp"
#include "pisces/events.hpp"
#include "pisces/rng.hpp"
#include "pisces/selection.hpp"
#include "pisces/tasks.hpp"

namespace pisces {

/// Zipf end-to-end latencies: a random permutation of ranks 1..n is dealt to
/// the clients and rank i gets base_latency * i^-a, so rank 1 is the slowest.
inline std::vector<double> assign_zipf_latencies(std::size_t n, double a, double base_latency, RngStream& rng) {
  if (n < 1 || !(a > 0.0) || !(base_latency > 0.0)) throw Error(Errc::InvalidParams, "assign_zipf_latencies");
  const auto ranks = rng.permutation(n);
  std::vector<double> out(n);
  for (std::size_t c = 0; c < n; ++c) out[c] = base_latency * std::pow(static_cast<double>(ranks[c] + 1), -a);
  return out;
}

struct RunResult {
  EventLog log;
  MetricsSummary metrics;
  ModelVector model;
  bool diverged = false;
  std::string failure;
};

/// Discrete-event simulation of one federated training run.
///
/// Time advances in fixed loop ticks. Within a tick, client reports due by
/// then are delivered in (report time, client id) order, then the control
/// step runs: aggregation check, termination check, selection. Local training
/// is evaluated eagerly when a client starts (it only depends on the model it
/// downloaded) and its result is held back until the report time.
class Simulator {
 public:
  explicit Simulator(const ScenarioConfig& config) : cfg_(resolve(config)) {
    validate(cfg_);
    root_ = RngStream(cfg_.seed, "scenario");
    selection_rng_ = root_.derive("selection");
    jitter_rng_ = root_.derive("jitter");
    profile_rng_ = root_.derive("profiler");
    setup_task();
    setup_clients();
  }

  const ScenarioConfig& config() const noexcept { return cfg_; }
  const std::vector<ClientProfile>& profiles() const noexcept { return profiles_; }
  const std::vector<double>& true_latencies() const noexcept { return latencies_; }
  const std::vector<ClientId>& corrupted_clients() const noexcept { return corrupted_; }
  const Dataset& client_data(ClientId id) const { return client_data_.at(id); }
  const Dataset& train_pool() const noexcept { return pool_; }
  const Dataset& holdout() const noexcept { return holdout_; }
  const TaskModel& task_model() const noexcept { return task_; }
  const Partition& partition() const noexcept { return partition_; }
  const ModelVector& model() const noexcept { return model_; }
  const EventLog& log() const noexcept { return log_; }
  std::size_t running() const noexcept { return running_; }

  RunResult run() {
    emit(0.0, RunStarted{cfg_.loop.tick, cfg_.aggregation.mode, cfg_.policy, cfg_.aggregation.bound, cfg_.concurrency,
                         cfg_.n_clients, cfg_.seed});
    for (std::size_t k = 0;; ++k) {
      const SimTime now = static_cast<double>(k) * cfg_.loop.tick;
      deliver_reports(now);
      if (control_step(now, k)) break;
    }
    RunResult out;
    out.log = log_;
    out.metrics = metrics_summary(log_, cfg_.loop.target_loss);
    out.model = model_;
    out.diverged = diverged_;
    out.failure = failure_;
    return out;
  }

  /// Hands every report due by `now` to the coordinator.
  void deliver_reports(SimTime now) {
    while (!jobs_.empty() && jobs_.top().report_time <= now) {
      Job job = jobs_.top();
      jobs_.pop();
      auto& p = profiles_[job.client];
      p.busy = false;
      --running_;
      observe_latency(p, profiled_observation(job.duration));
      p.last_aggregate_rms = std::isnan(job.stat.aggregate_rms) ? INFINITY : job.stat.aggregate_rms;
      emit(job.report_time, UpdateReported{job.client, job.base_version, job.selected_at, job.duration,
                                           job.stat.mean_loss, job.result.sample_count});
      if (p.blacklisted) continue;
      pending_pool_.push_back({job.client, job.stat.mean_loss, job.base_version});
      buffer_.push_back(LocalUpdate{job.client, job.base_version, std::move(job.result.delta), job.result.sample_count,
                                    job.stat.mean_loss, job.report_time});
    }
  }

  /// One pass of the coordinator loop at tick `k` (time `now`). Returns true
  /// when the run is over.
  bool control_step(SimTime now, std::size_t k) {
    // (1) aggregation
    bool fire = false;
    std::optional<double> interval;
    switch (cfg_.aggregation.mode) {
      case AggregationMode::Pace: {
        std::vector<double> running_latencies;
        for (const auto& p : profiles_) {
          if (p.busy) running_latencies.push_back(p.profiled_latency);
        }
        const auto d = pace_decision(running_latencies, cfg_.aggregation.bound, t_last_, now);
        fire = d.aggregate;
        interval = d.interval;
        break;
      }
      case AggregationMode::Buffered:
        fire = buffered_decision(buffer_.size(), cfg_.aggregation.goal);
        break;
      case AggregationMode::Sync:
        fire = sync_decision(running_, buffer_.size());
        break;
    }
    if (fire && !buffer_.empty()) {
      aggregate(now, interval);
      if (diverged_) return true;
    }

    // (2) termination
    const bool at_horizon = now >= cfg_.loop.horizon;
    if (k % cfg_.loop.eval_every == 0 || at_horizon) {
      const double loss = evaluate(model_, holdout_);
      if (!std::isfinite(loss)) {
        abort_run(now, "non-finite evaluation loss");
        return true;
      }
      emit(now, LossEvaluated{model_.version, loss});
      if (cfg_.loop.target_loss && loss <= *cfg_.loop.target_loss) return true;
    }
    if (at_horizon) return true;

    // (3) selection
    std::size_t quota = cfg_.concurrency > running_ ? cfg_.concurrency - running_ : 0;
    if (cfg_.aggregation.mode == AggregationMode::Sync && (running_ > 0 || !buffer_.empty())) quota = 0;
    if (quota > 0) {
      SelectionConfig sc{cfg_.concurrency, cfg_.selection.beta, cfg_.selection.staleness_window,
                         cfg_.selection.oort_alpha, cfg_.selection.oort_T, cfg_.policy};
      auto chosen = select_clients(profiles_, sc, quota, selection_rng_);
      std::sort(chosen.begin(), chosen.end());  // keeps same-tick events in client order
      for (ClientId id : chosen) start_job(id, now);
    }
    return false;
  }

 private:
  struct Job {
    ClientId client = 0;
    Version base_version = 0;
    SimTime selected_at = 0.0;
    double duration = 0.0;
    SimTime report_time = 0.0;
    TrainResult result;
    LossStatistic stat;
  };
  struct JobLater {
    bool operator()(const Job& a, const Job& b) const {
      return a.report_time != b.report_time ? a.report_time > b.report_time : a.client > b.client;
    }
  };

  template <typename Payload>
  void emit(SimTime t, Payload p) {
    log_.push_back(SimEvent{t, EventPayload{std::move(p)}});
  }

  void setup_task() {
    const auto& t = cfg_.task;
    task_ = make_task_model(t.kind, t.n_classes, t.dim, t.noise, root_.derive("task"), {t.separation, t.spread});
    RngStream train_rng = root_.derive("train_samples");
    RngStream holdout_rng = root_.derive("holdout_samples");
    pool_ = task_.draw(t.n_samples, train_rng);
    Dataset clean_holdout = task_.draw(t.holdout_samples, holdout_rng);
    holdout_ = std::move(clean_holdout);
  }

  void setup_clients() {
    const std::size_t n = cfg_.n_clients;
    RngStream lat_rng = root_.derive("latency");
    latencies_ = assign_zipf_latencies(n, cfg_.latency.zipf_a, cfg_.latency.base_latency, lat_rng);

    const auto labels = pool_.labels();
    switch (cfg_.partition.scheme) {
      case PartitionScheme::Dirichlet:
        partition_ = dirichlet_partition(labels, PartitionSpec{n, cfg_.partition.concentration, root_.derive("partition")});
        break;
      case PartitionScheme::LatencySized:
        partition_ = sized_dirichlet_partition(labels, latencies_, cfg_.partition.concentration, root_.derive("partition"));
        break;
      case PartitionScheme::Iid: {
        RngStream r = root_.derive("partition");
        const auto order = r.permutation(pool_.size());
        const std::vector<double> equal(n, 1.0);
        const auto counts = detail::apportion(pool_.size(), equal);
        partition_.assign(n, {});
        std::size_t pos = 0;
        for (std::size_t c = 0; c < n; ++c) {
          for (std::size_t j = 0; j < counts[c]; ++j) partition_[c].push_back(order[pos++]);
          std::sort(partition_[c].begin(), partition_[c].end());
        }
        break;
      }
    }

    client_data_.clear();
    for (std::size_t c = 0; c < n; ++c) client_data_.push_back(pool_.subset(partition_[c]));

    const auto n_corrupt = static_cast<std::size_t>(std::llround(cfg_.task.corruption_fraction * static_cast<double>(n)));
    if (n_corrupt > 0) {
      RngStream r = root_.derive("corruption");
      auto order = r.permutation(n);
      order.resize(n_corrupt);
      std::sort(order.begin(), order.end());
      for (std::size_t c : order) {
        RngStream flip = r.derive("flip:" + std::to_string(c));
        flip_labels(client_data_[c], flip);
        corrupted_.push_back(static_cast<ClientId>(c));
      }
    }

    profiles_.assign(n, {});
    job_counts_.assign(n, 0);
    for (std::size_t c = 0; c < n; ++c) {
      auto& p = profiles_[c];
      p.id = static_cast<ClientId>(c);
      p.sample_count = client_data_[c].size();
      p.profiled_latency = profiled_observation(latencies_[c]);
      p.reliability_credits = cfg_.selection.credits;
    }
    model_.weights.assign(pool_.model_dim(), 0.0);
    model_.version = 0;
  }

  double profiled_observation(double actual) {
    if (cfg_.latency.profile_noise <= 0.0) return actual;
    return actual * (1.0 + profile_rng_.uniform(-cfg_.latency.profile_noise, cfg_.latency.profile_noise));
  }

  void start_job(ClientId id, SimTime now) {
    auto& p = profiles_[id];
    p.busy = true;
    ++running_;
    double factor = 1.0;
    if (cfg_.latency.jitter > 0.0) factor += jitter_rng_.uniform(-cfg_.latency.jitter, cfg_.latency.jitter);
    Job job;
    job.client = id;
    job.base_version = model_.version;
    job.selected_at = now;
    job.duration = latencies_[id] * factor;
    job.report_time = now + job.duration;
    const RngStream train_rng = root_.derive("client:" + std::to_string(id)).derive("job:" + std::to_string(job_counts_[id]++));
    job.result = local_sgd(model_, client_data_[id], cfg_.training.local_steps, cfg_.training.learning_rate,
                           cfg_.training.batch_size, train_rng);
    job.stat = loss_statistic(job.result);
    emit(now, Selected{id, model_.version});
    jobs_.push(std::move(job));
  }

  void aggregate(SimTime now, std::optional<double> interval) {
    const Version before = model_.version;
    auto res = apply_aggregation(model_, buffer_, now, interval);
    if (!all_finite(res.model.weights)) {
      abort_run(now, "non-finite model after aggregation");
      return;
    }
    model_ = std::move(res.model);
    buffer_.clear();
    t_last_ = now;
    for (std::size_t i = 0; i < res.event.contributors.size(); ++i) {
      profiles_[res.event.contributors[i]].staleness_history.push_back(res.event.staleness[i]);
    }
    emit(now, Aggregated{res.event.new_version, res.event.interval, res.event.contributors, res.event.staleness});
    if (cfg_.blacklisting_enabled()) screen_outliers(now, before);
  }

  /// Pools reported losses whose base versions lie in [v - k, v] and clusters
  /// them once enough have accumulated; each report is judged once.
  void screen_outliers(SimTime now, Version current) {
    const Version k = cfg_.selection.pool_window;
    const VersionWindow window{current >= k ? current - k : 0, current};
    std::erase_if(pending_pool_, [&](const PooledLoss& e) { return !window.contains(e.base_version); });
    if (pending_pool_.size() < cfg_.selection.min_pool) return;
    OutlierParams params{cfg_.selection.dbscan_eps, cfg_.selection.dbscan_min_pts, cfg_.selection.min_pool};
    const auto newly = credit_update(profiles_, pending_pool_, window, params);
    pending_pool_.clear();
    for (ClientId id : newly) emit(now, Blacklisted{id});
  }

  void abort_run(SimTime now, std::string reason) {
    diverged_ = true;
    failure_ = reason;
    emit(now, Diverged{model_.version, std::move(reason)});
  }

  ScenarioConfig cfg_;
  RngStream root_;
  RngStream selection_rng_;
  RngStream jitter_rng_;
  RngStream profile_rng_;

  TaskModel task_;
  Dataset pool_;
  Dataset holdout_;
  Partition partition_;
  std::vector<Dataset> client_data_;
  std::vector<double> latencies_;
  std::vector<ClientId> corrupted_;
  std::vector<ClientProfile> profiles_;
  std::vector<std::size_t> job_counts_;

  ModelVector model_;
  std::vector<LocalUpdate> buffer_;
  std::vector<PooledLoss> pending_pool_;
  std::priority_queue<Job, std::vector<Job>, JobLater> jobs_;
  std::size_t running_ = 0;
  SimTime t_last_ = 0.0;
  bool diverged_ = false;
  std::string failure_;
  EventLog log_;
};

inline RunResult run_scenario(const ScenarioConfig& config) {
  Simulator sim(config);
  return sim.run();
}

}  // namespace pisces
