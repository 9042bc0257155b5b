#pragma once

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pisces/config.hpp"
#include "pisces/core.hpp"

// Scenario documents are JSON. Every section and field is optional except
// n_clients; unknown keys are rejected so typos do not silently fall back to
// defaults.
//
//   {
//     "n_clients": 20, "seed": 1, "policy": "pisces", "concurrency": 20,
//     "task":        {"kind", "dim", "n_classes", "n_samples", "holdout_samples",
//                     "noise", "corruption_fraction", "separation", "spread"},
//     "partition":   {"scheme", "concentration"},
//     "latency":     {"zipf_a", "base_latency", "jitter", "profile_noise"},
//     "selection":   {"beta", "staleness_window", "oort_alpha", "oort_T",
//                     "blacklisting", "credits", "pool_window", "dbscan_eps",
//                     "dbscan_min_pts", "min_pool"},
//     "aggregation": {"mode", "b", "K"},
//     "training":    {"local_steps", "learning_rate", "batch_size"},
//     "loop":        {"tick", "horizon", "target_loss", "eval_every"}
//   }

namespace pisces {

namespace detail {

using Json = nlohmann::json;

[[noreturn]] inline void parse_fail(const std::string& field, const std::string& why) {
  throw Error(Errc::ParseError, field + ": " + why);
}

inline void reject_unknown(const Json& obj, const std::string& where, std::initializer_list<std::string_view> keys) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (auto k : keys) known = known || it.key() == k;
    if (!known) parse_fail(where.empty() ? it.key() : where + "." + it.key(), "unknown field");
  }
}

inline const Json* section(const Json& root, const char* name) {
  if (!root.contains(name)) return nullptr;
  const auto& s = root.at(name);
  if (!s.is_object()) parse_fail(name, "expected an object");
  return &s;
}

class FieldReader {
 public:
  FieldReader(const Json* obj, std::string prefix) : obj_(obj), prefix_(std::move(prefix)) {}

  const Json* find(const char* key) const {
    if (!obj_ || !obj_->contains(key)) return nullptr;
    const auto& v = obj_->at(key);
    return v.is_null() ? nullptr : &v;
  }
  std::string name(const char* key) const { return prefix_.empty() ? key : prefix_ + "." + key; }

  void real(const char* key, double& out) const {
    if (const auto* v = find(key)) out = as_real(*v, name(key));
  }
  void real(const char* key, std::optional<double>& out) const {
    if (const auto* v = find(key)) out = as_real(*v, name(key));
  }
  template <typename U>
  void count(const char* key, U& out) const {
    if (const auto* v = find(key)) out = static_cast<U>(as_count(*v, name(key)));
  }
  void count(const char* key, std::optional<std::size_t>& out) const {
    if (const auto* v = find(key)) out = static_cast<std::size_t>(as_count(*v, name(key)));
  }
  void boolean(const char* key, std::optional<bool>& out) const {
    if (const auto* v = find(key)) {
      if (!v->is_boolean()) parse_fail(name(key), "expected true or false");
      out = v->get<bool>();
    }
  }
  std::optional<std::string> text(const char* key) const {
    const auto* v = find(key);
    if (!v) return std::nullopt;
    if (!v->is_string()) parse_fail(name(key), "expected a string");
    return v->get<std::string>();
  }
  // A single number or a list of numbers.
  void reals(const char* key, std::vector<double>& out) const {
    const auto* v = find(key);
    if (!v) return;
    out.clear();
    if (v->is_array()) {
      for (const auto& e : *v) out.push_back(as_real(e, name(key)));
    } else {
      out.push_back(as_real(*v, name(key)));
    }
  }

 private:
  static double as_real(const Json& v, const std::string& field) {
    if (!v.is_number()) parse_fail(field, "expected a number");
    return v.get<double>();
  }
  static std::uint64_t as_count(const Json& v, const std::string& field) {
    if (!v.is_number_unsigned()) parse_fail(field, "expected a non-negative integer");
    return v.get<std::uint64_t>();
  }

  const Json* obj_;
  std::string prefix_;
};

inline TaskKind task_kind_from(const std::string& s) {
  if (s == "linear_regression") return TaskKind::LinearRegression;
  if (s == "softmax_classification") return TaskKind::SoftmaxClassification;
  parse_fail("task.kind", "unknown kind '" + s + "'");
}

inline PartitionScheme scheme_from(const std::string& s) {
  if (s == "dirichlet") return PartitionScheme::Dirichlet;
  if (s == "latency_sized") return PartitionScheme::LatencySized;
  if (s == "iid") return PartitionScheme::Iid;
  parse_fail("partition.scheme", "unknown scheme '" + s + "'");
}

}  // namespace detail

/// Parses a scenario document without resolving or validating it.
inline ScenarioConfig parse_scenario_document(std::string_view text) {
  using detail::FieldReader;
  detail::Json root;
  try {
    root = detail::Json::parse(text);
  } catch (const nlohmann::json::parse_error& ex) {
    throw Error(Errc::ParseError, ex.what());
  }
  if (!root.is_object()) throw Error(Errc::ParseError, "scenario must be a JSON object");
  detail::reject_unknown(root, "",
                         {"n_clients", "seed", "policy", "concurrency", "task", "partition", "latency", "selection",
                          "aggregation", "training", "loop"});

  ScenarioConfig c;
  FieldReader top(&root, "");
  top.count("n_clients", c.n_clients);
  top.count("seed", c.seed);
  top.count("concurrency", c.concurrency);
  if (auto p = top.text("policy")) {
    if (*p == "pisces") {
      c.policy = Policy::Pisces;
    } else if (*p == "oort") {
      c.policy = Policy::Oort;
    } else if (*p == "random") {
      c.policy = Policy::Random;
    } else {
      detail::parse_fail("policy", "unknown policy '" + *p + "'");
    }
  }

  if (const auto* s = detail::section(root, "task")) {
    detail::reject_unknown(*s, "task",
                           {"kind", "dim", "n_classes", "n_samples", "holdout_samples", "noise", "corruption_fraction",
                            "separation", "spread"});
    FieldReader r(s, "task");
    if (auto k = r.text("kind")) c.task.kind = detail::task_kind_from(*k);
    r.count("dim", c.task.dim);
    r.count("n_classes", c.task.n_classes);
    r.count("n_samples", c.task.n_samples);
    r.count("holdout_samples", c.task.holdout_samples);
    r.real("noise", c.task.noise);
    r.real("corruption_fraction", c.task.corruption_fraction);
    r.real("separation", c.task.separation);
    r.real("spread", c.task.spread);
  }
  if (const auto* s = detail::section(root, "partition")) {
    detail::reject_unknown(*s, "partition", {"scheme", "concentration"});
    FieldReader r(s, "partition");
    if (auto k = r.text("scheme")) c.partition.scheme = detail::scheme_from(*k);
    r.reals("concentration", c.partition.concentration);
  }
  if (const auto* s = detail::section(root, "latency")) {
    detail::reject_unknown(*s, "latency", {"zipf_a", "base_latency", "jitter", "profile_noise"});
    FieldReader r(s, "latency");
    r.real("zipf_a", c.latency.zipf_a);
    r.real("base_latency", c.latency.base_latency);
    r.real("jitter", c.latency.jitter);
    r.real("profile_noise", c.latency.profile_noise);
  }
  if (const auto* s = detail::section(root, "selection")) {
    detail::reject_unknown(*s, "selection",
                           {"beta", "staleness_window", "oort_alpha", "oort_T", "blacklisting", "credits",
                            "pool_window", "dbscan_eps", "dbscan_min_pts", "min_pool"});
    FieldReader r(s, "selection");
    r.real("beta", c.selection.beta);
    r.count("staleness_window", c.selection.staleness_window);
    r.real("oort_alpha", c.selection.oort_alpha);
    r.real("oort_T", c.selection.oort_T);
    r.boolean("blacklisting", c.selection.blacklisting);
    r.count("credits", c.selection.credits);
    r.count("pool_window", c.selection.pool_window);
    r.real("dbscan_eps", c.selection.dbscan_eps);
    r.count("dbscan_min_pts", c.selection.dbscan_min_pts);
    r.count("min_pool", c.selection.min_pool);
  }
  if (const auto* s = detail::section(root, "aggregation")) {
    detail::reject_unknown(*s, "aggregation", {"mode", "b", "K"});
    FieldReader r(s, "aggregation");
    if (auto m = r.text("mode")) {
      if (*m == "pace") {
        c.aggregation.mode = AggregationMode::Pace;
      } else if (*m == "buffered") {
        c.aggregation.mode = AggregationMode::Buffered;
      } else if (*m == "sync") {
        c.aggregation.mode = AggregationMode::Sync;
      } else {
        detail::parse_fail("aggregation.mode", "unknown mode '" + *m + "'");
      }
    }
    r.count("b", c.aggregation.bound);
    r.count("K", c.aggregation.goal);
  }
  if (const auto* s = detail::section(root, "training")) {
    detail::reject_unknown(*s, "training", {"local_steps", "learning_rate", "batch_size"});
    FieldReader r(s, "training");
    r.count("local_steps", c.training.local_steps);
    r.reals("learning_rate", c.training.learning_rate);
    r.count("batch_size", c.training.batch_size);
  }
  if (const auto* s = detail::section(root, "loop")) {
    detail::reject_unknown(*s, "loop", {"tick", "horizon", "target_loss", "eval_every"});
    FieldReader r(s, "loop");
    r.real("tick", c.loop.tick);
    r.real("horizon", c.loop.horizon);
    r.real("target_loss", c.loop.target_loss);
    r.count("eval_every", c.loop.eval_every);
  }
  return c;
}

/// Parses, fills every derived default and validates.
inline ScenarioConfig parse_scenario(std::string_view text) {
  auto c = resolve(parse_scenario_document(text));
  validate(c);
  return c;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IOError, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline ScenarioConfig load_scenario(const std::string& path) { return parse_scenario(read_text_file(path)); }

/// Every field written out, in the same document format.
inline nlohmann::ordered_json scenario_to_json(const ScenarioConfig& c) {
  using J = nlohmann::ordered_json;
  auto opt = [](const auto& o) { return o ? J(*o) : J(nullptr); };
  J j;
  j["n_clients"] = c.n_clients;
  j["seed"] = c.seed;
  j["policy"] = to_string(c.policy);
  j["concurrency"] = c.concurrency;
  j["task"] = {{"kind", to_string(c.task.kind)},
               {"dim", c.task.dim},
               {"n_classes", c.task.n_classes},
               {"n_samples", c.task.n_samples},
               {"holdout_samples", c.task.holdout_samples},
               {"noise", c.task.noise},
               {"corruption_fraction", c.task.corruption_fraction},
               {"separation", c.task.separation},
               {"spread", c.task.spread}};
  j["partition"] = {{"scheme", to_string(c.partition.scheme)}, {"concentration", c.partition.concentration}};
  j["latency"] = {{"zipf_a", c.latency.zipf_a},
                  {"base_latency", c.latency.base_latency},
                  {"jitter", c.latency.jitter},
                  {"profile_noise", c.latency.profile_noise}};
  j["selection"] = {{"beta", c.selection.beta},
                    {"staleness_window", c.selection.staleness_window},
                    {"oort_alpha", c.selection.oort_alpha},
                    {"oort_T", c.selection.oort_T},
                    {"blacklisting", opt(c.selection.blacklisting)},
                    {"credits", c.selection.credits},
                    {"pool_window", c.selection.pool_window},
                    {"dbscan_eps", opt(c.selection.dbscan_eps)},
                    {"dbscan_min_pts", opt(c.selection.dbscan_min_pts)},
                    {"min_pool", c.selection.min_pool}};
  j["aggregation"] = {{"mode", to_string(c.aggregation.mode)}, {"b", c.aggregation.bound}, {"K", c.aggregation.goal}};
  j["training"] = {{"local_steps", c.training.local_steps},
                   {"learning_rate", c.training.learning_rate},
                   {"batch_size", c.training.batch_size}};
  j["loop"] = {{"tick", c.loop.tick},
               {"horizon", c.loop.horizon},
               {"target_loss", opt(c.loop.target_loss)},
               {"eval_every", c.loop.eval_every}};
  return j;
}

inline std::string scenario_to_text(const ScenarioConfig& c) { return scenario_to_json(c).dump(2) + "\n"; }

}  // namespace pisces
