#pragma once

#include <cstdint>
#include <cstdio>
#include <istream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <type_traits>
#include <variant>
#include <vector>

#include <json.hpp>

#include "pisces/aggregation.hpp"
#include "pisces/core.hpp"
#include "pisces/selection.hpp"

namespace pisces {

// Payloads, one per event kind.

struct RunStarted {
  double tick = 1.0;
  AggregationMode mode = AggregationMode::Pace;
  Policy policy = Policy::Pisces;
  std::size_t bound = 0;
  std::size_t concurrency = 0;
  std::size_t n_clients = 0;
  std::uint64_t seed = 0;
};

struct UpdateReported {
  ClientId client = 0;
  Version base_version = 0;
  SimTime selected_at = 0.0;
  double latency = 0.0;
  double mean_loss = 0.0;
  std::size_t sample_count = 0;
};

struct Aggregated {
  Version version = 0;
  std::optional<double> interval;
  std::vector<ClientId> contributors;
  std::vector<Version> staleness;
};

struct Blacklisted {
  ClientId client = 0;
};

struct LossEvaluated {
  Version version = 0;
  double loss = 0.0;
};

struct Selected {
  ClientId client = 0;
  Version base_version = 0;
};

struct Diverged {
  Version version = 0;
  std::string reason;
};

// Alternative order is the within-timestamp rank used for sorting.
using EventPayload =
    std::variant<RunStarted, UpdateReported, Aggregated, Blacklisted, LossEvaluated, Selected, Diverged>;

inline constexpr std::string_view kEventKindNames[] = {"run_started",    "update_reported", "aggregated", "blacklisted",
                                                       "loss_evaluated", "selected",        "diverged"};

struct SimEvent {
  SimTime time = 0.0;
  EventPayload payload;

  std::size_t rank() const noexcept { return payload.index(); }
  std::string_view kind() const noexcept { return kEventKindNames[payload.index()]; }

  ClientId client_key() const noexcept {
    return std::visit(
        [](const auto& p) -> ClientId {
          if constexpr (requires { p.client; }) {
            return p.client;
          } else {
            return 0;
          }
        },
        payload);
  }

  template <typename T>
  const T* as() const noexcept {
    return std::get_if<T>(&payload);
  }
};

using EventLog = std::vector<SimEvent>;

/// Canonical order: time, then kind rank, then client id.
inline bool event_less(const SimEvent& a, const SimEvent& b) {
  return std::tuple(a.time, a.rank(), a.client_key()) < std::tuple(b.time, b.rank(), b.client_key());
}

// ---------------------------------------------------------------------------
// Serialization: one JSON object per line, keys "time", "kind", then the
// payload keys in lexicographic order. Reals use 17 significant digits.

namespace detail {

inline std::string format_real(double v) {
  if (!std::isfinite(v)) {
    if (std::isnan(v)) return "\"nan\"";
    return v > 0 ? "\"inf\"" : "\"-inf\"";
  }
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string quote(std::string_view s) { return nlohmann::json(std::string(s)).dump(); }

class LineWriter {
 public:
  LineWriter(double time, std::string_view kind) {
    out_ << "{\"time\":" << format_real(time) << ",\"kind\":\"" << kind << '"';
  }
  LineWriter& real(std::string_view key, double v) {
    out_ << ",\"" << key << "\":" << format_real(v);
    return *this;
  }
  template <typename I>
  LineWriter& integer(std::string_view key, I v) {
    out_ << ",\"" << key << "\":" << v;
    return *this;
  }
  LineWriter& text(std::string_view key, std::string_view v) {
    out_ << ",\"" << key << "\":" << quote(v);
    return *this;
  }
  template <typename I>
  LineWriter& integers(std::string_view key, const std::vector<I>& v) {
    out_ << ",\"" << key << "\":[";
    for (std::size_t i = 0; i < v.size(); ++i) out_ << (i ? "," : "") << v[i];
    out_ << ']';
    return *this;
  }
  std::string finish() {
    out_ << '}';
    return out_.str();
  }

 private:
  std::ostringstream out_;
};

}  // namespace detail

inline std::string serialize_event(const SimEvent& e) {
  detail::LineWriter w(e.time, e.kind());
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, RunStarted>) {
          w.integer("bound", p.bound)
              .integer("concurrency", p.concurrency)
              .text("mode", to_string(p.mode))
              .integer("n_clients", p.n_clients)
              .text("policy", to_string(p.policy))
              .integer("seed", p.seed)
              .real("tick", p.tick);
        } else if constexpr (std::is_same_v<T, UpdateReported>) {
          w.integer("base_version", p.base_version)
              .integer("client", p.client)
              .real("latency", p.latency)
              .real("mean_loss", p.mean_loss)
              .integer("sample_count", p.sample_count)
              .real("selected_at", p.selected_at);
        } else if constexpr (std::is_same_v<T, Aggregated>) {
          w.integers("contributors", p.contributors);
          if (p.interval) w.real("interval", *p.interval);
          w.integers("staleness", p.staleness).integer("version", p.version);
        } else if constexpr (std::is_same_v<T, Blacklisted>) {
          w.integer("client", p.client);
        } else if constexpr (std::is_same_v<T, LossEvaluated>) {
          w.real("loss", p.loss).integer("version", p.version);
        } else if constexpr (std::is_same_v<T, Selected>) {
          w.integer("base_version", p.base_version).integer("client", p.client);
        } else if constexpr (std::is_same_v<T, Diverged>) {
          w.text("reason", p.reason).integer("version", p.version);
        }
      },
      e.payload);
  return w.finish();
}

inline std::string serialize_log(const EventLog& log) {
  std::string out;
  for (const auto& e : log) {
    out += serialize_event(e);
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Parsing

namespace detail {

inline double read_real(const nlohmann::json& j, const char* key) {
  const auto& v = j.at(key);
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "inf") return INFINITY;
    if (s == "-inf") return -INFINITY;
    if (s == "nan") return NAN;
    throw Error(Errc::LogParseError, std::string("bad real in field ") + key);
  }
  return v.get<double>();
}

inline AggregationMode parse_mode(const std::string& s) {
  if (s == "pace") return AggregationMode::Pace;
  if (s == "buffered") return AggregationMode::Buffered;
  if (s == "sync") return AggregationMode::Sync;
  throw Error(Errc::LogParseError, "unknown mode " + s);
}

inline Policy parse_policy(const std::string& s) {
  if (s == "pisces") return Policy::Pisces;
  if (s == "oort") return Policy::Oort;
  if (s == "random") return Policy::Random;
  throw Error(Errc::LogParseError, "unknown policy " + s);
}

}  // namespace detail

inline SimEvent parse_event(std::string_view line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& ex) {
    throw Error(Errc::LogParseError, ex.what());
  }
  try {
    SimEvent e;
    e.time = detail::read_real(j, "time");
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "run_started") {
      RunStarted p;
      p.bound = j.at("bound").get<std::size_t>();
      p.concurrency = j.at("concurrency").get<std::size_t>();
      p.mode = detail::parse_mode(j.at("mode").get<std::string>());
      p.n_clients = j.at("n_clients").get<std::size_t>();
      p.policy = detail::parse_policy(j.at("policy").get<std::string>());
      p.seed = j.at("seed").get<std::uint64_t>();
      p.tick = detail::read_real(j, "tick");
      e.payload = p;
    } else if (kind == "update_reported") {
      UpdateReported p;
      p.base_version = j.at("base_version").get<Version>();
      p.client = j.at("client").get<ClientId>();
      p.latency = detail::read_real(j, "latency");
      p.mean_loss = detail::read_real(j, "mean_loss");
      p.sample_count = j.at("sample_count").get<std::size_t>();
      p.selected_at = detail::read_real(j, "selected_at");
      e.payload = p;
    } else if (kind == "aggregated") {
      Aggregated p;
      p.contributors = j.at("contributors").get<std::vector<ClientId>>();
      if (j.contains("interval")) p.interval = detail::read_real(j, "interval");
      p.staleness = j.at("staleness").get<std::vector<Version>>();
      p.version = j.at("version").get<Version>();
      if (p.staleness.size() != p.contributors.size()) {
        throw Error(Errc::LogParseError, "staleness/contributors length mismatch");
      }
      e.payload = p;
    } else if (kind == "blacklisted") {
      e.payload = Blacklisted{j.at("client").get<ClientId>()};
    } else if (kind == "loss_evaluated") {
      e.payload = LossEvaluated{j.at("version").get<Version>(), detail::read_real(j, "loss")};
    } else if (kind == "selected") {
      e.payload = Selected{j.at("client").get<ClientId>(), j.at("base_version").get<Version>()};
    } else if (kind == "diverged") {
      e.payload = Diverged{j.at("version").get<Version>(), j.at("reason").get<std::string>()};
    } else {
      throw Error(Errc::LogParseError, "unknown event kind " + kind);
    }
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw Error(Errc::LogParseError, ex.what());
  }
}

inline EventLog parse_log(std::istream& in) {
  EventLog log;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      log.push_back(parse_event(line));
    } catch (const Error& ex) {
      throw Error(Errc::LogParseError, "line " + std::to_string(lineno) + ": " + ex.what());
    }
  }
  return log;
}

inline EventLog parse_log(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse_log(in);
}

}  // namespace pisces
