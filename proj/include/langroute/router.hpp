#pragma once

// Language router: topic/region logit matrices, temperature softmax,
// epsilon-greedy group sampling with an on-policy quota, annealing and the
// EMA logit update.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include <json.hpp>

#include "langroute/core.hpp"

namespace langroute {

// Dense row-major matrix of logits.
class LogitMatrix {
 public:
  LogitMatrix() = default;
  LogitMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  const std::vector<double>& data() const { return data_; }

  bool operator==(const LogitMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

struct RouterParams {
  LanguageRegistry languages;
  TopicRegistry topics;
  RegionRegistry regions;
  LogitMatrix topic_logits;   // [topic][language]
  LogitMatrix region_logits;  // [region][language]

  // Uniform routing: all-zero logits.
  static RouterParams zeros(LanguageRegistry languages, TopicRegistry topics, RegionRegistry regions) {
    RouterParams p{std::move(languages), std::move(topics), std::move(regions), {}, {}};
    p.topic_logits = LogitMatrix(p.topics.size(), p.languages.size());
    p.region_logits = LogitMatrix(p.regions.size(), p.languages.size());
    return p;
  }

  void validate() const {
    if (languages.empty()) throw ConfigError("router needs at least one language");
    if (topic_logits.rows() != topics.size() || topic_logits.cols() != languages.size())
      throw ConfigError("topic logit matrix shape does not match registries");
    if (region_logits.rows() != regions.size() || region_logits.cols() != languages.size())
      throw ConfigError("region logit matrix shape does not match registries");
    for (double v : topic_logits.data())
      if (!std::isfinite(v)) throw ConfigError("non-finite topic logit");
    for (double v : region_logits.data())
      if (!std::isfinite(v)) throw ConfigError("non-finite region logit");
  }
};

struct ScheduleState {
  double temperature = 1.0;
  double epsilon = 0.2;
  double decay_rate = 0.999;
  double temperature_min = 0.3;
  double epsilon_min = 0.05;
  std::uint64_t step_count = 0;

  void validate() const {
    if (!(temperature_min > 0.0)) throw InvalidParameter("temperature floor must be positive");
    if (!(temperature >= temperature_min)) throw InvalidParameter("temperature below its floor");
    if (!(epsilon_min >= 0.0 && epsilon_min <= 1.0)) throw InvalidParameter("epsilon floor must lie in [0,1]");
    if (!(epsilon >= epsilon_min && epsilon <= 1.0)) throw InvalidParameter("epsilon must lie in [epsilon_min,1]");
    if (!(decay_rate > 0.0 && decay_rate <= 1.0)) throw InvalidParameter("decay rate must lie in (0,1]");
  }

  bool operator==(const ScheduleState&) const = default;
};

// Probabilities aligned with the language registry order.
struct LanguageDistribution {
  std::vector<double> probs;

  double operator[](std::size_t i) const { return probs[i]; }
  std::size_t size() const { return probs.size(); }
  std::size_t argmax() const {
    return static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
  }
  double entropy() const {
    double h = 0.0;
    for (double p : probs)
      if (p > 0.0) h -= p * std::log(p);
    return h;
  }
};

// A[topic] + B[region] when the region is present, A[topic] otherwise.
inline std::vector<double> combined_logits(const TopicId& topic, const MaybeRegion& region,
                                           const RouterParams& params) {
  const auto t = params.topics.index_of(topic, "topic");
  auto row = params.topic_logits.row(t);
  std::vector<double> z(row.begin(), row.end());
  if (region) {
    const auto g = params.regions.index_of(*region, "region");
    auto brow = params.region_logits.row(g);
    for (std::size_t l = 0; l < z.size(); ++l) z[l] += brow[l];
  }
  return z;
}

inline LanguageDistribution language_distribution(std::span<const double> logits, double temperature) {
  if (!(temperature > 0.0)) throw InvalidParameter("softmax temperature must be positive");
  if (logits.empty()) throw InvalidParameter("empty logit vector");
  double top = -std::numeric_limits<double>::infinity();
  for (double v : logits) {
    if (!std::isfinite(v)) throw InvalidParameter("non-finite logit");
    top = std::max(top, v);
  }
  LanguageDistribution d;
  d.probs.resize(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    d.probs[i] = std::exp((logits[i] - top) / temperature);
    total += d.probs[i];
  }
  for (double& p : d.probs) p /= total;
  return d;
}

inline LanguageDistribution route(const TopicId& topic, const MaybeRegion& region, const RouterParams& params,
                                  double temperature) {
  return language_distribution(combined_logits(topic, region, params), temperature);
}

// First `on_policy` slots are the input language; each remaining slot is an
// independent draw: uniform over the registry with probability epsilon,
// otherwise from the routed distribution.
inline std::vector<LanguageId> sample_group_languages(const LanguageId& input_lang, const TopicId& topic,
                                                      const MaybeRegion& region, std::size_t group_size,
                                                      std::size_t on_policy, const RouterParams& params,
                                                      const ScheduleState& schedule, Rng& rng) {
  if (on_policy > group_size) throw InvalidParameter("on-policy quota exceeds group size");
  if (group_size == 0) throw InvalidParameter("group size must be positive");
  params.languages.index_of(input_lang, "language");
  const auto dist = route(topic, region, params, schedule.temperature);

  std::vector<LanguageId> out(on_policy, input_lang);
  out.reserve(group_size);
  for (std::size_t k = on_policy; k < group_size; ++k) {
    std::size_t pick;
    if (uniform01(rng) < schedule.epsilon)
      pick = uniform_index(rng, params.languages.size());
    else
      pick = sample_categorical(dist.probs, rng);
    out.push_back(params.languages.at(pick));
  }
  return out;
}

inline ScheduleState anneal(ScheduleState s) {
  s.temperature = std::max(s.temperature_min, s.temperature * s.decay_rate);
  s.epsilon = std::max(s.epsilon_min, s.epsilon * s.decay_rate);
  ++s.step_count;
  return s;
}

using TopicLanguageMeans = std::map<std::pair<TopicId, LanguageId>, double>;
using RegionLanguageMeans = std::map<std::pair<RegionId, LanguageId>, double>;

// EMA step toward observed means. Cells without an observation are untouched.
inline RouterParams apply_router_update(RouterParams params, const TopicLanguageMeans& topic_means,
                                        const RegionLanguageMeans& region_means, double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw InvalidParameter("adaptation rate must lie in (0,1]");
  auto blend = [alpha](double& cell, double mean) {
    if (!std::isfinite(mean)) throw InvalidParameter("non-finite reward mean");
    cell = (1.0 - alpha) * cell + alpha * mean;
  };
  for (const auto& [key, mean] : topic_means) {
    const auto t = params.topics.index_of(key.first, "topic");
    const auto l = params.languages.index_of(key.second, "language");
    blend(params.topic_logits(t, l), mean);
  }
  for (const auto& [key, mean] : region_means) {
    const auto g = params.regions.index_of(key.first, "region");
    const auto l = params.languages.index_of(key.second, "language");
    blend(params.region_logits(g, l), mean);
  }
  return params;
}

struct RouterState {
  RouterParams params;
  ScheduleState schedule;
};

// ---------------------------------------------------------------------------
// JSON

namespace detail {

inline nlohmann::json matrix_to_json(const LogitMatrix& m) {
  auto rows = nlohmann::json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    rows.push_back(std::vector<double>(row.begin(), row.end()));
  }
  return rows;
}

inline LogitMatrix matrix_from_json(const nlohmann::json& j, std::size_t rows, std::size_t cols,
                                    const char* name) {
  if (!j.is_array() || j.size() != rows) throw ConfigError(std::string(name) + ": wrong number of rows");
  LogitMatrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].size() != cols) throw ConfigError(std::string(name) + ": ragged row");
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

}  // namespace detail

inline nlohmann::json to_json(const ScheduleState& s) {
  return {{"temperature", s.temperature},         {"epsilon", s.epsilon},
          {"decay_rate", s.decay_rate},           {"temperature_min", s.temperature_min},
          {"epsilon_min", s.epsilon_min},         {"step_count", s.step_count}};
}

inline ScheduleState schedule_from_json(const nlohmann::json& j) {
  ScheduleState s;
  s.temperature = j.at("temperature").get<double>();
  s.epsilon = j.at("epsilon").get<double>();
  s.decay_rate = j.at("decay_rate").get<double>();
  s.temperature_min = j.at("temperature_min").get<double>();
  s.epsilon_min = j.at("epsilon_min").get<double>();
  s.step_count = j.at("step_count").get<std::uint64_t>();
  s.validate();
  return s;
}

inline nlohmann::json to_json(const RouterState& state) {
  const auto& p = state.params;
  return {{"languages", p.languages.labels()},
          {"topics", p.topics.labels()},
          {"regions", p.regions.labels()},
          {"topic_logits", detail::matrix_to_json(p.topic_logits)},
          {"region_logits", detail::matrix_to_json(p.region_logits)},
          {"schedule", to_json(state.schedule)}};
}

inline RouterState router_state_from_json(const nlohmann::json& j) {
  try {
    RouterState s;
    s.params.languages = LanguageRegistry(j.at("languages").get<std::vector<std::string>>(), "language");
    s.params.topics = TopicRegistry(j.at("topics").get<std::vector<std::string>>(), "topic");
    s.params.regions = RegionRegistry(j.at("regions").get<std::vector<std::string>>(), "region");
    s.params.topic_logits = detail::matrix_from_json(j.at("topic_logits"), s.params.topics.size(),
                                                     s.params.languages.size(), "topic_logits");
    s.params.region_logits = detail::matrix_from_json(j.at("region_logits"), s.params.regions.size(),
                                                      s.params.languages.size(), "region_logits");
    s.params.validate();
    s.schedule = schedule_from_json(j.at("schedule"));
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed router state: ") + e.what());
  }
}

}  // namespace langroute
