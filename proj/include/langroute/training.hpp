#pragma once

// Training loop: router-guided rollout groups, calibrated and gated rewards,
// group-normalized policy feedback, reward buffer and periodic router
// updates.

#include <cmath>
#include <exception>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "langroute/calibration.hpp"
#include "langroute/core.hpp"
#include "langroute/rewards.hpp"
#include "langroute/router.hpp"

namespace langroute {

struct Question {
  std::string id;
  LanguageId input_lang;
  TopicId topic;
  MaybeRegion region;
  std::string payload;
};

// Abstract learner. generate() must be deterministic in (question, target,
// rng state) and safe to call concurrently; feedback() is called from one
// thread, once per group, in batch order.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual Response generate(const Question& question, const LanguageId& target, Rng& rng) const = 0;
  // Returns the number of rollouts acknowledged.
  virtual std::size_t feedback(const Question& question, const RolloutGroup& group) = 0;
};

using BufferKey = std::tuple<TopicId, MaybeRegion, LanguageId>;

struct BufferCell {
  double sum = 0.0;
  std::size_t count = 0;
};

class RewardBuffer {
 public:
  void add(const TopicId& t, const MaybeRegion& g, const LanguageId& l, double reward) {
    auto& c = cells_[BufferKey{t, g, l}];
    c.sum += reward;
    ++c.count;
  }
  void clear() { cells_.clear(); }
  bool empty() const { return cells_.empty(); }
  const std::map<BufferKey, BufferCell>& cells() const { return cells_; }
  std::size_t total_count() const {
    std::size_t n = 0;
    for (const auto& [k, c] : cells_) n += c.count;
    return n;
  }

 private:
  std::map<BufferKey, BufferCell> cells_;
};

struct AggregatedMeans {
  TopicLanguageMeans topic_means;
  RegionLanguageMeans region_means;
};

// Marginal means: topics pool over regions; regions pool over topics and
// ignore absent-region cells.
inline AggregatedMeans aggregate_buffer(const RewardBuffer& buffer) {
  std::map<std::pair<TopicId, LanguageId>, BufferCell> by_topic;
  std::map<std::pair<RegionId, LanguageId>, BufferCell> by_region;
  for (const auto& [key, cell] : buffer.cells()) {
    const auto& [t, g, l] = key;
    auto& tc = by_topic[{t, l}];
    tc.sum += cell.sum;
    tc.count += cell.count;
    if (g) {
      auto& rc = by_region[{*g, l}];
      rc.sum += cell.sum;
      rc.count += cell.count;
    }
  }
  AggregatedMeans out;
  for (const auto& [k, c] : by_topic) out.topic_means[k] = c.sum / static_cast<double>(c.count);
  for (const auto& [k, c] : by_region) out.region_means[k] = c.sum / static_cast<double>(c.count);
  return out;
}

enum class RoutingMode { lrpo, monolingual, input_dominant, en_dominant, uniform };

inline RoutingMode parse_routing_mode(const std::string& s) {
  if (s == "lrpo") return RoutingMode::lrpo;
  if (s == "fixed:monolingual") return RoutingMode::monolingual;
  if (s == "fixed:input_dominant") return RoutingMode::input_dominant;
  if (s == "fixed:en_dominant") return RoutingMode::en_dominant;
  if (s == "fixed:uniform") return RoutingMode::uniform;
  throw ConfigError("unknown routing mode '" + s + "'");
}

inline std::string to_string(RoutingMode m) {
  switch (m) {
    case RoutingMode::lrpo: return "lrpo";
    case RoutingMode::monolingual: return "fixed:monolingual";
    case RoutingMode::input_dominant: return "fixed:input_dominant";
    case RoutingMode::en_dominant: return "fixed:en_dominant";
    case RoutingMode::uniform: return "fixed:uniform";
  }
  return "lrpo";
}

enum class AnnealCadence { step, router_update };

struct TrainConfig {
  std::size_t group_size = 8;
  std::size_t on_policy_quota = 2;
  std::size_t router_update_period = 8;
  double adaptation_rate = 0.1;
  std::size_t batch_size = 8;
  std::size_t total_steps = 1600;
  CalibrationMode calibration_mode = CalibrationMode::mean;
  RoutingMode mode = RoutingMode::lrpo;
  AnnealCadence anneal_every = AnnealCadence::step;
  LanguageId dominant_language{"en"};
  ScheduleState schedule{};
  std::uint64_t seed = 0;

  void validate() const {
    if (group_size < 1) throw ConfigError("group_size must be >= 1");
    if (on_policy_quota > group_size) throw ConfigError("on_policy_quota exceeds group_size");
    if (router_update_period < 1) throw ConfigError("router_update_period must be >= 1");
    if (!(adaptation_rate > 0.0 && adaptation_rate <= 1.0)) throw ConfigError("adaptation_rate must lie in (0,1]");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    try {
      schedule.validate();
    } catch (const InvalidParameter& e) {
      throw ConfigError(e.what());
    }
  }
};

// Share of each group reserved for the input language in the fixed mixes.
inline double fixed_input_share(RoutingMode m) {
  switch (m) {
    case RoutingMode::monolingual: return 1.0;
    case RoutingMode::input_dominant: return 0.75;
    case RoutingMode::en_dominant: return 0.25;
    case RoutingMode::uniform: return 0.25;
    case RoutingMode::lrpo: break;
  }
  throw InvalidParameter("lrpo mode has no fixed mix");
}

// Fixed-router group: round(share*K) input-language slots (fractional part
// resolved by a Bernoulli draw so the expected share is exact), the rest
// either the dominant language or uniform over the non-input languages.
inline std::vector<LanguageId> fixed_group_languages(RoutingMode mode, const LanguageId& input_lang,
                                                     std::size_t group_size, const LanguageRegistry& languages,
                                                     const LanguageId& dominant, Rng& rng) {
  const double target = fixed_input_share(mode) * static_cast<double>(group_size);
  auto n_input = static_cast<std::size_t>(std::floor(target));
  const double frac = target - static_cast<double>(n_input);
  if (frac > 0.0 && uniform01(rng) < frac) ++n_input;

  std::vector<LanguageId> out(n_input, input_lang);
  std::vector<LanguageId> others;
  for (const auto& l : languages.ids())
    if (l != input_lang) others.push_back(l);
  for (std::size_t k = n_input; k < group_size; ++k) {
    if (mode == RoutingMode::uniform && !others.empty())
      out.push_back(others[uniform_index(rng, others.size())]);
    else if (mode == RoutingMode::uniform)
      out.push_back(input_lang);
    else
      out.push_back(dominant);
  }
  return out;
}

struct ScoredGroup {
  const Question* question = nullptr;
  RolloutGroup group;
};

struct StepReport {
  std::uint64_t step = 0;
  std::vector<ScoredGroup> groups;
  std::vector<double> group_mean_gated;
  double consistency_rate = 0.0;
  std::map<LanguageId, std::size_t> language_histogram;  // by target language
};

// Fails fast with the offending pair when a reachable pair has no stats.
inline void check_calibration_coverage(const CalibrationStats& stats, const LanguageRegistry& languages,
                                       std::span<const LanguageId> input_langs) {
  for (const auto& in : input_langs)
    for (const auto& l : languages.ids())
      if (!stats.contains(in, l))
        throw CalibrationError("calibration statistics missing language pair " + LanguagePair::of(in, l).key());
}

inline std::uint64_t question_seed(std::uint64_t run_seed, std::uint64_t step, std::size_t slot,
                                   const std::string& question_id) {
  return derive_seed(run_seed, 0x51ULL, step, slot, hash_label(question_id));
}

namespace detail {

inline ScoredGroup score_question(const Question& q, std::size_t slot, std::uint64_t step, const Policy& policy,
                                  const SimilarityOracle& oracle, const RouterState& router,
                                  const CalibrationStats& stats, const TrainConfig& config) {
  Rng rng(question_seed(config.seed, step, slot, q.id));
  std::vector<LanguageId> langs;
  if (config.mode == RoutingMode::lrpo)
    langs = sample_group_languages(q.input_lang, q.topic, q.region, config.group_size, config.on_policy_quota,
                                   router.params, router.schedule, rng);
  else
    langs = fixed_group_languages(config.mode, q.input_lang, config.group_size, router.params.languages,
                                  config.dominant_language, rng);

  const Response reference{q.id, q.input_lang, 1.0, q.payload};
  ScoredGroup out{&q, RolloutGroup{q.id, {}}};
  out.group.rollouts.reserve(langs.size());
  for (const auto& target : langs) {
    const Response resp = policy.generate(q, target, rng);
    Rollout r;
    r.question_id = q.id;
    r.target_lang = target;
    r.delivered_lang = resp.language;
    r.raw_similarity = oracle.score(resp, reference, rng);
    r.quality_reward =
        calibrate(config.calibration_mode, r.raw_similarity, LanguagePair::of(q.input_lang, target), stats);
    out.group.rollouts.push_back(std::move(r));
  }
  score_group(out.group);
  return out;
}

}  // namespace detail

// One policy step over a batch. Groups are scored on up to `workers`
// threads; results, feedback and buffer accumulation are serialized in
// batch order so the outcome does not depend on `workers`.
inline StepReport run_step(std::span<const Question> batch, Policy& policy, const SimilarityOracle& oracle,
                           const RouterState& router, const CalibrationStats& stats, RewardBuffer& buffer,
                           const TrainConfig& config, std::uint64_t step, std::size_t workers = 1) {
  std::vector<LanguageId> inputs;
  for (const auto& q : batch) inputs.push_back(q.input_lang);
  check_calibration_coverage(stats, router.params.languages, inputs);

  StepReport report;
  report.step = step;
  report.groups.resize(batch.size());
  workers = std::max<std::size_t>(1, std::min(workers, batch.size()));
  if (workers == 1) {
    for (std::size_t i = 0; i < batch.size(); ++i)
      report.groups[i] = detail::score_question(batch[i], i, step, policy, oracle, router, stats, config);
  } else {
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < batch.size(); i += workers)
            report.groups[i] = detail::score_question(batch[i], i, step, policy, oracle, router, stats, config);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  std::size_t consistent = 0, total = 0;
  for (const auto& sg : report.groups) {
    policy.feedback(*sg.question, sg.group);
    double sum = 0.0;
    for (const auto& r : sg.group.rollouts) {
      buffer.add(sg.question->topic, sg.question->region, r.target_lang, r.gated_reward);
      ++report.language_histogram[r.target_lang];
      consistent += static_cast<std::size_t>(r.consistency);
      ++total;
      sum += r.gated_reward;
    }
    report.group_mean_gated.push_back(sg.group.rollouts.empty() ? 0.0
                                                                 : sum / static_cast<double>(sg.group.rollouts.size()));
  }
  report.consistency_rate = total ? static_cast<double>(consistent) / static_cast<double>(total) : 0.0;
  return report;
}

// On period boundaries: aggregate, EMA-update, (optionally) anneal, clear.
inline bool maybe_update_router(std::uint64_t step, const TrainConfig& config, RewardBuffer& buffer,
                                RouterState& router) {
  if (step == 0 || step % config.router_update_period != 0) return false;
  const auto means = aggregate_buffer(buffer);
  router.params = apply_router_update(std::move(router.params), means.topic_means, means.region_means,
                                      config.adaptation_rate);
  if (config.anneal_every == AnnealCadence::router_update) router.schedule = anneal(router.schedule);
  buffer.clear();
  return true;
}

// Snapshot of the router at a period boundary.
struct TrajectoryPoint {
  std::size_t update = 0;
  std::uint64_t step = 0;
  bool updated = false;
  RouterState router;
};

struct RunSinks {
  std::function<void(const Question&, std::uint64_t step, const Rollout&)> on_rollout;
  std::function<void(const TrajectoryPoint&)> on_trajectory;
};

struct RunTotals {
  std::size_t rollouts = 0;
  std::size_t consistent = 0;
  double gated_sum = 0.0;
  std::map<LanguageId, std::size_t> target_histogram;
  std::map<LanguageId, std::size_t> delivered_histogram;
  std::map<BufferKey, BufferCell> cell_rewards;

  double mean_gated() const { return rollouts ? gated_sum / static_cast<double>(rollouts) : 0.0; }
};

// Full run over a fixed corpus; batches are drawn uniformly with replacement
// from a per-step sub-seed.
class Trainer {
 public:
  Trainer(TrainConfig config, RouterState router, std::vector<Question> corpus, Policy& policy,
          const SimilarityOracle& oracle, const CalibrationStats& stats)
      : config_(std::move(config)),
        router_(std::move(router)),
        corpus_(std::move(corpus)),
        policy_(policy),
        oracle_(oracle),
        stats_(stats) {
    config_.validate();
    router_.params.validate();
    if (corpus_.empty()) throw ConfigError("empty question corpus");
    std::vector<LanguageId> inputs;
    for (const auto& q : corpus_) {
      router_.params.languages.index_of(q.input_lang, "language");
      router_.params.topics.index_of(q.topic, "topic");
      if (q.region) router_.params.regions.index_of(*q.region, "region");
      inputs.push_back(q.input_lang);
    }
    if (config_.mode == RoutingMode::en_dominant || config_.mode == RoutingMode::input_dominant)
      router_.params.languages.index_of(config_.dominant_language, "language");
    check_calibration_coverage(stats_, router_.params.languages, inputs);
  }

  const RouterState& router() const { return router_; }
  const RewardBuffer& buffer() const { return buffer_; }
  const RunTotals& totals() const { return totals_; }
  std::uint64_t step() const { return step_; }

  StepReport step_once(std::size_t workers = 1, const RunSinks* sinks = nullptr) {
    ++step_;
    Rng batch_rng(derive_seed(config_.seed, 0xBA7CULL, step_));
    std::vector<Question> batch;
    batch.reserve(config_.batch_size);
    for (std::size_t i = 0; i < config_.batch_size; ++i) batch.push_back(corpus_[uniform_index(batch_rng, corpus_.size())]);

    auto report = run_step(batch, policy_, oracle_, router_, stats_, buffer_, config_, step_, workers);
    for (const auto& sg : report.groups) {
      for (const auto& r : sg.group.rollouts) {
        ++totals_.rollouts;
        totals_.consistent += static_cast<std::size_t>(r.consistency);
        totals_.gated_sum += r.gated_reward;
        ++totals_.target_histogram[r.target_lang];
        ++totals_.delivered_histogram[r.delivered_lang];
        auto& c = totals_.cell_rewards[BufferKey{sg.question->topic, sg.question->region, r.target_lang}];
        c.sum += r.gated_reward;
        ++c.count;
        if (sinks && sinks->on_rollout) sinks->on_rollout(*sg.question, step_, r);
      }
    }
    // Question pointers refer to the local batch; drop them before returning.
    for (auto& sg : report.groups) sg.question = nullptr;

    if (config_.anneal_every == AnnealCadence::step) router_.schedule = anneal(router_.schedule);
    bool boundary = step_ % config_.router_update_period == 0;
    bool updated = false;
    if (config_.mode == RoutingMode::lrpo) {
      updated = maybe_update_router(step_, config_, buffer_, router_);
    } else if (boundary) {
      buffer_.clear();
    }
    if (boundary) {
      ++updates_;
      if (sinks && sinks->on_trajectory) sinks->on_trajectory(TrajectoryPoint{updates_, step_, updated, router_});
    }
    return report;
  }

  void run(std::size_t workers = 1, const RunSinks* sinks = nullptr) {
    while (step_ < config_.total_steps) step_once(workers, sinks);
  }

 private:
  TrainConfig config_;
  RouterState router_;
  std::vector<Question> corpus_;
  Policy& policy_;
  const SimilarityOracle& oracle_;
  const CalibrationStats& stats_;
  RewardBuffer buffer_;
  RunTotals totals_;
  std::uint64_t step_ = 0;
  std::size_t updates_ = 0;
};

}  // namespace langroute
