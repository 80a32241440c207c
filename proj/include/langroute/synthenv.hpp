#pragma once

// Synthetic multilingual world with known ground truth: per-cell response
// quality, per-pair additive similarity offsets and a disobedience rate for
// the target-language instruction.

#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "langroute/calibration.hpp"
#include "langroute/core.hpp"
#include "langroute/training.hpp"

namespace langroute {

struct QualitySpec {
  double mean = 0.5;
  double spread = 0.0;
};

struct SynthWorld {
  LanguageRegistry languages;
  TopicRegistry topics;
  RegionRegistry regions;
  std::vector<double> topic_weights;     // aligned with topics
  std::vector<double> region_weights;    // aligned with regions
  std::vector<double> language_weights;  // input-language mix, aligned with languages
  std::set<TopicId> regional_topics;     // questions on these topics carry a region
  std::map<BufferKey, QualitySpec> quality;
  QualitySpec default_quality{0.5, 0.1};
  std::map<LanguagePair, double> pair_offset;
  double noise_spread = 0.05;
  double p_disobey = 0.1;
  QualitySpec equivalent_quality{0.9, 0.03};
  QualitySpec mismatch_quality{0.3, 0.1};
  std::size_t n_references = 100;

  void validate() const;

  // Cell lookup with fallback (t,g,l) -> (t,absent,l) -> default.
  const QualitySpec& quality_for(const TopicId& t, const MaybeRegion& g, const LanguageId& l) const {
    if (g) {
      auto it = quality.find(BufferKey{t, g, l});
      if (it != quality.end()) return it->second;
    }
    auto it = quality.find(BufferKey{t, std::nullopt, l});
    return it != quality.end() ? it->second : default_quality;
  }

  double offset(const LanguageId& a, const LanguageId& b) const {
    auto it = pair_offset.find(LanguagePair::of(a, b));
    return it == pair_offset.end() ? 0.0 : it->second;
  }
};

namespace detail {

inline void check_spec(const QualitySpec& q, const std::string& where) {
  if (!(q.mean >= 0.0 && q.mean <= 1.0)) throw ConfigError(where + ": quality mean must lie in [0,1]");
  if (!(q.spread >= 0.0) || !std::isfinite(q.spread)) throw ConfigError(where + ": spread must be >= 0");
}

inline void check_weights(const std::vector<double>& w, std::size_t n, const std::string& what) {
  if (w.size() != n) throw ConfigError(what + " weights do not match the registry");
  double total = 0.0;
  for (double x : w) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw ConfigError(what + " weights must be non-negative");
    total += x;
  }
  if (n > 0 && !(total > 0.0)) throw ConfigError(what + " weights must have positive mass");
}

// Gaussian draw; a zero spread is the degenerate distribution and consumes no
// randomness.
inline double gaussian(double mean, double spread, Rng& rng) {
  if (spread == 0.0) return mean;
  return std::normal_distribution<double>(mean, spread)(rng);
}

}  // namespace detail

inline void SynthWorld::validate() const {
  if (languages.empty()) throw ConfigError("world declares no languages");
  if (topics.empty()) throw ConfigError("world declares no topics");
  detail::check_weights(topic_weights, topics.size(), "topic");
  detail::check_weights(region_weights, regions.size(), "region");
  detail::check_weights(language_weights, languages.size(), "input-language");
  for (const auto& t : regional_topics) {
    topics.index_of(t, "topic");
    if (regions.empty()) throw ConfigError("regional topic '" + t.value + "' but no regions declared");
  }
  for (const auto& [key, spec] : quality) {
    const auto& [t, g, l] = key;
    topics.index_of(t, "topic");
    if (g) regions.index_of(*g, "region");
    languages.index_of(l, "language");
    detail::check_spec(spec, "quality cell " + t.value + "/" + region_label(g) + "/" + l.value);
  }
  detail::check_spec(default_quality, "default_quality");
  detail::check_spec(equivalent_quality, "equivalent_quality");
  detail::check_spec(mismatch_quality, "mismatch_quality");
  for (const auto& [pair, delta] : pair_offset) {
    languages.index_of(pair.first, "language");
    languages.index_of(pair.second, "language");
    if (!std::isfinite(delta)) throw ConfigError("non-finite offset for pair " + pair.key());
  }
  if (!(noise_spread >= 0.0) || !std::isfinite(noise_spread)) throw ConfigError("noise_spread must be >= 0");
  if (!(p_disobey >= 0.0 && p_disobey <= 1.0)) throw ConfigError("p_disobey must lie in [0,1]");
  if (n_references < 2) throw ConfigError("n_references must be >= 2");
}

inline std::vector<Question> generate_corpus(const SynthWorld& world, std::size_t n, Rng& rng) {
  if (n < 1) throw InvalidParameter("corpus size must be >= 1");
  std::vector<Question> out;
  out.reserve(n);
  char id[32];
  for (std::size_t i = 0; i < n; ++i) {
    Question q;
    std::snprintf(id, sizeof id, "q%06zu", i);
    q.id = id;
    q.topic = world.topics.at(sample_categorical(world.topic_weights, rng));
    if (world.regional_topics.count(q.topic)) q.region = world.regions.at(sample_categorical(world.region_weights, rng));
    q.input_lang = world.languages.at(sample_categorical(world.language_weights, rng));
    q.payload = "synthetic:" + q.id;
    out.push_back(std::move(q));
  }
  return out;
}

struct SynthResponse {
  double latent_quality = 0.0;
  LanguageId delivered_lang;
};

inline SynthResponse synth_generate(const SynthWorld& world, const Question& q, const LanguageId& target, Rng& rng) {
  const auto target_idx = world.languages.index_of(target, "language");
  const auto& spec = world.quality_for(q.topic, q.region, target);
  SynthResponse r;
  r.latent_quality = clamp01(detail::gaussian(spec.mean, spec.spread, rng));
  r.delivered_lang = target;
  const auto n = world.languages.size();
  if (n > 1 && world.p_disobey > 0.0 && uniform01(rng) < world.p_disobey) {
    std::size_t other = uniform_index(rng, n - 1);
    if (other >= target_idx) ++other;
    r.delivered_lang = world.languages.at(other);
  }
  return r;
}

inline double synth_similarity(const SynthWorld& world, double latent_quality, const LanguageId& reference_lang,
                               const LanguageId& response_lang, Rng& rng) {
  return clamp01(latent_quality + world.offset(reference_lang, response_lang) +
                 detail::gaussian(0.0, world.noise_spread, rng));
}

// Same-content pairs score the candidate's latent quality; different-content
// pairs draw a latent quality from the world's mismatch distribution.
class SynthOracle final : public SimilarityOracle {
 public:
  explicit SynthOracle(const SynthWorld& world) : world_(world) {}

 protected:
  double raw_score(const Response& candidate, const Response& reference, Rng& rng) const override {
    double latent = candidate.latent_quality;
    if (candidate.source_id != reference.source_id)
      latent = clamp01(detail::gaussian(world_.mismatch_quality.mean, world_.mismatch_quality.spread, rng));
    return synth_similarity(world_, latent, reference.language, candidate.language, rng);
  }

 private:
  const SynthWorld& world_;
};

class SynthPolicy final : public Policy {
 public:
  explicit SynthPolicy(const SynthWorld& world) : world_(world) {}

  Response generate(const Question& q, const LanguageId& target, Rng& rng) const override {
    const auto r = synth_generate(world_, q, target, rng);
    return Response{q.id, r.delivered_lang, r.latent_quality, {}};
  }

  std::size_t feedback(const Question&, const RolloutGroup& group) override {
    ++groups_seen_;
    for (const auto& r : group.rollouts) advantage_sum_ += r.advantage;
    return group.rollouts.size();
  }

  std::size_t groups_seen() const { return groups_seen_; }
  double advantage_sum() const { return advantage_sum_; }

 private:
  const SynthWorld& world_;
  std::size_t groups_seen_ = 0;
  double advantage_sum_ = 0.0;
};

// Offline references: one rendering per language, latent fidelity drawn from
// the world's equivalent-quality distribution.
inline std::vector<ReferenceItem> make_references(const SynthWorld& world, std::size_t n, Rng& rng) {
  std::vector<ReferenceItem> refs;
  refs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    ReferenceItem item;
    item.id = "ref-" + std::to_string(i);
    for (const auto& l : world.languages.ids()) {
      const double fidelity =
          clamp01(detail::gaussian(world.equivalent_quality.mean, world.equivalent_quality.spread, rng));
      item.renderings.emplace(l, Response{item.id, l, fidelity, {}});
    }
    refs.push_back(std::move(item));
  }
  return refs;
}

// E[clamp(X, 0, 1)] for X ~ Normal(mean, spread).
inline double clamped_normal_mean(double mean, double spread) {
  if (spread == 0.0) return clamp01(mean);
  const auto pdf = [](double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI); };
  const auto cdf = [](double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); };
  const double a = (0.0 - mean) / spread;
  const double b = (1.0 - mean) / spread;
  return mean * (cdf(b) - cdf(a)) + spread * (pdf(a) - pdf(b)) + (1.0 - cdf(b));
}

// Expected gated reward before calibration, (1 - p_disobey) * E[quality].
inline double expected_gated_quality(const SynthWorld& world, const TopicId& t, const MaybeRegion& g,
                                     const LanguageId& l) {
  const auto& spec = world.quality_for(t, g, l);
  return (1.0 - world.p_disobey) * clamped_normal_mean(spec.mean, spec.spread);
}

// ---------------------------------------------------------------------------
// JSON

namespace detail {

inline QualitySpec spec_from_json(const nlohmann::json& j, const std::string& where) {
  for (const auto& [k, v] : j.items())
    if (k != "mean" && k != "spread") throw ConfigError(where + ": unknown key '" + k + "'");
  return QualitySpec{j.at("mean").get<double>(), j.value("spread", 0.0)};
}

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                           const std::string& where) {
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || k == a;
    if (!ok) throw ConfigError(where + ": unknown key '" + k + "'");
  }
}

}  // namespace detail

inline SynthWorld world_from_json(const nlohmann::json& j) {
  try {
    detail::reject_unknown(j,
                           {"languages", "topics", "regions", "input_languages", "quality", "default_quality",
                            "pair_offsets", "noise_spread", "p_disobey", "equivalent_quality",
                            "mismatch_quality", "n_references"},
                           "world");
    SynthWorld w;
    w.languages = LanguageRegistry(j.at("languages").get<std::vector<std::string>>(), "language");

    std::vector<std::string> topic_ids;
    for (const auto& t : j.at("topics")) {
      detail::reject_unknown(t, {"id", "weight", "regional"}, "topic");
      topic_ids.push_back(t.at("id").get<std::string>());
      w.topic_weights.push_back(t.value("weight", 1.0));
      if (t.value("regional", false)) w.regional_topics.insert(TopicId{topic_ids.back()});
    }
    w.topics = TopicRegistry(topic_ids, "topic");

    std::vector<std::string> region_ids;
    if (j.contains("regions")) {
      for (const auto& g : j.at("regions")) {
        detail::reject_unknown(g, {"id", "weight"}, "region");
        region_ids.push_back(g.at("id").get<std::string>());
        w.region_weights.push_back(g.value("weight", 1.0));
      }
    }
    w.regions = RegionRegistry(region_ids, "region");

    w.language_weights.assign(w.languages.size(), j.contains("input_languages") ? 0.0 : 1.0);
    if (j.contains("input_languages")) {
      for (const auto& [code, weight] : j.at("input_languages").items())
        w.language_weights[w.languages.index_of(LanguageId{code}, "language")] = weight.get<double>();
    }

    if (j.contains("quality")) {
      for (const auto& c : j.at("quality")) {
        detail::reject_unknown(c, {"topic", "region", "language", "mean", "spread"}, "quality cell");
        MaybeRegion g;
        if (c.contains("region") && !c.at("region").is_null()) g = RegionId{c.at("region").get<std::string>()};
        BufferKey key{TopicId{c.at("topic").get<std::string>()}, g, LanguageId{c.at("language").get<std::string>()}};
        if (w.quality.count(key)) throw ConfigError("duplicate quality cell");
        w.quality[key] = QualitySpec{c.at("mean").get<double>(), c.value("spread", 0.0)};
      }
    }
    if (j.contains("default_quality")) w.default_quality = detail::spec_from_json(j.at("default_quality"), "default_quality");
    if (j.contains("equivalent_quality"))
      w.equivalent_quality = detail::spec_from_json(j.at("equivalent_quality"), "equivalent_quality");
    if (j.contains("mismatch_quality"))
      w.mismatch_quality = detail::spec_from_json(j.at("mismatch_quality"), "mismatch_quality");
    if (j.contains("pair_offsets")) {
      for (const auto& o : j.at("pair_offsets")) {
        detail::reject_unknown(o, {"pair", "delta"}, "pair offset");
        const auto p = o.at("pair").get<std::vector<std::string>>();
        if (p.size() != 2) throw ConfigError("pair offset needs exactly two languages");
        w.pair_offset[LanguagePair::of(LanguageId{p[0]}, LanguageId{p[1]})] = o.at("delta").get<double>();
      }
    }
    w.noise_spread = j.value("noise_spread", w.noise_spread);
    w.p_disobey = j.value("p_disobey", w.p_disobey);
    w.n_references = j.value("n_references", w.n_references);
    w.validate();
    return w;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed world: ") + e.what());
  }
}

}  // namespace langroute
