#pragma once

// Cross-lingual reward calibration.
//
// Offline, each unordered language pair collects three kinds of similarity
// samples: semantically equivalent renderings of one reference, mismatched
// renderings of different references, and the hardest (most similar) of the
// mismatches. Online, a raw similarity is either shifted by the pair's mean
// offset from the global reference mean, or mapped through the pair's
// empirical CDF.

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "langroute/core.hpp"

namespace langroute {

struct LanguagePair {
  LanguageId first;
  LanguageId second;

  // Canonical (lexicographic) order; <a,b> and <b,a> are the same key.
  static LanguagePair of(const LanguageId& a, const LanguageId& b) {
    return a <= b ? LanguagePair{a, b} : LanguagePair{b, a};
  }
  bool same_language() const { return first == second; }
  std::string key() const { return first.value + "|" + second.value; }

  auto operator<=>(const LanguagePair&) const = default;
  bool operator==(const LanguagePair&) const = default;
};

struct PairSampleSet {
  std::vector<double> equivalent;
  std::vector<double> mismatched;
  std::vector<double> hard_contrastive;
};

using PairSamples = std::map<LanguagePair, PairSampleSet>;

// Scores a candidate response against a reference. Implementations provide
// raw_score(); score() clamps to [0,1].
class SimilarityOracle {
 public:
  virtual ~SimilarityOracle() = default;
  double score(const Response& candidate, const Response& reference, Rng& rng) const {
    return clamp01(raw_score(candidate, reference, rng));
  }

 protected:
  virtual double raw_score(const Response& candidate, const Response& reference, Rng& rng) const = 0;
};

struct ReferenceItem {
  std::string id;
  std::map<LanguageId, Response> renderings;

  const Response& rendering(const LanguageId& lang) const {
    auto it = renderings.find(lang);
    if (it == renderings.end())
      throw DataError("reference '" + id + "' has no rendering in language '" + lang.value + "'");
    return it->second;
  }
};

struct PairSampleCounts {
  std::size_t equivalent = 30;
  std::size_t mismatched_per_reference = 10;
  std::size_t hard_per_reference = 2;
};

// For every unordered pair of registered languages (including a language
// with itself): reference rendered in `first`, candidates in `second`.
inline PairSamples build_pair_samples(std::span<const ReferenceItem> references, const LanguageRegistry& languages,
                                      const SimilarityOracle& oracle, const PairSampleCounts& counts, Rng& rng) {
  if (counts.equivalent < 1) throw InvalidParameter("need at least one equivalent pair per language pair");
  if (counts.hard_per_reference > counts.mismatched_per_reference)
    throw InvalidParameter("hard contrastive count exceeds mismatched count");
  if (references.empty()) throw DataError("no references supplied");
  if (counts.mismatched_per_reference > 0 && references.size() < 2)
    throw DataError("mismatched pairs need at least two references");

  PairSamples out;
  const auto& langs = languages.ids();
  std::vector<std::size_t> order(references.size());
  for (std::size_t a = 0; a < langs.size(); ++a) {
    for (std::size_t b = a; b < langs.size(); ++b) {
      const auto pair = LanguagePair::of(langs[a], langs[b]);
      auto& set = out[pair];

      // References without replacement while the corpus allows it.
      std::vector<std::size_t> picked;
      if (references.size() >= counts.equivalent) {
        std::iota(order.begin(), order.end(), 0);
        for (std::size_t i = 0; i < counts.equivalent; ++i) {
          std::swap(order[i], order[i + uniform_index(rng, order.size() - i)]);
          picked.push_back(order[i]);
        }
      } else {
        for (std::size_t i = 0; i < counts.equivalent; ++i) picked.push_back(uniform_index(rng, references.size()));
      }

      for (std::size_t r : picked) {
        const auto& ref = references[r];
        const auto& anchor = ref.rendering(pair.first);
        set.equivalent.push_back(oracle.score(ref.rendering(pair.second), anchor, rng));

        std::vector<double> mism;
        for (std::size_t m = 0; m < counts.mismatched_per_reference; ++m) {
          std::size_t other = uniform_index(rng, references.size() - 1);
          if (other >= r) ++other;
          mism.push_back(oracle.score(references[other].rendering(pair.second), anchor, rng));
        }
        set.mismatched.insert(set.mismatched.end(), mism.begin(), mism.end());
        std::sort(mism.begin(), mism.end(), std::greater<>());
        set.hard_contrastive.insert(set.hard_contrastive.end(), mism.begin(),
                                    mism.begin() + static_cast<std::ptrdiff_t>(counts.hard_per_reference));
      }
    }
  }
  return out;
}

struct PairStats {
  double mean = 0.0;  // over equivalent samples only
  std::size_t n_equivalent = 0;
  std::size_t n_mismatched = 0;
  std::size_t n_hard = 0;
  std::vector<double> pool;  // sorted union of all three sample kinds
};

struct CalibrationStats {
  std::map<LanguagePair, PairStats> pairs;
  double reference_mean = 0.0;
  double strength = 1.0;
  bool same_language_in_reference = true;

  const PairStats& at(const LanguagePair& pair) const {
    auto it = pairs.find(pair);
    if (it == pairs.end()) throw CalibrationError("no calibration statistics for language pair " + pair.key());
    return it->second;
  }
  const PairStats& at(const LanguageId& a, const LanguageId& b) const { return at(LanguagePair::of(a, b)); }
  bool contains(const LanguageId& a, const LanguageId& b) const { return pairs.count(LanguagePair::of(a, b)) != 0; }
};

namespace detail {
// Sum in sorted order so the result does not depend on input order.
inline double order_free_mean(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}
}  // namespace detail

inline CalibrationStats estimate_stats(const PairSamples& samples, double strength,
                                       bool same_language_in_reference = true) {
  if (!(strength >= 0.0) || !std::isfinite(strength)) throw InvalidParameter("calibration strength must be >= 0");
  if (samples.empty()) throw EstimationError("no language pairs to estimate");
  CalibrationStats stats;
  stats.strength = strength;
  stats.same_language_in_reference = same_language_in_reference;

  std::vector<double> means;
  for (const auto& [pair, set] : samples) {
    if (set.equivalent.empty()) throw EstimationError("language pair " + pair.key() + " has no equivalent samples");
    PairStats ps;
    ps.mean = detail::order_free_mean(set.equivalent);
    ps.n_equivalent = set.equivalent.size();
    ps.n_mismatched = set.mismatched.size();
    ps.n_hard = set.hard_contrastive.size();
    ps.pool = set.equivalent;
    ps.pool.insert(ps.pool.end(), set.mismatched.begin(), set.mismatched.end());
    ps.pool.insert(ps.pool.end(), set.hard_contrastive.begin(), set.hard_contrastive.end());
    for (double x : ps.pool)
      if (!(x >= 0.0 && x <= 1.0)) throw EstimationError("similarity score outside [0,1] for pair " + pair.key());
    std::sort(ps.pool.begin(), ps.pool.end());
    if (same_language_in_reference || !pair.same_language()) means.push_back(ps.mean);
    stats.pairs.emplace(pair, std::move(ps));
  }
  if (means.empty()) throw EstimationError("no cross-language pairs available for the reference mean");
  stats.reference_mean = detail::order_free_mean(std::move(means));
  return stats;
}

// Fraction of pool entries <= s (right-continuous step function).
inline double empirical_quantile(std::span<const double> sorted_pool, double s) {
  if (sorted_pool.empty()) throw InvalidParameter("empirical quantile of an empty pool");
  const auto it = std::upper_bound(sorted_pool.begin(), sorted_pool.end(), s);
  return static_cast<double>(it - sorted_pool.begin()) / static_cast<double>(sorted_pool.size());
}

// s - lambda * (mu_pair - mu_ref). Deliberately unclamped.
inline double calibrate_mean(double s, const LanguagePair& pair, const CalibrationStats& stats) {
  return s - stats.strength * (stats.at(pair).mean - stats.reference_mean);
}

inline double calibrate_quantile(double s, const LanguagePair& pair, const CalibrationStats& stats) {
  return empirical_quantile(stats.at(pair).pool, s);
}

enum class CalibrationMode { mean, quantile };

inline double calibrate(CalibrationMode mode, double s, const LanguagePair& pair, const CalibrationStats& stats) {
  return mode == CalibrationMode::mean ? calibrate_mean(s, pair, stats) : calibrate_quantile(s, pair, stats);
}

inline CalibrationMode parse_calibration_mode(const std::string& s) {
  if (s == "mean") return CalibrationMode::mean;
  if (s == "quantile") return CalibrationMode::quantile;
  throw ConfigError("unknown calibration mode '" + s + "' (expected mean or quantile)");
}

inline std::string to_string(CalibrationMode m) { return m == CalibrationMode::mean ? "mean" : "quantile"; }

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json to_json(const CalibrationStats& stats) {
  auto pairs = nlohmann::json::array();
  for (const auto& [pair, ps] : stats.pairs) {
    pairs.push_back({{"first", pair.first.value},
                     {"second", pair.second.value},
                     {"mean", ps.mean},
                     {"n_equivalent", ps.n_equivalent},
                     {"n_mismatched", ps.n_mismatched},
                     {"n_hard", ps.n_hard},
                     {"pool", ps.pool}});
  }
  return {{"pairs", pairs},
          {"reference_mean", stats.reference_mean},
          {"strength", stats.strength},
          {"same_language_in_reference", stats.same_language_in_reference}};
}

inline CalibrationStats calibration_stats_from_json(const nlohmann::json& j) {
  try {
    CalibrationStats stats;
    stats.reference_mean = j.at("reference_mean").get<double>();
    stats.strength = j.at("strength").get<double>();
    stats.same_language_in_reference = j.value("same_language_in_reference", true);
    for (const auto& e : j.at("pairs")) {
      PairStats ps;
      ps.mean = e.at("mean").get<double>();
      ps.n_equivalent = e.at("n_equivalent").get<std::size_t>();
      ps.n_mismatched = e.at("n_mismatched").get<std::size_t>();
      ps.n_hard = e.at("n_hard").get<std::size_t>();
      ps.pool = e.at("pool").get<std::vector<double>>();
      if (ps.pool.empty()) throw CalibrationError("empty sample pool in calibration file");
      if (!std::is_sorted(ps.pool.begin(), ps.pool.end()))
        throw CalibrationError("unsorted sample pool in calibration file");
      const auto pair = LanguagePair::of(LanguageId{e.at("first").get<std::string>()},
                                         LanguageId{e.at("second").get<std::string>()});
      stats.pairs.emplace(pair, std::move(ps));
    }
    return stats;
  } catch (const nlohmann::json::exception& e) {
    throw CalibrationError(std::string("malformed calibration file: ") + e.what());
  }
}

inline void write_stats_csv(std::ostream& os, const CalibrationStats& stats) {
  os << "pair,n_equiv,n_mismatch,n_hard,mu,pool_min,pool_median,pool_max\n";
  auto old_precision = os.precision(10);
  for (const auto& [pair, ps] : stats.pairs) {
    const auto n = ps.pool.size();
    const double median = n % 2 ? ps.pool[n / 2] : 0.5 * (ps.pool[n / 2 - 1] + ps.pool[n / 2]);
    os << pair.key() << ',' << ps.n_equivalent << ',' << ps.n_mismatched << ',' << ps.n_hard << ',' << ps.mean
       << ',' << ps.pool.front() << ',' << median << ',' << ps.pool.back() << '\n';
  }
  os.precision(old_precision);
}

}  // namespace langroute
