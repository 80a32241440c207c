#include <gtest/gtest.h>

#include <cmath>

#include "langroute/synthenv.hpp"

namespace langroute {
namespace {

const LanguageId en{"en"}, zh{"zh"}, ja{"ja"}, fr{"fr"};

SynthWorld base_world() {
  SynthWorld w;
  w.languages = LanguageRegistry(std::vector<std::string>{"en", "zh", "ja", "fr"});
  w.topics = TopicRegistry(std::vector<std::string>{"general", "regional", "science"});
  w.regions = RegionRegistry(std::vector<std::string>{"east", "west"});
  w.topic_weights = {0.5, 0.3, 0.2};
  w.region_weights = {0.5, 0.5};
  w.language_weights = {0.4, 0.3, 0.2, 0.1};
  w.regional_topics = {TopicId{"regional"}};
  w.validate();
  return w;
}

// Chi-square critical values at p = 0.01.
constexpr double kChi2Df2 = 9.21034037197618;
constexpr double kChi2Df3 = 11.344866730144373;

double chi_square(const std::vector<double>& counts, const std::vector<double>& weights) {
  double n = 0.0, wsum = 0.0;
  for (double c : counts) n += c;
  for (double w : weights) wsum += w;
  double x2 = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const double e = n * weights[i] / wsum;
    x2 += (counts[i] - e) * (counts[i] - e) / e;
  }
  return x2;
}

TEST(GenerateCorpus, SingleCategoryGivesIdenticalMetadata) {
  SynthWorld w;
  w.languages = LanguageRegistry(std::vector<std::string>{"en"});
  w.topics = TopicRegistry(std::vector<std::string>{"t"});
  w.topic_weights = {1.0};
  w.language_weights = {1.0};
  w.validate();
  Rng rng(1);
  const auto qs = generate_corpus(w, 100, rng);
  ASSERT_EQ(qs.size(), 100u);
  for (const auto& q : qs) {
    EXPECT_EQ(q.topic, TopicId{"t"});
    EXPECT_EQ(q.input_lang, en);
    EXPECT_FALSE(q.region.has_value());
  }
}

TEST(GenerateCorpus, ZeroQuestionsRejected) {
  Rng rng(1);
  EXPECT_THROW(generate_corpus(base_world(), 0, rng), InvalidParameter);
}

TEST(GenerateCorpus, RegionalFractionAndGoodnessOfFit) {
  const auto w = base_world();
  Rng rng(42);
  const auto qs = generate_corpus(w, 10000, rng);
  std::vector<double> topic_counts(3, 0.0), lang_counts(4, 0.0), region_counts(2, 0.0);
  std::size_t with_region = 0;
  for (const auto& q : qs) {
    topic_counts[w.topics.index_of(q.topic)] += 1;
    lang_counts[w.languages.index_of(q.input_lang)] += 1;
    if (q.region) {
      ++with_region;
      EXPECT_EQ(q.topic, TopicId{"regional"});
      region_counts[w.regions.index_of(*q.region)] += 1;
    }
  }
  EXPECT_NEAR(static_cast<double>(with_region) / 10000.0, 0.3, 0.05);
  EXPECT_LT(chi_square(topic_counts, w.topic_weights), kChi2Df2);
  EXPECT_LT(chi_square(lang_counts, w.language_weights), kChi2Df3);
}

TEST(GenerateCorpus, SeedDeterministic) {
  const auto w = base_world();
  Rng a(9), b(9);
  const auto qa = generate_corpus(w, 200, a), qb = generate_corpus(w, 200, b);
  for (std::size_t i = 0; i < qa.size(); ++i) {
    EXPECT_EQ(qa[i].id, qb[i].id);
    EXPECT_EQ(qa[i].topic, qb[i].topic);
    EXPECT_EQ(qa[i].region, qb[i].region);
    EXPECT_EQ(qa[i].input_lang, qb[i].input_lang);
  }
}

TEST(SynthGenerate, DegenerateCellIsExact) {
  auto w = base_world();
  w.p_disobey = 0.0;
  w.quality[BufferKey{TopicId{"general"}, std::nullopt, zh}] = {0.8, 0.0};
  const Question q{"q", en, TopicId{"general"}, std::nullopt, {}};
  Rng rng(1);
  for (int i = 0; i < 20; ++i) {
    const auto r = synth_generate(w, q, zh, rng);
    EXPECT_EQ(r.latent_quality, 0.8);
    EXPECT_EQ(r.delivered_lang, zh);
  }
}

TEST(SynthGenerate, RegionCellFallsBackToTopicCell) {
  auto w = base_world();
  w.p_disobey = 0.0;
  w.quality[BufferKey{TopicId{"regional"}, std::nullopt, ja}] = {0.4, 0.0};
  w.quality[BufferKey{TopicId{"regional"}, RegionId{"east"}, ja}] = {0.9, 0.0};
  Rng rng(1);
  EXPECT_EQ(synth_generate(w, {"q", en, TopicId{"regional"}, RegionId{"east"}, {}}, ja, rng).latent_quality, 0.9);
  EXPECT_EQ(synth_generate(w, {"q", en, TopicId{"regional"}, RegionId{"west"}, {}}, ja, rng).latent_quality, 0.4);
  const auto& fallback = w.quality_for(TopicId{"science"}, std::nullopt, ja);
  EXPECT_EQ(fallback.mean, w.default_quality.mean);
  EXPECT_EQ(fallback.spread, w.default_quality.spread);
}

TEST(SynthGenerate, FullDisobedienceNeverDeliversTarget) {
  auto w = base_world();
  w.p_disobey = 1.0;
  Rng rng(3);
  const Question q{"q", en, TopicId{"general"}, std::nullopt, {}};
  std::map<LanguageId, int> seen;
  for (int i = 0; i < 3000; ++i) {
    const auto r = synth_generate(w, q, zh, rng);
    EXPECT_NE(r.delivered_lang, zh);
    ++seen[r.delivered_lang];
  }
  EXPECT_EQ(seen.size(), 3u);
}

TEST(SynthWorldValidation, RejectsOutOfRangeQuality) {
  auto w = base_world();
  w.quality[BufferKey{TopicId{"general"}, std::nullopt, en}] = {1.2, 0.0};
  EXPECT_THROW(w.validate(), ConfigError);
  auto v = base_world();
  v.p_disobey = 1.5;
  EXPECT_THROW(v.validate(), ConfigError);
}

TEST(SynthSimilarity, OffsetAndClamp) {
  auto w = base_world();
  w.noise_spread = 0.0;
  w.pair_offset[LanguagePair::of(en, zh)] = -0.1;
  w.pair_offset[LanguagePair::of(en, ja)] = 0.1;
  Rng rng(1);
  EXPECT_NEAR(synth_similarity(w, 0.7, zh, en, rng), 0.6, 1e-15);
  EXPECT_EQ(synth_similarity(w, 0.95, en, ja, rng), 1.0);
  EXPECT_EQ(synth_similarity(w, 0.37, en, fr, rng), 0.37);
}

// Trapezoid quadrature of E[clamp(X,0,1)], independent of the closed form.
double clamped_mean_quadrature(double mu, double sigma) {
  const int n = 200000;
  const double lo = mu - 10 * sigma, hi = mu + 10 * sigma, h = (hi - lo) / n;
  double s = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double x = lo + i * h;
    const double f = std::clamp(x, 0.0, 1.0) * std::exp(-0.5 * std::pow((x - mu) / sigma, 2)) /
                     (sigma * std::sqrt(2 * M_PI));
    s += (i == 0 || i == n ? 0.5 : 1.0) * f;
  }
  return s * h;
}

TEST(SynthSimilarity, EmpiricalMeanMatchesClampedAnalyticMean) {
  auto w = base_world();
  w.noise_spread = 0.15;
  w.pair_offset[LanguagePair::of(en, zh)] = 0.1;
  for (double latent : {0.2, 0.5, 0.85}) {
    Rng rng(5);
    double s = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) s += synth_similarity(w, latent, en, zh, rng);
    const double expected = clamped_mean_quadrature(latent + 0.1, 0.15);
    EXPECT_NEAR(s / n, expected, 0.01) << latent;
    EXPECT_NEAR(clamped_normal_mean(latent + 0.1, 0.15), expected, 1e-6);
  }
}

TEST(SynthOracle, FaithfulRankingWithoutNoiseOrOffsets) {
  auto w = base_world();
  w.noise_spread = 0.0;
  w.p_disobey = 0.0;
  SynthOracle oracle(w);
  Rng rng(8);
  const Response ref{"q1", en, 1.0, {}};
  std::vector<std::pair<double, double>> pairs;
  for (int i = 0; i < 200; ++i) {
    const double lat = uniform01(rng);
    const LanguageId l = w.languages.at(uniform_index(rng, 4));
    pairs.emplace_back(lat, oracle.score(Response{"q1", l, lat, {}}, ref, rng));
  }
  for (const auto& a : pairs)
    for (const auto& b : pairs)
      if (a.first < b.first) {
        EXPECT_LE(a.second, b.second);
      }
}

TEST(SynthOracle, MismatchedContentUsesMismatchDistribution) {
  auto w = base_world();
  w.noise_spread = 0.0;
  w.mismatch_quality = {0.25, 0.0};
  SynthOracle oracle(w);
  Rng rng(1);
  EXPECT_EQ(oracle.score(Response{"a", en, 0.9, {}}, Response{"b", en, 1.0, {}}, rng), 0.25);
  EXPECT_EQ(oracle.score(Response{"a", en, 0.9, {}}, Response{"a", en, 1.0, {}}, rng), 0.9);
}

TEST(WorldJson, ParsesAndRejectsUnknownKeys) {
  const auto j = nlohmann::json::parse(R"({
    "languages": ["en", "zh"],
    "topics": [{"id": "history", "weight": 2}, {"id": "culture", "regional": true}],
    "regions": [{"id": "east"}],
    "input_languages": {"zh": 1},
    "quality": [{"topic": "history", "language": "zh", "mean": 0.9, "spread": 0.05},
                {"topic": "culture", "region": "east", "language": "en", "mean": 0.2}],
    "pair_offsets": [{"pair": ["zh", "en"], "delta": -0.1}],
    "p_disobey": 0.0
  })");
  const auto w = world_from_json(j);
  EXPECT_EQ(w.topic_weights, (std::vector<double>{2.0, 1.0}));
  EXPECT_EQ(w.language_weights, (std::vector<double>{0.0, 1.0}));
  EXPECT_EQ(w.offset(en, zh), -0.1);
  EXPECT_EQ(w.quality_for(TopicId{"culture"}, RegionId{"east"}, en).mean, 0.2);
  EXPECT_TRUE(w.regional_topics.count(TopicId{"culture"}));

  auto bad = j;
  bad["colour"] = 1;
  EXPECT_THROW(world_from_json(bad), ConfigError);
  auto bad2 = j;
  bad2["quality"][0]["mean"] = 1.2;
  EXPECT_THROW(world_from_json(bad2), ConfigError);
  auto bad3 = j;
  bad3["quality"][0]["language"] = "xx";
  EXPECT_THROW(world_from_json(bad3), ConfigError);
}

}  // namespace
}  // namespace langroute
