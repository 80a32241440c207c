#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "langroute/router.hpp"

namespace langroute {
namespace {

RouterParams two_by_two() {
  auto p = RouterParams::zeros(LanguageRegistry(std::vector<std::string>{"en", "zh"}),
                               TopicRegistry(std::vector<std::string>{"T1", "T2"}),
                               RegionRegistry(std::vector<std::string>{"R1"}));
  p.topic_logits(0, 0) = 0.2;
  p.topic_logits(0, 1) = 0.8;
  p.region_logits(0, 0) = 0.3;
  p.region_logits(0, 1) = -0.1;
  return p;
}

RouterParams four_languages() {
  return RouterParams::zeros(LanguageRegistry(std::vector<std::string>{"en", "zh", "ja", "fr"}),
                             TopicRegistry(std::vector<std::string>{"T1"}), RegionRegistry{});
}

TEST(CombinedLogits, AbsentRegionUsesTopicRowOnly) {
  auto p = two_by_two();
  p.topic_logits(0, 0) = 0.5;
  p.topic_logits(0, 1) = 0.5;
  const auto z = combined_logits(TopicId{"T1"}, std::nullopt, p);
  EXPECT_EQ(z, (std::vector<double>{0.5, 0.5}));
}

TEST(CombinedLogits, PresentRegionAddsRow) {
  const auto z = combined_logits(TopicId{"T1"}, RegionId{"R1"}, two_by_two());
  ASSERT_EQ(z.size(), 2u);
  EXPECT_DOUBLE_EQ(z[0], 0.5);
  EXPECT_DOUBLE_EQ(z[1], 0.7);
}

TEST(CombinedLogits, UnknownTopicOrRegionIsConfigError) {
  const auto p = two_by_two();
  EXPECT_THROW(combined_logits(TopicId{"nope"}, std::nullopt, p), ConfigError);
  EXPECT_THROW(combined_logits(TopicId{"T1"}, RegionId{"R9"}, p), ConfigError);
}

TEST(LanguageDistribution, EqualLogitsAreUniform) {
  for (double tau : {0.1, 1.0, 7.0}) {
    const std::vector<double> z(4, 0.0);
    const auto d = language_distribution(z, tau);
    for (double p : d.probs) EXPECT_DOUBLE_EQ(p, 0.25);
  }
}

TEST(LanguageDistribution, TwoLogitsMatchesClosedForm) {
  const std::vector<double> z{1.0, 0.0};
  const auto d = language_distribution(z, 1.0);
  const double e = std::exp(1.0);
  EXPECT_NEAR(d[0], e / (e + 1.0), 1e-15);
  EXPECT_NEAR(d[1], 1.0 / (e + 1.0), 1e-15);
  EXPECT_NEAR(d[0], 0.7311, 1e-4);
}

TEST(LanguageDistribution, LowTemperatureConcentrates) {
  const std::vector<double> z{1.0, 0.0};
  EXPECT_GE(language_distribution(z, 0.01)[0], 0.999);
}

TEST(LanguageDistribution, LargeLogitsStayFinite) {
  const std::vector<double> z{1000.0, 999.0, -1000.0};
  const auto d = language_distribution(z, 0.3);
  double s = 0.0;
  for (double p : d.probs) {
    EXPECT_TRUE(std::isfinite(p));
    s += p;
  }
  EXPECT_NEAR(s, 1.0, 1e-12);
}

TEST(LanguageDistribution, RejectsNonPositiveTemperature) {
  const std::vector<double> z{1.0, 0.0};
  EXPECT_THROW(language_distribution(z, 0.0), InvalidParameter);
  EXPECT_THROW(language_distribution(z, -1.0), InvalidParameter);
}

TEST(LanguageDistribution, RandomizedProperties) {
  Rng rng(7);
  std::normal_distribution<double> normal(0.0, 2.0);
  const std::vector<double> taus{0.05, 0.1, 0.3, 0.5, 1.0, 2.0, 5.0, 20.0};
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> z(5);
    for (auto& v : z) v = normal(rng);
    const auto argmax = static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
    double prev_entropy = -1.0;
    for (double tau : taus) {
      const auto d = language_distribution(z, tau);
      EXPECT_NEAR(std::accumulate(d.probs.begin(), d.probs.end(), 0.0), 1.0, 1e-9);
      EXPECT_EQ(d.argmax(), argmax);
      EXPECT_GE(d.entropy(), prev_entropy - 1e-12);
      prev_entropy = d.entropy();

      auto shifted = z;
      for (auto& v : shifted) v += 13.75;
      const auto ds = language_distribution(shifted, tau);
      for (std::size_t i = 0; i < z.size(); ++i) EXPECT_NEAR(ds[i], d[i], 1e-9);
    }
  }
}

TEST(SampleGroupLanguages, QuotaConsumesWholeGroup) {
  Rng rng(1);
  const auto p = four_languages();
  ScheduleState s;
  const auto langs = sample_group_languages(LanguageId{"fr"}, TopicId{"T1"}, std::nullopt, 8, 8, p, s, rng);
  ASSERT_EQ(langs.size(), 8u);
  for (const auto& l : langs) EXPECT_EQ(l, LanguageId{"fr"});
}

TEST(SampleGroupLanguages, GreedyTailFollowsPointMass) {
  Rng rng(2);
  auto p = four_languages();
  p.topic_logits(0, 2) = 50.0;  // ja dominates
  ScheduleState s;
  s.epsilon = 0.0;
  s.epsilon_min = 0.0;
  s.temperature = 0.3;
  const auto langs = sample_group_languages(LanguageId{"en"}, TopicId{"T1"}, std::nullopt, 8, 2, p, s, rng);
  const std::vector<std::string> expected{"en", "en", "ja", "ja", "ja", "ja", "ja", "ja"};
  ASSERT_EQ(langs.size(), expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_EQ(langs[i].value, expected[i]);
}

TEST(SampleGroupLanguages, FullExplorationIsUniform) {
  Rng rng(3);
  auto p = four_languages();
  p.topic_logits(0, 1) = 100.0;  // router would always pick zh
  ScheduleState s;
  s.epsilon = 1.0;
  std::map<std::string, double> freq;
  const int reps = 10000;
  for (int i = 0; i < reps; ++i) {
    const auto langs = sample_group_languages(LanguageId{"en"}, TopicId{"T1"}, std::nullopt, 8, 2, p, s, rng);
    for (std::size_t k = 2; k < 8; ++k) freq[langs[k].value] += 1.0;
  }
  const double tail = 6.0 * reps;
  for (const auto* code : {"en", "zh", "ja", "fr"}) EXPECT_NEAR(freq[code] / tail, 0.25, 0.02) << code;
}

TEST(SampleGroupLanguages, SeedDeterministicWithInputPrefix) {
  const auto p = four_languages();
  ScheduleState s;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng a(seed), b(seed);
    const auto la = sample_group_languages(LanguageId{"ja"}, TopicId{"T1"}, std::nullopt, 8, 3, p, s, a);
    const auto lb = sample_group_languages(LanguageId{"ja"}, TopicId{"T1"}, std::nullopt, 8, 3, p, s, b);
    EXPECT_EQ(la, lb);
    for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(la[k], LanguageId{"ja"});
  }
}

TEST(SampleGroupLanguages, QuotaAboveGroupIsRejected) {
  Rng rng(0);
  EXPECT_THROW(sample_group_languages(LanguageId{"en"}, TopicId{"T1"}, std::nullopt, 4, 5, four_languages(),
                                      ScheduleState{}, rng),
               InvalidParameter);
}

TEST(Anneal, OneStepFromInitialTemperature) {
  ScheduleState s;
  s = anneal(s);
  EXPECT_DOUBLE_EQ(s.temperature, 0.999);
  EXPECT_EQ(s.step_count, 1u);
}

TEST(Anneal, HundredStepsMatchClosedForm) {
  ScheduleState s;
  for (int i = 0; i < 100; ++i) s = anneal(s);
  EXPECT_NEAR(s.temperature, std::pow(0.999, 100), 1e-12);
  EXPECT_NEAR(s.temperature, 0.90479, 1e-5);
}

TEST(Anneal, FloorsHoldAndNeverIncrease) {
  ScheduleState s;
  s.temperature = 0.3;
  EXPECT_EQ(anneal(s).temperature, 0.3);

  ScheduleState t;
  for (int i = 0; i < 5000; ++i) {
    const auto next = anneal(t);
    EXPECT_LE(next.temperature, t.temperature);
    EXPECT_LE(next.epsilon, t.epsilon);
    EXPECT_GE(next.temperature, t.temperature_min);
    EXPECT_GE(next.epsilon, t.epsilon_min);
    t = next;
  }
  EXPECT_EQ(t.temperature, 0.3);
  EXPECT_EQ(t.epsilon, 0.05);
}

TEST(RouterUpdate, EmaSubstitution) {
  auto p = two_by_two();
  p.topic_logits(1, 0) = 0.5;
  const auto q = apply_router_update(p, {{{TopicId{"T2"}, LanguageId{"en"}}, 1.0}}, {}, 0.1);
  EXPECT_NEAR(q.topic_logits(1, 0), 0.55, 1e-15);
  // untouched cells
  EXPECT_EQ(q.topic_logits(0, 0), p.topic_logits(0, 0));
  EXPECT_EQ(q.region_logits, p.region_logits);
}

TEST(RouterUpdate, FullRateReplaces) {
  const auto q = apply_router_update(two_by_two(), {}, {{{RegionId{"R1"}, LanguageId{"zh"}}, 0.42}}, 1.0);
  EXPECT_EQ(q.region_logits(0, 1), 0.42);
}

TEST(RouterUpdate, EmptyMeansLeaveParamsUnchanged) {
  const auto p = two_by_two();
  const auto q = apply_router_update(p, {}, {}, 0.3);
  EXPECT_EQ(q.topic_logits, p.topic_logits);
  EXPECT_EQ(q.region_logits, p.region_logits);
}

TEST(RouterUpdate, RateOutsideRangeRejected) {
  EXPECT_THROW(apply_router_update(two_by_two(), {}, {}, 0.0), InvalidParameter);
  EXPECT_THROW(apply_router_update(two_by_two(), {}, {}, 1.5), InvalidParameter);
}

TEST(RouterUpdate, FixedPointAndSmallRateLimit) {
  auto p = two_by_two();
  for (double alpha : {1e-9, 0.01, 0.5, 1.0}) {
    const auto q = apply_router_update(p, {{{TopicId{"T1"}, LanguageId{"zh"}}, 0.8}}, {}, alpha);
    EXPECT_DOUBLE_EQ(q.topic_logits(0, 1), 0.8);
  }
  const auto q = apply_router_update(p, {{{TopicId{"T1"}, LanguageId{"en"}}, 5.0}}, {}, 1e-12);
  EXPECT_NEAR(q.topic_logits(0, 0), 0.2, 1e-10);
}

TEST(RouterState, JsonRoundTrip) {
  RouterState s{two_by_two(), ScheduleState{}};
  s.params.topic_logits(1, 1) = 1.0 / 3.0;
  s.schedule = anneal(anneal(s.schedule));
  const auto text = to_json(s).dump();
  const auto back = router_state_from_json(nlohmann::json::parse(text));
  EXPECT_EQ(back.params.languages, s.params.languages);
  EXPECT_EQ(back.params.topics, s.params.topics);
  EXPECT_EQ(back.params.regions, s.params.regions);
  for (std::size_t i = 0; i < s.params.topic_logits.data().size(); ++i)
    EXPECT_NEAR(back.params.topic_logits.data()[i], s.params.topic_logits.data()[i], 1e-12);
  EXPECT_EQ(back.schedule, s.schedule);
}

TEST(RouterState, RejectsRaggedMatrix) {
  auto j = to_json(RouterState{two_by_two(), ScheduleState{}});
  j["topic_logits"][0] = {1.0};
  EXPECT_THROW(router_state_from_json(j), ConfigError);
}

}  // namespace
}  // namespace langroute
