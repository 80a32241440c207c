#pragma once

// Language-consistency gate and group-relative advantage normalization.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "langroute/core.hpp"

namespace langroute {

struct Rollout {
  std::string question_id;
  LanguageId target_lang;
  LanguageId delivered_lang;
  double raw_similarity = 0.0;
  double quality_reward = 0.0;
  int consistency = 0;
  double gated_reward = 0.0;
  double advantage = 0.0;
};

struct RolloutGroup {
  std::string question_id;
  std::vector<Rollout> rollouts;
};

inline int language_consistency(const LanguageId& delivered, const LanguageId& target) {
  return delivered == target ? 1 : 0;
}

// quality * consistency; zero (possibly -0.0) for off-language rollouts.
inline double gate(double quality, int consistency) { return quality * static_cast<double>(consistency == 1); }

inline constexpr double kDegenerateStd = 1e-8;

// z-scores with the population standard deviation; constant groups map to 0.
inline std::vector<double> normalize_group(std::span<const double> rewards) {
  std::vector<double> adv(rewards.size(), 0.0);
  if (rewards.empty()) return adv;
  const double n = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / n);
  if (sd < kDegenerateStd) return adv;
  for (std::size_t k = 0; k < rewards.size(); ++k) adv[k] = (rewards[k] - mean) / sd;
  return adv;
}

// Fills gated_reward and advantage from quality_reward and consistency.
inline void score_group(RolloutGroup& group) {
  std::vector<double> gated;
  gated.reserve(group.rollouts.size());
  for (auto& r : group.rollouts) {
    r.consistency = language_consistency(r.delivered_lang, r.target_lang);
    r.gated_reward = gate(r.quality_reward, r.consistency);
    gated.push_back(r.gated_reward);
  }
  const auto adv = normalize_group(gated);
  for (std::size_t k = 0; k < adv.size(); ++k) group.rollouts[k].advantage = adv[k];
}

inline nlohmann::ordered_json to_json(const Rollout& r) {
  nlohmann::ordered_json j;
  j["question_id"] = r.question_id;
  j["target_lang"] = r.target_lang.value;
  j["delivered_lang"] = r.delivered_lang.value;
  j["raw_similarity"] = r.raw_similarity;
  j["quality_reward"] = r.quality_reward;
  j["consistency"] = r.consistency;
  j["gated_reward"] = r.gated_reward;
  j["advantage"] = r.advantage;
  return j;
}

}  // namespace langroute
