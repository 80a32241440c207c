#pragma once

// Experiment plumbing behind the command-line tool: run configuration,
// manifests, output files for calibration/training runs, reports and
// variant comparison.

#include <openssl/evp.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "langroute/calibration.hpp"
#include "langroute/core.hpp"
#include "langroute/router.hpp"
#include "langroute/synthenv.hpp"
#include "langroute/training.hpp"

namespace langroute {

inline constexpr const char* kVersion = "0.1.0";

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Files

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline nlohmann::json read_json_file(const fs::path& path) {
  const auto text = read_file(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

inline void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << text;
}

inline std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error("sha256 digest failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return os.str();
}

inline SynthWorld load_world(const fs::path& path) { return world_from_json(read_json_file(path)); }

inline CalibrationStats load_stats(const fs::path& path) {
  return calibration_stats_from_json(read_json_file(path));
}

// ---------------------------------------------------------------------------
// Run configuration

struct RunConfig {
  TrainConfig train;
  std::string world;
  std::string stats;
  std::string output_dir = "run";
  std::optional<double> strength;  // overrides the stats file's lambda
  std::size_t corpus_size = 512;
  bool log_logits = true;
};

// Every accepted key, in manifest order.
inline const std::vector<std::string>& run_config_keys() {
  static const std::vector<std::string> keys = {
      "world",           "stats",           "output_dir",       "mode",          "group_size",
      "on_policy_quota", "router_update_period", "adaptation_rate", "batch_size", "total_steps",
      "calibration_mode", "lambda",         "temperature_init", "temperature_min", "epsilon_init",
      "epsilon_min",     "decay_rate",      "anneal_every",     "dominant_language", "seed",
      "corpus_size",     "log_logits"};
  return keys;
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  const auto& keys = run_config_keys();
  for (const auto& [k, v] : j.items())
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) throw ConfigError("unknown config key '" + k + "'");
  try {
    RunConfig c;
    auto& t = c.train;
    c.world = j.value("world", c.world);
    c.stats = j.value("stats", c.stats);
    c.output_dir = j.value("output_dir", c.output_dir);
    if (j.contains("mode")) t.mode = parse_routing_mode(j.at("mode").get<std::string>());
    t.group_size = j.value("group_size", t.group_size);
    t.on_policy_quota = j.value("on_policy_quota", t.on_policy_quota);
    t.router_update_period = j.value("router_update_period", t.router_update_period);
    t.adaptation_rate = j.value("adaptation_rate", t.adaptation_rate);
    t.batch_size = j.value("batch_size", t.batch_size);
    t.total_steps = j.value("total_steps", t.total_steps);
    if (j.contains("calibration_mode")) t.calibration_mode = parse_calibration_mode(j.at("calibration_mode").get<std::string>());
    if (j.contains("lambda") && !j.at("lambda").is_null()) {
      c.strength = j.at("lambda").get<double>();
      if (!(*c.strength >= 0.0)) throw ConfigError("lambda must be >= 0");
    }
    t.schedule.temperature = j.value("temperature_init", t.schedule.temperature);
    t.schedule.temperature_min = j.value("temperature_min", t.schedule.temperature_min);
    t.schedule.epsilon = j.value("epsilon_init", t.schedule.epsilon);
    t.schedule.epsilon_min = j.value("epsilon_min", t.schedule.epsilon_min);
    t.schedule.decay_rate = j.value("decay_rate", t.schedule.decay_rate);
    if (j.contains("anneal_every")) {
      const auto a = j.at("anneal_every").get<std::string>();
      if (a == "step") t.anneal_every = AnnealCadence::step;
      else if (a == "router_update") t.anneal_every = AnnealCadence::router_update;
      else throw ConfigError("anneal_every must be 'step' or 'router_update'");
    }
    t.dominant_language = LanguageId{j.value("dominant_language", t.dominant_language.value)};
    t.seed = j.value("seed", t.seed);
    c.corpus_size = j.value("corpus_size", c.corpus_size);
    c.log_logits = j.value("log_logits", c.log_logits);
    if (c.corpus_size < 1) throw ConfigError("corpus_size must be >= 1");
    t.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
}

inline ojson to_json(const RunConfig& c) {
  const auto& t = c.train;
  ojson j;
  j["world"] = c.world;
  j["stats"] = c.stats;
  j["output_dir"] = c.output_dir;
  j["mode"] = to_string(t.mode);
  j["group_size"] = t.group_size;
  j["on_policy_quota"] = t.on_policy_quota;
  j["router_update_period"] = t.router_update_period;
  j["adaptation_rate"] = t.adaptation_rate;
  j["batch_size"] = t.batch_size;
  j["total_steps"] = t.total_steps;
  j["calibration_mode"] = to_string(t.calibration_mode);
  j["lambda"] = c.strength ? ojson(*c.strength) : ojson(nullptr);
  j["temperature_init"] = t.schedule.temperature;
  j["temperature_min"] = t.schedule.temperature_min;
  j["epsilon_init"] = t.schedule.epsilon;
  j["epsilon_min"] = t.schedule.epsilon_min;
  j["decay_rate"] = t.schedule.decay_rate;
  j["anneal_every"] = t.anneal_every == AnnealCadence::step ? "step" : "router_update";
  j["dominant_language"] = t.dominant_language.value;
  j["seed"] = t.seed;
  j["corpus_size"] = c.corpus_size;
  j["log_logits"] = c.log_logits;
  return j;
}

// Applies a command-line override. Values parse as JSON when they can
// (numbers, booleans, null) and fall back to plain strings.
inline void apply_override(nlohmann::json& config, const std::string& key, const std::string& value) {
  const auto& keys = run_config_keys();
  if (std::find(keys.begin(), keys.end(), key) == keys.end()) throw ConfigError("unknown config key '" + key + "'");
  auto parsed = nlohmann::json::parse(value, nullptr, false);
  config[key] = parsed.is_discarded() || parsed.is_object() || parsed.is_array() ? nlohmann::json(value) : parsed;
}

// ---------------------------------------------------------------------------
// Trajectory records

inline ojson trajectory_record(const TrajectoryPoint& p, bool with_logits) {
  const auto& params = p.router.params;
  const double tau = p.router.schedule.temperature;
  ojson j;
  j["update"] = p.update;
  j["step"] = p.step;
  j["updated"] = p.updated;
  j["temperature"] = tau;
  j["epsilon"] = p.router.schedule.epsilon;
  ojson topics = ojson::object(), regions = ojson::object();
  for (std::size_t t = 0; t < params.topics.size(); ++t) {
    const auto d = language_distribution(params.topic_logits.row(t), tau);
    ojson row = ojson::object();
    for (std::size_t l = 0; l < d.size(); ++l) row[params.languages.at(l).value] = d[l];
    topics[params.topics.at(t).value] = row;
  }
  for (std::size_t g = 0; g < params.regions.size(); ++g) {
    const auto d = language_distribution(params.region_logits.row(g), tau);
    ojson row = ojson::object();
    for (std::size_t l = 0; l < d.size(); ++l) row[params.languages.at(l).value] = d[l];
    regions[params.regions.at(g).value] = row;
  }
  j["probs"] = {{"topics", topics}, {"regions", regions}};
  if (with_logits) {
    j["topic_logits"] = detail::matrix_to_json(params.topic_logits);
    j["region_logits"] = detail::matrix_to_json(params.region_logits);
  }
  return j;
}

inline ojson rollout_record(const Question& q, std::uint64_t step, const Rollout& r) {
  ojson j;
  j["step"] = step;
  j["question_id"] = q.id;
  j["input_lang"] = q.input_lang.value;
  j["topic"] = q.topic.value;
  j["region"] = q.region ? ojson(q.region->value) : ojson(nullptr);
  const auto fields = to_json(r);
  for (const auto& [k, v] : fields.items())
    if (k != "question_id") j[k] = v;
  return j;
}

// ---------------------------------------------------------------------------
// Training runs

struct RunResult {
  RouterState initial_router;
  RouterState final_router;
  RunTotals totals;
  std::vector<TrajectoryPoint> trajectory;
};

inline RouterState initial_router(const SynthWorld& world, const TrainConfig& config) {
  return RouterState{RouterParams::zeros(world.languages, world.topics, world.regions), config.schedule};
}

inline std::vector<Question> run_corpus(const SynthWorld& world, const RunConfig& config) {
  Rng rng(derive_seed(config.train.seed, 0xC0A9ULL));
  return generate_corpus(world, config.corpus_size, rng);
}

// In-memory run. `sinks` (optional) receive every rollout and trajectory
// point in deterministic order.
inline RunResult run_training(const RunConfig& config, const SynthWorld& world, CalibrationStats stats,
                              std::size_t workers = 1, const RunSinks* sinks = nullptr,
                              bool keep_trajectory = false) {
  if (config.strength) stats.strength = *config.strength;
  SynthPolicy policy(world);
  SynthOracle oracle(world);
  RunResult result;
  result.initial_router = initial_router(world, config.train);
  Trainer trainer(config.train, result.initial_router, run_corpus(world, config), policy, oracle, stats);

  RunSinks local;
  if (sinks) local = *sinks;
  if (keep_trajectory) {
    auto forward = local.on_trajectory;
    local.on_trajectory = [&, forward](const TrajectoryPoint& p) {
      result.trajectory.push_back(p);
      if (forward) forward(p);
    };
  }
  trainer.run(workers, &local);
  result.final_router = trainer.router();
  result.totals = trainer.totals();
  return result;
}

inline ojson summary_json(const RunConfig& config, const RunResult& r) {
  ojson j;
  j["mode"] = to_string(config.train.mode);
  j["rollouts"] = r.totals.rollouts;
  j["mean_gated_reward"] = r.totals.mean_gated();
  j["consistency_rate"] =
      r.totals.rollouts ? static_cast<double>(r.totals.consistent) / static_cast<double>(r.totals.rollouts) : 0.0;
  ojson th = ojson::object(), dh = ojson::object();
  for (const auto& l : r.final_router.params.languages.ids()) {
    auto it = r.totals.target_histogram.find(l);
    th[l.value] = it == r.totals.target_histogram.end() ? 0 : it->second;
    auto jt = r.totals.delivered_histogram.find(l);
    dh[l.value] = jt == r.totals.delivered_histogram.end() ? 0 : jt->second;
  }
  j["target_language_histogram"] = th;
  j["delivered_language_histogram"] = dh;
  auto cells = ojson::array();
  for (const auto& [key, c] : r.totals.cell_rewards) {
    const auto& [t, g, l] = key;
    cells.push_back({{"topic", t.value},
                     {"region", g ? ojson(g->value) : ojson(nullptr)},
                     {"language", l.value},
                     {"count", c.count},
                     {"mean_gated_reward", c.sum / static_cast<double>(c.count)}});
  }
  j["cells"] = cells;
  j["final_router"] = to_json(r.final_router);
  return j;
}

inline ojson input_digest(const std::string& path) {
  return {{"path", path}, {"sha256", sha256_hex(read_file(path))}};
}

inline ojson make_manifest(const std::string& command, ojson config, std::uint64_t seed, ojson inputs,
                           ojson outputs, const std::vector<std::string>& languages) {
  ojson j;
  j["tool"] = "langroute";
  j["version"] = kVersion;
  j["modules"] = {{"router", kVersion}, {"calibration", kVersion}, {"rewards", kVersion},
                  {"training", kVersion}, {"synthenv", kVersion}};
  j["command"] = command;
  j["config"] = std::move(config);
  j["seed"] = seed;
  j["languages"] = languages;
  j["inputs"] = std::move(inputs);
  j["outputs"] = std::move(outputs);
  return j;
}

// Compares recorded input digests of an existing manifest with the files
// on disk. Returns the names of inputs whose content changed.
inline std::vector<std::string> stale_inputs(const fs::path& manifest_path) {
  std::vector<std::string> stale;
  if (!fs::exists(manifest_path)) return stale;
  const auto m = read_json_file(manifest_path);
  if (!m.contains("inputs")) return stale;
  for (const auto& [name, entry] : m.at("inputs").items()) {
    const auto path = entry.at("path").get<std::string>();
    if (!fs::exists(path) || sha256_hex(read_file(path)) != entry.at("sha256").get<std::string>())
      stale.push_back(name);
  }
  return stale;
}

// Writes manifest.json, trajectory.jsonl, rollouts.jsonl and summary.json
// under config.output_dir.
inline RunResult train_to_directory(const RunConfig& config, std::size_t workers = 1) {
  if (config.world.empty()) throw ConfigError("config key 'world' is required");
  if (config.stats.empty()) throw ConfigError("config key 'stats' is required");
  const auto world = load_world(config.world);
  const auto stats = load_stats(config.stats);

  const fs::path out = config.output_dir;
  fs::create_directories(out);
  write_file(out / "manifest.json",
             make_manifest("train", to_json(config), config.train.seed,
                           {{"world", input_digest(config.world)}, {"stats", input_digest(config.stats)}},
                           {{"trajectory", (out / "trajectory.jsonl").string()},
                            {"rollouts", (out / "rollouts.jsonl").string()},
                            {"summary", (out / "summary.json").string()}},
                           world.languages.labels())
                     .dump(2) +
                 "\n");

  std::ofstream traj(out / "trajectory.jsonl", std::ios::binary | std::ios::trunc);
  std::ofstream rolls(out / "rollouts.jsonl", std::ios::binary | std::ios::trunc);
  if (!traj || !rolls) throw ConfigError("cannot open run outputs under '" + out.string() + "'");
  RunSinks sinks;
  sinks.on_rollout = [&](const Question& q, std::uint64_t step, const Rollout& r) {
    rolls << rollout_record(q, step, r).dump() << '\n';
  };
  sinks.on_trajectory = [&](const TrajectoryPoint& p) { traj << trajectory_record(p, config.log_logits).dump() << '\n'; };
  auto result = run_training(config, world, stats, workers, &sinks);
  traj.close();
  rolls.close();
  write_file(out / "summary.json", summary_json(config, result).dump(2) + "\n");
  return result;
}

// ---------------------------------------------------------------------------
// Calibration command

struct CalibrateOptions {
  std::string world;
  std::string output_dir = "calibration";
  PairSampleCounts counts{};
  double strength = 1.0;
  bool same_language_in_reference = true;
  std::uint64_t seed = 0;
};

inline CalibrationStats calibrate_world(const SynthWorld& world, const PairSampleCounts& counts, double strength,
                                        bool same_language_in_reference, std::uint64_t seed) {
  Rng ref_rng(derive_seed(seed, 0x4EFULL));
  const auto refs = make_references(world, world.n_references, ref_rng);
  SynthOracle oracle(world);
  Rng pair_rng(derive_seed(seed, 0x9A1ULL));
  const auto samples = build_pair_samples(refs, world.languages, oracle, counts, pair_rng);
  return estimate_stats(samples, strength, same_language_in_reference);
}

inline CalibrationStats calibrate_to_directory(const CalibrateOptions& opt) {
  const auto world = load_world(opt.world);
  const fs::path out = opt.output_dir;
  fs::create_directories(out);
  ojson cfg;
  cfg["world"] = opt.world;
  cfg["output_dir"] = opt.output_dir;
  cfg["n_equiv"] = opt.counts.equivalent;
  cfg["n_mismatch_per_ref"] = opt.counts.mismatched_per_reference;
  cfg["n_hard_per_ref"] = opt.counts.hard_per_reference;
  cfg["lambda"] = opt.strength;
  cfg["same_language_in_reference"] = opt.same_language_in_reference;
  cfg["seed"] = opt.seed;
  write_file(out / "manifest.json",
             make_manifest("calibrate", cfg, opt.seed, {{"world", input_digest(opt.world)}},
                           {{"stats", (out / "stats.json").string()}, {"summary", (out / "stats.csv").string()}},
                           world.languages.labels())
                     .dump(2) +
                 "\n");
  const auto stats = calibrate_world(world, opt.counts, opt.strength, opt.same_language_in_reference, opt.seed);
  write_file(out / "stats.json", to_json(stats).dump(2) + "\n");
  std::ostringstream csv;
  write_stats_csv(csv, stats);
  write_file(out / "stats.csv", csv.str());
  return stats;
}

// ---------------------------------------------------------------------------
// Report command

namespace detail {

// Ordered so row order in logged objects matches registry order.
inline std::vector<ojson> read_jsonl(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read '" + path.string() + "'");
  std::vector<ojson> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(ojson::parse(line));
    } catch (const ojson::parse_error& e) {
      throw ConfigError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

inline std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

// Writes router_probs.csv and advantage_matrix.csv into `run_dir`. Router
// rows are recomputed from logged logits when present, otherwise copied from
// the logged probabilities.
inline void report_directory(const fs::path& run_dir) {
  const auto traj_path = run_dir / "trajectory.jsonl";
  if (!fs::exists(traj_path)) throw ConfigError("no trajectory.jsonl in '" + run_dir.string() + "'");
  const auto records = detail::read_jsonl(traj_path);

  std::vector<std::string> languages;
  if (fs::exists(run_dir / "manifest.json")) {
    const auto m = read_json_file(run_dir / "manifest.json");
    if (m.contains("languages")) languages = m.at("languages").get<std::vector<std::string>>();
  }
  if (languages.empty() && !records.empty()) {
    const auto& topics = records.front().at("probs").at("topics");
    if (!topics.empty())
      for (const auto& [l, p] : topics.begin()->items()) languages.push_back(l);
  }

  std::ostringstream probs;
  probs << "update,step,kind,key";
  for (const auto& l : languages) probs << ',' << l;
  probs << '\n';
  for (const auto& rec : records) {
    const double tau = rec.at("temperature").get<double>();
    for (const auto* kind : {"topics", "regions"}) {
      const std::string logits_key = std::string(kind) == "topics" ? "topic_logits" : "region_logits";
      std::size_t row_index = 0;
      for (const auto& [key, row] : rec.at("probs").at(kind).items()) {
        std::vector<double> p;
        if (rec.contains(logits_key)) {
          p = language_distribution(rec.at(logits_key).at(row_index).get<std::vector<double>>(), tau).probs;
        } else {
          for (const auto& l : languages) p.push_back(row.at(l).get<double>());
        }
        probs << rec.at("update").get<std::size_t>() << ',' << rec.at("step").get<std::uint64_t>() << ','
              << (std::string(kind) == "topics" ? "topic" : "region") << ',' << key;
        for (double v : p) probs << ',' << detail::fmt_double(v);
        probs << '\n';
        ++row_index;
      }
    }
  }
  write_file(run_dir / "router_probs.csv", probs.str());

  // Mean advantage per (topic | region) x target language.
  std::map<std::pair<std::string, std::string>, std::map<std::string, BufferCell>> cells;
  if (fs::exists(run_dir / "rollouts.jsonl")) {
    for (const auto& r : detail::read_jsonl(run_dir / "rollouts.jsonl")) {
      const auto lang = r.at("target_lang").get<std::string>();
      const double adv = r.at("advantage").get<double>();
      auto& tc = cells[{"topic", r.at("topic").get<std::string>()}][lang];
      tc.sum += adv;
      ++tc.count;
      if (!r.at("region").is_null()) {
        auto& rc = cells[{"region", r.at("region").get<std::string>()}][lang];
        rc.sum += adv;
        ++rc.count;
      }
    }
  }
  std::ostringstream adv;
  adv << "kind,key";
  for (const auto& l : languages) adv << ',' << l;
  adv << '\n';
  for (const auto& [rowkey, by_lang] : cells) {
    adv << rowkey.first << ',' << rowkey.second;
    for (const auto& l : languages) {
      adv << ',';
      auto it = by_lang.find(l);
      if (it != by_lang.end()) adv << detail::fmt_double(it->second.sum / static_cast<double>(it->second.count));
    }
    adv << '\n';
  }
  write_file(run_dir / "advantage_matrix.csv", adv.str());
}

// ---------------------------------------------------------------------------
// Compare command

struct Variant {
  std::string name;
  nlohmann::json overrides;  // run-config keys, including "mode"
};

struct CompareConfig {
  nlohmann::json base;
  std::vector<Variant> variants;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::string output_dir = "compare";
};

inline CompareConfig compare_config_from_json(const nlohmann::json& j) {
  detail::reject_unknown(j, {"base", "variants", "seeds", "output_dir"}, "compare config");
  try {
    CompareConfig c;
    c.base = j.value("base", nlohmann::json::object());
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (c.seeds.empty()) throw ConfigError("compare needs at least one seed");
    c.output_dir = j.value("output_dir", c.output_dir);
    for (const auto& v : j.at("variants")) {
      Variant var;
      if (v.is_string()) {
        var.name = v.get<std::string>();
        var.overrides = {{"mode", var.name == "lrpo" || var.name.rfind("fixed:", 0) == 0 ? var.name : "fixed:" + var.name}};
      } else {
        detail::reject_unknown(v, {"name", "mode", "overrides"}, "variant");
        var.name = v.at("name").get<std::string>();
        var.overrides = v.value("overrides", nlohmann::json::object());
        if (v.contains("mode")) var.overrides["mode"] = v.at("mode");
      }
      c.variants.push_back(std::move(var));
    }
    if (c.variants.empty()) throw ConfigError("compare needs at least one variant");
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed compare config: ") + e.what());
  }
}

struct VariantResult {
  std::string name;
  std::string mode;
  std::vector<double> per_seed;  // mean gated reward of each seed run
  std::string status = "ok";     // ok | failed | skipped
  std::string error;

  double mean() const {
    double s = 0.0;
    for (double v : per_seed) s += v;
    return per_seed.empty() ? 0.0 : s / static_cast<double>(per_seed.size());
  }
  // Standard error of the mean across seeds (sample std / sqrt(n)).
  double std_error() const {
    const auto n = per_seed.size();
    if (n < 2) return 0.0;
    const double m = mean();
    double ss = 0.0;
    for (double v : per_seed) ss += (v - m) * (v - m);
    return std::sqrt(ss / static_cast<double>(n - 1)) / std::sqrt(static_cast<double>(n));
  }
};

// Runs every variant on the shared world/stats with the shared seed list.
// The first failing variant stops the comparison; later rows are skipped.
inline std::vector<VariantResult> run_compare(const CompareConfig& cfg, std::size_t workers = 1) {
  auto base = run_config_from_json(cfg.base);
  if (base.world.empty() || base.stats.empty()) throw ConfigError("compare base needs 'world' and 'stats'");
  const auto world = load_world(base.world);
  const auto stats = load_stats(base.stats);

  std::vector<VariantResult> rows;
  bool failed = false;
  for (const auto& v : cfg.variants) {
    VariantResult row;
    row.name = v.name;
    if (failed) {
      row.status = "skipped";
      rows.push_back(std::move(row));
      continue;
    }
    try {
      auto j = cfg.base;
      for (const auto& [k, val] : v.overrides.items()) j[k] = val;
      for (auto seed : cfg.seeds) {
        j["seed"] = seed;
        const auto rc = run_config_from_json(j);
        row.mode = to_string(rc.train.mode);
        row.per_seed.push_back(run_training(rc, world, stats, workers).totals.mean_gated());
      }
    } catch (const std::exception& e) {
      row.status = "failed";
      row.error = e.what();
      failed = true;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::string compare_table_csv(const std::vector<VariantResult>& rows) {
  std::ostringstream os;
  os << "variant,mode,n_seeds,mean_gated_reward,std_error,status\n";
  for (const auto& r : rows) {
    os << r.name << ',' << r.mode << ',' << r.per_seed.size() << ',' << detail::fmt_double(r.mean()) << ','
       << detail::fmt_double(r.std_error()) << ',' << r.status << '\n';
  }
  return os.str();
}

inline ojson compare_json(const std::vector<VariantResult>& rows, const CompareConfig& cfg) {
  ojson j;
  j["seeds"] = cfg.seeds;
  auto arr = ojson::array();
  for (const auto& r : rows) {
    ojson e;
    e["variant"] = r.name;
    e["mode"] = r.mode;
    e["per_seed_mean_gated_reward"] = r.per_seed;
    e["mean_gated_reward"] = r.mean();
    e["std_error"] = r.std_error();
    e["status"] = r.status;
    if (!r.error.empty()) e["error"] = r.error;
    arr.push_back(std::move(e));
  }
  j["variants"] = arr;
  return j;
}

// ---------------------------------------------------------------------------
// World validation

struct BestLanguage {
  TopicId topic;
  MaybeRegion region;
  LanguageId language;
  double expected_gated = 0.0;
};

// Analytic best language for every topic (and every region of regional
// topics).
inline std::vector<BestLanguage> analytic_best_languages(const SynthWorld& world) {
  std::vector<BestLanguage> out;
  for (const auto& t : world.topics.ids()) {
    std::vector<MaybeRegion> contexts;
    if (world.regional_topics.count(t))
      for (const auto& g : world.regions.ids()) contexts.emplace_back(g);
    else
      contexts.emplace_back(std::nullopt);
    for (const auto& g : contexts) {
      BestLanguage best{t, g, world.languages.at(0), -1.0};
      for (const auto& l : world.languages.ids()) {
        const double v = expected_gated_quality(world, t, g, l);
        if (v > best.expected_gated) best = BestLanguage{t, g, l, v};
      }
      out.push_back(best);
    }
  }
  return out;
}

}  // namespace langroute
