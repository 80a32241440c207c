#pragma once

// Shared vocabulary: identifier strong types, registries, error types and
// the seeded random source used throughout the library.

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace langroute {

// Errors. Every failure the library reports derives from Error so the CLI
// can map user-facing problems to exit code 1.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct InvalidParameter : Error {
  using Error::Error;
};
struct CalibrationError : Error {
  using Error::Error;
};
struct EstimationError : Error {
  using Error::Error;
};
struct DataError : Error {
  using Error::Error;
};

template <class Tag>
struct Label {
  std::string value;

  Label() = default;
  explicit Label(std::string v) : value(std::move(v)) {}

  const std::string& str() const { return value; }
  auto operator<=>(const Label&) const = default;
  bool operator==(const Label&) const = default;
};

struct LanguageTag {};
struct TopicTag {};
struct RegionTag {};

using LanguageId = Label<LanguageTag>;
using TopicId = Label<TopicTag>;
using RegionId = Label<RegionTag>;
// std::nullopt is the "absent" region.
using MaybeRegion = std::optional<RegionId>;

inline std::string region_label(const MaybeRegion& region) {
  return region ? region->value : std::string{};
}

inline MaybeRegion region_from_label(const std::string& label) {
  if (label.empty()) return std::nullopt;
  return RegionId{label};
}

// Fixed, ordered set of identifiers. Order is the column/row order of every
// matrix and vector keyed by the registry.
template <class Id>
class Registry {
 public:
  Registry() = default;
  explicit Registry(std::vector<Id> ids, std::string_view what = "entry") {
    for (auto& id : ids) add(std::move(id), what);
  }
  explicit Registry(const std::vector<std::string>& labels, std::string_view what = "entry") {
    for (const auto& l : labels) add(Id{l}, what);
  }

  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }
  const std::vector<Id>& ids() const { return ids_; }
  const Id& at(std::size_t i) const { return ids_.at(i); }
  bool contains(const Id& id) const { return index_.count(id) != 0; }

  std::optional<std::size_t> find(const Id& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t index_of(const Id& id, std::string_view what = "entry") const {
    auto it = index_.find(id);
    if (it == index_.end()) throw ConfigError("unknown " + std::string(what) + " '" + id.value + "'");
    return it->second;
  }

  std::vector<std::string> labels() const {
    std::vector<std::string> out;
    out.reserve(ids_.size());
    for (const auto& id : ids_) out.push_back(id.value);
    return out;
  }

  bool operator==(const Registry& other) const { return ids_ == other.ids_; }

 private:
  void add(Id id, std::string_view what) {
    if (id.value.empty()) throw ConfigError("empty " + std::string(what) + " identifier");
    if (index_.count(id)) throw ConfigError("duplicate " + std::string(what) + " '" + id.value + "'");
    index_.emplace(id, ids_.size());
    ids_.push_back(std::move(id));
  }

  std::vector<Id> ids_;
  std::map<Id, std::size_t> index_;
};

using LanguageRegistry = Registry<LanguageId>;
using TopicRegistry = Registry<TopicId>;
using RegionRegistry = Registry<RegionId>;

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive independent sub-seeds.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// FNV-1a, stable across platforms (std::hash is not).
constexpr std::uint64_t hash_label(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

template <class... Parts>
constexpr std::uint64_t derive_seed(std::uint64_t base, Parts... parts) {
  std::uint64_t s = mix64(base);
  ((s = mix64(s ^ static_cast<std::uint64_t>(parts))), ...);
  return s;
}

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

// Inverse-CDF draw from unnormalized non-negative weights.
inline std::size_t sample_categorical(const std::vector<double>& weights, Rng& rng) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) throw InvalidParameter("categorical weights must have positive mass");
  double u = uniform01(rng) * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    if (u < acc) return i;
  }
  // u landed on the rounding gap at the top; return the last positive weight.
  for (std::size_t i = weights.size(); i-- > 0;)
    if (weights[i] > 0.0) return i;
  return weights.size() - 1;
}

// Opaque response handle shared by policies and similarity oracles.
// `source_id` names the content the response renders (a question or a
// reference); `latent_quality` is only meaningful to synthetic components.
struct Response {
  std::string source_id;
  LanguageId language;
  double latent_quality = 0.0;
  std::string content;
};

inline double clamp01(double x) { return x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x); }

}  // namespace langroute
