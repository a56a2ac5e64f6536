#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "itersr/nets.hpp"
#include "itersr/sampler.hpp"
#include "itersr/toy_world.hpp"
#include "itersr/trainer.hpp"

namespace itersr {

/// Flat `key = value` settings over a fixed table of known keys. Every key has
/// a default; setting or loading an unknown key throws an Error naming it.
class Config {
 public:
  Config();

  static const std::vector<std::pair<std::string, std::string>>& defaults();
  static bool known(std::string_view key);

  void set(std::string_view key, std::string value);
  /// Parses `key = value` lines; '#' starts a comment.
  void load_file(const std::filesystem::path& path);
  /// "key=value" form used by --set.
  void apply_override(std::string_view assignment);

  const std::string& get(std::string_view key) const;
  std::int64_t get_int(std::string_view key) const;
  std::uint64_t get_u64(std::string_view key) const;
  double get_double(std::string_view key) const;
  bool get_bool(std::string_view key) const;
  std::vector<std::string> get_list(std::string_view key) const;
  std::vector<double> get_doubles(std::string_view key) const;

  const std::map<std::string, std::string, std::less<>>& values() const { return values_; }

 private:
  std::map<std::string, std::string, std::less<>> values_;
};

WorldConfig world_config(const Config& cfg);
ModelSpec model_spec(const Config& cfg);
TrainConfig train_config(const Config& cfg);
SampleConfig sample_config(const Config& cfg);

/// Named sub-streams of the run seed.
std::uint64_t dataset_seed(std::uint64_t seed);
std::uint64_t train_seed(std::uint64_t seed);
std::uint64_t sample_seed(std::uint64_t seed);

}  // namespace itersr
