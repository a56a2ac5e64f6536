#include "itersr/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>

#include "itersr/error.hpp"
#include "itersr/rng.hpp"

namespace itersr {

namespace {

std::string trim(std::string_view s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string_view::npos) return {};
  const auto end = s.find_last_not_of(" \t\r");
  return std::string(s.substr(begin, end - begin + 1));
}

template <typename T>
T parse_number(std::string_view key, const std::string& text) {
  T value{};
  const char* first = text.data();
  const char* last = first + text.size();
  if (!text.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || text.empty()) {
    throw Error("config key '" + std::string(key) + "': cannot parse '" + text + "' as a number");
  }
  return value;
}

}  // namespace

const std::vector<std::pair<std::string, std::string>>& Config::defaults() {
  static const std::vector<std::pair<std::string, std::string>> table = {
      {"seed", "0"},
      {"threads", "0"},
      {"world.width", "16"},
      {"world.height", "16"},
      {"world.codes", "32"},
      {"world.tile", "4"},
      {"world.sweeps", "6"},
      {"world.coupling", "3.0"},
      {"world.texture", "0.12"},
      {"degrade.blur_sigma", "1.0"},
      {"degrade.noise_sigma", "0.1"},
      {"degrade.factor", "2"},
      {"degrade.second_pass", "false"},
      {"schedule.kind", "cosine"},
      {"schedule.T", "8"},
      {"model.restore_input", "pixels"},
      {"model.context_radius", "1"},
      {"model.hidden_dim", "32"},
      {"model.layer_count", "2"},
      {"synth.count", "16"},
      {"train.batch", "16"},
      {"train.iterations", "1000"},
      {"train.lr", "1e-4"},
      {"train.beta1", "0.9"},
      {"train.beta2", "0.99"},
      {"train.eps", "1e-8"},
      {"train.class_balance_beta", "0.9999"},
      {"train.evaluator_input", "sampled"},
      {"train.checkpoint_every", "1000"},
      {"train.update_restore", "true"},
      {"train.update_refine", "true"},
      {"train.update_evaluate", "true"},
      {"train.resume", ""},
      {"sample.checkpoint", ""},
      {"sample.input", ""},
      {"sample.alpha", "0.5"},
      {"sample.strategy", "evaluator"},
      {"sample.selection", "stochastic"},
      {"sample.temperature", "1.0"},
      {"sample.adaptive", "true"},
      {"sample.dump_trajectory", "true"},
      {"ablate.strategies", "evaluator,topk"},
      {"sweep.alphas", "0.35,0.4,0.45,0.5,0.55"},
  };
  return table;
}

bool Config::known(std::string_view key) {
  const auto& table = defaults();
  return std::ranges::any_of(table, [&](const auto& kv) { return kv.first == key; });
}

Config::Config() {
  for (const auto& [k, v] : defaults()) values_.emplace(k, v);
}

void Config::set(std::string_view key, std::string value) {
  const auto it = values_.find(key);
  if (it == values_.end()) throw Error("unknown config key '" + std::string(key) + "'");
  it->second = std::move(value);
}

void Config::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), "cannot open config file " + path.string());
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw Error(path.string() + ":" + std::to_string(number) + ": expected 'key = value'");
    }
    set(trim(std::string_view(body).substr(0, eq)), trim(std::string_view(body).substr(eq + 1)));
  }
}

void Config::apply_override(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) throw Error("override '" + std::string(assignment) + "' is not key=value");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

const std::string& Config::get(std::string_view key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw Error("unknown config key '" + std::string(key) + "'");
  return it->second;
}

std::int64_t Config::get_int(std::string_view key) const { return parse_number<std::int64_t>(key, get(key)); }

std::uint64_t Config::get_u64(std::string_view key) const { return parse_number<std::uint64_t>(key, get(key)); }

double Config::get_double(std::string_view key) const { return parse_number<double>(key, get(key)); }

bool Config::get_bool(std::string_view key) const {
  const auto& v = get(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw Error("config key '" + std::string(key) + "': expected a boolean, got '" + v + "'");
}

std::vector<std::string> Config::get_list(std::string_view key) const {
  std::vector<std::string> items;
  std::string_view rest = get(key);
  while (!rest.empty()) {
    const auto comma = rest.find(',');
    auto item = trim(rest.substr(0, comma));
    if (!item.empty()) items.push_back(std::move(item));
    if (comma == std::string_view::npos) break;
    rest.remove_prefix(comma + 1);
  }
  return items;
}

std::vector<double> Config::get_doubles(std::string_view key) const {
  std::vector<double> out;
  for (const auto& item : get_list(key)) out.push_back(parse_number<double>(key, item));
  return out;
}

WorldConfig world_config(const Config& cfg) {
  WorldConfig w;
  w.width = static_cast<int>(cfg.get_int("world.width"));
  w.height = static_cast<int>(cfg.get_int("world.height"));
  w.codes = static_cast<int>(cfg.get_int("world.codes"));
  w.tile = static_cast<int>(cfg.get_int("world.tile"));
  w.sweeps = static_cast<int>(cfg.get_int("world.sweeps"));
  w.coupling = cfg.get_double("world.coupling");
  w.texture = cfg.get_double("world.texture");
  w.degrade.blur_sigma = cfg.get_double("degrade.blur_sigma");
  w.degrade.noise_sigma = cfg.get_double("degrade.noise_sigma");
  w.degrade.factor = static_cast<int>(cfg.get_int("degrade.factor"));
  w.degrade.second_pass = cfg.get_bool("degrade.second_pass");
  return w;
}

ModelSpec model_spec(const Config& cfg) {
  const auto w = world_config(cfg);
  ModelSpec s;
  s.num_codes = w.codes;
  s.restore_input = parse_restore_input(cfg.get("model.restore_input"));
  s.pixel_dim = w.tile * w.tile;
  NetConfig net;
  net.context_radius = static_cast<int>(cfg.get_int("model.context_radius"));
  net.hidden_dim = static_cast<int>(cfg.get_int("model.hidden_dim"));
  net.layer_count = static_cast<int>(cfg.get_int("model.layer_count"));
  s.restore = s.refine = s.evaluate = net;
  return s;
}

namespace {
ScheduleSpec schedule_spec(const Config& cfg) {
  ScheduleSpec s;
  s.kind = parse_schedule_kind(cfg.get("schedule.kind"));
  s.steps = static_cast<int>(cfg.get_int("schedule.T"));
  require(s.steps >= 1, "schedule.T must be >= 1");
  return s;
}
}  // namespace

TrainConfig train_config(const Config& cfg) {
  TrainConfig t;
  t.batch = static_cast<int>(cfg.get_int("train.batch"));
  t.iterations = cfg.get_int("train.iterations");
  t.seed = train_seed(cfg.get_u64("seed"));
  t.schedule = schedule_spec(cfg);
  t.adam.lr = cfg.get_double("train.lr");
  t.adam.beta1 = cfg.get_double("train.beta1");
  t.adam.beta2 = cfg.get_double("train.beta2");
  t.adam.eps = cfg.get_double("train.eps");
  t.class_balance_beta = cfg.get_double("train.class_balance_beta");
  t.evaluator_input = parse_evaluator_input(cfg.get("train.evaluator_input"));
  t.checkpoint_every = cfg.get_int("train.checkpoint_every");
  t.threads = static_cast<unsigned>(cfg.get_int("threads"));
  t.update_restore = cfg.get_bool("train.update_restore");
  t.update_refine = cfg.get_bool("train.update_refine");
  t.update_evaluate = cfg.get_bool("train.update_evaluate");
  validate(t);
  return t;
}

SampleConfig sample_config(const Config& cfg) {
  SampleConfig s;
  s.schedule = schedule_spec(cfg);
  s.alpha = cfg.get_double("sample.alpha");
  s.strategy = parse_strategy(cfg.get("sample.strategy"));
  s.selection = parse_selection(cfg.get("sample.selection"));
  s.temperature = cfg.get_double("sample.temperature");
  s.adaptive = cfg.get_bool("sample.adaptive");
  s.seed = sample_seed(cfg.get_u64("seed"));
  validate(s);
  return s;
}

std::uint64_t dataset_seed(std::uint64_t seed) { return derive_seed(seed, "dataset"); }
std::uint64_t train_seed(std::uint64_t seed) { return derive_seed(seed, "train"); }
std::uint64_t sample_seed(std::uint64_t seed) { return derive_seed(seed, "sample"); }

}  // namespace itersr
