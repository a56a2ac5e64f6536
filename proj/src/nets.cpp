#include "itersr/nets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include "binary_io.hpp"
#include "itersr/error.hpp"
#include "itersr/rng.hpp"

namespace itersr {

// ---------------------------------------------------------------- params

Tensor& ModelParams::add(std::string name, std::vector<int> shape) {
  for (const auto& t : tensors_) require(t.name != name, "duplicate tensor " + name);
  const std::size_t n = std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                                        [](std::size_t a, int d) { return a * static_cast<std::size_t>(d); });
  Tensor t{std::move(name), std::move(shape), std::vector<double>(n, 0.0), std::vector<double>(n, 0.0),
           std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
  tensors_.push_back(std::move(t));
  return tensors_.back();
}

std::size_t ModelParams::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    if (tensors_[i].name == name) return i;
  }
  throw Error("no tensor named " + std::string(name));
}

Tensor& ModelParams::at(std::string_view name) { return tensors_[index_of(name)]; }
const Tensor& ModelParams::at(std::string_view name) const { return tensors_[index_of(name)]; }

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

void ModelParams::zero_grad() {
  for (auto& t : tensors_) std::fill(t.grad.begin(), t.grad.end(), 0.0);
}

bool ModelParams::all_finite() const {
  for (const auto& t : tensors_) {
    if (!std::all_of(t.value.begin(), t.value.end(), [](double x) { return std::isfinite(x); })) return false;
  }
  return true;
}

bool ModelParams::operator==(const ModelParams& other) const {
  if (adam_step != other.adam_step || tensors_.size() != other.tensors_.size()) return false;
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    const auto& a = tensors_[i];
    const auto& b = other.tensors_[i];
    if (a.name != b.name || a.shape != b.shape || a.value != b.value || a.m != b.m || a.v != b.v) return false;
  }
  return true;
}

Gradients::Gradients(const ModelParams& params) {
  for (const auto& t : params.tensors()) buffers_.emplace_back(t.size(), 0.0);
}

void Gradients::zero() {
  for (auto& b : buffers_) std::fill(b.begin(), b.end(), 0.0);
}

void Gradients::add_to(ModelParams& params) const {
  auto& tensors = params.tensors();
  require(tensors.size() == buffers_.size(), "gradient layout mismatch");
  for (std::size_t i = 0; i < buffers_.size(); ++i) {
    auto& g = tensors[i].grad;
    for (std::size_t j = 0; j < g.size(); ++j) g[j] += buffers_[i][j];
  }
}

void adam_step(ModelParams& params, const AdamConfig& config) {
  for (const auto& t : params.tensors()) {
    require(std::all_of(t.grad.begin(), t.grad.end(), [](double x) { return std::isfinite(x); }),
            "non-finite gradient in tensor " + t.name);
  }
  params.adam_step += 1;
  const double step = static_cast<double>(params.adam_step);
  const double correction1 = 1.0 - std::pow(config.beta1, step);
  const double correction2 = 1.0 - std::pow(config.beta2, step);
  for (auto& t : params.tensors()) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double g = t.grad[i];
      t.m[i] = config.beta1 * t.m[i] + (1.0 - config.beta1) * g;
      t.v[i] = config.beta2 * t.v[i] + (1.0 - config.beta2) * g * g;
      const double m_hat = t.m[i] / correction1;
      const double v_hat = t.v[i] / correction2;
      t.value[i] -= config.lr * m_hat / (std::sqrt(v_hat) + config.eps);
    }
  }
  params.zero_grad();
}

// ---------------------------------------------------------------- CellNet

namespace {
std::string weight_name(int layer) { return "w" + std::to_string(layer); }
std::string bias_name(int layer) { return "b" + std::to_string(layer); }
}  // namespace

CellNet::CellNet(std::string name, NetConfig config, std::vector<int> cardinalities, int dense_dim, int outputs)
    : name_(std::move(name)),
      config_(config),
      cardinalities_(std::move(cardinalities)),
      dense_dim_(dense_dim),
      outputs_(outputs) {
  require(config_.context_radius >= 0, "context_radius must be >= 0");
  require(config_.hidden_dim >= 1, "hidden_dim must be >= 1");
  require(config_.layer_count >= 1, "layer_count must be >= 1");
  require(outputs_ >= 1 && dense_dim_ >= 0, "invalid network shape");
  const int side = 2 * config_.context_radius + 1;
  positions_ = side * side;
  int offset = 0;
  for (int card : cardinalities_) {
    require(card >= 1, "categorical cardinality must be >= 1");
    group_offsets_.push_back(offset);
    offset += card;
  }
  stride_ = offset + dense_dim_;
  require(stride_ >= 1, "network has no input channels");
}

void CellNet::declare(ModelParams& params) const {
  const int h = config_.hidden_dim;
  params.add(weight_name(0), {input_dim(), h});
  params.add(bias_name(0), {h});
  for (int l = 1; l < config_.layer_count; ++l) {
    params.add(weight_name(l), {h, h});
    params.add(bias_name(l), {h});
  }
  params.add("w_out", {h, outputs_});
  params.add("b_out", {outputs_});
}

void CellNet::initialize(ModelParams& params, std::uint64_t seed) const {
  declare(params);
  Rng rng(seed);
  const int active_inputs = positions_ * (static_cast<int>(cardinalities_.size()) + dense_dim_);
  auto fill = [&](const std::string& tensor, int fan_in) {
    const double bound = std::sqrt(6.0 / fan_in);
    for (auto& w : params.at(tensor).value) w = rng.uniform(-bound, bound);
  };
  fill(weight_name(0), active_inputs);
  for (int l = 1; l < config_.layer_count; ++l) fill(weight_name(l), config_.hidden_dim);
  fill("w_out", config_.hidden_dim);
}

void CellNet::check_input(const CellFeatures& input) const {
  require(input.width >= 1 && input.height >= 1, name_ + ": empty input grid");
  require(input.cardinalities == cardinalities_ && input.dense_dim == dense_dim_,
          name_ + ": input channel layout mismatch");
  require(input.categorical.size() == cardinalities_.size(), name_ + ": input channel layout mismatch");
  for (const auto& group : input.categorical) {
    require(group.size() == static_cast<std::size_t>(input.cells()), name_ + ": input shape mismatch");
  }
  require(input.dense.size() == static_cast<std::size_t>(input.cells()) * dense_dim_,
          name_ + ": input shape mismatch");
}

void CellNet::check_params(const ModelParams& params) const {
  const auto expect = [&](const std::string& tensor, std::vector<int> shape) {
    require(params.at(tensor).shape == shape, name_ + ": tensor " + tensor + " has the wrong shape");
  };
  const int h = config_.hidden_dim;
  expect(weight_name(0), {input_dim(), h});
  for (int l = 1; l < config_.layer_count; ++l) expect(weight_name(l), {h, h});
  expect("w_out", {h, outputs_});
  require(params.all_finite(), name_ + ": non-finite parameters");
}

template <typename Fn>
void CellNet::for_each_active(const CellFeatures& input, int cell, Fn&& fn) const {
  const int r = config_.context_radius;
  const int side = 2 * r + 1;
  const int cx = cell % input.width;
  const int cy = cell / input.width;
  const int dense_base = stride_ - dense_dim_;
  for (int dy = -r; dy <= r; ++dy) {
    const int y = cy + dy;
    if (y < 0 || y >= input.height) continue;
    for (int dx = -r; dx <= r; ++dx) {
      const int x = cx + dx;
      if (x < 0 || x >= input.width) continue;
      const int neighbor = y * input.width + x;
      const int base = ((dy + r) * side + (dx + r)) * stride_;
      for (std::size_t g = 0; g < cardinalities_.size(); ++g) {
        const int c = input.categorical[g][static_cast<std::size_t>(neighbor)];
        if (c < 0) continue;
        if (c >= cardinalities_[g]) throw Error(name_ + ": categorical input out of range");
        fn(base + group_offsets_[g] + c, 1.0, -1);
      }
      for (int j = 0; j < dense_dim_; ++j) {
        const int slot = neighbor * dense_dim_ + j;
        fn(base + dense_base + j, input.dense[static_cast<std::size_t>(slot)], slot);
      }
    }
  }
}

LogitGrid CellNet::forward(const ModelParams& params, const CellFeatures& input, Cache* cache) const {
  check_input(input);
  check_params(params);
  const int h = config_.hidden_dim;
  const int layers = config_.layer_count;
  const int cells = input.cells();

  std::vector<const double*> w(static_cast<std::size_t>(layers));
  std::vector<const double*> b(static_cast<std::size_t>(layers));
  for (int l = 0; l < layers; ++l) {
    w[l] = params.at(weight_name(l)).value.data();
    b[l] = params.at(bias_name(l)).value.data();
  }
  const double* w_out = params.at("w_out").value.data();
  const double* b_out = params.at("b_out").value.data();

  if (cache) {
    cache->activations.assign(static_cast<std::size_t>(layers), std::vector<double>(static_cast<std::size_t>(cells) * h));
  }
  LogitGrid out{input.width, input.height, outputs_, std::vector<double>(static_cast<std::size_t>(cells) * outputs_)};

  std::vector<double> current(static_cast<std::size_t>(h));
  std::vector<double> next(static_cast<std::size_t>(h));
  for (int cell = 0; cell < cells; ++cell) {
    std::copy(b[0], b[0] + h, current.begin());
    for_each_active(input, cell, [&](int idx, double value, int) {
      const double* row = w[0] + static_cast<std::size_t>(idx) * h;
      if (value == 1.0) {
        for (int j = 0; j < h; ++j) current[j] += row[j];
      } else if (value != 0.0) {
        for (int j = 0; j < h; ++j) current[j] += value * row[j];
      }
    });
    for (auto& a : current) a = std::max(a, 0.0);
    if (cache) std::ranges::copy(current, cache->activations[0].begin() + static_cast<std::ptrdiff_t>(cell) * h);

    for (int l = 1; l < layers; ++l) {
      std::copy(b[l], b[l] + h, next.begin());
      for (int i = 0; i < h; ++i) {
        const double a = current[i];
        if (a == 0.0) continue;
        const double* row = w[l] + static_cast<std::size_t>(i) * h;
        for (int j = 0; j < h; ++j) next[j] += a * row[j];
      }
      for (auto& a : next) a = std::max(a, 0.0);
      current.swap(next);
      if (cache) std::ranges::copy(current, cache->activations[l].begin() + static_cast<std::ptrdiff_t>(cell) * h);
    }

    double* o = out.values.data() + static_cast<std::size_t>(cell) * outputs_;
    std::copy(b_out, b_out + outputs_, o);
    for (int i = 0; i < h; ++i) {
      const double a = current[i];
      if (a == 0.0) continue;
      const double* row = w_out + static_cast<std::size_t>(i) * outputs_;
      for (int j = 0; j < outputs_; ++j) o[j] += a * row[j];
    }
  }
  return out;
}

void CellNet::backward(const ModelParams& params, const CellFeatures& input, const Cache& cache,
                       std::span<const double> d_outputs, Gradients& grads, std::vector<double>* d_dense) const {
  check_input(input);
  const int h = config_.hidden_dim;
  const int layers = config_.layer_count;
  const int cells = input.cells();
  require(d_outputs.size() == static_cast<std::size_t>(cells) * outputs_, name_ + ": output gradient shape mismatch");
  require(cache.activations.size() == static_cast<std::size_t>(layers), name_ + ": missing forward cache");
  if (d_dense) d_dense->assign(input.dense.size(), 0.0);

  std::vector<const double*> w(static_cast<std::size_t>(layers));
  std::vector<double*> gw(static_cast<std::size_t>(layers));
  std::vector<double*> gb(static_cast<std::size_t>(layers));
  for (int l = 0; l < layers; ++l) {
    w[l] = params.at(weight_name(l)).value.data();
    gw[l] = grads[params.index_of(weight_name(l))].data();
    gb[l] = grads[params.index_of(bias_name(l))].data();
  }
  const double* w_out = params.at("w_out").value.data();
  double* gw_out = grads[params.index_of("w_out")].data();
  double* gb_out = grads[params.index_of("b_out")].data();

  std::vector<double> delta(static_cast<std::size_t>(h));
  std::vector<double> prev(static_cast<std::size_t>(h));
  for (int cell = 0; cell < cells; ++cell) {
    const double* d_out = d_outputs.data() + static_cast<std::size_t>(cell) * outputs_;
    const double* a_top = cache.activations[layers - 1].data() + static_cast<std::size_t>(cell) * h;

    for (int j = 0; j < outputs_; ++j) gb_out[j] += d_out[j];
    for (int i = 0; i < h; ++i) {
      double acc = 0.0;
      const double* row = w_out + static_cast<std::size_t>(i) * outputs_;
      double* grow = gw_out + static_cast<std::size_t>(i) * outputs_;
      const double a = a_top[i];
      for (int j = 0; j < outputs_; ++j) {
        acc += row[j] * d_out[j];
        grow[j] += a * d_out[j];
      }
      delta[i] = a > 0.0 ? acc : 0.0;
    }

    for (int l = layers - 1; l >= 1; --l) {
      const double* a_below = cache.activations[l - 1].data() + static_cast<std::size_t>(cell) * h;
      for (int j = 0; j < h; ++j) gb[l][j] += delta[j];
      for (int i = 0; i < h; ++i) {
        const double* row = w[l] + static_cast<std::size_t>(i) * h;
        double* grow = gw[l] + static_cast<std::size_t>(i) * h;
        const double a = a_below[i];
        double acc = 0.0;
        for (int j = 0; j < h; ++j) {
          acc += row[j] * delta[j];
          grow[j] += a * delta[j];
        }
        prev[i] = a > 0.0 ? acc : 0.0;
      }
      delta.swap(prev);
    }

    for (int j = 0; j < h; ++j) gb[0][j] += delta[j];
    for_each_active(input, cell, [&](int idx, double value, int slot) {
      double* grow = gw[0] + static_cast<std::size_t>(idx) * h;
      for (int j = 0; j < h; ++j) grow[j] += value * delta[j];
      if (d_dense && slot >= 0) {
        const double* row = w[0] + static_cast<std::size_t>(idx) * h;
        double acc = 0.0;
        for (int j = 0; j < h; ++j) acc += row[j] * delta[j];
        (*d_dense)[static_cast<std::size_t>(slot)] += acc;
      }
    });
  }
}

// ---------------------------------------------------------------- Model

RestoreInput parse_restore_input(std::string_view text) {
  if (text == "pixels") return RestoreInput::pixels;
  if (text == "tokens") return RestoreInput::tokens;
  throw Error("unknown restoration input '" + std::string(text) + "' (expected pixels or tokens)");
}

std::string to_string(RestoreInput mode) { return mode == RestoreInput::pixels ? "pixels" : "tokens"; }

namespace {
CellNet make_restore_net(const ModelSpec& s) {
  if (s.restore_input == RestoreInput::pixels) return CellNet("restore", s.restore, {}, s.pixel_dim, s.num_codes);
  return CellNet("restore", s.restore, {s.num_codes}, 0, s.num_codes);
}
}  // namespace

Model::Model(ModelSpec spec)
    : spec_(spec),
      restore_net_(make_restore_net(spec)),
      refine_net_("refine", spec.refine, {spec.num_codes + 1, spec.num_codes + 1}, 1, spec.num_codes),
      evaluate_net_("evaluate", spec.evaluate, {spec.num_codes + 1}, 0, 1) {
  require(spec.num_codes >= 2, "model needs at least 2 codes");
}

Model Model::initialized(ModelSpec spec, std::uint64_t seed) {
  Model m(spec);
  m.restore_net_.initialize(m.restore, derive_seed(seed, "init.restore"));
  m.refine_net_.initialize(m.refine, derive_seed(seed, "init.refine"));
  m.evaluate_net_.initialize(m.evaluate, derive_seed(seed, "init.evaluate"));
  return m;
}

Model Model::zeros(ModelSpec spec) {
  Model m(spec);
  m.restore_net_.declare(m.restore);
  m.refine_net_.declare(m.refine);
  m.evaluate_net_.declare(m.evaluate);
  return m;
}

CellFeatures restoration_features_from_pixels(int width, int height, int pixel_dim, std::vector<double> pixels) {
  require(pixels.size() == static_cast<std::size_t>(width) * height * pixel_dim, "pixel feature shape mismatch");
  CellFeatures f;
  f.width = width;
  f.height = height;
  f.dense_dim = pixel_dim;
  f.dense = std::move(pixels);
  return f;
}

CellFeatures restoration_features_from_tokens(const TokenGrid& lq_tokens, int num_codes) {
  CellFeatures f;
  f.width = lq_tokens.width;
  f.height = lq_tokens.height;
  f.cardinalities = {num_codes};
  f.categorical = {std::vector<int>(lq_tokens.tokens.begin(), lq_tokens.tokens.end())};
  return f;
}

CellFeatures refiner_features(const DiffusionState& state, const TokenGrid& restored, int num_codes) {
  require(state.tokens.width == restored.width && state.tokens.height == restored.height,
          "refiner input shape mismatch");
  require(state.mask.width == restored.width && state.mask.height == restored.height,
          "refiner mask shape mismatch");
  CellFeatures f;
  f.width = restored.width;
  f.height = restored.height;
  f.cardinalities = {num_codes + 1, num_codes + 1};
  f.categorical = {std::vector<int>(state.tokens.tokens.begin(), state.tokens.tokens.end()),
                   std::vector<int>(restored.tokens.begin(), restored.tokens.end())};
  f.dense_dim = 1;
  f.dense.assign(state.mask.bits.begin(), state.mask.bits.end());
  return f;
}

CellFeatures evaluator_features(const TokenGrid& tokens, int num_codes) {
  CellFeatures f;
  f.width = tokens.width;
  f.height = tokens.height;
  f.cardinalities = {num_codes + 1};
  f.categorical = {std::vector<int>(tokens.tokens.begin(), tokens.tokens.end())};
  return f;
}

LogitGrid restoration_forward(const Model& model, const CellFeatures& input) {
  return model.restore_net().forward(model.restore, input);
}

LogitGrid refiner_forward(const Model& model, const DiffusionState& state, const TokenGrid& restored) {
  return model.refine_net().forward(model.refine, refiner_features(state, restored, model.spec().num_codes));
}

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::vector<double> evaluator_forward(const Model& model, const TokenGrid& tokens) {
  const auto logits = model.evaluate_net().forward(model.evaluate, evaluator_features(tokens, model.spec().num_codes));
  std::vector<double> probs(logits.values.size());
  std::ranges::transform(logits.values, probs.begin(), logistic);
  return probs;
}

TokenGrid argmax_tokens(const LogitGrid& logits) {
  TokenGrid out(logits.width, logits.height);
  for (int i = 0; i < logits.cells(); ++i) {
    const auto row = logits.cell(i);
    out[i] = static_cast<Token>(std::distance(row.begin(), std::ranges::max_element(row)));
  }
  return out;
}

// ---------------------------------------------------------------- checkpoints

namespace {

struct Record {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<double> values;
};

void write_record(std::ostream& out, const std::string& name, const std::vector<int>& shape,
                  const std::vector<double>& values) {
  detail::write_u32(out, static_cast<std::uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  detail::write_u32(out, static_cast<std::uint32_t>(shape.size()));
  for (int d : shape) detail::write_u32(out, static_cast<std::uint32_t>(d));
  for (double v : values) detail::write_f64(out, v);
}

std::vector<double> encode_net(const NetConfig& c) {
  return {static_cast<double>(c.context_radius), static_cast<double>(c.hidden_dim), static_cast<double>(c.layer_count)};
}

NetConfig decode_net(const std::vector<double>& v, std::size_t at) {
  return {static_cast<int>(v[at]), static_cast<int>(v[at + 1]), static_cast<int>(v[at + 2])};
}

const std::pair<std::string, ModelParams Model::*> kNets[] = {
    {"restore", &Model::restore}, {"refine", &Model::refine}, {"evaluate", &Model::evaluate}};

}  // namespace

void save_checkpoint(const Model& model, const std::filesystem::path& path,
                     const std::vector<std::pair<std::string, std::vector<double>>>& extras) {
  const auto& s = model.spec();
  std::vector<double> meta = {static_cast<double>(s.num_codes), s.restore_input == RestoreInput::pixels ? 0.0 : 1.0,
                              static_cast<double>(s.pixel_dim)};
  for (const auto* c : {&s.restore, &s.refine, &s.evaluate}) {
    const auto e = encode_net(*c);
    meta.insert(meta.end(), e.begin(), e.end());
  }

  std::size_t count = 1 + extras.size();
  for (const auto& [prefix, member] : kNets) count += 3 * (model.*member).tensors().size() + 1;

  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), "cannot write checkpoint " + path.string());
  detail::write_magic(out, "ITER");
  detail::write_u32(out, 1);
  detail::write_u32(out, static_cast<std::uint32_t>(count));
  write_record(out, "meta.model", {static_cast<int>(meta.size())}, meta);
  for (const auto& [prefix, member] : kNets) {
    for (const auto& t : (model.*member).tensors()) write_record(out, prefix + "." + t.name, t.shape, t.value);
  }
  for (const auto& [name, values] : extras) write_record(out, name, {static_cast<int>(values.size())}, values);
  for (const auto& [prefix, member] : kNets) {
    for (const auto& t : (model.*member).tensors()) write_record(out, prefix + "." + t.name + ".m", t.shape, t.m);
  }
  for (const auto& [prefix, member] : kNets) {
    for (const auto& t : (model.*member).tensors()) write_record(out, prefix + "." + t.name + ".v", t.shape, t.v);
  }
  for (const auto& [prefix, member] : kNets) {
    write_record(out, prefix + ".adam_step", {1}, {static_cast<double>((model.*member).adam_step)});
  }
  require(static_cast<bool>(out), "failed writing checkpoint " + path.string());
}

const std::vector<double>* LoadedCheckpoint::extra(std::string_view name) const {
  for (const auto& [n, v] : extras) {
    if (n == name) return &v;
  }
  return nullptr;
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), "cannot open checkpoint " + path.string());
  detail::expect_magic(in, "ITER", "checkpoint");
  const auto version = detail::read_u32(in);
  require(version == 1, "unsupported checkpoint version " + std::to_string(version));
  const auto count = detail::read_u32(in);
  require(count < (1u << 20), "corrupt checkpoint header");

  std::vector<Record> records;
  std::map<std::string, std::size_t> by_name;
  for (std::uint32_t i = 0; i < count; ++i) {
    Record r;
    const auto len = detail::read_u32(in);
    require(len < 4096, "corrupt checkpoint tensor name");
    r.name.resize(len);
    in.read(r.name.data(), len);
    const auto rank = detail::read_u32(in);
    require(rank <= 8, "corrupt checkpoint tensor rank");
    std::size_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      r.dims.push_back(detail::read_u32(in));
      n *= r.dims.back();
    }
    require(n < (std::size_t{1} << 32), "corrupt checkpoint tensor size");
    r.values.resize(n);
    for (auto& v : r.values) v = detail::read_f64(in);
    by_name[r.name] = records.size();
    records.push_back(std::move(r));
  }

  auto take = [&](const std::string& name) -> Record& {
    const auto it = by_name.find(name);
    require(it != by_name.end(), "checkpoint is missing tensor " + name);
    return records[it->second];
  };

  const auto& meta = take("meta.model").values;
  require(meta.size() == 12, "checkpoint meta.model has the wrong size");
  ModelSpec spec;
  spec.num_codes = static_cast<int>(meta[0]);
  spec.restore_input = meta[1] == 0.0 ? RestoreInput::pixels : RestoreInput::tokens;
  spec.pixel_dim = static_cast<int>(meta[2]);
  spec.restore = decode_net(meta, 3);
  spec.refine = decode_net(meta, 6);
  spec.evaluate = decode_net(meta, 9);

  LoadedCheckpoint out{Model::zeros(spec), {}};
  std::vector<bool> used(records.size(), false);
  used[by_name["meta.model"]] = true;
  for (const auto& [prefix, member] : kNets) {
    auto& params = out.model.*member;
    for (auto& t : params.tensors()) {
      for (const auto& [suffix, buffer] :
           {std::pair{std::string(), &t.value}, std::pair{std::string(".m"), &t.m}, std::pair{std::string(".v"), &t.v}}) {
        const std::string name = prefix + "." + t.name + suffix;
        auto& r = take(name);
        require(r.values.size() == buffer->size(), "checkpoint tensor " + name + " has the wrong size");
        *buffer = r.values;
        used[by_name[name]] = true;
      }
    }
    const std::string step_name = prefix + ".adam_step";
    params.adam_step = static_cast<std::int64_t>(take(step_name).values.at(0));
    used[by_name[step_name]] = true;
  }
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!used[i]) out.extras.emplace_back(records[i].name, records[i].values);
  }
  return out;
}

}  // namespace itersr
