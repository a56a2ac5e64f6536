#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "itersr/diffusion.hpp"
#include "itersr/token_core.hpp"

namespace itersr {

/// Named parameter tensor with its gradient and Adam moment buffers.
struct Tensor {
  std::string name;
  std::vector<int> shape;
  std::vector<double> value;
  std::vector<double> grad;
  std::vector<double> m;
  std::vector<double> v;

  std::size_t size() const { return value.size(); }
};

/// Flat parameter store of one network plus its Adam step counter.
class ModelParams {
 public:
  Tensor& add(std::string name, std::vector<int> shape);
  Tensor& at(std::string_view name);
  const Tensor& at(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;

  std::vector<Tensor>& tensors() { return tensors_; }
  const std::vector<Tensor>& tensors() const { return tensors_; }
  std::size_t parameter_count() const;

  void zero_grad();
  bool all_finite() const;

  std::int64_t adam_step = 0;

  bool operator==(const ModelParams&) const;

 private:
  std::vector<Tensor> tensors_;
};

/// Per-tensor gradient scratch laid out like a ModelParams. Batch items write
/// into their own buffer; the trainer reduces buffers in item order.
class Gradients {
 public:
  explicit Gradients(const ModelParams& params);
  std::vector<double>& operator[](std::size_t i) { return buffers_[i]; }
  const std::vector<double>& operator[](std::size_t i) const { return buffers_[i]; }
  std::size_t size() const { return buffers_.size(); }
  void zero();
  void add_to(ModelParams& params) const;

 private:
  std::vector<std::vector<double>> buffers_;
};

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;
};

/// Bias-corrected Adam update of every tensor, then gradients are zeroed.
/// Throws (naming the tensor) if any gradient is non-finite.
void adam_step(ModelParams& params, const AdamConfig& config = {});

struct NetConfig {
  int context_radius = 1;
  int hidden_dim = 32;
  int layer_count = 2;
  bool operator==(const NetConfig&) const = default;
};

/// Per-cell input channels of one grid. Categorical groups are one-hot
/// encoded (index -1 = no active channel); dense channels are real-valued.
struct CellFeatures {
  int width = 0;
  int height = 0;
  std::vector<int> cardinalities;
  std::vector<std::vector<int>> categorical;  // [group][cell]
  int dense_dim = 0;
  std::vector<double> dense;  // [cell * dense_dim + j]

  int cells() const { return width * height; }
};

/// m x n x classes real values.
struct LogitGrid {
  int width = 0;
  int height = 0;
  int classes = 0;
  std::vector<double> values;

  int cells() const { return width * height; }
  std::span<const double> cell(int i) const {
    return {values.data() + static_cast<std::size_t>(i) * classes, static_cast<std::size_t>(classes)};
  }
};

/// Per-cell MLP over the features of a (2r+1)^2 neighborhood (zero padded at
/// the border), ReLU hidden layers, linear output.
class CellNet {
 public:
  CellNet(std::string name, NetConfig config, std::vector<int> cardinalities, int dense_dim, int outputs);

  const std::string& name() const { return name_; }
  const NetConfig& config() const { return config_; }
  int outputs() const { return outputs_; }
  int input_dim() const { return positions_ * stride_; }

  /// Registers zero-filled tensors.
  void declare(ModelParams& params) const;
  /// Registers tensors with seeded He-uniform weights and zero biases. The
  /// fan-in of the first layer is the number of active input features per cell.
  void initialize(ModelParams& params, std::uint64_t seed) const;

  struct Cache {
    // activations[layer][cell * hidden + j], post-ReLU.
    std::vector<std::vector<double>> activations;
  };

  LogitGrid forward(const ModelParams& params, const CellFeatures& input, Cache* cache = nullptr) const;

  /// Accumulates d(loss)/d(params) into `grads` given d(loss)/d(outputs).
  /// When `d_dense` is non-null it receives d(loss)/d(input.dense).
  void backward(const ModelParams& params, const CellFeatures& input, const Cache& cache,
                std::span<const double> d_outputs, Gradients& grads, std::vector<double>* d_dense = nullptr) const;

 private:
  void check_input(const CellFeatures& input) const;
  void check_params(const ModelParams& params) const;
  template <typename Fn>
  void for_each_active(const CellFeatures& input, int cell, Fn&& fn) const;

  std::string name_;
  NetConfig config_;
  std::vector<int> cardinalities_;
  std::vector<int> group_offsets_;
  int dense_dim_;
  int outputs_;
  int positions_;
  int stride_;
};

enum class RestoreInput { pixels, tokens };

RestoreInput parse_restore_input(std::string_view text);
std::string to_string(RestoreInput mode);

/// Shapes of the three networks; persisted in checkpoints.
struct ModelSpec {
  int num_codes = 32;
  RestoreInput restore_input = RestoreInput::pixels;
  int pixel_dim = 16;  // values per cell in pixel mode (f * f * channels)
  NetConfig restore;
  NetConfig refine;
  NetConfig evaluate;

  bool operator==(const ModelSpec&) const = default;
};

/// Distortion-removal network E_l, token refiner phi_r and token evaluator phi_e.
/// The three parameter stores are disjoint.
class Model {
 public:
  explicit Model(ModelSpec spec);

  static Model initialized(ModelSpec spec, std::uint64_t seed);
  static Model zeros(ModelSpec spec);

  const ModelSpec& spec() const { return spec_; }
  Token mask_id() const { return spec_.num_codes; }

  const CellNet& restore_net() const { return restore_net_; }
  const CellNet& refine_net() const { return refine_net_; }
  const CellNet& evaluate_net() const { return evaluate_net_; }

  ModelParams restore;
  ModelParams refine;
  ModelParams evaluate;

 private:
  ModelSpec spec_;
  CellNet restore_net_;
  CellNet refine_net_;
  CellNet evaluate_net_;
};

// Feature assembly for each network.
CellFeatures restoration_features_from_pixels(int width, int height, int pixel_dim, std::vector<double> pixels);
CellFeatures restoration_features_from_tokens(const TokenGrid& lq_tokens, int num_codes);
CellFeatures refiner_features(const DiffusionState& state, const TokenGrid& restored, int num_codes);
CellFeatures evaluator_features(const TokenGrid& tokens, int num_codes);

/// m x n x N logits of E_l.
LogitGrid restoration_forward(const Model& model, const CellFeatures& input);
/// m x n x N logits of phi_r given S_t, the restored tokens S_l and m_t.
LogitGrid refiner_forward(const Model& model, const DiffusionState& state, const TokenGrid& restored);
/// Per-cell probability that the token is correct, via the logistic of phi_e.
std::vector<double> evaluator_forward(const Model& model, const TokenGrid& tokens);

double logistic(double x);

/// Per-cell argmax; ties go to the lowest class.
TokenGrid argmax_tokens(const LogitGrid& logits);

// Checkpoint: "ITER", u32 version = 1, u32 tensor count, then per tensor
// u32 name length + UTF-8 name, u32 rank, u32 dims, little-endian f64 values.
// Parameter values come first, then Adam state under ".m" / ".v" names.
void save_checkpoint(const Model& model, const std::filesystem::path& path,
                     const std::vector<std::pair<std::string, std::vector<double>>>& extras = {});

struct LoadedCheckpoint {
  Model model;
  std::vector<std::pair<std::string, std::vector<double>>> extras;

  const std::vector<double>* extra(std::string_view name) const;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace itersr
