#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace itersr {

using Token = std::int32_t;

/// Table of N code vectors of dimension d. Index N is the MASK sentinel: it
/// has a one-hot channel but no code vector.
class Codebook {
 public:
  Codebook(int size, int dim, std::vector<double> entries);

  /// Seeded uniform(-1, 1) entries.
  static Codebook uniform(int size, int dim, std::uint64_t seed);

  int size() const { return size_; }
  int dim() const { return dim_; }
  Token mask_id() const { return size_; }
  std::span<const double> entry(Token k) const;
  std::span<const double> entries() const { return entries_; }

  bool operator==(const Codebook&) const = default;

 private:
  int size_;
  int dim_;
  std::vector<double> entries_;
};

/// Row-major grid of token indices; cell (x, y) lives at y * width + x.
struct TokenGrid {
  int width = 0;
  int height = 0;
  std::vector<Token> tokens;

  TokenGrid() = default;
  TokenGrid(int w, int h, Token fill = 0);
  TokenGrid(int w, int h, std::vector<Token> values);

  int cells() const { return width * height; }
  Token& operator[](int i) { return tokens[static_cast<std::size_t>(i)]; }
  Token operator[](int i) const { return tokens[static_cast<std::size_t>(i)]; }
  Token at(int x, int y) const { return tokens[static_cast<std::size_t>(y * width + x)]; }
  bool contains(Token t) const;

  bool operator==(const TokenGrid&) const = default;
};

/// m x n x d real features (pre-quantization Z_h or quantized Z_c).
struct LatentGrid {
  int width = 0;
  int height = 0;
  int dim = 0;
  std::vector<double> values;

  LatentGrid() = default;
  LatentGrid(int w, int h, int d);
  LatentGrid(int w, int h, int d, std::vector<double> v);

  int cells() const { return width * height; }
  std::span<double> cell(int i) { return {values.data() + static_cast<std::size_t>(i) * dim, static_cast<std::size_t>(dim)}; }
  std::span<const double> cell(int i) const { return {values.data() + static_cast<std::size_t>(i) * dim, static_cast<std::size_t>(dim)}; }
};

/// Dense m x n x channels one-hot tensor.
struct OneHotGrid {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<double> values;
};

struct Quantized {
  TokenGrid tokens;
  LatentGrid codes;
};

/// Throws unless every token is in [0, N), or [0, N] when `allow_mask`.
void validate_tokens(const TokenGrid& grid, const Codebook& book, bool allow_mask);

/// Nearest code per cell by squared Euclidean distance; ties go to the lowest
/// index.
Quantized quantize(const LatentGrid& latent, const Codebook& book);

/// One-hot over N+1 channels; the mask sentinel occupies channel N.
OneHotGrid embed(const TokenGrid& tokens, const Codebook& book);

/// Gathers code vectors; decoding a grid that holds the mask sentinel throws.
LatentGrid lookup(const TokenGrid& tokens, const Codebook& book);

struct VqLoss {
  double value = 0.0;
  /// d/dZ_h: only the commitment term reaches the encoder.
  std::vector<double> grad_latent;
  /// d/dZ_c: only the codebook term reaches the codes.
  std::vector<double> grad_codes;
};

/// ||sg(Z_h) - Z_c||^2 + beta ||Z_h - sg(Z_c)||^2.
VqLoss vq_loss(const LatentGrid& latent, const LatentGrid& quantized, double beta = 0.25);

// Binary file: "ITCB", u32 version = 1, u32 N, u32 d, N*d little-endian f64.
void save_codebook(const Codebook& book, const std::filesystem::path& path);
Codebook load_codebook(const std::filesystem::path& path);

}  // namespace itersr
