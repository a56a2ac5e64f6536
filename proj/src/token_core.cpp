#include "itersr/token_core.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <string>

#include "binary_io.hpp"
#include "itersr/error.hpp"
#include "itersr/rng.hpp"

namespace itersr {

Codebook::Codebook(int size, int dim, std::vector<double> entries)
    : size_(size), dim_(dim), entries_(std::move(entries)) {
  require(size_ >= 2, "codebook needs at least 2 entries");
  require(dim_ >= 1, "codebook dimension must be >= 1");
  require(entries_.size() == static_cast<std::size_t>(size_) * dim_,
          "codebook entry count does not match N*d");
  require(std::all_of(entries_.begin(), entries_.end(), [](double v) { return std::isfinite(v); }),
          "codebook entries must be finite");
}

Codebook Codebook::uniform(int size, int dim, std::uint64_t seed) {
  require(size >= 2 && dim >= 1, "invalid codebook shape");
  Rng rng(derive_seed(seed, "codebook"));
  std::vector<double> v(static_cast<std::size_t>(size) * dim);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return Codebook(size, dim, std::move(v));
}

std::span<const double> Codebook::entry(Token k) const {
  require(k >= 0 && k < size_, "token " + std::to_string(k) + " has no code vector");
  return {entries_.data() + static_cast<std::size_t>(k) * dim_, static_cast<std::size_t>(dim_)};
}

TokenGrid::TokenGrid(int w, int h, Token fill) : width(w), height(h) {
  require(w >= 1 && h >= 1, "token grid dimensions must be >= 1");
  tokens.assign(static_cast<std::size_t>(w) * h, fill);
}

TokenGrid::TokenGrid(int w, int h, std::vector<Token> values)
    : width(w), height(h), tokens(std::move(values)) {
  require(w >= 1 && h >= 1, "token grid dimensions must be >= 1");
  require(tokens.size() == static_cast<std::size_t>(w) * h, "token grid size mismatch");
}

bool TokenGrid::contains(Token t) const {
  return std::find(tokens.begin(), tokens.end(), t) != tokens.end();
}

LatentGrid::LatentGrid(int w, int h, int d)
    : width(w), height(h), dim(d), values(static_cast<std::size_t>(w) * h * d, 0.0) {}

LatentGrid::LatentGrid(int w, int h, int d, std::vector<double> v)
    : width(w), height(h), dim(d), values(std::move(v)) {
  require(values.size() == static_cast<std::size_t>(w) * h * d, "latent grid size mismatch");
}

void validate_tokens(const TokenGrid& grid, const Codebook& book, bool allow_mask) {
  const Token limit = allow_mask ? book.size() + 1 : book.size();
  for (Token t : grid.tokens) {
    require(t >= 0 && t < limit, "token " + std::to_string(t) + " out of range for codebook of size " +
                                     std::to_string(book.size()));
  }
}

Quantized quantize(const LatentGrid& latent, const Codebook& book) {
  require(latent.dim == book.dim(), "codebook/latent dim mismatch");
  Quantized out{TokenGrid(latent.width, latent.height), LatentGrid(latent.width, latent.height, latent.dim)};
  for (int i = 0; i < latent.cells(); ++i) {
    const auto z = latent.cell(i);
    Token best = 0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (Token k = 0; k < book.size(); ++k) {
      const auto c = book.entry(k);
      double dist = 0.0;
      for (int j = 0; j < latent.dim; ++j) {
        const double diff = z[j] - c[j];
        dist += diff * diff;
      }
      if (dist < best_dist) {
        best_dist = dist;
        best = k;
      }
    }
    out.tokens[i] = best;
    std::ranges::copy(book.entry(best), out.codes.cell(i).begin());
  }
  return out;
}

OneHotGrid embed(const TokenGrid& tokens, const Codebook& book) {
  validate_tokens(tokens, book, true);
  OneHotGrid out{tokens.width, tokens.height, book.size() + 1, {}};
  out.values.assign(static_cast<std::size_t>(tokens.cells()) * out.channels, 0.0);
  for (int i = 0; i < tokens.cells(); ++i) {
    out.values[static_cast<std::size_t>(i) * out.channels + tokens[i]] = 1.0;
  }
  return out;
}

LatentGrid lookup(const TokenGrid& tokens, const Codebook& book) {
  require(!tokens.contains(book.mask_id()), "cannot decode a grid containing the mask token");
  validate_tokens(tokens, book, false);
  LatentGrid out(tokens.width, tokens.height, book.dim());
  for (int i = 0; i < tokens.cells(); ++i) std::ranges::copy(book.entry(tokens[i]), out.cell(i).begin());
  return out;
}

VqLoss vq_loss(const LatentGrid& latent, const LatentGrid& quantized, double beta) {
  require(latent.width == quantized.width && latent.height == quantized.height && latent.dim == quantized.dim,
          "vq_loss shape mismatch");
  VqLoss out;
  out.grad_latent.resize(latent.values.size());
  out.grad_codes.resize(latent.values.size());
  double sq = 0.0;
  for (std::size_t i = 0; i < latent.values.size(); ++i) {
    const double diff = latent.values[i] - quantized.values[i];
    sq += diff * diff;
    out.grad_latent[i] = 2.0 * beta * diff;
    out.grad_codes[i] = -2.0 * diff;
  }
  // Both terms share the same forward value; stop-gradient only routes gradients.
  out.value = (1.0 + beta) * sq;
  return out;
}

void save_codebook(const Codebook& book, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), "cannot write " + path.string());
  detail::write_magic(out, "ITCB");
  detail::write_u32(out, 1);
  detail::write_u32(out, static_cast<std::uint32_t>(book.size()));
  detail::write_u32(out, static_cast<std::uint32_t>(book.dim()));
  for (double v : book.entries()) detail::write_f64(out, v);
  require(static_cast<bool>(out), "failed writing " + path.string());
}

Codebook load_codebook(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), "cannot open " + path.string());
  detail::expect_magic(in, "ITCB", "codebook");
  const auto version = detail::read_u32(in);
  require(version == 1, "unsupported codebook version " + std::to_string(version));
  const auto n = detail::read_u32(in);
  const auto d = detail::read_u32(in);
  require(n >= 2 && n < (1u << 24) && d >= 1 && d < (1u << 20), "corrupt codebook header");
  std::vector<double> v(static_cast<std::size_t>(n) * d);
  for (auto& x : v) x = detail::read_f64(in);
  return Codebook(static_cast<int>(n), static_cast<int>(d), std::move(v));
}

}  // namespace itersr
