#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "itersr/token_core.hpp"

namespace itersr {

/// Interleaved real samples in [0, 1]; sample (x, y, c) at (y * width + x) * channels + c.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<double> samples;

  Image() = default;
  Image(int w, int h, int c, double fill = 0.0);
  Image(int w, int h, int c, std::vector<double> values);

  double& at(int x, int y, int c = 0) { return samples[static_cast<std::size_t>((y * width + x) * channels + c)]; }
  double at(int x, int y, int c = 0) const { return samples[static_cast<std::size_t>((y * width + x) * channels + c)]; }
  std::size_t size() const { return samples.size(); }

  bool operator==(const Image&) const = default;
};

/// Simplified degradation: Gaussian blur, additive Gaussian noise, box
/// downsample followed by nearest upsample; optionally everything twice.
struct DegradeSpec {
  double blur_sigma = 1.0;
  double noise_sigma = 0.05;
  int factor = 2;
  bool second_pass = false;
};

/// Codebook whose entries are flattened f x f tiles (times `channels`) with
/// samples in [0, 1]: a seeded base level per code plus seeded per-pixel texture.
Codebook tile_codebook(int size, int tile, std::uint64_t seed, int channels = 1, double texture = 0.12);

/// Per-cell flattened tiles; the layout matches tile_codebook entries.
LatentGrid image_tiles(const Image& img, int tile);

/// Writes each token's code vector as its f x f tile.
Image decode_tokens(const TokenGrid& tokens, const Codebook& book, int tile);

/// Nearest code per tile.
TokenGrid encode_pixels(const Image& img, const Codebook& book, int tile);

Image gaussian_blur(const Image& img, double sigma);
Image degrade(const Image& img, const DegradeSpec& spec, std::uint64_t seed);

/// 10 log10(1 / MSE); +inf for identical images.
double psnr(const Image& a, const Image& b);

/// Single-scale SSIM: 11-tap Gaussian window (sigma 1.5), K1 = 0.01,
/// K2 = 0.03, dynamic range 1, reflect padding, averaged over pixels and
/// channels.
double ssim(const Image& a, const Image& b);

/// Per-channel affine map matching mean / std of `sr` to `lr`, without the
/// final clamp. A channel with std < 1e-8 is shifted to the target mean.
Image color_correct_unclamped(const Image& sr, const Image& lr);
Image color_correct(const Image& sr, const Image& lr);

struct ChannelStats {
  double mean = 0.0;
  double stddev = 0.0;
};
/// Population mean and standard deviation of one channel.
ChannelStats channel_stats(const Image& img, int channel);

// Binary PGM (1 channel) / PPM (3 channels), maxval 255. Lossy: 8-bit.
void write_pnm(const Image& img, const std::filesystem::path& path);
Image read_pnm(const std::filesystem::path& path);

}  // namespace itersr
