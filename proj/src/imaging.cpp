#include "itersr/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "itersr/error.hpp"
#include "itersr/rng.hpp"

namespace itersr {

Image::Image(int w, int h, int c, double fill)
    : width(w), height(h), channels(c), samples(static_cast<std::size_t>(w) * h * c, fill) {
  require(w >= 1 && h >= 1 && (c == 1 || c == 3), "invalid image shape");
}

Image::Image(int w, int h, int c, std::vector<double> values)
    : width(w), height(h), channels(c), samples(std::move(values)) {
  require(w >= 1 && h >= 1 && (c == 1 || c == 3), "invalid image shape");
  require(samples.size() == static_cast<std::size_t>(w) * h * c, "image sample count mismatch");
}

Codebook tile_codebook(int size, int tile, std::uint64_t seed, int channels, double texture) {
  require(size >= 2 && tile >= 1, "invalid tile codebook shape");
  Rng rng(derive_seed(seed, "tile-codebook"));
  const int dim = tile * tile * channels;

  std::vector<int> order(static_cast<std::size_t>(size));
  std::iota(order.begin(), order.end(), 0);
  for (int i = size - 1; i > 0; --i) {
    std::swap(order[static_cast<std::size_t>(i)], order[rng.below(static_cast<std::uint64_t>(i + 1))]);
  }

  std::vector<double> entries(static_cast<std::size_t>(size) * dim);
  for (int k = 0; k < size; ++k) {
    const double level = 0.1 + 0.8 * (order[static_cast<std::size_t>(k)] + 0.5) / size;
    for (int j = 0; j < dim; ++j) {
      entries[static_cast<std::size_t>(k) * dim + j] = std::clamp(level + rng.uniform(-texture, texture), 0.0, 1.0);
    }
  }
  return Codebook(size, dim, std::move(entries));
}

LatentGrid image_tiles(const Image& img, int tile) {
  require(tile >= 1 && img.width % tile == 0 && img.height % tile == 0,
          "image size " + std::to_string(img.width) + "x" + std::to_string(img.height) +
              " is not divisible by tile size " + std::to_string(tile));
  const int w = img.width / tile;
  const int h = img.height / tile;
  const int dim = tile * tile * img.channels;
  LatentGrid out(w, h, dim);
  for (int ty = 0; ty < h; ++ty) {
    for (int tx = 0; tx < w; ++tx) {
      auto cell = out.cell(ty * w + tx);
      for (int py = 0; py < tile; ++py) {
        for (int px = 0; px < tile; ++px) {
          for (int c = 0; c < img.channels; ++c) {
            cell[static_cast<std::size_t>((py * tile + px) * img.channels + c)] =
                img.at(tx * tile + px, ty * tile + py, c);
          }
        }
      }
    }
  }
  return out;
}

Image decode_tokens(const TokenGrid& tokens, const Codebook& book, int tile) {
  require(tile >= 1 && book.dim() % (tile * tile) == 0, "codebook dimension does not match tile size");
  const int channels = book.dim() / (tile * tile);
  require(channels == 1 || channels == 3, "codebook dimension does not match tile size");
  const LatentGrid codes = lookup(tokens, book);
  Image img(tokens.width * tile, tokens.height * tile, channels);
  for (int ty = 0; ty < tokens.height; ++ty) {
    for (int tx = 0; tx < tokens.width; ++tx) {
      const auto cell = codes.cell(ty * tokens.width + tx);
      for (int py = 0; py < tile; ++py) {
        for (int px = 0; px < tile; ++px) {
          for (int c = 0; c < channels; ++c) {
            img.at(tx * tile + px, ty * tile + py, c) = cell[static_cast<std::size_t>((py * tile + px) * channels + c)];
          }
        }
      }
    }
  }
  return img;
}

TokenGrid encode_pixels(const Image& img, const Codebook& book, int tile) {
  return quantize(image_tiles(img, tile), book).tokens;
}

namespace {

int reflect(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

std::vector<double> gaussian_kernel(double sigma, int radius) {
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  for (int i = -radius; i <= radius; ++i) k[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
  const double sum = std::accumulate(k.begin(), k.end(), 0.0);
  for (auto& v : k) v /= sum;
  return k;
}

Image separable_filter(const Image& img, const std::vector<double>& kernel) {
  const int radius = static_cast<int>(kernel.size() / 2);
  Image tmp(img.width, img.height, img.channels);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < img.channels; ++c) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          acc += kernel[static_cast<std::size_t>(i + radius)] * img.at(reflect(x + i, img.width), y, c);
        }
        tmp.at(x, y, c) = acc;
      }
    }
  }
  Image out(img.width, img.height, img.channels);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < img.channels; ++c) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          acc += kernel[static_cast<std::size_t>(i + radius)] * tmp.at(x, reflect(y + i, img.height), c);
        }
        out.at(x, y, c) = acc;
      }
    }
  }
  return out;
}

void clamp_unit(Image& img) {
  for (auto& v : img.samples) v = std::clamp(v, 0.0, 1.0);
}

Image resample_box(const Image& img, int factor) {
  if (factor == 1) return img;
  require(img.width % factor == 0 && img.height % factor == 0, "image size is not divisible by the downsample factor");
  Image out(img.width, img.height, img.channels);
  const double inv = 1.0 / (factor * factor);
  for (int by = 0; by < img.height; by += factor) {
    for (int bx = 0; bx < img.width; bx += factor) {
      for (int c = 0; c < img.channels; ++c) {
        double acc = 0.0;
        for (int y = by; y < by + factor; ++y) {
          for (int x = bx; x < bx + factor; ++x) acc += img.at(x, y, c);
        }
        const double mean = acc * inv;
        for (int y = by; y < by + factor; ++y) {
          for (int x = bx; x < bx + factor; ++x) out.at(x, y, c) = mean;
        }
      }
    }
  }
  return out;
}

}  // namespace

Image gaussian_blur(const Image& img, double sigma) {
  require(sigma >= 0.0, "blur sigma must be >= 0");
  if (sigma == 0.0) return img;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  return separable_filter(img, gaussian_kernel(sigma, radius));
}

Image degrade(const Image& img, const DegradeSpec& spec, std::uint64_t seed) {
  require(spec.blur_sigma >= 0.0 && spec.noise_sigma >= 0.0, "degradation sigmas must be >= 0");
  require(spec.factor == 1 || spec.factor == 2 || spec.factor == 4, "downsample factor must be 1, 2 or 4");
  Image out = img;
  const int passes = spec.second_pass ? 2 : 1;
  for (int pass = 0; pass < passes; ++pass) {
    out = gaussian_blur(out, spec.blur_sigma);
    if (spec.noise_sigma > 0.0) {
      Rng rng(derive_seed(seed, "degrade-noise", static_cast<std::uint64_t>(pass)));
      for (auto& v : out.samples) v += spec.noise_sigma * rng.normal();
    }
    out = resample_box(out, spec.factor);
    clamp_unit(out);
  }
  return out;
}

double psnr(const Image& a, const Image& b) {
  require(a.width == b.width && a.height == b.height && a.channels == b.channels, "psnr shape mismatch");
  double sq = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.samples[i] - b.samples[i];
    sq += d * d;
  }
  const double mse = sq / static_cast<double>(a.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

double ssim(const Image& a, const Image& b) {
  require(a.width == b.width && a.height == b.height && a.channels == b.channels, "ssim shape mismatch");
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  const auto window = gaussian_kernel(1.5, 5);

  Image aa = a, bb = b, ab = a;
  for (std::size_t i = 0; i < a.size(); ++i) {
    aa.samples[i] = a.samples[i] * a.samples[i];
    bb.samples[i] = b.samples[i] * b.samples[i];
    ab.samples[i] = a.samples[i] * b.samples[i];
  }
  const Image mu_a = separable_filter(a, window);
  const Image mu_b = separable_filter(b, window);
  const Image e_aa = separable_filter(aa, window);
  const Image e_bb = separable_filter(bb, window);
  const Image e_ab = separable_filter(ab, window);

  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double ma = mu_a.samples[i];
    const double mb = mu_b.samples[i];
    const double va = e_aa.samples[i] - ma * ma;
    const double vb = e_bb.samples[i] - mb * mb;
    const double cov = e_ab.samples[i] - ma * mb;
    total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return total / static_cast<double>(a.size());
}

ChannelStats channel_stats(const Image& img, int channel) {
  const std::size_t n = static_cast<std::size_t>(img.width) * img.height;
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += img.samples[i * img.channels + channel];
  const double mean = sum / static_cast<double>(n);
  double sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = img.samples[i * img.channels + channel] - mean;
    sq += d * d;
  }
  return {mean, std::sqrt(sq / static_cast<double>(n))};
}

Image color_correct_unclamped(const Image& sr, const Image& lr) {
  require(sr.channels == lr.channels, "color correction needs matching channel counts");
  constexpr double kMinStd = 1e-8;
  Image out = sr;
  const std::size_t n = static_cast<std::size_t>(sr.width) * sr.height;
  for (int c = 0; c < sr.channels; ++c) {
    const auto src = channel_stats(sr, c);
    const auto dst = channel_stats(lr, c);
    for (std::size_t i = 0; i < n; ++i) {
      double& v = out.samples[i * sr.channels + c];
      v = src.stddev < kMinStd ? dst.mean : (v - src.mean) / src.stddev * dst.stddev + dst.mean;
    }
  }
  return out;
}

Image color_correct(const Image& sr, const Image& lr) {
  Image out = color_correct_unclamped(sr, lr);
  clamp_unit(out);
  return out;
}

void write_pnm(const Image& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), "cannot write " + path.string());
  out << (img.channels == 1 ? "P5" : "P6") << "\n" << img.width << " " << img.height << "\n255\n";
  std::vector<unsigned char> bytes(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) {
    bytes[i] = static_cast<unsigned char>(std::lround(std::clamp(img.samples[i], 0.0, 1.0) * 255.0));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), "failed writing " + path.string());
}

namespace {
int read_header_int(std::istream& in) {
  int c;
  while ((c = in.peek()) != EOF) {
    if (std::isspace(c)) {
      in.get();
    } else if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else {
      break;
    }
  }
  int value = -1;
  in >> value;
  require(static_cast<bool>(in) && value >= 0, "malformed PNM header");
  return value;
}
}  // namespace

Image read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), "cannot open " + path.string());
  std::string magic(2, '\0');
  in.read(magic.data(), 2);
  require(magic == "P5" || magic == "P6", path.string() + " is not a binary PGM/PPM file");
  const int channels = magic == "P5" ? 1 : 3;
  const int w = read_header_int(in);
  const int h = read_header_int(in);
  const int maxval = read_header_int(in);
  require(maxval == 255, "only maxval 255 is supported");
  in.get();
  std::vector<unsigned char> bytes(static_cast<std::size_t>(w) * h * channels);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(in), "truncated PNM file " + path.string());
  Image img(w, h, channels);
  for (std::size_t i = 0; i < bytes.size(); ++i) img.samples[i] = bytes[i] / 255.0;
  return img;
}

}  // namespace itersr
