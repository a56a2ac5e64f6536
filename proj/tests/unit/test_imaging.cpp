#include <doctest.h>

#include <cmath>

#include "itersr/error.hpp"
#include "itersr/imaging.hpp"
#include "support.hpp"

using namespace itersr;

namespace {

Image random_image(int w, int h, int c, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  Rng rng(seed);
  Image img(w, h, c);
  for (auto& v : img.samples) v = rng.uniform(lo, hi);
  return img;
}

TokenGrid random_grid(int w, int h, int n, std::uint64_t seed) {
  Rng rng(seed);
  TokenGrid g(w, h);
  for (auto& t : g.tokens) t = static_cast<Token>(rng.below(static_cast<std::uint64_t>(n)));
  return g;
}

}  // namespace

TEST_SUITE("imaging") {
  TEST_CASE("decode writes each code as its tile") {
    const Codebook book(2, 4, {0.1, 0.2, 0.3, 0.4, 0.9, 0.8, 0.7, 0.6});
    const auto img = decode_tokens(TokenGrid(1, 1, {0}), book, 2);
    CHECK(img.width == 2);
    CHECK(img.height == 2);
    CHECK(img.samples == std::vector<double>{0.1, 0.2, 0.3, 0.4});
    CHECK_THROWS_AS(decode_tokens(TokenGrid(1, 1, {2}), book, 2), Error);
    CHECK_THROWS_AS(decode_tokens(TokenGrid(1, 1, {0}), book, 3), Error);
  }

  TEST_CASE("codec round trip on codebook images") {
    const auto book = tile_codebook(16, 4, 3);
    const auto tokens = random_grid(5, 4, 16, 4);
    const auto img = decode_tokens(tokens, book, 4);
    CHECK(img.width == 20);
    CHECK(img.height == 16);
    CHECK(encode_pixels(img, book, 4) == tokens);
    for (int y = 0; y < 4; ++y) {
      for (int x = 0; x < 5; ++x) {
        const auto code = book.entry(tokens.at(x, y));
        for (int j = 0; j < 16; ++j) CHECK(img.at(x * 4 + j % 4, y * 4 + j / 4) == code[j]);
      }
    }
    CHECK_THROWS_AS(encode_pixels(Image(6, 4, 1), book, 4), Error);
  }

  TEST_CASE("constant gray encodes to the nearest tile") {
    const auto book = tile_codebook(8, 2, 5);
    const Image gray(4, 2, 1, 0.37);
    const auto tokens = encode_pixels(gray, book, 2);
    int best = 0;
    double best_d = 1e300;
    for (int k = 0; k < 8; ++k) {
      double d = 0.0;
      for (double v : book.entry(k)) d += (v - 0.37) * (v - 0.37);
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    for (auto t : tokens.tokens) CHECK(t == best);
  }

  TEST_CASE("adding a closer code never increases distortion") {
    const auto book = tile_codebook(8, 2, 6);
    const auto img = random_image(6, 6, 1, 7);
    auto distortion = [&](const Codebook& b) {
      const auto rec = decode_tokens(encode_pixels(img, b, 2), b, 2);
      double s = 0.0;
      for (std::size_t i = 0; i < img.size(); ++i) s += std::pow(rec.samples[i] - img.samples[i], 2);
      return s;
    };
    std::vector<double> entries(book.entries().begin(), book.entries().end());
    const auto tiles = image_tiles(img, 2);
    entries.insert(entries.end(), tiles.cell(0).begin(), tiles.cell(0).end());
    CHECK(distortion(Codebook(9, 4, entries)) <= distortion(book));
  }

  TEST_CASE("degrade identities") {
    const auto img = random_image(8, 8, 1, 8);
    CHECK(degrade(img, {0.0, 0.0, 1, false}, 1) == img);
    const Image flat(9, 7, 1, 0.42);
    const auto blurred = gaussian_blur(flat, 1.7);
    for (double v : blurred.samples) CHECK(v == doctest::Approx(0.42).epsilon(1e-15));
    CHECK(degrade(img, {}, 3) == degrade(img, {}, 3));
    CHECK_FALSE(degrade(img, {}, 3) == degrade(img, {}, 4));
    CHECK_THROWS_AS(degrade(img, {1.0, 0.0, 3, false}, 1), Error);
    CHECK_THROWS_AS(degrade(img, {-1.0, 0.0, 2, false}, 1), Error);
    for (double v : degrade(img, {0.5, 0.5, 2, true}, 2).samples) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }

  TEST_CASE("noise-only degradation has the requested variance") {
    const double sigma = 0.05;
    const Image gray(1000, 1000, 1, 0.5);
    const auto noisy = degrade(gray, {0.0, sigma, 1, false}, 11);
    double s = 0.0, s2 = 0.0;
    for (double v : noisy.samples) {
      s += v - 0.5;
      s2 += (v - 0.5) * (v - 0.5);
    }
    const double n = 1e6;
    const double var = s2 / n - (s / n) * (s / n);
    // Var of the sample variance of a normal: 2 sigma^4 / n.
    CHECK(std::abs(var - sigma * sigma) <= 3.0 * std::sqrt(2.0 / n) * sigma * sigma);
  }

  TEST_CASE("factor-2 degradation is constant on 2x2 blocks") {
    const auto img = random_image(8, 6, 1, 12);
    const auto d = degrade(img, {0.0, 0.0, 2, false}, 1);
    for (int y = 0; y < 6; y += 2) {
      for (int x = 0; x < 8; x += 2) {
        const double mean = (img.at(x, y) + img.at(x + 1, y) + img.at(x, y + 1) + img.at(x + 1, y + 1)) / 4.0;
        CHECK(d.at(x, y) == doctest::Approx(mean).epsilon(1e-14));
        CHECK(d.at(x + 1, y + 1) == d.at(x, y));
      }
    }
  }

  TEST_CASE("PSNR") {
    const auto a = random_image(7, 5, 3, 13, 0.1, 0.8);
    CHECK(std::isinf(psnr(a, a)));
    auto b = a;
    for (auto& v : b.samples) v += 0.1;
    CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-9));
    const auto c = random_image(7, 5, 3, 14);
    double mse = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) mse += std::pow(a.samples[i] - c.samples[i], 2);
    mse /= static_cast<double>(a.size());
    CHECK(std::abs(psnr(a, c) - 10.0 * std::log10(1.0 / mse)) < 1e-9);
    CHECK_THROWS_AS(psnr(a, Image(7, 5, 1)), Error);
  }

  TEST_CASE("SSIM identities and checkerboard inversion") {
    const auto a = random_image(16, 16, 1, 15);
    const auto b = random_image(16, 16, 1, 16);
    CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-14));
    CHECK(ssim(a, b) < 1.0);
    CHECK(ssim(a, b) >= -1.0);
    Image board(16, 16, 1), inverse(16, 16, 1);
    for (int y = 0; y < 16; ++y) {
      for (int x = 0; x < 16; ++x) {
        board.at(x, y) = (x + y) % 2;
        inverse.at(x, y) = 1.0 - board.at(x, y);
      }
    }
    CHECK(ssim(board, inverse) < 0.0);
    CHECK_THROWS_AS(ssim(a, Image(8, 8, 1)), Error);
  }

  TEST_CASE("color correction moment matching") {
    for (int trial = 0; trial < 20; ++trial) {
      const auto sr = random_image(9, 7, 3, 100 + trial, 0.2, 0.9);
      const auto lr = random_image(5, 4, 3, 200 + trial, 0.0, 0.6);
      const auto out = color_correct_unclamped(sr, lr);
      for (int c = 0; c < 3; ++c) {
        const auto o = channel_stats(out, c);
        const auto t = channel_stats(lr, c);
        CHECK(std::abs(o.mean - t.mean) < 1e-10);
        CHECK(std::abs(o.stddev - t.stddev) < 1e-10);
      }
      const auto twice = color_correct_unclamped(out, lr);
      for (std::size_t i = 0; i < out.size(); ++i) CHECK(std::abs(twice.samples[i] - out.samples[i]) < 1e-12);
    }
  }

  TEST_CASE("color correction edge cases") {
    const auto a = random_image(6, 6, 1, 17);
    const auto same = color_correct_unclamped(a, a);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(same.samples[i] == doctest::Approx(a.samples[i]).epsilon(1e-12));
    const Image flat(6, 6, 1, 0.3);
    const auto lr = random_image(3, 3, 1, 18);
    const double mu = channel_stats(lr, 0).mean;
    for (double v : color_correct(flat, lr).samples) CHECK(v == doctest::Approx(mu).epsilon(1e-12));
    for (double v : color_correct(random_image(6, 6, 1, 19, -2.0, 3.0), lr).samples) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    CHECK_THROWS_AS(color_correct(a, Image(3, 3, 3)), Error);
  }

  TEST_CASE("PGM and PPM round trips quantize to 8 bits") {
    const auto dir = test::fresh_dir("pnm");
    for (int channels : {1, 3}) {
      const auto img = random_image(5, 3, channels, 20 + channels);
      const auto path = dir / (channels == 1 ? "a.pgm" : "a.ppm");
      write_pnm(img, path);
      const auto back = read_pnm(path);
      CHECK(back.width == 5);
      CHECK(back.height == 3);
      CHECK(back.channels == channels);
      for (std::size_t i = 0; i < img.size(); ++i) CHECK(std::abs(back.samples[i] - img.samples[i]) <= 0.5 / 255 + 1e-12);
      write_pnm(back, dir / "b.pnm");
      CHECK(read_pnm(dir / "b.pnm") == back);
    }
    CHECK_THROWS_AS(read_pnm(dir / "missing.pgm"), Error);
  }

  TEST_CASE("tile codebook entries are valid samples") {
    const auto book = tile_codebook(32, 4, 9);
    CHECK(book.size() == 32);
    CHECK(book.dim() == 16);
    for (double v : book.entries()) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    CHECK(tile_codebook(32, 4, 9) == book);
    CHECK(tile_codebook(4, 2, 9, 3).dim() == 12);
  }
}
