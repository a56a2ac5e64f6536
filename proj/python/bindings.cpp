#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "itersr/cli.hpp"
#include "itersr/error.hpp"
#include "itersr/losses.hpp"

namespace py = pybind11;
using namespace itersr;

namespace {

using IntArray = py::array_t<std::int32_t, py::array::c_style | py::array::forcecast>;
using RealArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

TokenGrid to_grid(const IntArray& a) {
  if (a.ndim() != 2) throw Error("token grid must be a 2-D array");
  const auto h = static_cast<int>(a.shape(0)), w = static_cast<int>(a.shape(1));
  return {w, h, std::vector<Token>(a.data(), a.data() + a.size())};
}

IntArray from_grid(const TokenGrid& g) {
  IntArray out({g.height, g.width});
  std::copy(g.tokens.begin(), g.tokens.end(), out.mutable_data());
  return out;
}

py::array_t<std::uint8_t> from_mask(const MaskGrid& m) {
  py::array_t<std::uint8_t> out({m.height, m.width});
  std::copy(m.bits.begin(), m.bits.end(), out.mutable_data());
  return out;
}

Image to_image(const RealArray& a) {
  if (a.ndim() != 2 && a.ndim() != 3) throw Error("image must be (H, W) or (H, W, C)");
  const int channels = a.ndim() == 3 ? static_cast<int>(a.shape(2)) : 1;
  return {static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)), channels,
          std::vector<double>(a.data(), a.data() + a.size())};
}

RealArray from_image(const Image& img) {
  RealArray out = img.channels == 1 ? RealArray({img.height, img.width}) : RealArray({img.height, img.width, img.channels});
  std::copy(img.samples.begin(), img.samples.end(), out.mutable_data());
  return out;
}

ScheduleSpec schedule(const std::string& kind, int steps) { return {parse_schedule_kind(kind), steps}; }

Config make_config(const std::map<std::string, std::string>& overrides) {
  Config cfg;
  for (const auto& [k, v] : overrides) cfg.set(k, v);
  return cfg;
}

py::dict example_dict(const Example& ex) {
  py::dict d;
  d["hq_tokens"] = from_grid(ex.hq_tokens);
  d["hq_image"] = from_image(ex.hq_image);
  d["lq_image"] = from_image(ex.lq_image);
  d["lq_tokens"] = from_grid(ex.lq_tokens);
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Token refinement with a learned evaluator on a synthetic restoration task";
  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);

  m.def(
      "run",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code = 0;
        {
          py::gil_scoped_release release;
          code = run_cli(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs a CLI command line; returns (exit_code, stdout, stderr).");

  m.def("derive_seed", &derive_seed, py::arg("seed"), py::arg("name"), py::arg("index") = 0, py::arg("sub") = 0);

  m.def(
      "gamma", [](double r, const std::string& kind) { return gamma(schedule(kind, 1), r); }, py::arg("r"),
      py::arg("kind") = "cosine");
  m.def(
      "unmask_count",
      [](int t, int cells, int steps, const std::string& kind) { return unmask_count(schedule(kind, steps), t, cells); },
      py::arg("t"), py::arg("cells"), py::arg("steps") = 8, py::arg("kind") = "cosine");
  m.def(
      "start_step_for_count",
      [](int cells, int trusted, int steps, const std::string& kind) {
        return start_step_for_count(schedule(kind, steps), cells, trusted);
      },
      py::arg("cells"), py::arg("trusted"), py::arg("steps") = 8, py::arg("kind") = "cosine");
  m.def(
      "select_start_step",
      [](const RealArray& probs, double alpha, int steps, const std::string& kind) {
        if (probs.ndim() != 2) throw Error("probabilities must be a 2-D array");
        const TokenGrid restored(static_cast<int>(probs.shape(1)), static_cast<int>(probs.shape(0)));
        const auto s = select_start_step(restored, std::span<const double>(probs.data(), probs.size()), alpha,
                                         schedule(kind, steps));
        return py::make_tuple(s.step, from_mask(s.trusted));
      },
      py::arg("probs"), py::arg("alpha") = 0.5, py::arg("steps") = 8, py::arg("kind") = "cosine");
  m.def(
      "forward_mask",
      [](const IntArray& tokens, int mask_id, double r, std::uint64_t seed, int steps, const std::string& kind) {
        const auto s = forward_mask(to_grid(tokens), mask_id, r, schedule(kind, steps), seed);
        return py::make_tuple(from_grid(s.tokens), from_mask(s.mask));
      },
      py::arg("tokens"), py::arg("mask_id"), py::arg("r"), py::arg("seed"), py::arg("steps") = 8,
      py::arg("kind") = "cosine");

  m.def("balanced_weight", &balanced_weight, py::arg("n"), py::arg("beta") = 0.9999);
  m.def(
      "psnr", [](const RealArray& a, const RealArray& b) { return psnr(to_image(a), to_image(b)); }, py::arg("a"),
      py::arg("b"));
  m.def(
      "ssim", [](const RealArray& a, const RealArray& b) { return ssim(to_image(a), to_image(b)); }, py::arg("a"),
      py::arg("b"));
  m.def(
      "color_correct",
      [](const RealArray& sr, const RealArray& lr, bool clamp) {
        return from_image(clamp ? color_correct(to_image(sr), to_image(lr))
                                : color_correct_unclamped(to_image(sr), to_image(lr)));
      },
      py::arg("sr"), py::arg("lr"), py::arg("clamp") = true);
  m.def(
      "degrade",
      [](const RealArray& img, double blur_sigma, double noise_sigma, int factor, bool second_pass,
         std::uint64_t seed) {
        return from_image(degrade(to_image(img), {blur_sigma, noise_sigma, factor, second_pass}, seed));
      },
      py::arg("image"), py::arg("blur_sigma") = 1.0, py::arg("noise_sigma") = 0.05, py::arg("factor") = 2,
      py::arg("second_pass") = false, py::arg("seed") = 0);

  py::class_<ToyWorld>(m, "ToyWorld")
      .def(py::init([](const std::map<std::string, std::string>& overrides) {
             const auto cfg = make_config(overrides);
             return ToyWorld(world_config(cfg), dataset_seed(cfg.get_u64("seed")));
           }),
           py::arg("config") = std::map<std::string, std::string>{},
           "World of the run configured by flat config overrides, e.g. {'world.codes': '16'}.")
      .def("sample_tokens", [](const ToyWorld& w, std::uint64_t seed) { return from_grid(w.sample_tokens(seed)); })
      .def("make_example", [](const ToyWorld& w, std::uint64_t seed) { return example_dict(w.make_example(seed)); })
      .def("decode",
           [](const ToyWorld& w, const IntArray& tokens) {
             return from_image(decode_tokens(to_grid(tokens), w.codebook(), w.config().tile));
           })
      .def_property_readonly("codes", [](const ToyWorld& w) { return w.config().codes; });

  m.def("neighbor_agreement", [](const IntArray& tokens) { return neighbor_agreement(to_grid(tokens)); });

  py::class_<LoadedRun>(m, "TrainedModel")
      .def(py::init(&load_run), py::arg("checkpoint"))
      .def_property_readonly("num_codes", [](const LoadedRun& r) { return r.model.spec().num_codes; })
      .def_property_readonly("tile", [](const LoadedRun& r) { return r.tile; })
      .def(
          "restore",
          [](const LoadedRun& r, const RealArray& lq) {
            const auto features = restoration_input(to_image(lq), r.codebook, r.tile, r.model.spec());
            return from_grid(argmax_tokens(restoration_forward(r.model, features)));
          },
          py::arg("lq_image"), "Distortion-removal argmax tokens.")
      .def(
          "evaluate",
          [](const LoadedRun& r, const IntArray& tokens) {
            const auto g = to_grid(tokens);
            const auto p = evaluator_forward(r.model, g);
            RealArray out({g.height, g.width});
            std::copy(p.begin(), p.end(), out.mutable_data());
            return out;
          },
          py::arg("tokens"), "Evaluator probability per cell.")
      .def(
          "decode", [](const LoadedRun& r, const IntArray& tokens) {
            return from_image(decode_tokens(to_grid(tokens), r.codebook, r.tile));
          },
          py::arg("tokens"))
      .def(
          "sample",
          [](const LoadedRun& r, const RealArray& lq, const std::map<std::string, std::string>& overrides,
             std::size_t index) {
            const auto cfg = make_config(overrides);
            auto sc = sample_config(cfg);
            sc.seed = input_seed(sc, index);
            SampleInput in{"input", to_image(lq), std::nullopt, std::nullopt};
            const auto res = restore_input(r, in, sc);
            py::dict d;
            d["restored"] = from_grid(res.restored);
            d["tokens"] = from_grid(res.result.tokens);
            d["start_step"] = res.result.trajectory.start_step;
            d["trusted"] = res.result.trajectory.trusted_count;
            d["before"] = from_image(res.before);
            d["after"] = from_image(res.after);
            d["dispersion"] = mask_dispersion(res.result.trajectory);
            return d;
          },
          py::arg("lq_image"), py::arg("config") = std::map<std::string, std::string>{}, py::arg("index") = 0,
          "Full sampler on one LQ image; seeds follow the CLI's per-input stream.");
}
