// Python bindings for the main pipeline operations.
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "fcm/difficulty.hpp"
#include "fcm/pipeline.hpp"
#include "fcm/theory.hpp"
#include "fcm/trainer.hpp"

namespace py = pybind11;
using namespace fcm;

namespace {

py::array_t<float> tensor_to_array(torch::Tensor t) {
  t = t.contiguous().to(torch::kFloat32);
  std::vector<ssize_t> shape(t.sizes().begin(), t.sizes().end());
  py::array_t<float> out(shape);
  std::memcpy(out.mutable_data(), t.data_ptr<float>(), sizeof(float) * t.numel());
  return out;
}

py::object json_to_py(const nlohmann::json& j) {
  auto mod = py::module_::import("json");
  return mod.attr("loads")(j.dump());
}

}  // namespace

PYBIND11_MODULE(_fcm, m) {
  m.doc() = "Text-to-motion pipeline: hybrid token-latent autoencoder with a "
            "rectified-flow generation head";

  m.def(
      "generate_dataset",
      [](const std::string& out_dir, uint64_t seed, int train_per_family,
         int test_per_family) {
        GenerationSpec spec;
        spec.train_per_family = train_per_family;
        spec.test_per_family = test_per_family;
        auto manifest = generate_dataset(spec, seed, out_dir);
        return static_cast<int>(manifest.entries.size());
      },
      py::arg("out_dir"), py::arg("seed") = 0, py::arg("train_per_family") = 63,
      py::arg("test_per_family") = 7,
      "Generate the synthetic desk dataset; returns the sequence count.");

  m.def("motion_families", [] { return motion_families(); });

  m.def(
      "train_stage",
      [](int stage, const std::string& dataset_dir, const std::string& out_dir,
         uint64_t seed, int64_t epochs, bool hybrid, bool resume,
         const std::string& block_variant) {
        TrainConfig cfg;
        cfg.stage = stage;
        cfg.dataset_dir = dataset_dir;
        cfg.out_dir = out_dir;
        cfg.seed = seed;
        cfg.epochs = epochs;
        cfg.hybrid = hybrid;
        cfg.resume = resume;
        cfg.block_variant = block_variant;
        return run_stage(cfg);
      },
      py::arg("stage"), py::arg("dataset_dir"), py::arg("out_dir"), py::arg("seed") = 0,
      py::arg("epochs") = 0, py::arg("hybrid") = true, py::arg("resume") = false,
      py::arg("block_variant") = "nova",
      "Run one training stage; returns the checkpoint path.");

  m.def(
      "sample",
      [](const std::string& run_dir, const std::string& caption, int64_t frames,
         int64_t steps, double guidance_scale, uint64_t seed) {
        auto model = LoadedModel::load(run_dir, 3);
        SamplerConfig cfg;
        cfg.steps = steps;
        cfg.guidance_scale = guidance_scale;
        auto motion = sample_motion(model, caption, frames, cfg, seed);
        return tensor_to_array(motion.frames);  // T x J x 3
      },
      py::arg("run_dir"), py::arg("caption"), py::arg("frames") = 80,
      py::arg("steps") = 40, py::arg("guidance_scale") = 2.0, py::arg("seed") = 0,
      "Sample a motion for a caption from a trained run directory.");

  m.def(
      "reconstruct",
      [](const std::string& run_dir, py::array_t<float, py::array::c_style> frames,
         int stage) {
        if (frames.ndim() != 3 || frames.shape(2) != 3)
          throw py::value_error("frames must be T x J x 3");
        auto model = LoadedModel::load(run_dir, stage);
        MotionSequence motion;
        motion.frames = torch::from_blob(const_cast<float*>(frames.data()),
                                         {frames.shape(0), frames.shape(1), 3},
                                         torch::kFloat32)
                            .clone();
        motion.valid_mask = torch::ones({frames.shape(0)}, torch::kBool);
        motion.caption = "(query)";
        return tensor_to_array(reconstruct(model, motion).frames);
      },
      py::arg("run_dir"), py::arg("frames"), py::arg("stage") = 3,
      "Posterior-mean reconstruction of a raw motion array.");

  m.def(
      "evaluate",
      [](const std::string& run_dir, const std::string& dataset_dir, int64_t steps,
         double guidance_scale, uint64_t seed) {
        auto model = LoadedModel::load(run_dir, 3);
        auto manifest = DatasetManifest::load(dataset_dir + "/manifest.json");
        EvalOptions opts;
        opts.steps = steps;
        opts.guidance_scale = guidance_scale;
        opts.seed = seed;
        return json_to_py(evaluate_model(model, manifest, dataset_dir, opts));
      },
      py::arg("run_dir"), py::arg("dataset_dir"), py::arg("steps") = 40,
      py::arg("guidance_scale") = 2.0, py::arg("seed") = 0,
      "Full desk evaluation report as a dict.");

  m.def(
      "load_motion",
      [](const std::string& path) { return tensor_to_array(load_motion(path).frames); },
      py::arg("path"));

  m.def(
      "score_prompt",
      [](const std::string& caption) {
        auto s = score_rule(caption, DifficultyLexicon::standard());
        py::dict out;
        out["caption"] = s.caption;
        out["counts"] = s.counts;
        out["s_rule"] = s.s_rule;
        out["llm_gate"] = llm_gate(s.s_rule);
        return out;
      },
      py::arg("caption"), "Rule-based difficulty score over the 8-dimension lexicon.");

  m.def(
      "variance_bound",
      [](double sigma1, double t) {
        auto vb = gaussian_irreducible_variance(sigma1, t);
        return py::make_tuple(vb.exact, vb.bound);
      },
      py::arg("sigma1"), py::arg("t"),
      "(exact irreducible variance, endpoint-concentration bound) for the scalar "
      "Gaussian model.");

  m.def(
      "monte_carlo_bound_check",
      [](const std::vector<double>& means, double sigma, const std::vector<double>& t_grid,
         int64_t n_samples, uint64_t seed) {
        EndpointModel model{means, sigma};
        py::list out;
        for (const auto& c : monte_carlo_bound_check(model, t_grid, n_samples, seed)) {
          py::dict d;
          d["t"] = c.t;
          d["estimate"] = c.estimate;
          d["std_error"] = c.std_error;
          d["bound"] = c.bound;
          d["passed"] = c.passed;
          out.append(d);
        }
        return out;
      },
      py::arg("means"), py::arg("sigma"), py::arg("t_grid"),
      py::arg("n_samples") = 100000, py::arg("seed") = 0);
}
