#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fcm/flow_process.hpp"
#include "fcm/metrics.hpp"
#include "fcm/trainer.hpp"

namespace fcm {

// A trained model directory (stageN.ckpt + vocab.json) loaded for inference.
struct LoadedModel {
  ModelSet models;
  Normalization norm;
  int stage = 0;

  static LoadedModel load(const std::string& run_dir, int stage = 3);
};

// CFG velocity field over the trained head for one caption (empty caption
// selects the unconditional branch only). Text key/value tensors are cached
// across solver steps.
torch::Tensor sample_latent(LoadedModel& model, const std::string& caption,
                            int64_t n_latent, const SamplerConfig& cfg, uint64_t seed);

// End to end: prior draw -> Euler solve -> decoder -> denormalized motion.
MotionSequence sample_motion(LoadedModel& model, const std::string& caption,
                             int64_t target_frames, const SamplerConfig& cfg,
                             uint64_t seed);

// Deterministic encode -> couple -> decode round trip (posterior mean).
MotionSequence reconstruct(LoadedModel& model, const MotionSequence& motion);

struct EvalOptions {
  int64_t steps = 40;
  double guidance_scale = 2.0;
  uint64_t seed = 0;
  int64_t gens_per_test_caption = 1;
  int64_t mmodality_captions = 4;
  int64_t mmodality_repeats = 6;
};

// The full desk evaluation: reconstruction MPJPE on the test split, desk-FID
// of generated vs ground-truth features, 32-family retrieval, diversity, and
// multimodality. Returns the JSON report the eval CLI emits.
nlohmann::json evaluate_model(LoadedModel& model, const DatasetManifest& manifest,
                              const std::string& dataset_dir, const EvalOptions& opts);

}  // namespace fcm
