#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "fcm/checkpoint.hpp"
#include "fcm/coupling.hpp"
#include "fcm/distillation.hpp"
#include "fcm/flow_head.hpp"
#include "fcm/motion_data.hpp"
#include "fcm/motion_vae.hpp"
#include "fcm/rvq.hpp"
#include "fcm/toml.hpp"

namespace fcm {

struct TrainConfig {
  int stage = 1;
  std::string dataset_dir;
  std::string out_dir;
  int64_t epochs = 0;       // 0 picks the stage default (50 / 20 / 200)
  int64_t batch_size = 16;
  double lr = 2e-4;
  double grad_clip = 1.0;
  std::uint64_t seed = 0;
  bool hybrid = true;       // false: latent-only ablation, no token branch
  bool resume = false;
  int64_t stop_after = 0;   // > 0: stop once this many epochs exist (simulated
                            // interruption; the schedule still spans `epochs`)

  double lambda_rec = 1.0;
  double lambda_commit = 0.01;
  double lambda_fk = -1.0;  // < 0 picks the stage default (0.5 / 0.1)
  double lambda_dis_peak = 0.02;
  double lambda_vel = 0.2;
  double lambda_acc = 0.05;
  double lambda_jerk = 0.01;
  double lambda_global = 0.5;
  double kl_weight = 1e-4;
  double cfg_drop = 0.1;

  int64_t codebook_size = 128;
  std::string block_variant = "nova";

  void validate() const;
  double fk_weight() const;
  int64_t stage_epochs() const;
  static TrainConfig from_toml(const TomlTable& table);
};

// Warmup over the first 20% of steps, hold at the peak, decay to 0 over the
// last 20%. progress in [0,1].
double distillation_weight_schedule(double progress, double peak);

// Everything trained across the three stages, under one checkpoint map.
struct ModelSet {
  VaeConfig vae_cfg;
  FlowHeadConfig flow_cfg;
  bool hybrid = true;

  MotionEncoder encoder{nullptr};
  MotionDecoder decoder{nullptr};
  CouplingNetwork coupling{nullptr};
  ProjectionHead student_head{nullptr};
  Codebook codebook;
  DistillationState distill;
  ConditionBuilder condition{nullptr};
  FlowHead flow_head{nullptr};
  Vocabulary vocab;

  static ModelSet create(const VaeConfig& vae_cfg, const FlowHeadConfig& flow_cfg,
                         bool hybrid, const Vocabulary& vocab, std::uint64_t init_seed,
                         int64_t codebook_size = 128);
  Checkpoint to_checkpoint() const;
  void load_from(const Checkpoint& ckpt);
  void set_training(bool on);
};

struct Batch {
  torch::Tensor frames;      // B x T x C, normalized
  torch::Tensor frame_mask;  // B x T bool
  torch::Tensor latent_mask; // B x n bool
  std::vector<std::string> captions;
};

Batch make_batch(const std::vector<MotionSequence>& motions, const Normalization& norm,
                 int64_t stride);

// encode -> split -> quantize / reparameterize -> couple. With sample=false
// the continuous branch uses the posterior mean.
struct LatentOutputs {
  GaussianLatentParams params;
  std::optional<QuantizationResult> quant;  // hybrid only
  torch::Tensor z1;  // B x n x d_total, coupling output
};

LatentOutputs encode_couple(ModelSet& models, const torch::Tensor& frames,
                            const torch::Tensor& frame_mask, torch::Generator& gen,
                            bool sample);

struct KinematicLossReport {
  torch::Tensor rec, vel, acc, jerk, global, fk;
};

// Finite-difference and skeleton losses on denormalized positions (meters).
// The fk term penalizes deviation of predicted bone lengths from the rest
// skeleton; vel/acc/jerk are masked squared errors of 1st/2nd/3rd temporal
// differences against the target.
KinematicLossReport kinematic_losses(const torch::Tensor& pred_norm,
                                     const torch::Tensor& target_norm,
                                     const torch::Tensor& frame_mask,
                                     const Normalization& norm, const Skeleton& skeleton);

struct StepLosses {
  torch::Tensor total;
  std::map<std::string, double> components;
};

StepLosses stage1_losses(ModelSet& models, const Batch& batch, const TrainConfig& cfg,
                         double dis_weight, torch::Generator& gen, std::mt19937_64& rng,
                         const Normalization& norm);
StepLosses stage2_losses(ModelSet& models, const Batch& batch, const TrainConfig& cfg,
                         torch::Generator& gen, const Normalization& norm);
StepLosses stage3_losses(ModelSet& models, const Batch& batch, const TrainConfig& cfg,
                         torch::Generator& gen, std::mt19937_64& rng);

// Runs one full stage: dependency-checks earlier checkpoints, trains, writes
// <out_dir>/stage<k>.ckpt after every epoch plus a JSONL metrics log. Returns
// the checkpoint path.
std::string run_stage(const TrainConfig& cfg);

// Mean untrained/trained flow-matching loss over the given batches (eval mode,
// no caption drop); used for the stage-3 improvement check.
double evaluate_fm_loss(ModelSet& models, const std::vector<Batch>& batches,
                        std::uint64_t seed);

}  // namespace fcm
