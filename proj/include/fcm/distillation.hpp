#pragma once

#include <utility>
#include <vector>

#include <torch/torch.h>

#include "fcm/motion_vae.hpp"

namespace fcm {

struct ViewConfig {
  double crop_lo = 0.3, crop_hi = 0.7;     // local crop fraction of T
  double warp_lo = 0.8, warp_hi = 1.2;     // time-warp speed range
  double noise_sigma = 0.01;               // additive noise, normalized units
  double global_noise_sigma = 0.002;
  double mask_fraction = 0.10;             // zeroed temporal span
  int n_global = 2;
  int n_local = 4;
  bool augment = true;                     // off: local view == raw crop
};

struct MotionView {
  torch::Tensor frames;  // T' x C, normalized
  torch::Tensor mask;    // T' bool
  std::pair<int64_t, int64_t> crop;  // (start, length) in source frames
};

struct ViewSet {
  std::vector<MotionView> global_views;
  std::vector<MotionView> local_views;

  std::vector<const MotionView*> all() const;
};

ViewSet make_views(const torch::Tensor& frames, const torch::Tensor& mask,
                   const ViewConfig& config, std::mt19937_64& rng);

// phi(F, M) = sum_t M_t F_t / (sum_t M_t + eps), eps = 1e-8.
// features: ... x T x d, mask: ... x T.
torch::Tensor masked_mean_pool(const torch::Tensor& features, const torch::Tensor& mask);

// 2-layer MLP, hidden 128, output 64, then L2 normalization.
struct ProjectionHeadImpl : torch::nn::Module {
  ProjectionHeadImpl(int64_t in_dim, int64_t hidden = 128, int64_t out_dim = 64);
  torch::Tensor forward(const torch::Tensor& x);
  torch::nn::Linear fc1{nullptr}, fc2{nullptr};
};
TORCH_MODULE(ProjectionHead);

struct DistillationState {
  MotionEncoder teacher_encoder{nullptr};  // EMA copy, never gradient-updated
  ProjectionHead teacher_head{nullptr};
  torch::Tensor center;                    // projection-dim vector
  double tau_teacher = 0.04;
  double tau_student = 0.07;
  double center_momentum = 0.9;
  double teacher_ema = 0.996;

  static DistillationState create(const MotionEncoder& student_encoder,
                                  const ProjectionHead& student_head,
                                  const VaeConfig& cfg);
  void validate() const;
};

// Pooled continuous-branch statistics of one batched view through the given
// encoder + head; logits are pre-softmax projections.
torch::Tensor view_logits(MotionEncoder& encoder, ProjectionHead& head,
                          const torch::Tensor& frames, const torch::Tensor& mask,
                          const VaeConfig& cfg);

// Teacher: softmax((logits - center) / tau_t), computed without gradients.
// Student: softmax(logits / tau_s).
torch::Tensor teacher_distribution(const DistillationState& state,
                                   const torch::Tensor& logits);
torch::Tensor student_distribution(const DistillationState& state,
                                   const torch::Tensor& logits);

// Mean KL(p_t || p_s) over (global, view) pairs, excluding identical views.
// teacher: G x B x K, student: V x B x K; the first G student views are the
// global views in matching order.
torch::Tensor distillation_loss(const torch::Tensor& teacher_dists,
                                const torch::Tensor& student_dists);

void update_center(DistillationState& state, const torch::Tensor& batch_teacher_logits);
void update_teacher(DistillationState& state, const MotionEncoder& student_encoder,
                    const ProjectionHead& student_head);

}  // namespace fcm
