#pragma once

#include <functional>

#include <torch/torch.h>

#include "fcm/common.hpp"

namespace fcm {

// Linear interpolation path z_t = t*z1 + (1-t)*z0 with velocity target z1 - z0.
torch::Tensor interpolate_path(const torch::Tensor& z0, const torch::Tensor& z1,
                               const torch::Tensor& t);
torch::Tensor velocity_target(const torch::Tensor& z0, const torch::Tensor& z1);

// Masked flow-matching loss: mean squared error over valid latent positions.
torch::Tensor flow_matching_loss(const torch::Tensor& v_hat, const torch::Tensor& u,
                                 const torch::Tensor& mask);

// Classifier-free guidance combination.
torch::Tensor cfg_combine(const torch::Tensor& v_uncond, const torch::Tensor& v_cond,
                          double scale);

struct SamplerConfig {
  int64_t steps = 40;
  double guidance_scale = 2.0;
  double divergence_threshold = 1e6;
};

// Velocity field callback: (z_t [B,n,d], t scalar in [0,1]) -> v [B,n,d].
using VelocityField =
    std::function<torch::Tensor(const torch::Tensor&, const torch::Tensor&)>;

// Fixed-step Euler integration from t=0 to t=1. The mask is reapplied after
// every step so padded positions stay at zero. Throws DivergenceError (with
// the offending step index) when the state stops being finite or exceeds the
// divergence threshold.
torch::Tensor euler_sample(const VelocityField& field, const torch::Tensor& z0,
                           const torch::Tensor& mask, const SamplerConfig& cfg);

// Seeded draw from the standard-normal prior.
torch::Tensor draw_prior(int64_t batch, int64_t n, int64_t d, uint64_t seed);

}  // namespace fcm
