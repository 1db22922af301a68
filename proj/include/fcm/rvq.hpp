#pragma once

#include <vector>

#include <torch/torch.h>

#include "fcm/common.hpp"

namespace fcm {

struct Codebook {
  torch::Tensor entries;           // K x d_q, float32
  torch::Tensor usage_count;       // K, int64, reset per epoch
  torch::Tensor ema_cluster_size;  // K, float32
  torch::Tensor ema_embed_sum;     // K x d_q, float32
  double decay = 0.99;
  double laplace_eps = 1e-5;

  int64_t size() const { return entries.size(0); }
  int64_t dim() const { return entries.size(1); }
  void validate() const;

  static Codebook create(int64_t K, int64_t d_q);
  // Entry initialization from the first batch's token features.
  void init_from_features(const torch::Tensor& features, std::mt19937_64& rng);
};

struct ScaleSchedule {
  std::vector<int64_t> resolutions;  // ascending, last == n

  void validate(int64_t n) const;
  // Divisor reading of [8, 4, 2, 1]: {ceil(n/8), ceil(n/4), ceil(n/2), n},
  // deduplicated and clamped to >= 1.
  static ScaleSchedule for_length(int64_t n,
                                  const std::vector<int64_t>& divisors = {8, 4, 2, 1});
};

struct QuantizationResult {
  std::vector<torch::Tensor> indices;             // per scale: B x h_v int64
  std::vector<torch::Tensor> per_scale_quantized; // per scale: B x h_v x d_q
  std::vector<torch::Tensor> scale_masks;         // per scale: B x h_v bool
  torch::Tensor z_q_hat;                          // B x n x d_q (detached path)
  torch::Tensor z_q_st;                           // straight-through estimator output
  std::vector<torch::Tensor> pre_quant;           // per scale: detached inputs
  torch::Tensor commit_loss;                      // scalar, sum over scales
  std::vector<double> commit_loss_per_scale;
};

// Linear temporal resampling with endpoint alignment. h_dst == h_src returns
// the input unchanged (bitwise). features: ... x h x d.
torch::Tensor resample_temporal(const torch::Tensor& features, int64_t target_len);

// Masked average pooling onto the scale grid; segment s covers source steps
// [floor(s*n/h), floor((s+1)*n/h)).
torch::Tensor downsample_average(const torch::Tensor& features, const torch::Tensor& mask,
                                 int64_t target_len);
torch::Tensor downsample_mask(const torch::Tensor& mask, int64_t target_len);

// Nearest-neighbor indices against the codebook; features: B x h x d_q.
torch::Tensor nearest_entries(const torch::Tensor& features, const Codebook& codebook);

// The residual multi-scale pipeline (coarse to fine, shared codebook) with
// commitment loss over valid locations and a straight-through output.
QuantizationResult quantize_multiscale(const torch::Tensor& z_token,
                                       const ScaleSchedule& schedule,
                                       const Codebook& codebook,
                                       const torch::Tensor& valid_mask);

// Exact reproduction of z_q_hat from indices alone.
torch::Tensor dequantize(const std::vector<torch::Tensor>& indices,
                         const ScaleSchedule& schedule, const Codebook& codebook,
                         int64_t n);

// EMA codebook update from one batch of assignments; masked locations are
// excluded. Call reseed_dead_entries between epochs.
void update_codebook(Codebook& codebook, const QuantizationResult& result);

// Re-seeds entries with zero epoch usage from random rows of the feature pool.
int64_t reseed_dead_entries(Codebook& codebook, const torch::Tensor& feature_pool,
                            std::mt19937_64& rng);

}  // namespace fcm
