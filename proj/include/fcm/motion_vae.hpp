#pragma once

#include <torch/torch.h>

#include "fcm/nn.hpp"

namespace fcm {

struct VaeConfig {
  int64_t channels = 36;      // J * 3
  int64_t d_model = 128;
  int64_t n_encoder_layers = 4;
  int64_t n_decoder_layers = 4;
  int64_t n_heads = 4;
  int64_t stride = 4;         // temporal downsampling factor
  int64_t d_total = 32;       // latent width; token : continuous = 1 : 3
  int64_t n_query_tokens = 2; // learnable distribution tokens
  int64_t max_frames = 160;
  double log_var_clamp = 10.0;

  int64_t d_token() const { return d_total / 4; }
  int64_t d_continuous() const { return d_total - d_total / 4; }
  int64_t latent_len(int64_t frames) const { return (frames + stride - 1) / stride; }
};

struct GaussianLatentParams {
  torch::Tensor mu;       // B x n x d_total
  torch::Tensor log_var;  // B x n x d_total
  torch::Tensor mask;     // B x n bool, valid latent steps

  void validate() const;
};

struct HybridLatent {
  torch::Tensor token_part;       // B x n x d_q
  torch::Tensor continuous_part;  // B x n x d_c
};

// Channel split [0, d_q) / [d_q, d_total); merge is the exact inverse.
HybridLatent split_latent(const torch::Tensor& z);
torch::Tensor merge_latent(const HybridLatent& h);

// z = mu + exp(log_var / 2) * eps with eps drawn from the given generator.
torch::Tensor reparameterize(const GaussianLatentParams& params, torch::Generator& gen);

torch::Tensor kl_divergence(const GaussianLatentParams& params);

// Strided-conv front end (kernel == stride, so padded windows never leak into
// valid ones), pre-norm transformer body, distribution query tokens whose
// pooled output is broadcast-added to the per-step statistics.
struct MotionEncoderImpl : torch::nn::Module {
  explicit MotionEncoderImpl(const VaeConfig& config);

  // frames: B x T x C normalized, mask: B x T bool.
  GaussianLatentParams forward(const torch::Tensor& frames, const torch::Tensor& mask);

  VaeConfig cfg;
  torch::nn::Conv1d in_conv{nullptr};
  torch::Tensor pos_embed, query_tokens;
  torch::nn::ModuleList blocks;
  torch::nn::LayerNorm out_norm{nullptr};
  torch::nn::Linear stat_head{nullptr}, query_head{nullptr};
};
TORCH_MODULE(MotionEncoder);

struct MotionDecoderImpl : torch::nn::Module {
  explicit MotionDecoderImpl(const VaeConfig& config);

  // z: B x n x d_total -> B x target_frames x C (normalized space).
  torch::Tensor forward(const torch::Tensor& z, const torch::Tensor& latent_mask,
                        int64_t target_frames);

  VaeConfig cfg;
  torch::nn::Linear in_proj{nullptr};
  torch::Tensor pos_embed;
  torch::nn::ModuleList blocks;
  std::vector<torch::Tensor> skip_gains;  // long-stage skip connections
  torch::nn::LayerNorm out_norm{nullptr};
  torch::nn::ConvTranspose1d out_conv{nullptr};
};
TORCH_MODULE(MotionDecoder);

// Downsamples a frame mask to the latent grid: a latent step is valid when
// any frame in its stride window is valid.
torch::Tensor latent_mask_from_frames(const torch::Tensor& frame_mask, int64_t stride);

}  // namespace fcm
