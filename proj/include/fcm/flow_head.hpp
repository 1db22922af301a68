#pragma once

#include <map>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "fcm/nn.hpp"

namespace fcm {

struct Vocabulary {
  std::map<std::string, int64_t> token_to_id;  // includes "[pad]" = 0

  int64_t size() const { return static_cast<int64_t>(token_to_id.size()); }
  int64_t pad_id() const { return 0; }

  static Vocabulary build(const std::vector<std::string>& captions);
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);
  std::vector<int64_t> encode(const std::string& caption) const;
};

struct CaptionTokens {
  torch::Tensor ids;   // B x N int64
  torch::Tensor mask;  // B x N bool (true = real token)

  static CaptionTokens batch(const Vocabulary& vocab,
                             const std::vector<std::string>& captions);
  // All-masked tokens: the unconditional branch for CFG.
  static CaptionTokens null_condition(int64_t batch, int64_t len = 1);
  void validate(int64_t vocab_size) const;
};

struct FlowHeadConfig {
  int64_t d_total = 32;
  int64_t d_model = 128;
  int64_t n_blocks = 6;
  int64_t n_heads = 4;
  double dropout = 0.1;
  std::string block_variant = "nova";  // nova | orbit
  int64_t max_latent_len = 64;
  int64_t max_text_len = 16;
  int64_t caption_layers = 2;
  double gate_init = 0.02;

  void validate() const;
};

// Sinusoidal Fourier features of t (max period 10,000) through a d -> 4d -> d MLP.
struct TimeEmbeddingImpl : torch::nn::Module {
  explicit TimeEmbeddingImpl(int64_t d_model);
  torch::Tensor raw_features(const torch::Tensor& t) const;  // pre-MLP sin/cos
  torch::Tensor forward(const torch::Tensor& t);             // B -> B x d_model

  int64_t d_model_;
  torch::Tensor freqs;  // geometric ladder spanning ratio 10,000
  torch::nn::Linear fc1{nullptr}, fc2{nullptr};
};
TORCH_MODULE(TimeEmbedding);

// Trained-from-scratch caption encoder over the synthetic vocabulary.
struct CaptionEncoderImpl : torch::nn::Module {
  CaptionEncoderImpl(int64_t vocab_size, const FlowHeadConfig& cfg);
  // -> (memory B x N x d_model, pooled summary B x d_model)
  std::pair<torch::Tensor, torch::Tensor> forward(const CaptionTokens& tokens);

  int64_t vocab_size_;
  torch::nn::Embedding embed{nullptr};
  torch::Tensor pos_embed;
  torch::nn::ModuleList blocks;
  torch::nn::LayerNorm out_norm{nullptr};
};
TORCH_MODULE(CaptionEncoder);

struct ConditionBundle {
  torch::Tensor combined;     // B x d_model (time embedding + gated text summary)
  torch::Tensor text_memory;  // B x N x d_model
  torch::Tensor text_mask;    // B x N bool
};

struct ConditionBuilderImpl : torch::nn::Module {
  ConditionBuilderImpl(int64_t vocab_size, const FlowHeadConfig& cfg);
  ConditionBundle forward(const CaptionTokens& tokens, const torch::Tensor& t);

  CaptionEncoder caption_encoder{nullptr};
  TimeEmbedding time_embed{nullptr};
  torch::nn::Linear summary_proj{nullptr};  // bias-free so a null summary is exact
  torch::Tensor gate;
};
TORCH_MODULE(ConditionBuilder);

// Per-generation cache of projected text-memory K/V tensors per block.
struct KvCache {
  std::vector<torch::Tensor> keys, values;
  bool filled = false;
};

struct FlowBlockImpl : torch::nn::Module {
  FlowBlockImpl(const FlowHeadConfig& cfg, bool orbit);

  // latent_mask: B x n; cache slot may be nullptr.
  torch::Tensor forward(const torch::Tensor& x, const ConditionBundle& cond,
                        const torch::Tensor& latent_mask, KvCache* cache, size_t slot,
                        bool backbone_only = false);

  bool orbit_;
  torch::nn::LayerNorm norm_sa{nullptr}, norm_ca{nullptr}, norm_ff{nullptr};
  MultiheadAttention self_attn{nullptr}, cross_attn{nullptr};
  FeedForward ff{nullptr};
  torch::nn::Dropout drop{nullptr};
  torch::nn::Linear modulation{nullptr};  // scale/shift from the combined signal
  torch::Tensor gate;                     // conditioned-residual gate
};
TORCH_MODULE(FlowBlock);

struct FlowHeadImpl : torch::nn::Module {
  explicit FlowHeadImpl(const FlowHeadConfig& config);

  // z_t: B x n x d_total, t: B, -> velocity B x n x d_total.
  torch::Tensor forward(const torch::Tensor& z_t, const ConditionBundle& cond,
                        const torch::Tensor& latent_mask, KvCache* cache = nullptr,
                        bool backbone_only = false);

  FlowHeadConfig cfg;
  torch::nn::Linear patchify{nullptr}, head{nullptr};
  torch::Tensor pos_embed;
  torch::nn::ModuleList blocks;
  torch::nn::LayerNorm out_norm{nullptr};
};
TORCH_MODULE(FlowHead);

}  // namespace fcm
