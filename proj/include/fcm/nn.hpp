#pragma once

// Small transformer building blocks shared by the VAE, the caption encoder
// and the flow matching head. Hand-rolled multi-head attention keeps full
// control over key-padding masks, QK normalization and determinism.

#include <torch/torch.h>

#include "fcm/common.hpp"

namespace fcm {

// valid_mask: B x S bool (true = attendable). Rows whose keys are all
// masked produce a zero attention output instead of NaN.
inline torch::Tensor masked_softmax(torch::Tensor logits, const torch::Tensor& valid_mask) {
  if (valid_mask.defined()) {
    auto mask = valid_mask.unsqueeze(1).unsqueeze(1);  // B x 1 x 1 x S
    logits = logits.masked_fill(~mask, -std::numeric_limits<float>::infinity());
  }
  auto attn = torch::softmax(logits, -1);
  return torch::nan_to_num(attn, 0.0);
}

struct MultiheadAttentionImpl : torch::nn::Module {
  MultiheadAttentionImpl(int64_t dim, int64_t heads, bool qk_norm = false)
      : dim_(dim), heads_(heads), qk_norm_(qk_norm) {
    TORCH_CHECK(dim % heads == 0, "dim must be divisible by heads");
    q_proj = register_module("q_proj", torch::nn::Linear(dim, dim));
    k_proj = register_module("k_proj", torch::nn::Linear(dim, dim));
    v_proj = register_module("v_proj", torch::nn::Linear(dim, dim));
    out_proj = register_module("out_proj", torch::nn::Linear(dim, dim));
    if (qk_norm_) {
      qk_scale = register_parameter("qk_scale", torch::full({heads, 1, 1}, 10.0));
    }
  }

  torch::Tensor split_heads(const torch::Tensor& x) const {
    // B x S x D -> B x H x S x Dh
    return x.reshape({x.size(0), x.size(1), heads_, dim_ / heads_}).transpose(1, 2);
  }

  // Projects keys/values once; used by the text-memory KV cache.
  std::pair<torch::Tensor, torch::Tensor> project_kv(const torch::Tensor& kv) {
    return {split_heads(k_proj(kv)), split_heads(v_proj(kv))};
  }

  torch::Tensor forward(const torch::Tensor& query, const torch::Tensor& kv,
                        const torch::Tensor& kv_mask = {}) {
    auto [k, v] = project_kv(kv);
    return forward_with_kv(query, k, v, kv_mask);
  }

  torch::Tensor forward_with_kv(const torch::Tensor& query, const torch::Tensor& k,
                                const torch::Tensor& v, const torch::Tensor& kv_mask = {}) {
    auto q = split_heads(q_proj(query));
    torch::Tensor logits;
    if (qk_norm_) {
      // Cosine attention: invariant to positive rescaling of q/k projections.
      auto qn = torch::nn::functional::normalize(
          q, torch::nn::functional::NormalizeFuncOptions().dim(-1).eps(1e-12));
      auto kn = torch::nn::functional::normalize(
          k, torch::nn::functional::NormalizeFuncOptions().dim(-1).eps(1e-12));
      logits = torch::matmul(qn, kn.transpose(-2, -1)) * qk_scale;
    } else {
      const double scale = 1.0 / std::sqrt(static_cast<double>(dim_ / heads_));
      logits = torch::matmul(q, k.transpose(-2, -1)) * scale;
    }
    auto attn = masked_softmax(logits, kv_mask);
    auto out = torch::matmul(attn, v);  // B x H x Sq x Dh
    out = out.transpose(1, 2).reshape({query.size(0), query.size(1), dim_});
    return out_proj(out);
  }

  int64_t dim_, heads_;
  bool qk_norm_;
  torch::nn::Linear q_proj{nullptr}, k_proj{nullptr}, v_proj{nullptr}, out_proj{nullptr};
  torch::Tensor qk_scale;
};
TORCH_MODULE(MultiheadAttention);

struct FeedForwardImpl : torch::nn::Module {
  FeedForwardImpl(int64_t dim, int64_t hidden, double dropout = 0.0) {
    fc1 = register_module("fc1", torch::nn::Linear(dim, hidden));
    fc2 = register_module("fc2", torch::nn::Linear(hidden, dim));
    drop = register_module("drop", torch::nn::Dropout(dropout));
  }
  torch::Tensor forward(const torch::Tensor& x) {
    return fc2(drop(torch::gelu(fc1(x))));
  }
  torch::nn::Linear fc1{nullptr}, fc2{nullptr};
  torch::nn::Dropout drop{nullptr};
};
TORCH_MODULE(FeedForward);

// Pre-norm self-attention block.
struct EncoderBlockImpl : torch::nn::Module {
  EncoderBlockImpl(int64_t dim, int64_t heads, double dropout = 0.0) {
    norm1 = register_module("norm1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
    norm2 = register_module("norm2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
    attn = register_module("attn", MultiheadAttention(dim, heads));
    ff = register_module("ff", FeedForward(dim, 4 * dim, dropout));
    drop = register_module("drop", torch::nn::Dropout(dropout));
  }
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& mask = {}) {
    auto n = norm1(x);
    auto h = x + drop(attn(n, n, mask));
    return h + drop(ff(norm2(h)));
  }
  torch::nn::LayerNorm norm1{nullptr}, norm2{nullptr};
  MultiheadAttention attn{nullptr};
  FeedForward ff{nullptr};
  torch::nn::Dropout drop{nullptr};
};
TORCH_MODULE(EncoderBlock);

}  // namespace fcm
