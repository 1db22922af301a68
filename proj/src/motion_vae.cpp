#include "fcm/motion_vae.hpp"

namespace fcm {

void GaussianLatentParams::validate() const {
  if (mu.sizes() != log_var.sizes()) throw ShapeError("mu/log_var shape mismatch");
  if (!torch::isfinite(log_var).all().item<bool>())
    throw ValidationError("log_var contains non-finite values");
}

HybridLatent split_latent(const torch::Tensor& z) {
  const int64_t d = z.size(-1);
  if (d % 4 != 0) throw ShapeError("latent width must be divisible by 4 for the 1:3 split");
  return HybridLatent{z.narrow(-1, 0, d / 4), z.narrow(-1, d / 4, d - d / 4)};
}

torch::Tensor merge_latent(const HybridLatent& h) {
  if (h.token_part.size(-2) != h.continuous_part.size(-2))
    throw ShapeError("token/continuous temporal length mismatch");
  return torch::cat({h.token_part, h.continuous_part}, -1);
}

torch::Tensor reparameterize(const GaussianLatentParams& params, torch::Generator& gen) {
  params.validate();
  auto eps = torch::randn(params.mu.sizes(), gen, params.mu.options());
  return params.mu + torch::exp(0.5 * params.log_var) * eps;
}

torch::Tensor kl_divergence(const GaussianLatentParams& params) {
  auto kl = 0.5 * (params.mu.pow(2) + params.log_var.exp() - 1.0 - params.log_var);
  auto mask = params.mask.unsqueeze(-1).to(kl.dtype());
  return (kl * mask).sum() / (mask.sum().clamp_min(1.0) * kl.size(-1));
}

torch::Tensor latent_mask_from_frames(const torch::Tensor& frame_mask, int64_t stride) {
  const int64_t T = frame_mask.size(-1);
  const int64_t n = (T + stride - 1) / stride;
  auto padded = torch::zeros({frame_mask.size(0), n * stride}, torch::kBool);
  padded.narrow(1, 0, T).copy_(frame_mask);
  return padded.reshape({frame_mask.size(0), n, stride}).any(-1);
}

namespace {
torch::Tensor pad_frames(const torch::Tensor& frames, int64_t stride) {
  const int64_t T = frames.size(1);
  const int64_t padded = ((T + stride - 1) / stride) * stride;
  if (padded == T) return frames;
  return torch::constant_pad_nd(frames, {0, 0, 0, padded - T});
}
}  // namespace

MotionEncoderImpl::MotionEncoderImpl(const VaeConfig& config) : cfg(config) {
  in_conv = register_module(
      "in_conv", torch::nn::Conv1d(torch::nn::Conv1dOptions(cfg.channels, cfg.d_model,
                                                            cfg.stride)
                                       .stride(cfg.stride)));
  const int64_t max_latent = cfg.latent_len(cfg.max_frames);
  pos_embed = register_parameter("pos_embed",
                                 torch::randn({1, max_latent, cfg.d_model}) * 0.02);
  query_tokens = register_parameter(
      "query_tokens", torch::randn({1, cfg.n_query_tokens, cfg.d_model}) * 0.02);
  for (int64_t i = 0; i < cfg.n_encoder_layers; ++i)
    blocks->push_back(EncoderBlock(cfg.d_model, cfg.n_heads));
  register_module("blocks", blocks);
  out_norm = register_module("out_norm",
                             torch::nn::LayerNorm(torch::nn::LayerNormOptions({cfg.d_model})));
  stat_head = register_module("stat_head", torch::nn::Linear(cfg.d_model, 2 * cfg.d_total));
  query_head = register_module("query_head", torch::nn::Linear(cfg.d_model, 2 * cfg.d_total));
}

GaussianLatentParams MotionEncoderImpl::forward(const torch::Tensor& frames,
                                                const torch::Tensor& mask) {
  if (frames.size(-1) != cfg.channels) throw ShapeError("encoder channel mismatch");
  if (frames.size(1) > cfg.max_frames)
    throw ValidationError("sequence exceeds positional-embedding capacity");
  // Zero out padded frames so the strided conv stays mask-consistent.
  auto x = frames * mask.unsqueeze(-1).to(frames.dtype());
  x = pad_frames(x, cfg.stride);
  auto h = in_conv(x.transpose(1, 2)).transpose(1, 2);  // B x n x d_model
  const int64_t n = h.size(1);
  auto lat_mask = latent_mask_from_frames(mask, cfg.stride);
  h = h + pos_embed.narrow(1, 0, n);
  auto q = query_tokens.expand({h.size(0), cfg.n_query_tokens, cfg.d_model});
  h = torch::cat({q, h}, 1);
  auto full_mask = torch::cat(
      {torch::ones({h.size(0), cfg.n_query_tokens}, torch::kBool), lat_mask}, 1);
  for (auto& block : *blocks) h = block->as<EncoderBlockImpl>()->forward(h, full_mask);
  h = out_norm(h);

  auto per_step = stat_head(h.narrow(1, cfg.n_query_tokens, n));
  // Sequence-level statistics from the query tokens, broadcast-added.
  auto global = query_head(h.narrow(1, 0, cfg.n_query_tokens).mean(1, true));
  auto stats = per_step + global;
  GaussianLatentParams out;
  out.mu = stats.narrow(-1, 0, cfg.d_total);
  out.log_var = stats.narrow(-1, cfg.d_total, cfg.d_total)
                    .clamp(-cfg.log_var_clamp, cfg.log_var_clamp);
  out.mask = lat_mask;
  return out;
}

MotionDecoderImpl::MotionDecoderImpl(const VaeConfig& config) : cfg(config) {
  in_proj = register_module("in_proj", torch::nn::Linear(cfg.d_total, cfg.d_model));
  const int64_t max_latent = cfg.latent_len(cfg.max_frames);
  pos_embed = register_parameter("pos_embed",
                                 torch::randn({1, max_latent, cfg.d_model}) * 0.02);
  for (int64_t i = 0; i < cfg.n_decoder_layers; ++i)
    blocks->push_back(EncoderBlock(cfg.d_model, cfg.n_heads));
  register_module("blocks", blocks);
  // Long-stage skips: output of early block i feeds block n-1-i's input.
  for (int64_t i = 0; i < cfg.n_decoder_layers / 2; ++i)
    skip_gains.push_back(register_parameter("skip_gain_" + std::to_string(i),
                                            torch::zeros({1})));
  out_norm = register_module("out_norm",
                             torch::nn::LayerNorm(torch::nn::LayerNormOptions({cfg.d_model})));
  // Kernel spans two strides so adjacent latent steps overlap; a kernel equal
  // to the stride leaves visible discontinuities at every block boundary.
  out_conv = register_module(
      "out_conv",
      torch::nn::ConvTranspose1d(
          torch::nn::ConvTranspose1dOptions(cfg.d_model, cfg.channels, 2 * cfg.stride)
              .stride(cfg.stride)
              .padding(cfg.stride / 2)));
}

torch::Tensor MotionDecoderImpl::forward(const torch::Tensor& z,
                                         const torch::Tensor& latent_mask,
                                         int64_t target_frames) {
  if (z.size(-1) != cfg.d_total) throw ShapeError("decoder latent width mismatch");
  const int64_t n = z.size(1);
  if (target_frames > n * cfg.stride || target_frames <= (n - 1) * cfg.stride)
    throw ShapeError("target length incompatible with latent length");
  auto h = in_proj(z) + pos_embed.narrow(1, 0, n);
  const auto n_blocks = static_cast<int64_t>(blocks->size());
  std::vector<torch::Tensor> early(n_blocks);
  for (int64_t i = 0; i < n_blocks; ++i) {
    const int64_t mirror = n_blocks - 1 - i;
    if (mirror < i && static_cast<size_t>(mirror) < skip_gains.size())
      h = h + skip_gains[mirror] * early[mirror];
    h = blocks[i]->as<EncoderBlockImpl>()->forward(h, latent_mask);
    early[i] = h;
  }
  auto frames = out_conv(out_norm(h).transpose(1, 2)).transpose(1, 2);
  return frames.narrow(1, 0, target_frames);
}

}  // namespace fcm
