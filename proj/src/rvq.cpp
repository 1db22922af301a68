#include "fcm/rvq.hpp"

#include <algorithm>

namespace fcm {

void Codebook::validate() const {
  if (size() < 2) throw ConfigError("codebook needs at least 2 entries");
  if (!torch::isfinite(entries).all().item<bool>())
    throw ValidationError("codebook entries contain NaN/Inf");
  if ((usage_count < 0).any().item<bool>())
    throw ValidationError("negative usage count");
}

Codebook Codebook::create(int64_t K, int64_t d_q) {
  if (K < 2) throw ConfigError("codebook needs at least 2 entries");
  Codebook cb;
  cb.entries = torch::zeros({K, d_q});
  cb.usage_count = torch::zeros({K}, torch::kInt64);
  cb.ema_cluster_size = torch::zeros({K});
  cb.ema_embed_sum = torch::zeros({K, d_q});
  return cb;
}

void Codebook::init_from_features(const torch::Tensor& features, std::mt19937_64& rng) {
  auto pool = features.reshape({-1, dim()});
  const auto n = pool.size(0);
  std::uniform_int_distribution<int64_t> pick(0, n - 1);
  for (int64_t k = 0; k < size(); ++k) {
    auto row = pool[pick(rng)];
    entries[k].copy_(row);
    ema_embed_sum[k].copy_(row);
  }
  ema_cluster_size.fill_(1.0);
}

void ScaleSchedule::validate(int64_t n) const {
  if (resolutions.empty()) throw ConfigError("empty scale schedule");
  for (size_t i = 0; i < resolutions.size(); ++i) {
    if (resolutions[i] < 1) throw ConfigError("scale resolutions must be >= 1");
    if (i > 0 && resolutions[i] <= resolutions[i - 1])
      throw ConfigError("scale resolutions must be strictly ascending");
  }
  if (resolutions.back() != n)
    throw ConfigError("last scale resolution must equal the latent length");
}

ScaleSchedule ScaleSchedule::for_length(int64_t n, const std::vector<int64_t>& divisors) {
  ScaleSchedule s;
  for (int64_t d : divisors) {
    const int64_t h = std::max<int64_t>(1, (n + d - 1) / d);
    if (s.resolutions.empty() || h > s.resolutions.back()) s.resolutions.push_back(h);
  }
  if (s.resolutions.back() != n) s.resolutions.push_back(n);
  s.validate(n);
  return s;
}

torch::Tensor resample_temporal(const torch::Tensor& features, int64_t target_len) {
  const int64_t src = features.size(-2);
  if (src < 1 || target_len < 1) throw ShapeError("resample needs lengths >= 1");
  if (src == target_len) return features;
  if (src == 1) return features.repeat_interleave(target_len, -2);
  // Endpoint-aligned linear interpolation.
  auto pos = torch::arange(target_len, features.options().dtype(torch::kFloat32)) *
             (static_cast<double>(src - 1) / (target_len - 1 > 0 ? target_len - 1 : 1));
  if (target_len == 1) pos = torch::zeros({1}, features.options().dtype(torch::kFloat32));
  auto lo = pos.floor().to(torch::kInt64).clamp(0, src - 1);
  auto hi = (lo + 1).clamp(0, src - 1);
  auto w = (pos - lo.to(pos.dtype())).unsqueeze(-1);
  auto a = features.index_select(-2, lo);
  auto b = features.index_select(-2, hi);
  return a + (b - a) * w;
}

namespace {
// Segment boundaries for averaging n source steps into h segments.
std::vector<std::pair<int64_t, int64_t>> segments(int64_t n, int64_t h) {
  std::vector<std::pair<int64_t, int64_t>> out(h);
  for (int64_t s = 0; s < h; ++s)
    out[s] = {s * n / h, std::max((s + 1) * n / h, s * n / h + 1)};
  return out;
}
}  // namespace

torch::Tensor downsample_average(const torch::Tensor& features, const torch::Tensor& mask,
                                 int64_t target_len) {
  const int64_t n = features.size(-2);
  if (n == target_len) return features;
  auto segs = segments(n, target_len);
  std::vector<torch::Tensor> rows;
  rows.reserve(target_len);
  auto m = mask.to(features.dtype()).unsqueeze(-1);  // B x n x 1
  for (auto [a, b] : segs) {
    auto f = features.narrow(-2, a, b - a);
    auto w = m.narrow(-2, a, b - a);
    rows.push_back((f * w).sum(-2, true) / w.sum(-2, true).clamp_min(1e-12));
  }
  return torch::cat(rows, -2);
}

torch::Tensor downsample_mask(const torch::Tensor& mask, int64_t target_len) {
  const int64_t n = mask.size(-1);
  if (n == target_len) return mask;
  auto segs = segments(n, target_len);
  std::vector<torch::Tensor> cols;
  for (auto [a, b] : segs) cols.push_back(mask.narrow(-1, a, b - a).any(-1, true));
  return torch::cat(cols, -1);
}

torch::Tensor nearest_entries(const torch::Tensor& features, const Codebook& codebook) {
  codebook.validate();
  auto flat = features.reshape({-1, codebook.dim()});
  auto d = torch::cdist(flat, codebook.entries);
  return d.argmin(1).reshape(features.sizes().slice(0, features.dim() - 1));
}

QuantizationResult quantize_multiscale(const torch::Tensor& z_token,
                                       const ScaleSchedule& schedule,
                                       const Codebook& codebook,
                                       const torch::Tensor& valid_mask) {
  const int64_t n = z_token.size(-2);
  schedule.validate(n);
  codebook.validate();

  QuantizationResult result;
  auto residual = z_token;
  torch::Tensor z_q_hat;
  std::vector<torch::Tensor> commit_terms;
  for (int64_t h : schedule.resolutions) {
    auto scale_mask = downsample_mask(valid_mask, h);
    auto feat = downsample_average(residual, valid_mask, h);
    auto idx = nearest_entries(feat.detach(), codebook);
    auto quantized = codebook.entries.index_select(0, idx.reshape(-1))
                         .reshape(feat.sizes());
    // Commitment: pull pre-quantization features toward the detached entries.
    auto diff = (feat - quantized.detach()).pow(2).sum(-1);
    auto m = scale_mask.to(diff.dtype());
    auto denom = m.sum();
    torch::Tensor commit = denom.item<double>() > 0.0
                               ? (diff * m).sum() / denom
                               : torch::zeros({}, diff.options());
    if (denom.item<double>() == 0.0)
      TORCH_WARN("all-invalid mask at scale ", h, "; commit contribution 0");
    commit_terms.push_back(commit);
    result.commit_loss_per_scale.push_back(commit.item<double>());
    result.indices.push_back(idx);
    result.per_scale_quantized.push_back(quantized.detach());
    result.scale_masks.push_back(scale_mask);
    result.pre_quant.push_back(feat.detach());

    auto up = resample_temporal(quantized.detach(), n);
    residual = residual - up;
    z_q_hat = z_q_hat.defined() ? z_q_hat + up : up;
  }
  result.z_q_hat = z_q_hat;
  // Straight-through: forward value z_q_hat, gradient copied to z_token.
  result.z_q_st = z_token + (z_q_hat - z_token).detach();
  result.commit_loss = torch::stack(commit_terms).sum();
  return result;
}

torch::Tensor dequantize(const std::vector<torch::Tensor>& indices,
                         const ScaleSchedule& schedule, const Codebook& codebook,
                         int64_t n) {
  schedule.validate(n);
  if (indices.size() != schedule.resolutions.size())
    throw ShapeError("indices/schedule scale count mismatch");
  torch::Tensor out;
  for (size_t v = 0; v < indices.size(); ++v) {
    const auto& idx = indices[v];
    if ((idx < 0).any().item<bool>() || (idx >= codebook.size()).any().item<bool>())
      throw ValidationError("codebook index out of range");
    if (idx.size(-1) != schedule.resolutions[v])
      throw ShapeError("index length mismatch at scale " + std::to_string(v));
    auto shape = idx.sizes().vec();
    shape.push_back(codebook.dim());
    auto q = codebook.entries.index_select(0, idx.reshape(-1)).reshape(shape);
    auto up = resample_temporal(q, n);
    out = out.defined() ? out + up : up;
  }
  return out;
}

void update_codebook(Codebook& codebook, const QuantizationResult& result) {
  torch::NoGradGuard no_grad;
  const int64_t K = codebook.size();
  auto counts = torch::zeros({K}, torch::kFloat32);
  auto sums = torch::zeros_like(codebook.ema_embed_sum);
  bool any = false;
  for (size_t v = 0; v < result.indices.size(); ++v) {
    auto idx = result.indices[v].reshape(-1);
    auto feat = result.pre_quant[v].reshape({-1, codebook.dim()});
    auto m = result.scale_masks[v].reshape(-1);
    if (!m.any().item<bool>()) continue;
    any = true;
    idx = idx.masked_select(m);
    feat = feat.index_select(0, m.nonzero().squeeze(-1));
    counts.index_add_(0, idx, torch::ones_like(idx, torch::kFloat32));
    sums.index_add_(0, idx, feat);
    codebook.usage_count.index_add_(0, idx, torch::ones_like(idx, torch::kInt64));
  }
  if (!any) return;  // no assignments, entries unchanged
  const double d = codebook.decay;
  codebook.ema_cluster_size.mul_(d).add_(counts, 1.0 - d);
  codebook.ema_embed_sum.mul_(d).add_(sums, 1.0 - d);
  const double total = codebook.ema_cluster_size.sum().item<double>();
  auto smoothed = (codebook.ema_cluster_size + codebook.laplace_eps) /
                  (total + K * codebook.laplace_eps) * total;
  codebook.entries.copy_(codebook.ema_embed_sum / smoothed.unsqueeze(-1));
  codebook.validate();
}

int64_t reseed_dead_entries(Codebook& codebook, const torch::Tensor& feature_pool,
                            std::mt19937_64& rng) {
  torch::NoGradGuard no_grad;
  auto pool = feature_pool.reshape({-1, codebook.dim()});
  std::uniform_int_distribution<int64_t> pick(0, pool.size(0) - 1);
  int64_t reseeded = 0;
  for (int64_t k = 0; k < codebook.size(); ++k) {
    if (codebook.usage_count[k].item<int64_t>() > 0) continue;
    auto row = pool[pick(rng)];
    codebook.entries[k].copy_(row);
    codebook.ema_embed_sum[k].copy_(row);
    codebook.ema_cluster_size[k].fill_(1.0);
    ++reseeded;
  }
  codebook.usage_count.zero_();
  return reseeded;
}

}  // namespace fcm
