#include "fcm/flow_process.hpp"

#include <ATen/CPUGeneratorImpl.h>

namespace fcm {

torch::Tensor interpolate_path(const torch::Tensor& z0, const torch::Tensor& z1,
                               const torch::Tensor& t) {
  if (z0.sizes() != z1.sizes()) throw ShapeError("endpoint shape mismatch");
  auto tt = t.dim() == 1 ? t.view({-1, 1, 1}) : t;
  return tt * z1 + (1.0 - tt) * z0;
}

torch::Tensor velocity_target(const torch::Tensor& z0, const torch::Tensor& z1) {
  if (z0.sizes() != z1.sizes()) throw ShapeError("endpoint shape mismatch");
  return z1 - z0;
}

torch::Tensor flow_matching_loss(const torch::Tensor& v_hat, const torch::Tensor& u,
                                 const torch::Tensor& mask) {
  if (v_hat.sizes() != u.sizes()) throw ShapeError("velocity shape mismatch");
  // Per-position channel-summed squared error, averaged over valid positions.
  auto m = mask.to(v_hat.dtype()).unsqueeze(-1);
  auto sq = (v_hat - u).square() * m;
  return sq.sum() / mask.to(v_hat.dtype()).sum().clamp_min(1.0);
}

torch::Tensor cfg_combine(const torch::Tensor& v_uncond, const torch::Tensor& v_cond,
                          double scale) {
  return v_uncond + scale * (v_cond - v_uncond);
}

torch::Tensor euler_sample(const VelocityField& field, const torch::Tensor& z0,
                           const torch::Tensor& mask, const SamplerConfig& cfg) {
  if (cfg.steps < 1) throw ConfigError("sampler needs at least one step");
  torch::NoGradGuard guard;
  auto m = mask.to(z0.dtype()).unsqueeze(-1);
  auto z = z0 * m;
  const double dt = 1.0 / static_cast<double>(cfg.steps);
  for (int64_t k = 0; k < cfg.steps; ++k) {
    auto t = torch::full({z.size(0)}, static_cast<double>(k) * dt, z.options());
    auto v = field(z, t);
    if (v.sizes() != z.sizes()) throw ShapeError("velocity field shape mismatch");
    z = (z + dt * v) * m;
    if (!z.isfinite().all().item<bool>() ||
        z.abs().max().item<double>() > cfg.divergence_threshold)
      throw DivergenceError("sampler diverged at step " + std::to_string(k));
  }
  return z;
}

torch::Tensor draw_prior(int64_t batch, int64_t n, int64_t d, uint64_t seed) {
  auto gen = at::detail::createCPUGenerator(seed);
  return torch::randn({batch, n, d}, gen, torch::kFloat32);
}

}  // namespace fcm
