#include "fcm/distillation.hpp"

#include "fcm/rvq.hpp"  // resample_temporal for time-warp

namespace fcm {

std::vector<const MotionView*> ViewSet::all() const {
  std::vector<const MotionView*> out;
  for (const auto& v : global_views) out.push_back(&v);
  for (const auto& v : local_views) out.push_back(&v);
  return out;
}

namespace {
torch::Tensor seeded_noise(torch::IntArrayRef shape, double sigma, std::mt19937_64& rng) {
  auto gen = at::detail::createCPUGenerator(rng());
  return torch::randn(shape, gen) * sigma;
}
}  // namespace

ViewSet make_views(const torch::Tensor& frames, const torch::Tensor& mask,
                   const ViewConfig& config, std::mt19937_64& rng) {
  const int64_t T = frames.size(0);
  if (T < 10) throw ValidationError("sequence too short for view generation");
  std::uniform_real_distribution<double> u01(0.0, 1.0);

  ViewSet set;
  for (int g = 0; g < config.n_global; ++g) {
    MotionView v;
    v.frames = frames.clone();
    if (config.augment)
      v.frames += seeded_noise(frames.sizes(), config.global_noise_sigma, rng);
    v.mask = mask.clone();
    v.crop = {0, T};
    set.global_views.push_back(std::move(v));
  }

  for (int l = 0; l < config.n_local; ++l) {
    const double frac = config.crop_lo + (config.crop_hi - config.crop_lo) * u01(rng);
    const auto len = std::max<int64_t>(4, static_cast<int64_t>(std::llround(frac * T)));
    std::uniform_int_distribution<int64_t> start_dist(0, T - len);
    const int64_t start = start_dist(rng);

    MotionView v;
    v.crop = {start, len};
    v.frames = frames.narrow(0, start, len).clone();
    v.mask = mask.narrow(0, start, len).clone();
    if (config.augment) {
      // Time-warp: resample to +-20% speed.
      const double warp = config.warp_lo + (config.warp_hi - config.warp_lo) * u01(rng);
      const auto warped = std::max<int64_t>(4, static_cast<int64_t>(std::llround(len / warp)));
      v.frames = resample_temporal(v.frames, warped);
      v.mask = torch::ones({warped}, torch::kBool);
      // Additive Gaussian noise.
      v.frames += seeded_noise(v.frames.sizes(), config.noise_sigma, rng);
      // Temporal masking: zero a random span, mask updated accordingly.
      const auto span = std::max<int64_t>(
          1, static_cast<int64_t>(std::llround(config.mask_fraction * warped)));
      if (span < warped) {
        std::uniform_int_distribution<int64_t> span_start(0, warped - span);
        const int64_t s0 = span_start(rng);
        v.frames.narrow(0, s0, span).zero_();
        v.mask.narrow(0, s0, span).fill_(false);
      }
    }
    set.local_views.push_back(std::move(v));
  }
  return set;
}

torch::Tensor masked_mean_pool(const torch::Tensor& features, const torch::Tensor& mask) {
  if (mask.size(-1) != features.size(-2)) throw ShapeError("pooling mask length mismatch");
  auto m = mask.to(features.dtype()).unsqueeze(-1);
  return (features * m).sum(-2) / (m.sum(-2) + 1e-8);
}

ProjectionHeadImpl::ProjectionHeadImpl(int64_t in_dim, int64_t hidden, int64_t out_dim) {
  fc1 = register_module("fc1", torch::nn::Linear(in_dim, hidden));
  fc2 = register_module("fc2", torch::nn::Linear(hidden, out_dim));
}

torch::Tensor ProjectionHeadImpl::forward(const torch::Tensor& x) {
  auto h = fc2(torch::gelu(fc1(x)));
  return torch::nn::functional::normalize(
      h, torch::nn::functional::NormalizeFuncOptions().dim(-1).eps(1e-12));
}

DistillationState DistillationState::create(const MotionEncoder& student_encoder,
                                            const ProjectionHead& student_head,
                                            const VaeConfig& cfg) {
  DistillationState st;
  st.teacher_encoder = MotionEncoder(cfg);
  st.teacher_head = ProjectionHead(cfg.d_continuous());
  // Teacher starts as an exact copy of the student.
  torch::NoGradGuard g;
  auto copy_params = [](const torch::nn::Module& src, torch::nn::Module& dst) {
    auto sp = src.parameters();
    auto dp = dst.parameters();
    for (size_t i = 0; i < sp.size(); ++i) dp[i].copy_(sp[i]);
  };
  copy_params(*student_encoder, *st.teacher_encoder);
  copy_params(*student_head, *st.teacher_head);
  for (auto& p : st.teacher_encoder->parameters()) p.set_requires_grad(false);
  for (auto& p : st.teacher_head->parameters()) p.set_requires_grad(false);
  st.center = torch::zeros({st.teacher_head->fc2->options.out_features()});
  return st;
}

void DistillationState::validate() const {
  if (tau_teacher <= 0.0 || tau_student <= 0.0)
    throw ValidationError("temperatures must be positive");
  if (!torch::isfinite(center).all().item<bool>())
    throw ValidationError("center contains non-finite values");
}

torch::Tensor view_logits(MotionEncoder& encoder, ProjectionHead& head,
                          const torch::Tensor& frames, const torch::Tensor& mask,
                          const VaeConfig& cfg) {
  auto params = encoder->forward(frames, mask);
  auto continuous = params.mu.narrow(-1, cfg.d_token(), cfg.d_continuous());
  auto pooled = masked_mean_pool(continuous, params.mask);
  return head->forward(pooled);
}

torch::Tensor teacher_distribution(const DistillationState& state,
                                   const torch::Tensor& logits) {
  state.validate();
  torch::NoGradGuard g;
  return torch::softmax((logits - state.center) / state.tau_teacher, -1);
}

torch::Tensor student_distribution(const DistillationState& state,
                                   const torch::Tensor& logits) {
  state.validate();
  return torch::softmax(logits / state.tau_student, -1);
}

torch::Tensor distillation_loss(const torch::Tensor& teacher_dists,
                                const torch::Tensor& student_dists) {
  const auto check = [](const torch::Tensor& p) {
    auto sums = p.sum(-1);
    if ((sums - 1.0).abs().max().item<double>() > 1e-6)
      throw ValidationError("distributions must sum to 1");
  };
  check(teacher_dists);
  check(student_dists);
  const int64_t G = teacher_dists.size(0);
  const int64_t V = student_dists.size(0);
  torch::Tensor total;
  int64_t pairs = 0;
  for (int64_t g = 0; g < G; ++g) {
    auto p = teacher_dists[g].detach();
    auto logp = torch::log(p.clamp_min(1e-12));
    for (int64_t v = 0; v < V; ++v) {
      if (v == g) continue;  // identical-view pair
      auto logq = torch::log(student_dists[v].clamp_min(1e-12));
      auto kl = (p * (logp - logq)).sum(-1).mean();
      total = total.defined() ? total + kl : kl;
      ++pairs;
    }
  }
  return total / static_cast<double>(pairs);
}

void update_center(DistillationState& state, const torch::Tensor& batch_teacher_logits) {
  if (state.center_momentum <= 0.0 || state.center_momentum >= 1.0)
    throw ValidationError("center momentum must be in (0,1)");
  torch::NoGradGuard g;
  auto mean = batch_teacher_logits.reshape({-1, state.center.size(0)}).mean(0);
  state.center.mul_(state.center_momentum).add_(mean, 1.0 - state.center_momentum);
}

void update_teacher(DistillationState& state, const MotionEncoder& student_encoder,
                    const ProjectionHead& student_head) {
  torch::NoGradGuard g;
  auto ema = [&](const torch::nn::Module& src, torch::nn::Module& dst) {
    auto sp = src.parameters();
    auto dp = dst.parameters();
    if (sp.size() != dp.size()) throw ShapeError("teacher/student parameter mismatch");
    for (size_t i = 0; i < sp.size(); ++i) {
      if (sp[i].sizes() != dp[i].sizes())
        throw ShapeError("teacher/student parameter shape mismatch");
      dp[i].mul_(state.teacher_ema).add_(sp[i], 1.0 - state.teacher_ema);
    }
  };
  ema(*student_encoder, *state.teacher_encoder);
  ema(*student_head, *state.teacher_head);
}

}  // namespace fcm
