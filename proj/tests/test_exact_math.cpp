#include "fcm/distillation.hpp"
#include "fcm/flow_process.hpp"
#include "fcm/metrics.hpp"
#include "fcm/motion_vae.hpp"
#include "fcm/rvq.hpp"

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

using namespace fcm;

TEST_CASE("interpolation endpoints and midpoint") {
  auto z0 = torch::tensor({{0.0f, 0.0f}}).unsqueeze(0);
  auto z1 = torch::tensor({{2.0f, 4.0f}}).unsqueeze(0);
  auto t0 = torch::zeros({1});
  auto t1 = torch::ones({1});
  auto th = torch::full({1}, 0.5f);
  CHECK(torch::equal(interpolate_path(z0, z1, t0), z0));
  CHECK(torch::equal(interpolate_path(z0, z1, t1), z1));
  auto mid = interpolate_path(z0, z1, th);
  CHECK(mid[0][0][0].item<double>() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(mid[0][0][1].item<double>() == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("velocity target and affine path linearity") {
  auto z0 = torch::randn({2, 5, 4}, torch::kFloat64);
  auto z1 = torch::randn({2, 5, 4}, torch::kFloat64);
  auto u = velocity_target(z0, z1);
  CHECK(torch::allclose(u, z1 - z0, 0, 0));
  CHECK(velocity_target(z0, z0).abs().max().item<double>() == 0.0);
  // (z_{t+h} - z_t)/h equals u exactly for any h: the path is affine in t.
  auto t = torch::full({2}, 0.3, torch::kFloat64);
  auto th = torch::full({2}, 0.7, torch::kFloat64);
  auto fd = (interpolate_path(z0, z1, th) - interpolate_path(z0, z1, t)) / 0.4;
  CHECK((fd - u).abs().max().item<double>() < 1e-9);
}

TEST_CASE("flow matching loss examples") {
  auto u = torch::randn({2, 6, 8});
  auto mask = torch::ones({2, 6}, torch::kBool);
  CHECK(flow_matching_loss(u, u, mask).item<double>() == 0.0);
  // +1 on every channel: channel-summed squared error is d_total at every
  // position, so the positional mean is exactly d_total.
  auto loss = flow_matching_loss(u + 1.0, u, mask).item<double>();
  CHECK(loss == doctest::Approx(static_cast<double>(u.size(-1))).epsilon(1e-9));
  // masked positions may be perturbed arbitrarily
  mask.index_put_({0, 3}, false);
  auto u2 = u.clone();
  u2.index_put_({0, 3}, 1e6);
  CHECK(flow_matching_loss(u2, u, mask).item<double>() ==
        doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("cfg combination") {
  auto vu = torch::zeros({1, 2, 2});
  auto vc = torch::ones({1, 2, 2});
  CHECK(torch::equal(cfg_combine(vu, vc, 1.0), vc));
  CHECK(torch::equal(cfg_combine(vu, vc, 0.0), vu));
  CHECK(cfg_combine(vu, vc, 2.0).mean().item<double>() == doctest::Approx(2.0));
  // affine in s
  auto a = torch::randn({1, 3, 4});
  auto b = torch::randn({1, 3, 4});
  auto mid = (cfg_combine(a, b, 1.0) + cfg_combine(a, b, 3.0)) / 2.0;
  CHECK(torch::allclose(mid, cfg_combine(a, b, 2.0), 1e-6, 1e-6));
}

TEST_CASE("masked mean pooling closed form") {
  auto f = torch::tensor({{1.0f, 1.0f}, {3.0f, 5.0f}, {100.0f, 100.0f}}).unsqueeze(0);
  auto m = torch::tensor({true, true, false}).unsqueeze(0);
  auto pooled = masked_mean_pool(f, m);
  CHECK(pooled[0][0].item<double>() == doctest::Approx(2.0).epsilon(1e-7));
  CHECK(pooled[0][1].item<double>() == doctest::Approx(3.0).epsilon(1e-7));
  // all-masked: eps denominator gives zeros, not NaN
  auto zero = masked_mean_pool(f, torch::zeros_like(m));
  CHECK(zero.abs().max().item<double>() == 0.0);
}

TEST_CASE("kl divergence closed form") {
  // KL(N(mu, sigma^2) || N(0,1)) = (mu^2 + sigma^2 - log sigma^2 - 1) / 2
  GaussianLatentParams p;
  p.mu = torch::full({1, 1, 1}, 0.5f);
  p.log_var = torch::full({1, 1, 1}, std::log(2.0f));
  p.mask = torch::ones({1, 1}, torch::kBool);
  const double expect = 0.5 * (0.25 + 2.0 - std::log(2.0) - 1.0);
  CHECK(kl_divergence(p).item<double>() == doctest::Approx(expect).epsilon(1e-6));
  // standard normal posterior has zero KL
  p.mu.zero_();
  p.log_var.zero_();
  CHECK(kl_divergence(p).item<double>() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("commit loss masked mean example") {
  // One scale (n = 1), one valid and one masked location.
  auto cb = Codebook::create(2, 2);
  {
    torch::NoGradGuard g;
    cb.entries.copy_(torch::tensor({{0.0f, 0.0f}, {10.0f, 10.0f}}));
  }
  auto z = torch::tensor({{{1.0f, 1.0f}}, {{500.0f, 500.0f}}});  // B=2, n=1, d=2
  auto mask = torch::tensor({{true}, {false}});
  ScaleSchedule sched{{1}};
  auto result = quantize_multiscale(z, sched, cb, mask);
  // valid row commits to entry (0,0): channel-summed distance 2, averaged over
  // the single valid location; the masked row contributes nothing
  CHECK(result.commit_loss.item<double>() == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("frechet distance closed forms") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::vector<KinematicFeature> a, b, shifted;
  for (int i = 0; i < 40; ++i) {
    KinematicFeature f;
    f.values = Eigen::VectorXd::NullaryExpr(3, [&](auto) { return n01(rng); });
    a.push_back(f);
    KinematicFeature g = f;
    g.values = f.values.array() + 2.0;
    shifted.push_back(g);
  }
  CHECK(frechet_distance(a, a) == doctest::Approx(0.0).epsilon(1e-8));
  // identical covariance, mean shift m per dimension -> sum m^2 = 3 * 4
  CHECK(frechet_distance(a, shifted) == doctest::Approx(12.0).epsilon(1e-8));

  // two unit-variance 1-D Gaussians with means 0 and m -> m^2 (exact on fits)
  std::vector<KinematicFeature> c, d;
  for (int i = 0; i < 50; ++i) {
    KinematicFeature f;
    f.values = Eigen::VectorXd::Constant(1, n01(rng));
    c.push_back(f);
    KinematicFeature g;
    g.values = f.values.array() + 5.0;
    d.push_back(g);
  }
  CHECK(frechet_distance(c, d) == doctest::Approx(25.0).epsilon(1e-8));
  CHECK(frechet_distance(c, d) == doctest::Approx(frechet_distance(d, c)).epsilon(1e-10));
}

TEST_CASE("joint position error closed forms") {
  auto target = torch::randn({10, 12, 3});
  auto mask = torch::ones({10}, torch::kBool);
  CHECK(joint_position_error(target, target, mask) == doctest::Approx(0.0));
  auto offset = target.clone();
  offset.select(-1, 0) += 0.1;
  CHECK(joint_position_error(offset, target, mask) ==
        doctest::Approx(0.1).epsilon(1e-7));
}
