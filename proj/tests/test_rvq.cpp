#include "fcm/rvq.hpp"

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

using namespace fcm;

TEST_CASE("scale schedule divisor reading") {
  auto s = ScaleSchedule::for_length(16);
  CHECK((s.resolutions == std::vector<int64_t>{2, 4, 8, 16}));
  auto odd = ScaleSchedule::for_length(13);
  CHECK((odd.resolutions == std::vector<int64_t>{2, 4, 7, 13}));
  auto tiny = ScaleSchedule::for_length(1);
  CHECK((tiny.resolutions == std::vector<int64_t>{1}));
  ScaleSchedule descending{{4, 2}};
  CHECK_THROWS_AS(descending.validate(4), ConfigError);
}

TEST_CASE("identity resample is bitwise") {
  auto x = torch::randn({2, 9, 8});
  auto y = resample_temporal(x, 9);
  CHECK(torch::equal(x, y));
}

TEST_CASE("resample endpoints are aligned") {
  auto x = torch::arange(5, torch::kFloat32).reshape({1, 5, 1});
  auto up = resample_temporal(x, 9);
  CHECK(up[0][0][0].item<double>() == doctest::Approx(0.0));
  CHECK(up[0][8][0].item<double>() == doctest::Approx(4.0));
  // linear ramp stays a linear ramp
  for (int i = 0; i < 9; ++i)
    CHECK(up[0][i][0].item<double>() == doctest::Approx(i * 0.5).epsilon(1e-6));
}

TEST_CASE("nearest entry matches brute force") {
  std::mt19937_64 seed(5);
  auto cb = Codebook::create(16, 4);
  {
    torch::NoGradGuard g;
    cb.entries.copy_(torch::randn({16, 4}));
  }
  auto f = torch::randn({3, 7, 4});
  auto idx = nearest_entries(f, cb);
  for (int64_t b = 0; b < 3; ++b)
    for (int64_t t = 0; t < 7; ++t) {
      double best = 1e30;
      int64_t best_k = -1;
      for (int64_t k = 0; k < 16; ++k) {
        double d = (f[b][t] - cb.entries[k]).square().sum().item<double>();
        if (d < best) {
          best = d;
          best_k = k;
        }
      }
      CHECK(idx[b][t].item<int64_t>() == best_k);
    }
}

TEST_CASE("dequantize reproduces z_q_hat bitwise") {
  torch::manual_seed(17);
  auto cb = Codebook::create(32, 8);
  {
    torch::NoGradGuard g;
    cb.entries.copy_(torch::randn({32, 8}));
  }
  auto z = torch::randn({2, 12, 8});
  auto mask = torch::ones({2, 12}, torch::kBool);
  auto sched = ScaleSchedule::for_length(12);
  auto result = quantize_multiscale(z, sched, cb, mask);
  auto rebuilt = dequantize(result.indices, sched, cb, 12);
  CHECK(torch::equal(result.z_q_hat, rebuilt));
}

TEST_CASE("straight-through output carries encoder gradients") {
  auto cb = Codebook::create(8, 4);
  {
    torch::NoGradGuard g;
    cb.entries.copy_(torch::randn({8, 4}));
  }
  auto z = torch::randn({1, 8, 4}, torch::requires_grad());
  auto mask = torch::ones({1, 8}, torch::kBool);
  auto result = quantize_multiscale(z, ScaleSchedule::for_length(8), cb, mask);
  result.z_q_st.sum().backward();
  // d z_q_st / d z is the identity under the straight-through estimator
  CHECK(torch::allclose(z.grad(), torch::ones_like(z)));
}

TEST_CASE("residual scales telescope toward the input") {
  // With a rich codebook, adding scales should not increase quantization error.
  torch::manual_seed(3);
  auto cb = Codebook::create(64, 4);
  {
    torch::NoGradGuard g;
    cb.entries.copy_(torch::randn({64, 4}) * 0.5);
  }
  auto z = torch::randn({4, 16, 4}) * 0.5;
  auto mask = torch::ones({4, 16}, torch::kBool);
  auto full = quantize_multiscale(z, ScaleSchedule::for_length(16), cb, mask);
  auto coarse_only = quantize_multiscale(z, ScaleSchedule{{16}}, cb, mask);
  auto err_full = (full.z_q_hat - z).square().mean().item<double>();
  auto err_one = (coarse_only.z_q_hat - z).square().mean().item<double>();
  CHECK(err_full <= err_one + 1e-6);
}

TEST_CASE("ema update pulls entries toward assigned features") {
  auto cb = Codebook::create(2, 2);
  {
    torch::NoGradGuard g;
    cb.entries.copy_(torch::tensor({{-0.5f, -0.5f}, {0.5f, 0.5f}}));
  }
  // two tight clusters at (-1,-1) and (1,1)
  auto gen = at::detail::createCPUGenerator(9);
  auto cluster = torch::randn({2, 64, 2}, gen) * 0.05;
  cluster[0] -= 1.0;
  cluster[1] += 1.0;
  auto mask = torch::ones({2, 64}, torch::kBool);
  auto sched = ScaleSchedule{{64}};
  for (int step = 0; step < 200; ++step) {
    auto result = quantize_multiscale(cluster, sched, cb, mask);
    update_codebook(cb, result);
  }
  auto sorted = std::get<0>(cb.entries.sum(-1).sort(0));
  CHECK(sorted[0].item<double>() == doctest::Approx(-2.0).epsilon(0.1));
  CHECK(sorted[1].item<double>() == doctest::Approx(2.0).epsilon(0.1));
}

TEST_CASE("dead entries are reseeded on the 2-cluster toy") {
  std::mt19937_64 rng(4);
  auto cb = Codebook::create(8, 2);
  {
    torch::NoGradGuard g;
    // entries 2..7 far away: never selected
    cb.entries.copy_(torch::tensor({{-1.0f, -1.0f}, {1.0f, 1.0f}}).repeat({4, 1}));
    cb.entries.narrow(0, 2, 6).add_(100.0);
  }
  auto data = torch::cat({torch::randn({1, 32, 2}) * 0.05 - 1.0,
                          torch::randn({1, 32, 2}) * 0.05 + 1.0});
  auto mask = torch::ones({2, 32}, torch::kBool);
  auto result = quantize_multiscale(data, ScaleSchedule{{32}}, cb, mask);
  update_codebook(cb, result);
  const auto dead_before = (cb.usage_count == 0).sum().item<int64_t>();
  CHECK(dead_before == 6);
  auto reseeded = reseed_dead_entries(cb, data.reshape({-1, 2}), rng);
  CHECK(reseeded == 6);
  // reseeded entries now sit on the data, so everything gets used again
  cb.usage_count.zero_();
  auto after = quantize_multiscale(data, ScaleSchedule{{32}}, cb, mask);
  update_codebook(cb, after);
  CHECK((cb.usage_count == 0).sum().item<int64_t>() < dead_before);
}

TEST_CASE("masked locations are excluded from commitment and ema") {
  auto cb = Codebook::create(4, 2);
  {
    torch::NoGradGuard g;
    cb.entries.copy_(torch::randn({4, 2}));
  }
  auto z = torch::randn({1, 6, 2});
  auto mask = torch::tensor({{true, true, true, false, false, false}});
  auto a = quantize_multiscale(z, ScaleSchedule{{6}}, cb, mask);
  auto z2 = z.clone();
  z2.narrow(1, 3, 3).fill_(1e4);
  auto b = quantize_multiscale(z2, ScaleSchedule{{6}}, cb, mask);
  CHECK(a.commit_loss.item<double>() == doctest::Approx(b.commit_loss.item<double>()));
}
