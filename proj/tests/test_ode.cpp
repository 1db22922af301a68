#include <chrono>

#include "fcm/flow_process.hpp"

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

using namespace fcm;

TEST_CASE("constant field is integrated exactly for any L") {
  auto c = torch::randn({1, 4, 3});
  VelocityField field = [&](const torch::Tensor&, const torch::Tensor&) { return c.clone(); };
  auto z0 = torch::randn({1, 4, 3});
  auto mask = torch::ones({1, 4}, torch::kBool);
  for (int64_t L : {1, 7, 40}) {
    auto out = euler_sample(field, z0, mask, {L, 1.0});
    CHECK((out - (z0 + c)).abs().max().item<double>() < 1e-5);
  }
}

TEST_CASE("exponential decay error is first order in 1/L") {
  // dz/dt = -z has solution e^{-1} z0 at t=1.
  VelocityField field = [](const torch::Tensor& z, const torch::Tensor&) { return -z; };
  auto z0 = torch::full({1, 1, 1}, 1.0);
  auto mask = torch::ones({1, 1}, torch::kBool);
  const double exact = std::exp(-1.0);

  std::vector<double> log_L, log_err;
  for (int64_t L : {5, 10, 20, 40, 80}) {
    auto out = euler_sample(field, z0, mask, {L, 1.0});
    const double err = std::abs(out.item<double>() - exact);
    // local truncation constant: |error| <= e^{-1}/(2L) * (1 + o(1))
    CHECK(err < 1.0 / static_cast<double>(L));
    log_L.push_back(std::log(static_cast<double>(L)));
    log_err.push_back(std::log(err));
  }
  // least-squares slope of log err vs log L
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(log_L.size());
  for (size_t i = 0; i < log_L.size(); ++i) {
    sx += log_L[i];
    sy += log_err[i];
    sxx += log_L[i] * log_L[i];
    sxy += log_L[i] * log_err[i];
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  CHECK(slope == doctest::Approx(-1.0).epsilon(0.15));
}

TEST_CASE("mask is reapplied after every step") {
  VelocityField field = [](const torch::Tensor& z, const torch::Tensor&) {
    return torch::ones_like(z);
  };
  auto z0 = torch::randn({1, 3, 2});
  auto mask = torch::tensor({{true, false, true}});
  auto out = euler_sample(field, z0, mask, {10, 1.0});
  CHECK(out[0][1].abs().max().item<double>() == 0.0);
}

TEST_CASE("divergence reports the step index") {
  VelocityField field = [](const torch::Tensor& z, const torch::Tensor&) {
    return z * 1e12 + 1e12;
  };
  auto z0 = torch::zeros({1, 2, 2});
  auto mask = torch::ones({1, 2}, torch::kBool);
  try {
    euler_sample(field, z0, mask, {8, 1.0});
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(std::string(e.what()).find("step 0") != std::string::npos);
  }
}

TEST_CASE("seeded prior draws are reproducible") {
  auto a = draw_prior(2, 5, 8, 42);
  auto b = draw_prior(2, 5, 8, 42);
  auto c = draw_prior(2, 5, 8, 43);
  CHECK(torch::equal(a, b));
  CHECK(!torch::equal(a, c));
}

TEST_CASE("wall clock scales linearly in L") {
  // a field with enough work that per-step cost dominates the loop overhead
  auto w = torch::randn({64, 64});
  VelocityField field = [&](const torch::Tensor& z, const torch::Tensor&) {
    auto h = z.reshape({64, 64});  // 512 * 8 elements
    for (int i = 0; i < 8; ++i) h = torch::tanh(torch::matmul(h, w));
    return h.reshape(z.sizes());
  };
  auto z0 = torch::randn({1, 512, 8});
  auto mask = torch::ones({1, 512}, torch::kBool);

  auto time_run = [&](int64_t L) {
    const auto start = std::chrono::steady_clock::now();
    euler_sample(field, z0, mask, {L, 1.0, 1e30});
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
        .count();
  };
  time_run(40);  // warm up
  const std::vector<int64_t> Ls{20, 40, 80, 160};
  std::vector<double> best(Ls.size(), 1e30);
  for (int rep = 0; rep < 3; ++rep)
    for (size_t i = 0; i < Ls.size(); ++i)
      best[i] = std::min(best[i], time_run(Ls[i]));
  // compare against the linear fit through the origin
  double num = 0, den = 0;
  for (size_t i = 0; i < Ls.size(); ++i) {
    num += best[i] * static_cast<double>(Ls[i]);
    den += static_cast<double>(Ls[i] * Ls[i]);
  }
  const double per_step = num / den;
  for (size_t i = 0; i < Ls.size(); ++i) {
    const double fit = per_step * static_cast<double>(Ls[i]);
    INFO("L ", Ls[i], " measured ", best[i], " fit ", fit);
    CHECK(std::abs(best[i] - fit) / fit < 0.2);
  }
}
