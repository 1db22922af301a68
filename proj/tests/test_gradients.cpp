#include <functional>

#include "fcm/coupling.hpp"
#include "fcm/flow_head.hpp"
#include "fcm/motion_vae.hpp"

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

using namespace fcm;

namespace {

// Central-difference check of d/dx of a scalar functional at 20 random input
// coordinates, in double precision.
void check_gradient(const std::function<torch::Tensor(const torch::Tensor&)>& f,
                    torch::Tensor x, int n_probes = 20, double h = 1e-6,
                    double tol = 1e-4) {
  x = x.detach().clone().set_requires_grad(true);
  auto y = f(x);
  y.backward();
  auto grad = x.grad().detach().clone().reshape({-1});
  auto flat = x.detach().clone().reshape({-1});

  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int64_t> pick(0, flat.size(0) - 1);
  for (int p = 0; p < n_probes; ++p) {
    const int64_t i = pick(rng);
    auto probe = [&](double delta) {
      auto xx = flat.clone();
      xx[i] += delta;
      torch::NoGradGuard g;
      return f(xx.reshape(x.sizes())).item<double>();
    };
    const double fd = (probe(h) - probe(-h)) / (2.0 * h);
    const double an = grad[i].item<double>();
    const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6});
    INFO("probe ", p, " coord ", i, " fd ", fd, " autograd ", an);
    CHECK(rel < tol);
  }
}

torch::Tensor weighted_sum(const torch::Tensor& y, uint64_t seed) {
  auto gen = at::detail::createCPUGenerator(seed);
  auto w = torch::randn(y.sizes(), gen, y.options().requires_grad(false));
  return (y * w).sum();
}

}  // namespace

TEST_CASE("encoder gradients match finite differences") {
  torch::manual_seed(1);
  VaeConfig cfg;
  cfg.d_model = 32;
  cfg.n_encoder_layers = 2;
  cfg.n_decoder_layers = 2;
  MotionEncoder enc(cfg);
  enc->to(torch::kFloat64);
  enc->eval();
  auto mask = torch::ones({1, 16}, torch::kBool);
  auto x = torch::randn({1, 16, cfg.channels}, torch::kFloat64);
  check_gradient(
      [&](const torch::Tensor& in) {
        auto p = enc->forward(in, mask);
        return weighted_sum(p.mu, 11) + weighted_sum(p.log_var, 12);
      },
      x);
}

TEST_CASE("decoder gradients match finite differences") {
  torch::manual_seed(2);
  VaeConfig cfg;
  cfg.d_model = 32;
  cfg.n_encoder_layers = 2;
  cfg.n_decoder_layers = 2;
  MotionDecoder dec(cfg);
  dec->to(torch::kFloat64);
  dec->eval();
  auto mask = torch::ones({1, 4}, torch::kBool);
  auto z = torch::randn({1, 4, cfg.d_total}, torch::kFloat64);
  check_gradient(
      [&](const torch::Tensor& in) {
        return weighted_sum(dec->forward(in, mask, 15), 21);
      },
      z);
}

TEST_CASE("coupling gradients match finite differences") {
  torch::manual_seed(3);
  CouplingNetwork coupling(32);
  coupling->to(torch::kFloat64);
  coupling->eval();
  // zero-init output layers make the network the identity at init; perturb
  // the weights so the test exercises a non-trivial function.
  {
    torch::NoGradGuard g;
    for (auto& p : coupling->parameters()) p.add_(torch::randn_like(p) * 0.05);
  }
  auto z = torch::randn({2, 5, 32}, torch::kFloat64);
  check_gradient(
      [&](const torch::Tensor& in) {
        return weighted_sum(coupling->forward_merged(in), 31);
      },
      z);
}

TEST_CASE("flow head gradients match finite differences") {
  for (const char* variant : {"nova", "orbit"}) {
    CAPTURE(variant);
    torch::manual_seed(4);
    FlowHeadConfig cfg;
    cfg.d_model = 32;
    cfg.n_blocks = 2;
    cfg.dropout = 0.0;
    cfg.block_variant = variant;
    FlowHead head(cfg);
    ConditionBuilder cond_builder(12, cfg);
    head->to(torch::kFloat64);
    cond_builder->to(torch::kFloat64);
    head->eval();
    cond_builder->eval();
    {
      torch::NoGradGuard g;
      for (auto& p : head->parameters()) p.add_(torch::randn_like(p) * 0.02);
    }
    CaptionTokens tokens;
    tokens.ids = torch::tensor({{1, 4, 7}});
    tokens.mask = torch::ones({1, 3}, torch::kBool);
    auto t = torch::full({1}, 0.4, torch::kFloat64);
    auto cond = cond_builder->forward(tokens, t);
    auto mask = torch::ones({1, 6}, torch::kBool);
    auto z = torch::randn({1, 6, cfg.d_total}, torch::kFloat64);
    check_gradient(
        [&](const torch::Tensor& in) {
          return weighted_sum(head->forward(in, cond, mask), 41);
        },
        z);
  }
}
