#include "fcm/coupling.hpp"

namespace fcm {

CouplingNetworkImpl::CouplingNetworkImpl(int64_t d_total, int64_t n_blocks)
    : d_total_(d_total) {
  for (int64_t i = 0; i < n_blocks; ++i) {
    norms->push_back(torch::nn::LayerNorm(torch::nn::LayerNormOptions({d_total})));
    fc1s->push_back(torch::nn::Linear(d_total, 2 * d_total));
    auto fc2 = torch::nn::Linear(2 * d_total, d_total);
    torch::NoGradGuard g;
    fc2->weight.zero_();
    fc2->bias.zero_();
    fc2s->push_back(fc2);
  }
  register_module("norms", norms);
  register_module("fc1s", fc1s);
  register_module("fc2s", fc2s);
}

torch::Tensor CouplingNetworkImpl::forward(const HybridLatent& input) {
  if (input.token_part.size(-2) != input.continuous_part.size(-2))
    throw ShapeError("coupling temporal-length mismatch");
  return forward_merged(merge_latent(input));
}

torch::Tensor CouplingNetworkImpl::forward_merged(const torch::Tensor& z) {
  if (z.size(-1) != d_total_) throw ShapeError("coupling width mismatch");
  auto h = z;
  for (size_t i = 0; i < norms->size(); ++i) {
    auto n = norms[i]->as<torch::nn::LayerNormImpl>()->forward(h);
    auto m = fc2s[i]->as<torch::nn::LinearImpl>()->forward(
        torch::gelu(fc1s[i]->as<torch::nn::LinearImpl>()->forward(n)));
    h = h + m;
  }
  return h;
}

}  // namespace fcm
