#pragma once

#include <torch/torch.h>

#include "fcm/motion_vae.hpp"

namespace fcm {

// Token-latent fusion: concatenate along channels, then residual MLP blocks
// with pre-normalization. The last linear of each block is zero-initialized,
// so at init the network is the identity on the concatenation.
struct CouplingNetworkImpl : torch::nn::Module {
  explicit CouplingNetworkImpl(int64_t d_total, int64_t n_blocks = 2);

  torch::Tensor forward(const HybridLatent& input);
  torch::Tensor forward_merged(const torch::Tensor& z);

  int64_t d_total_;
  torch::nn::ModuleList norms, fc1s, fc2s;
};
TORCH_MODULE(CouplingNetwork);

}  // namespace fcm
