#pragma once

#include <vector>

#include "cspcn/blocks.hpp"

namespace cspcn {

/// Row-softmax of K (x) Q. `keys` is C x HW (or batched N x C x HW), `queries`
/// the HW x C transpose layout. Returns the C x C row-stochastic map.
torch::Tensor attention_map(const torch::Tensor& keys, const torch::Tensor& queries);

/// Depthwise 3x3 followed by pointwise 1x1.
class SeparableConvImpl : public torch::nn::Module {
 public:
  explicit SeparableConvImpl(int channels);

  ImageBatch forward(const ImageBatch& x);

  Conv2d depthwise{nullptr};
  Conv2d pointwise{nullptr};
};
TORCH_MODULE(SeparableConv);

/// Multi-conv attention controller. Four separable convolutions produce
/// T, V, K, Q; channel-token attention A = softmax(K Q) mixes (T + V); the
/// result runs through summed dilated convolutions, a GAP gate and a
/// zero-initialized projection that is added back onto the input.
class MCACImpl : public torch::nn::Module {
 public:
  MCACImpl(int channels, const std::vector<int>& dilations, bool learn_temperature = false);

  ImageBatch forward(const ImageBatch& x);

  struct Output {
    ImageBatch features;
    torch::Tensor attention;  // N x C x C
  };
  Output forward_with_attention(const ImageBatch& x);

  SeparableConv to_t{nullptr};
  SeparableConv to_v{nullptr};
  SeparableConv to_k{nullptr};
  SeparableConv to_q{nullptr};
  std::vector<Conv2d> fuse;
  GapGate gap_gate{nullptr};
  Conv2d project{nullptr};
  torch::Tensor temperature;  // undefined unless learn_temperature

 private:
  int channels_;
};
TORCH_MODULE(MCAC);

}  // namespace cspcn
