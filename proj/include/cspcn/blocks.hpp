#pragma once

#include <vector>

#include "cspcn/numerics.hpp"

namespace cspcn {

/// Channel attention: x * sigmoid(excite(relu(squeeze(gap(x))))).
class CABImpl : public torch::nn::Module {
 public:
  CABImpl(int channels, int reduction);

  ImageBatch forward(const ImageBatch& x);
  /// The (batch, channels, 1, 1) gate in (0, 1).
  torch::Tensor gate(const ImageBatch& x);

  Conv2d squeeze{nullptr};
  Conv2d excite{nullptr};

 private:
  int channels_;
};
TORCH_MODULE(CAB);

/// Spatial attention: x * sigmoid(conv(concat(mean_c(x), max_c(x)))). The
/// channel reductions give one H x W map each; the gate is shared by all
/// channels.
class SABImpl : public torch::nn::Module {
 public:
  explicit SABImpl(int kernel = 7);

  ImageBatch forward(const ImageBatch& x);
  /// The (batch, 1, H, W) gate in (0, 1).
  torch::Tensor gate(const ImageBatch& x);

  Conv2d conv{nullptr};
};
TORCH_MODULE(SAB);

/// Dual attention: the channel and spatial branches run in parallel and their
/// gated outputs are summed.
class DABImpl : public torch::nn::Module {
 public:
  DABImpl(int channels, int reduction, int spatial_kernel = 7);

  ImageBatch forward(const ImageBatch& x);

  CAB cab{nullptr};
  SAB sab{nullptr};
};
TORCH_MODULE(DAB);

/// GAP-driven channel recalibration: x * sigmoid(conv1x1(gap(x))).
class GapGateImpl : public torch::nn::Module {
 public:
  explicit GapGateImpl(int channels);

  ImageBatch forward(const ImageBatch& x);

  Conv2d conv{nullptr};
};
TORCH_MODULE(GapGate);

/// Multi-layer feature processor: dilated 3x3 convolutions, each followed by
/// batch norm and ReLU, closed by a DAB monitor.
class MLFPImpl : public torch::nn::Module {
 public:
  MLFPImpl(int channels, const std::vector<int>& dilations, int reduction, bool batch_norm,
           int spatial_kernel = 7);

  ImageBatch forward(const ImageBatch& x);

  /// Radius of the input region that influences one output pixel through the
  /// convolution stack.
  int receptive_radius() const;

  std::vector<Conv2d> convs;
  std::vector<NormAct> norms;
  DAB monitor{nullptr};

 private:
  int channels_;
};
TORCH_MODULE(MLFP);

/// One link of the cascading block: DAB, GAP gate, then a 3x3 convolution.
class CascadeUnitImpl : public torch::nn::Module {
 public:
  CascadeUnitImpl(int channels, int reduction, int spatial_kernel = 7);

  ImageBatch forward(const ImageBatch& x);

  DAB dab{nullptr};
  GapGate gap_gate{nullptr};
  Conv2d conv{nullptr};
};
TORCH_MODULE(CascadeUnit);

/// Chain of cascade units wrapped in a residual connection.
class CascadeImpl : public torch::nn::Module {
 public:
  CascadeImpl(int channels, int units, int reduction, int spatial_kernel = 7);

  ImageBatch forward(const ImageBatch& x);

  std::vector<CascadeUnit> units;

 private:
  int channels_;
};
TORCH_MODULE(Cascade);

}  // namespace cspcn
