#include "cspcn/blocks.hpp"

namespace cspcn {

CABImpl::CABImpl(int channels, int reduction) : channels_(channels) {
  if (reduction < 1 || channels % reduction != 0) {
    throw std::invalid_argument("CAB: channels must be divisible by the reduction ratio");
  }
  const int hidden = channels / reduction;
  squeeze = register_module("squeeze", Conv2d(Conv2DSpec{channels, hidden, 1}));
  excite = register_module("excite", Conv2d(Conv2DSpec{hidden, channels, 1}));
}

torch::Tensor CABImpl::gate(const ImageBatch& x) {
  require_channels(x, channels_, "CAB");
  return torch::sigmoid(excite(torch::relu(squeeze(global_avg_pool(x)))));
}

ImageBatch CABImpl::forward(const ImageBatch& x) { return x * gate(x); }

SABImpl::SABImpl(int kernel) {
  conv = register_module(
      "conv", Conv2d(Conv2DSpec{2, 1, kernel, 1, 1, true, Padding::same_zero}));
}

torch::Tensor SABImpl::gate(const ImageBatch& x) {
  require_rank4(x, "SAB");
  auto pooled = torch::cat({x.mean(1, /*keepdim=*/true), std::get<0>(x.max(1, true))}, 1);
  return torch::sigmoid(conv(pooled));
}

ImageBatch SABImpl::forward(const ImageBatch& x) { return x * gate(x); }

DABImpl::DABImpl(int channels, int reduction, int spatial_kernel) {
  cab = register_module("cab", CAB(channels, reduction));
  sab = register_module("sab", SAB(spatial_kernel));
}

ImageBatch DABImpl::forward(const ImageBatch& x) { return cab(x) + sab(x); }

GapGateImpl::GapGateImpl(int channels) {
  conv = register_module("conv", Conv2d(Conv2DSpec{channels, channels, 1}));
}

ImageBatch GapGateImpl::forward(const ImageBatch& x) {
  return x * torch::sigmoid(conv(global_avg_pool(x)));
}

MLFPImpl::MLFPImpl(int channels, const std::vector<int>& dilations, int reduction,
                   bool batch_norm, int spatial_kernel)
    : channels_(channels) {
  const NormActSpec norm_act{batch_norm ? NormKind::batch_norm : NormKind::none,
                             Activation::relu};
  for (std::size_t i = 0; i < dilations.size(); ++i) {
    Conv2DSpec spec{channels, channels, 3, dilations[i]};
    // Batch norm's shift makes a conv bias redundant.
    spec.has_bias = !batch_norm;
    convs.push_back(register_module("conv" + std::to_string(i), Conv2d(spec)));
    norms.push_back(register_module("norm" + std::to_string(i), NormAct(channels, norm_act)));
  }
  monitor = register_module("monitor", DAB(channels, reduction, spatial_kernel));
}

ImageBatch MLFPImpl::forward(const ImageBatch& x) {
  require_channels(x, channels_, "MLFP");
  torch::Tensor y = x;
  for (std::size_t i = 0; i < convs.size(); ++i) y = norms[i](convs[i](y));
  return monitor(y);
}

int MLFPImpl::receptive_radius() const {
  int radius = 0;
  for (const auto& conv : convs) radius += conv->spec().radius();
  return radius;
}

CascadeUnitImpl::CascadeUnitImpl(int channels, int reduction, int spatial_kernel) {
  dab = register_module("dab", DAB(channels, reduction, spatial_kernel));
  gap_gate = register_module("gap_gate", GapGate(channels));
  conv = register_module("conv", Conv2d(Conv2DSpec{channels, channels, 3}));
}

ImageBatch CascadeUnitImpl::forward(const ImageBatch& x) { return conv(gap_gate(dab(x))); }

CascadeImpl::CascadeImpl(int channels, int unit_count, int reduction, int spatial_kernel)
    : channels_(channels) {
  for (int i = 0; i < unit_count; ++i) {
    units.push_back(
        register_module("unit" + std::to_string(i), CascadeUnit(channels, reduction, spatial_kernel)));
  }
}

ImageBatch CascadeImpl::forward(const ImageBatch& x) {
  require_channels(x, channels_, "Cascade");
  torch::Tensor y = x;
  for (auto& unit : units) y = unit(y);
  return x + y;
}

}  // namespace cspcn
