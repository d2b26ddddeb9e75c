#include "cspcn/mcac.hpp"

namespace cspcn {

torch::Tensor attention_map(const torch::Tensor& keys, const torch::Tensor& queries) {
  const bool batched = keys.dim() == 3;
  if ((keys.dim() != 2 && !batched) || queries.dim() != keys.dim()) {
    throw ShapeError("attention_map: K and Q must both be rank 2 or both rank 3");
  }
  const auto c_axis = batched ? 1 : 0;
  if (keys.size(c_axis) != queries.size(c_axis + 1) ||
      keys.size(c_axis + 1) != queries.size(c_axis) ||
      (batched && keys.size(0) != queries.size(0))) {
    throw ShapeError("attention_map: K must be C x HW and Q must be HW x C");
  }
  return softmax_rows(torch::matmul(keys, queries));
}

SeparableConvImpl::SeparableConvImpl(int channels) {
  depthwise = register_module("depthwise",
                              Conv2d(Conv2DSpec{channels, channels, 3, 1, channels}));
  pointwise = register_module("pointwise", Conv2d(Conv2DSpec{channels, channels, 1}));
}

ImageBatch SeparableConvImpl::forward(const ImageBatch& x) { return pointwise(depthwise(x)); }

MCACImpl::MCACImpl(int channels, const std::vector<int>& dilations, bool learn_temperature)
    : channels_(channels) {
  to_t = register_module("to_t", SeparableConv(channels));
  to_v = register_module("to_v", SeparableConv(channels));
  to_k = register_module("to_k", SeparableConv(channels));
  to_q = register_module("to_q", SeparableConv(channels));
  for (std::size_t i = 0; i < dilations.size(); ++i) {
    fuse.push_back(register_module("fuse" + std::to_string(i),
                                   Conv2d(Conv2DSpec{channels, channels, 3, dilations[i]})));
  }
  gap_gate = register_module("gap_gate", GapGate(channels));
  project = register_module("project", Conv2d(Conv2DSpec{channels, channels, 1}));
  project->zero_init = true;
  if (learn_temperature) temperature = register_parameter("temperature", torch::ones({1}));
}

MCACImpl::Output MCACImpl::forward_with_attention(const ImageBatch& x) {
  require_channels(x, channels_, "MCAC");
  const auto n = x.size(0);
  const auto h = x.size(2);
  const auto w = x.size(3);

  auto tokens = [&](const torch::Tensor& f) { return f.reshape({n, channels_, h * w}); };
  const auto keys = tokens(to_k(x));
  const auto queries = tokens(to_q(x)).transpose(1, 2);
  const auto values = tokens(to_t(x)) + tokens(to_v(x));

  const auto logits_k = temperature.defined() ? keys * temperature : keys;
  const auto attention = attention_map(logits_k, queries);
  const auto attended = torch::matmul(attention, values).reshape({n, channels_, h, w});

  torch::Tensor fused = fuse.front()(attended);
  for (std::size_t i = 1; i < fuse.size(); ++i) fused = fused + fuse[i](attended);

  return {x + project(gap_gate(fused)), attention};
}

ImageBatch MCACImpl::forward(const ImageBatch& x) { return forward_with_attention(x).features; }

}  // namespace cspcn
