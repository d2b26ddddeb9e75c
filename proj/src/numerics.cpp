#include "cspcn/numerics.hpp"

#include <vector>

namespace cspcn {

namespace {

std::string shape_string(const torch::Tensor& x) {
  std::string s = "[";
  for (std::int64_t d = 0; d < x.dim(); ++d) {
    if (d) s += "x";
    s += std::to_string(x.size(d));
  }
  return s + "]";
}

torch::Tensor mirror_indices(std::int64_t n, int before, int after) {
  std::vector<std::int64_t> idx;
  idx.reserve(static_cast<std::size_t>(n + before + after));
  const std::int64_t period = 2 * (n - 1);
  for (std::int64_t i = -before; i < n + after; ++i) {
    if (n == 1) {
      idx.push_back(0);
      continue;
    }
    std::int64_t j = ((i % period) + period) % period;
    if (j >= n) j = period - j;
    idx.push_back(j);
  }
  return torch::tensor(idx, torch::kLong);
}

}  // namespace

void require_rank4(const torch::Tensor& x, const char* what) {
  if (!x.defined() || x.dim() != 4) {
    throw ShapeError(std::string(what) + ": expected a rank-4 batch, got " +
                     (x.defined() ? shape_string(x) : std::string("undefined")));
  }
}

void require_channels(const torch::Tensor& x, std::int64_t channels, const char* what) {
  require_rank4(x, what);
  if (x.size(1) != channels) {
    throw ShapeError(std::string(what) + ": expected " + std::to_string(channels) +
                     " channels, got " + std::to_string(x.size(1)));
  }
}

torch::Tensor reflect_pad(const torch::Tensor& x, int top, int bottom, int left, int right) {
  require_rank4(x, "reflect_pad");
  if (top < 0 || bottom < 0 || left < 0 || right < 0) {
    throw std::invalid_argument("reflect_pad: negative pad");
  }
  if (top < x.size(2) && bottom < x.size(2) && left < x.size(3) && right < x.size(3)) {
    namespace F = torch::nn::functional;
    return F::pad(x, F::PadFuncOptions({left, right, top, bottom}).mode(torch::kReflect));
  }
  torch::Tensor out = x;
  if (top || bottom) out = out.index_select(2, mirror_indices(x.size(2), top, bottom));
  if (left || right) out = out.index_select(3, mirror_indices(x.size(3), left, right));
  return out;
}

ImageBatch conv2d(const ImageBatch& x, const Conv2DSpec& spec, const torch::Tensor& weight,
                  const torch::Tensor& bias) {
  if (spec.kernel < 1 || spec.kernel % 2 == 0) {
    throw std::invalid_argument("conv2d: kernel size must be odd, got " +
                                std::to_string(spec.kernel));
  }
  require_channels(x, spec.in_channels, "conv2d");
  const int r = spec.radius();
  torch::Tensor padded = x;
  int zero_pad = 0;
  if (r > 0) {
    if (spec.padding == Padding::same_reflect) {
      padded = reflect_pad(x, r, r, r, r);
    } else {
      zero_pad = r;
    }
  }
  return torch::conv2d(padded, weight, spec.has_bias ? bias : torch::Tensor{}, spec.stride,
                       /*padding=*/zero_pad, /*dilation=*/spec.dilation, /*groups=*/spec.groups);
}

torch::Tensor global_avg_pool(const ImageBatch& x) {
  require_rank4(x, "global_avg_pool");
  return x.mean({2, 3}, /*keepdim=*/true);
}

torch::Tensor softmax_rows(const torch::Tensor& m) {
  if (m.dim() != 2 && m.dim() != 3) {
    throw ShapeError("softmax_rows: expected a matrix or a batch of matrices");
  }
  if (torch::isnan(m).any().item<bool>()) {
    throw std::domain_error("softmax_rows: NaN input");
  }
  return torch::softmax(m, -1);
}

ImageBatch bilinear_upsample(const ImageBatch& x, int factor) {
  if (factor < 2) {
    throw std::invalid_argument("bilinear_upsample: factor must be >= 2, got " +
                                std::to_string(factor));
  }
  require_rank4(x, "bilinear_upsample");
  namespace F = torch::nn::functional;
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .size(std::vector<std::int64_t>{x.size(2) * factor,
                                                               x.size(3) * factor})
                               .mode(torch::kBilinear)
                               .align_corners(false));
}

torch::Tensor apply_activation(const torch::Tensor& x, Activation activation) {
  switch (activation) {
    case Activation::relu:
      return torch::relu(x);
    case Activation::sigmoid:
      return torch::sigmoid(x);
    case Activation::none:
      break;
  }
  return x;
}

Conv2dImpl::Conv2dImpl(const Conv2DSpec& spec) : spec_(spec) {
  if (spec.kernel < 1 || spec.kernel % 2 == 0) {
    throw std::invalid_argument("Conv2d: kernel size must be odd");
  }
  if (spec.stride < 1) throw std::invalid_argument("Conv2d: stride must be positive");
  if (spec.in_channels < 1 || spec.out_channels < 1 || spec.groups < 1 ||
      spec.in_channels % spec.groups || spec.out_channels % spec.groups) {
    throw std::invalid_argument("Conv2d: channel counts must be positive multiples of groups");
  }
  weight = register_parameter(
      "weight",
      torch::zeros({spec.out_channels, spec.in_channels / spec.groups, spec.kernel, spec.kernel}));
  if (spec.has_bias) bias = register_parameter("bias", torch::zeros({spec.out_channels}));
}

ImageBatch Conv2dImpl::forward(const ImageBatch& x) { return conv2d(x, spec_, weight, bias); }

std::int64_t Conv2dImpl::fan_in() const {
  return static_cast<std::int64_t>(spec_.in_channels / spec_.groups) * spec_.kernel * spec_.kernel;
}

NormActImpl::NormActImpl(int channels, const NormActSpec& spec) : spec_(spec) {
  if (spec.norm == NormKind::batch_norm) {
    norm_ = register_module(
        "bn", torch::nn::BatchNorm2d(
                  torch::nn::BatchNorm2dOptions(channels).momentum(0.1).eps(1e-5)));
  }
}

torch::Tensor NormActImpl::forward(const torch::Tensor& x) {
  return apply_activation(norm_ ? norm_->forward(x) : x, spec_.activation);
}

}  // namespace cspcn
