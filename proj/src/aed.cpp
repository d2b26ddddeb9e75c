#include "cspcn/aed.hpp"

#include <algorithm>

namespace cspcn {

namespace {

torch::Tensor run_level(AEDImpl::Level& level, const torch::Tensor& x) {
  return torch::relu(level.conv_b(torch::relu(level.conv_a(x))));
}

}  // namespace

AEDImpl::AEDImpl(int channels, int image_channels, int scales, int reduction, int spatial_kernel)
    : channels_(channels), scales_(scales) {
  if (scales < 2) throw std::invalid_argument("AED: at least two scales are required");
  const auto name = [](const char* prefix, int level) {
    return std::string(prefix) + std::to_string(level);
  };
  for (int l = 0; l < scales; ++l) {
    const int width = level_width(l);
    Level level;
    level.conv_a = register_module(name("enc_a", l), Conv2d(Conv2DSpec{width, width, 3}));
    level.conv_b = register_module(name("enc_b", l), Conv2d(Conv2DSpec{width, width, 3}));
    encoder.push_back(level);
    if (l + 1 < scales) {
      Conv2DSpec down{width, level_width(l + 1), 3};
      down.stride = 2;
      downsample.push_back(register_module(name("down", l), Conv2d(down)));
      skip_dabs.push_back(
          register_module(name("skip_dab", l), DAB(width, reduction, spatial_kernel)));
    }
  }
  for (int l = 0; l + 1 < scales; ++l) {
    const int width = level_width(l);
    reduce.push_back(
        register_module(name("reduce", l), Conv2d(Conv2DSpec{level_width(l + 1), width, 1})));
    Level level;
    level.conv_a = register_module(name("dec_a", l), Conv2d(Conv2DSpec{width, width, 3}));
    level.conv_b = register_module(name("dec_b", l), Conv2d(Conv2DSpec{width, width, 3}));
    decoder.push_back(level);
  }
  decode_head =
      register_module("decode_head", Conv2d(Conv2DSpec{channels, image_channels, 1}));
}

int AEDImpl::level_width(int level) const {
  return std::min(channels_ << level, 4 * channels_);
}

AEDImpl::Output AEDImpl::forward(const ImageBatch& x) {
  require_channels(x, channels_, "AED");
  const std::int64_t multiple = std::int64_t{1} << (scales_ - 1);
  if (x.size(2) % multiple != 0 || x.size(3) % multiple != 0) {
    throw ShapeError("AED: spatial dims " + std::to_string(x.size(2)) + "x" +
                     std::to_string(x.size(3)) + " are not multiples of " +
                     std::to_string(multiple) + "; pad the input first");
  }

  Output out;
  std::vector<torch::Tensor> skips;
  torch::Tensor y = x;
  for (int l = 0; l < scales_; ++l) {
    y = run_level(encoder[l], y);
    out.encoder_dims.emplace_back(y.size(2), y.size(3));
    if (l + 1 < scales_) {
      skips.push_back(skip_dabs[l](y));
      y = downsample[l](y);
    }
  }
  for (int l = scales_ - 2; l >= 0; --l) {
    y = reduce[l](bilinear_upsample(y, 2)) + skips[l];
    y = run_level(decoder[l], y);
    out.decoder_dims.emplace_back(y.size(2), y.size(3));
  }
  out.decoded = decode_head(y);
  out.features = y;
  return out;
}

}  // namespace cspcn
