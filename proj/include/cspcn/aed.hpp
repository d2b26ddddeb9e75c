#pragma once

#include <utility>
#include <vector>

#include "cspcn/blocks.hpp"

namespace cspcn {

/// Attention encoder-decoder.
///
/// The encoder has `scales` levels; each runs two 3x3 conv + ReLU pairs and all
/// but the deepest end in a stride-2 convolution that doubles the width (capped
/// at 4C). Every skip connection passes through one DAB and is added to the
/// decoder path, which upsamples bilinearly, reduces channels with a 1x1 conv
/// and applies two 3x3 conv + ReLU pairs. A 1x1 head maps the full-resolution
/// decoder features to an image for reconstruction supervision.
class AEDImpl : public torch::nn::Module {
 public:
  AEDImpl(int channels, int image_channels, int scales, int reduction, int spatial_kernel = 7);

  struct Output {
    ImageBatch features;
    ImageBatch decoded;
    // (H, W) at the end of every encoder level, shallowest first. The last
    // entry is the bottleneck.
    std::vector<std::pair<std::int64_t, std::int64_t>> encoder_dims;
    // (H, W) produced by every decoder level, deepest first.
    std::vector<std::pair<std::int64_t, std::int64_t>> decoder_dims;
  };

  Output forward(const ImageBatch& x);

  int scales() const { return scales_; }
  int level_width(int level) const;
  int skip_count() const { return static_cast<int>(skip_dabs.size()); }

  struct Level {
    Conv2d conv_a{nullptr};
    Conv2d conv_b{nullptr};
  };
  std::vector<Level> encoder;
  std::vector<Conv2d> downsample;
  std::vector<DAB> skip_dabs;
  std::vector<Conv2d> reduce;  // indexed by target level
  std::vector<Level> decoder;  // indexed by level
  Conv2d decode_head{nullptr};

 private:
  int channels_;
  int scales_;
};
TORCH_MODULE(AED);

}  // namespace cspcn
