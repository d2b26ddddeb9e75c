#pragma once

#include <torch/torch.h>

#include <stdexcept>
#include <string>

namespace cspcn {

/// Rank-4 (batch, channels, height, width) array; values nominally in [0,1].
using ImageBatch = torch::Tensor;

/// Thrown when an operation receives arrays of the wrong rank or shape.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Padding { same_reflect, same_zero };

struct Conv2DSpec {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  int dilation = 1;
  int groups = 1;
  bool has_bias = true;
  Padding padding = Padding::same_reflect;
  int stride = 1;

  int radius() const { return dilation * (kernel - 1) / 2; }
};

enum class NormKind { batch_norm, none };
enum class Activation { relu, sigmoid, none };

struct NormActSpec {
  NormKind norm = NormKind::none;
  Activation activation = Activation::none;
};

/// Mirror padding without edge repetition, valid for any pad width (the
/// mirror pattern repeats when the pad exceeds the plane).
torch::Tensor reflect_pad(const torch::Tensor& x, int top, int bottom, int left, int right);

/// "Same" 2D convolution: output dims are the input dims divided by the
/// stride. `bias` may be undefined when the spec has none.
ImageBatch conv2d(const ImageBatch& x, const Conv2DSpec& spec, const torch::Tensor& weight,
                  const torch::Tensor& bias);

/// Per-plane arithmetic mean, shape (batch, channels, 1, 1).
torch::Tensor global_avg_pool(const ImageBatch& x);

/// Row-wise softmax over the last dimension. Accepts rank 2 or a batch of
/// matrices (rank 3). Rejects NaN input.
torch::Tensor softmax_rows(const torch::Tensor& m);

/// Bilinear upsampling with the half-pixel (align_corners = false) convention.
ImageBatch bilinear_upsample(const ImageBatch& x, int factor);

torch::Tensor apply_activation(const torch::Tensor& x, Activation activation);

void require_rank4(const torch::Tensor& x, const char* what);
void require_channels(const torch::Tensor& x, std::int64_t channels, const char* what);

/// A learnable convolution that owns its "weight" and "bias" parameters.
class Conv2dImpl : public torch::nn::Module {
 public:
  explicit Conv2dImpl(const Conv2DSpec& spec);

  ImageBatch forward(const ImageBatch& x);

  const Conv2DSpec& spec() const { return spec_; }
  std::int64_t fan_in() const;

  torch::Tensor weight;
  torch::Tensor bias;
  // Residual-terminal projections start at zero instead of fan-in scaled noise.
  bool zero_init = false;

 private:
  Conv2DSpec spec_;
};
TORCH_MODULE(Conv2d);

/// Optional batch norm followed by an optional activation.
class NormActImpl : public torch::nn::Module {
 public:
  NormActImpl(int channels, const NormActSpec& spec);

  torch::Tensor forward(const torch::Tensor& x);

  const NormActSpec& spec() const { return spec_; }

 private:
  NormActSpec spec_;
  torch::nn::BatchNorm2d norm_{nullptr};
};
TORCH_MODULE(NormAct);

}  // namespace cspcn
