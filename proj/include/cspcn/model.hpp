#pragma once

#include <cstdint>
#include <vector>

#include "cspcn/aed.hpp"
#include "cspcn/blocks.hpp"
#include "cspcn/config.hpp"
#include "cspcn/mcac.hpp"
#include "cspcn/parameter_store.hpp"

namespace cspcn {

struct ForwardResult {
  std::vector<ImageBatch> stage_outputs;    // one per stage
  std::vector<ImageBatch> decoded_outputs;  // one per encoder-decoder stage
};

/// One progressive stage: shallow embedding (plus the previous stage's
/// features), a body chosen by StageKind, and a zero-initialized image head
/// whose output is added to the degraded input.
class StageImpl : public torch::nn::Module {
 public:
  StageImpl(const ModelConfig& config, StageKind kind);

  struct Output {
    ImageBatch features;
    ImageBatch image;
    ImageBatch decoded;  // undefined when the body has no encoder-decoder
  };

  /// `previous` may be undefined (first stage).
  Output forward(const ImageBatch& x0, const ImageBatch& previous);

  StageKind kind() const { return kind_; }

  Conv2d embed{nullptr};
  MLFP mlfp{nullptr};
  AED aed{nullptr};
  MCAC mcac{nullptr};
  Cascade cascade{nullptr};
  GapGate gap_gate{nullptr};
  Conv2d fuse{nullptr};
  Conv2d head{nullptr};

 private:
  StageKind kind_;
};
TORCH_MODULE(Stage);

/// The progressive three-stage denoiser (stage count and bodies per config).
class CSPCNImpl : public torch::nn::Module {
 public:
  explicit CSPCNImpl(const ModelConfig& config);

  /// Inputs must already be padded to config().divisibility().
  ForwardResult forward(const ImageBatch& x0);

  const ModelConfig& config() const { return config_; }

  std::vector<Stage> stages;

 private:
  ModelConfig config_;
};
TORCH_MODULE(CSPCN);

/// Fan-in scaled uniform init for every convolution (bounds +-1/sqrt(fan_in)),
/// zero biases, zeros for residual-terminal projections, identity batch norm.
/// Deterministic in `seed`.
void initialize_parameters(torch::nn::Module& module, std::uint64_t seed);

/// Builds and initializes a model in the requested floating-point dtype.
CSPCN make_model(const ModelConfig& config, std::uint64_t seed,
                 torch::Dtype dtype = torch::kFloat32);

ParameterStore init_parameters(const ModelConfig& config, std::uint64_t seed);

struct CropSpec {
  std::int64_t height = 0;
  std::int64_t width = 0;
  bool empty = true;
};

struct Padded {
  ImageBatch image;
  CropSpec crop;
};

/// Reflect-pads bottom/right up to the next multiple.
Padded pad_to_multiple(const ImageBatch& x, int multiple);
ImageBatch crop(const ImageBatch& x, const CropSpec& spec);

/// Eval-mode inference on any spatial size: pad, forward, crop, clip to [0,1].
ImageBatch denoise(CSPCN& model, const ImageBatch& x0);

}  // namespace cspcn
