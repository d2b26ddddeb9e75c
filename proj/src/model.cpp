#include "cspcn/model.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <cmath>

namespace cspcn {

StageImpl::StageImpl(const ModelConfig& config, StageKind kind) : kind_(kind) {
  const int c = config.base_width;
  const int img = config.image_channels;
  const int r = config.dab_reduction;
  const int k = config.sab_kernel;
  embed = register_module("embed", Conv2d(Conv2DSpec{img, c, 3}));

  const bool wants_mlfp = kind == StageKind::cm2s || kind == StageKind::mlfp || kind == StageKind::s3;
  const bool wants_cascade = kind == StageKind::s3 || kind == StageKind::s3_aed_cascade;
  const bool parallel = kind == StageKind::s3 || kind == StageKind::s3_aed_gap ||
                        kind == StageKind::s3_aed_cascade;
  if (wants_mlfp) {
    mlfp = register_module("mlfp", MLFP(c, config.mlfp_dilations, r, config.mlfp_batch_norm, k));
  }
  if (stage_has_aed(kind)) aed = register_module("aed", AED(c, img, config.aed_scales, r, k));
  if (kind == StageKind::cm2s && config.use_mcac) {
    mcac = register_module("mcac", MCAC(c, config.mcac_dilations, config.mcac_temperature));
  }
  if (wants_cascade) cascade = register_module("cascade", Cascade(c, config.cascade_dabs, r, k));
  if (kind == StageKind::s3_aed_gap) gap_gate = register_module("gap_gate", GapGate(c));
  if (parallel) fuse = register_module("fuse", Conv2d(Conv2DSpec{c, c, 3}));

  head = register_module("head", Conv2d(Conv2DSpec{c, img, 3}));
  head->zero_init = true;
}

StageImpl::Output StageImpl::forward(const ImageBatch& x0, const ImageBatch& previous) {
  torch::Tensor e = embed(x0);
  if (previous.defined()) e = e + previous;

  Output out;
  switch (kind_) {
    case StageKind::cm2s: {
      auto a = aed(mlfp(e));
      out.features = mcac ? mcac(a.features) : a.features;
      out.decoded = a.decoded;
      break;
    }
    case StageKind::aed: {
      auto a = aed(e);
      out.features = a.features;
      out.decoded = a.decoded;
      break;
    }
    case StageKind::mlfp:
      out.features = mlfp(e);
      break;
    case StageKind::s3:
      out.features = fuse(mlfp(e) + cascade(e));
      break;
    case StageKind::s3_aed_gap: {
      auto a = aed(e);
      out.features = fuse(a.features + gap_gate(e));
      out.decoded = a.decoded;
      break;
    }
    case StageKind::s3_aed_cascade: {
      auto a = aed(e);
      out.features = fuse(a.features + cascade(e));
      out.decoded = a.decoded;
      break;
    }
  }
  out.image = head(out.features) + x0;
  return out;
}

CSPCNImpl::CSPCNImpl(const ModelConfig& config) : config_(config) {
  validate(config);
  const auto kinds = config.layout();
  for (std::size_t i = 0; i < kinds.size(); ++i) {
    stages.push_back(register_module("stage" + std::to_string(i + 1), Stage(config, kinds[i])));
  }
}

ForwardResult CSPCNImpl::forward(const ImageBatch& x0) {
  require_channels(x0, config_.image_channels, "CSPCN");
  const auto multiple = config_.divisibility();
  if (x0.size(2) % multiple != 0 || x0.size(3) % multiple != 0) {
    throw ShapeError("CSPCN: spatial dims must be multiples of " + std::to_string(multiple));
  }
  ForwardResult result;
  torch::Tensor previous;
  for (auto& stage : stages) {
    auto out = stage(x0, previous);
    result.stage_outputs.push_back(out.image);
    if (out.decoded.defined()) result.decoded_outputs.push_back(out.decoded);
    previous = out.features;
  }
  return result;
}

void initialize_parameters(torch::nn::Module& module, std::uint64_t seed) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  torch::NoGradGuard no_grad;
  for (const auto& child : module.modules(/*include_self=*/true)) {
    if (auto conv = std::dynamic_pointer_cast<Conv2dImpl>(child)) {
      if (conv->zero_init) {
        conv->weight.zero_();
      } else {
        const double bound = 1.0 / std::sqrt(static_cast<double>(conv->fan_in()));
        conv->weight.uniform_(-bound, bound, gen);
      }
      if (conv->bias.defined()) conv->bias.zero_();
    } else if (auto bn = std::dynamic_pointer_cast<torch::nn::BatchNorm2dImpl>(child)) {
      bn->weight.fill_(1.0);
      bn->bias.zero_();
      bn->running_mean.zero_();
      bn->running_var.fill_(1.0);
      bn->num_batches_tracked.zero_();
    } else if (auto mcac = std::dynamic_pointer_cast<MCACImpl>(child)) {
      if (mcac->temperature.defined()) mcac->temperature.fill_(1.0);
    }
  }
}

CSPCN make_model(const ModelConfig& config, std::uint64_t seed, torch::Dtype dtype) {
  CSPCN model(config);
  initialize_parameters(*model, seed);
  model->to(dtype);
  return model;
}

ParameterStore init_parameters(const ModelConfig& config, std::uint64_t seed) {
  auto model = make_model(config, seed);
  return ParameterStore::from_module(*model);
}

Padded pad_to_multiple(const ImageBatch& x, int multiple) {
  if (multiple < 1) throw std::invalid_argument("pad_to_multiple: multiple must be >= 1");
  require_rank4(x, "pad_to_multiple");
  const auto h = x.size(2);
  const auto w = x.size(3);
  if (h < 1 || w < 1) throw ShapeError("pad_to_multiple: image is smaller than 1x1");
  const auto round_up = [multiple](std::int64_t n) { return (n + multiple - 1) / multiple * multiple; };
  const auto ph = round_up(h) - h;
  const auto pw = round_up(w) - w;
  if (ph == 0 && pw == 0) return {x, CropSpec{h, w, true}};
  return {reflect_pad(x, 0, static_cast<int>(ph), 0, static_cast<int>(pw)), CropSpec{h, w, false}};
}

ImageBatch crop(const ImageBatch& x, const CropSpec& spec) {
  if (spec.empty) return x;
  return x.slice(2, 0, spec.height).slice(3, 0, spec.width);
}

ImageBatch denoise(CSPCN& model, const ImageBatch& x0) {
  const bool was_training = model->is_training();
  model->eval();
  torch::NoGradGuard no_grad;
  const auto dtype = model->parameters().front().scalar_type();
  const auto padded = pad_to_multiple(x0.to(dtype), model->config().divisibility());
  auto result = model->forward(padded.image);
  if (was_training) model->train();
  return crop(result.stage_outputs.back(), padded.crop).clamp(0.0, 1.0);
}

}  // namespace cspcn
