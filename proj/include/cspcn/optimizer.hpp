#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace cspcn {

/// Adam moments for every learnable parameter, in parameter order.
struct OptimizerState {
  struct Slot {
    std::string name;
    torch::Tensor first_moment;
    torch::Tensor second_moment;
  };
  std::vector<Slot> slots;
  std::int64_t step = 0;  // number of updates applied so far
  double lr = 0.0;        // rate used by the most recent update
};

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Zero moments shaped like the module's learnable parameters.
OptimizerState make_optimizer_state(const torch::nn::Module& module);

/// One bias-corrected Adam update of every parameter with a gradient:
///   m <- b1 m + (1 - b1) g,  v <- b2 v + (1 - b2) g^2,
///   p <- p - lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps).
void adam_update(torch::nn::Module& module, OptimizerState& state, double lr,
                 const AdamHyper& hyper);

}  // namespace cspcn
