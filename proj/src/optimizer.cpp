#include "cspcn/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace cspcn {

OptimizerState make_optimizer_state(const torch::nn::Module& module) {
  OptimizerState state;
  for (const auto& item : module.named_parameters(true)) {
    state.slots.push_back({item.key(), torch::zeros_like(item.value()).detach(),
                           torch::zeros_like(item.value()).detach()});
  }
  return state;
}

void adam_update(torch::nn::Module& module, OptimizerState& state, double lr,
                 const AdamHyper& hyper) {
  auto params = module.named_parameters(true);
  if (params.size() != state.slots.size()) {
    throw std::invalid_argument("optimizer state does not match the module's parameters");
  }
  state.step += 1;
  state.lr = lr;
  const auto t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(hyper.beta1, t);
  const double correction2 = 1.0 - std::pow(hyper.beta2, t);

  torch::NoGradGuard no_grad;
  std::size_t i = 0;
  for (const auto& item : params) {
    auto& slot = state.slots[i++];
    if (slot.name != item.key()) {
      throw std::invalid_argument("optimizer slot '" + slot.name + "' does not match parameter '" +
                                  item.key() + "'");
    }
    auto& param = item.value();
    const auto& grad = param.grad();
    if (!grad.defined()) continue;
    slot.first_moment.mul_(hyper.beta1).add_(grad, 1.0 - hyper.beta1);
    slot.second_moment.mul_(hyper.beta2).addcmul_(grad, grad, 1.0 - hyper.beta2);
    const auto denom = (slot.second_moment / correction2).sqrt_().add_(hyper.eps);
    param.addcdiv_(slot.first_moment, denom, -lr / correction1);
  }
}

}  // namespace cspcn
