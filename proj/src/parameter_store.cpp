#include "cspcn/parameter_store.hpp"

#include <cstring>
#include <map>
#include <stdexcept>

namespace cspcn {

namespace {

// Batch-norm step counters are bookkeeping, and Module::to(dtype) may have
// turned them into floats.
bool is_state_buffer(const std::string& name, const torch::Tensor& value) {
  return value.is_floating_point() && !name.ends_with("num_batches_tracked");
}

}  // namespace

ParameterStore ParameterStore::from_module(const torch::nn::Module& module) {
  ParameterStore store;
  for (const auto& item : module.named_parameters(/*recurse=*/true)) {
    store.add(item.key(), item.value().detach().clone(), true);
  }
  for (const auto& item : module.named_buffers(/*recurse=*/true)) {
    if (!is_state_buffer(item.key(), item.value())) continue;
    store.add(item.key(), item.value().detach().clone(), false);
  }
  return store;
}

void ParameterStore::load_into(torch::nn::Module& module) const {
  std::map<std::string, torch::Tensor> targets;
  for (const auto& item : module.named_parameters(true)) targets.emplace(item.key(), item.value());
  for (const auto& item : module.named_buffers(true)) {
    if (is_state_buffer(item.key(), item.value())) targets.emplace(item.key(), item.value());
  }
  if (targets.size() != entries_.size()) {
    for (const auto& [name, _] : targets) {
      if (!find(name)) throw std::invalid_argument("parameter store is missing '" + name + "'");
    }
  }
  torch::NoGradGuard no_grad;
  for (const auto& entry : entries_) {
    const auto it = targets.find(entry.name);
    if (it == targets.end()) {
      throw std::invalid_argument("unexpected parameter '" + entry.name + "'");
    }
    if (it->second.sizes() != entry.value.sizes()) {
      throw std::invalid_argument("shape mismatch for '" + entry.name + "'");
    }
    it->second.copy_(entry.value);
  }
}

void ParameterStore::add(std::string name, torch::Tensor value, bool learnable) {
  if (find(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
  entries_.push_back({std::move(name), std::move(value), learnable});
}

const ParameterStore::Entry* ParameterStore::find(std::string_view name) const {
  for (const auto& entry : entries_) {
    if (entry.name == name) return &entry;
  }
  return nullptr;
}

std::int64_t ParameterStore::learnable_elements() const {
  std::int64_t total = 0;
  for (const auto& entry : entries_) {
    if (entry.learnable) total += entry.value.numel();
  }
  return total;
}

bool ParameterStore::bitwise_equal(const ParameterStore& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& a = entries_[i];
    const auto& b = other.entries_[i];
    if (a.name != b.name || a.learnable != b.learnable || a.value.sizes() != b.value.sizes() ||
        a.value.scalar_type() != b.value.scalar_type()) {
      return false;
    }
    const auto ca = a.value.contiguous();
    const auto cb = b.value.contiguous();
    if (std::memcmp(ca.data_ptr(), cb.data_ptr(), ca.nbytes()) != 0) return false;
  }
  return true;
}

}  // namespace cspcn
