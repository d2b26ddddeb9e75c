#pragma once

#include <torch/torch.h>

#include <string>
#include <utility>
#include <vector>

namespace cspcn {

/// Named, shaped arrays in a fixed order: the learnable parameters of a model
/// followed by its floating-point buffers (batch-norm running statistics).
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    torch::Tensor value;
    bool learnable = true;
  };

  ParameterStore() = default;

  /// Snapshot of a module's state (detached copies).
  static ParameterStore from_module(const torch::nn::Module& module);

  /// Copies the store into the module. Names and shapes must match exactly.
  void load_into(torch::nn::Module& module) const;

  void add(std::string name, torch::Tensor value, bool learnable = true);
  const Entry* find(std::string_view name) const;
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::int64_t learnable_elements() const;

  bool bitwise_equal(const ParameterStore& other) const;

 private:
  std::vector<Entry> entries_;
};

}  // namespace cspcn
