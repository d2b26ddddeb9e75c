#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <string>

#include <torch/torch.h>
#include <unistd.h>

namespace cspcn::test {

/// A fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("cspcn_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline torch::Tensor uniform(std::vector<std::int64_t> shape, std::uint64_t seed,
                             double lo = 0.0, double hi = 1.0) {
  auto gen = at::detail::createCPUGenerator(seed);
  return at::empty(shape, torch::dtype(torch::kFloat64)).uniform_(lo, hi, gen);
}

inline torch::Tensor normal(std::vector<std::int64_t> shape, std::uint64_t seed) {
  auto gen = at::detail::createCPUGenerator(seed);
  return at::empty(shape, torch::dtype(torch::kFloat64)).normal_(0.0, 1.0, gen);
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

inline double max_diff(const torch::Tensor& a, const torch::Tensor& b) {
  return (a.to(torch::kFloat64) - b.to(torch::kFloat64)).abs().max().item<double>();
}

}  // namespace cspcn::test
