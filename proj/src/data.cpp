#include "cspcn/data.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <algorithm>
#include <map>

namespace cspcn {

namespace fs = std::filesystem;

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Modulo reduction of a 64-bit draw; the bias is below 2^-40 for any image size.
std::int64_t uniform_below(std::mt19937_64& rng, std::int64_t n) {
  return static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(n));
}

bool is_png(const fs::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png";
}

std::vector<fs::path> list_pngs(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& item : fs::directory_iterator(dir)) {
    if (item.is_regular_file() && is_png(item.path())) files.push_back(item.path());
  }
  std::sort(files.begin(), files.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });
  return files;
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return splitmix64(splitmix64(splitmix64(seed) ^ a) ^ b);
}

ImageBatch add_awgn(const ImageBatch& clean, const NoiseSpec& spec) {
  if (!(spec.sigma >= 0)) throw std::invalid_argument("add_awgn: sigma must be >= 0");
  if (spec.sigma == 0) return clean.clone();
  auto gen = at::make_generator<at::CPUGeneratorImpl>(spec.seed);
  auto noise = at::randn(clean.sizes(), gen, torch::TensorOptions().dtype(torch::kFloat64));
  return clean + (noise * (spec.sigma / 255.0)).to(clean.scalar_type());
}

std::vector<CropBox> sample_crops(std::int64_t height, std::int64_t width, int patch, int count,
                                  std::uint64_t seed) {
  if (patch < 1 || height < patch || width < patch) {
    throw DataError("image " + std::to_string(height) + "x" + std::to_string(width) +
                    " is smaller than the patch size " + std::to_string(patch));
  }
  std::mt19937_64 rng(seed);
  std::vector<CropBox> boxes;
  boxes.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    CropBox box;
    box.top = uniform_below(rng, height - patch + 1);
    box.left = uniform_below(rng, width - patch + 1);
    boxes.push_back(box);
  }
  return boxes;
}

ImageBatch crop_patches(const ImageBatch& img, int patch, const std::vector<CropBox>& boxes) {
  require_rank4(img, "crop_patches");
  if (img.size(0) != 1) throw ShapeError("crop_patches: expects a single image");
  std::vector<torch::Tensor> crops;
  crops.reserve(boxes.size());
  for (const auto& box : boxes) {
    if (box.top < 0 || box.left < 0 || box.top + patch > img.size(2) ||
        box.left + patch > img.size(3)) {
      throw DataError("crop box out of bounds");
    }
    crops.push_back(img.slice(2, box.top, box.top + patch).slice(3, box.left, box.left + patch));
  }
  return torch::cat(crops, 0);
}

ImageBatch extract_patches(const ImageBatch& img, int patch, int count, std::uint64_t seed) {
  require_rank4(img, "extract_patches");
  return crop_patches(img, patch, sample_crops(img.size(2), img.size(3), patch, count, seed));
}

std::pair<ImageBatch, ImageBatch> extract_patch_pairs(const ImageBatch& clean,
                                                      const ImageBatch& noisy, int patch,
                                                      int count, std::uint64_t seed) {
  require_rank4(clean, "extract_patch_pairs");
  if (clean.sizes() != noisy.sizes()) {
    throw ShapeError("extract_patch_pairs: clean and noisy shapes differ");
  }
  const auto boxes = sample_crops(clean.size(2), clean.size(3), patch, count, seed);
  return {crop_patches(clean, patch, boxes), crop_patches(noisy, patch, boxes)};
}

ImageBatch extract_grid_patches(const ImageBatch& img, int patch) {
  require_rank4(img, "extract_grid_patches");
  if (patch < 1 || img.size(2) < patch || img.size(3) < patch) {
    throw DataError("image is smaller than the patch size");
  }
  std::vector<CropBox> boxes;
  for (std::int64_t top = 0; top + patch <= img.size(2); top += patch) {
    for (std::int64_t left = 0; left + patch <= img.size(3); left += patch) {
      boxes.push_back({top, left});
    }
  }
  return crop_patches(img, patch, boxes);
}

FlipDecision draw_flips(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  FlipDecision flips;
  flips.horizontal = (rng() >> 63) != 0;
  flips.vertical = (rng() >> 63) != 0;
  return flips;
}

ImageBatch apply_flips(const ImageBatch& x, const FlipDecision& flips) {
  require_rank4(x, "apply_flips");
  torch::Tensor out = x;
  if (flips.horizontal) out = out.flip({3});
  if (flips.vertical) out = out.flip({2});
  return out;
}

std::pair<ImageBatch, ImageBatch> augment(const std::pair<ImageBatch, ImageBatch>& pair,
                                          std::uint64_t seed) {
  if (pair.first.sizes() != pair.second.sizes()) {
    throw ShapeError("augment: clean and noisy shapes differ");
  }
  const auto flips = draw_flips(seed);
  return {apply_flips(pair.first, flips), apply_flips(pair.second, flips)};
}

DatasetIndex index_dataset(const fs::path& root, DatasetMode mode) {
  if (!fs::is_directory(root)) throw DataError("dataset directory not found: " + root.string());
  DatasetIndex index;
  index.mode = mode;
  if (mode == DatasetMode::synthetic) {
    auto files = list_pngs(root);
    if (files.empty() && fs::is_directory(root / "clean")) files = list_pngs(root / "clean");
    for (const auto& f : files) index.entries.push_back({f.filename().string(), f, std::nullopt});
  } else {
    const auto clean_dir = root / "clean";
    const auto noisy_dir = root / "noisy";
    if (!fs::is_directory(clean_dir) || !fs::is_directory(noisy_dir)) {
      throw DataError("paired dataset needs clean/ and noisy/ under " + root.string());
    }
    std::map<std::string, fs::path> noisy;
    for (const auto& f : list_pngs(noisy_dir)) noisy.emplace(f.filename().string(), f);
    for (const auto& f : list_pngs(clean_dir)) {
      const auto name = f.filename().string();
      const auto it = noisy.find(name);
      if (it == noisy.end()) throw DataError("no noisy counterpart for '" + name + "'");
      index.entries.push_back({name, f, it->second});
      noisy.erase(it);
    }
    if (!noisy.empty()) {
      throw DataError("no clean counterpart for '" + noisy.begin()->first + "'");
    }
  }
  if (index.entries.empty()) throw DataError("no PNG images found under " + root.string());
  return index;
}

}  // namespace cspcn
