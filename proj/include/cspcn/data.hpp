#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cspcn/numerics.hpp"

namespace cspcn {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ColorMode { grayscale, color };

struct NoiseSpec {
  double sigma = 25.0;  // 0-255 scale
  ColorMode color_mode = ColorMode::color;
  std::uint64_t seed = 0;
};

/// clean + N(0, (sigma/255)^2), i.i.d. per element, unclipped.
ImageBatch add_awgn(const ImageBatch& clean, const NoiseSpec& spec);

struct CropBox {
  std::int64_t top = 0;
  std::int64_t left = 0;
};

/// `count` uniformly random patch origins inside an height x width plane.
std::vector<CropBox> sample_crops(std::int64_t height, std::int64_t width, int patch, int count,
                                  std::uint64_t seed);

/// Crops the same boxes from every image in a batch-of-one (N must be 1).
ImageBatch crop_patches(const ImageBatch& img, int patch, const std::vector<CropBox>& boxes);

/// `count` random patch x patch crops, stacked along the batch axis.
ImageBatch extract_patches(const ImageBatch& img, int patch, int count, std::uint64_t seed);

/// Same random crops from both images of a pair.
std::pair<ImageBatch, ImageBatch> extract_patch_pairs(const ImageBatch& clean,
                                                      const ImageBatch& noisy, int patch,
                                                      int count, std::uint64_t seed);

/// Non-overlapping tiles in raster order (remainders are dropped).
ImageBatch extract_grid_patches(const ImageBatch& img, int patch);

struct FlipDecision {
  bool horizontal = false;
  bool vertical = false;
};

FlipDecision draw_flips(std::uint64_t seed);
ImageBatch apply_flips(const ImageBatch& x, const FlipDecision& flips);

/// Applies one seeded flip decision to both images.
std::pair<ImageBatch, ImageBatch> augment(const std::pair<ImageBatch, ImageBatch>& pair,
                                          std::uint64_t seed);

enum class DatasetMode { synthetic, paired };

struct DatasetEntry {
  std::string name;
  std::filesystem::path clean;
  std::optional<std::filesystem::path> noisy;
  bool operator==(const DatasetEntry&) const = default;
};

struct DatasetIndex {
  std::vector<DatasetEntry> entries;
  DatasetMode mode = DatasetMode::synthetic;

  bool operator==(const DatasetIndex&) const = default;
};

/// Synthetic mode lists the PNGs directly under `root` (or under
/// `root/clean` when present). Paired mode matches `root/clean` and
/// `root/noisy` by file name. Entries are sorted lexicographically.
DatasetIndex index_dataset(const std::filesystem::path& root, DatasetMode mode);

/// Derives an independent stream seed from a base seed and stream labels.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

}  // namespace cspcn
