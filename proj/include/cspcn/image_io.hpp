#pragma once

#include <filesystem>
#include <stdexcept>

#include "cspcn/numerics.hpp"

namespace cspcn {

class ImageIOError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Image {
  ImageBatch pixels;  // 1 x C x H x W, float64, values in [0,1]
  int bit_depth = 8;  // 8 or 16
};

/// Reads an 8- or 16-bit PNG. Gray images give C = 1, color images C = 3
/// (RGB order); alpha is dropped.
Image read_png(const std::filesystem::path& path);

/// Clips to [0,1], quantizes with round-to-nearest and writes an 8- or 16-bit
/// PNG. Expects a single image (batch 1) with 1 or 3 channels.
void write_png(const std::filesystem::path& path, const ImageBatch& pixels, int bit_depth = 8);

/// Converts between gray and RGB. Gray uses BT.601 luma weights; gray to RGB
/// replicates the plane.
ImageBatch convert_channels(const ImageBatch& x, int channels);

/// Rounds to the 1/(2^bits - 1) grid after clipping, as a PNG round trip would.
ImageBatch quantize(const ImageBatch& x, int bit_depth = 8);

}  // namespace cspcn
