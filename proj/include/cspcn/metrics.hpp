#pragma once

#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "cspcn/numerics.hpp"

namespace cspcn {

/// Returned by psnr() for identical inputs.
inline constexpr double kInfinitePsnr = std::numeric_limits<double>::infinity();

struct MetricOptions {
  bool quantize_8bit = false;  // round both inputs to 8-bit levels first
  bool luma_only = false;      // measure on BT.601 luma instead of RGB
};

/// 10 log10(1 / MSE) over all elements, peak 1.0.
double psnr(const ImageBatch& pred, const ImageBatch& gt, const MetricOptions& options = {});

/// Single-scale SSIM: 11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03,
/// dynamic range 1, averaged over valid windows, channels and batch.
double ssim(const ImageBatch& pred, const ImageBatch& gt, const MetricOptions& options = {});

struct MetricRow {
  std::string name;
  double psnr_db = 0.0;
  double ssim = 0.0;
};

struct MetricReport {
  double psnr_db = 0.0;
  double ssim = 0.0;
  std::vector<MetricRow> per_image;
};

/// Aggregates are arithmetic means of the rows.
MetricReport summarize(std::vector<MetricRow> rows);

/// `name,psnr_db,ssim` header, one row per image, then a MEAN row.
std::string to_csv(const MetricReport& report);
void write_csv(const std::filesystem::path& path, const MetricReport& report);

}  // namespace cspcn
