#include "cspcn/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "cspcn/image_io.hpp"
#include "cspcn/persistence.hpp"

namespace cspcn {

namespace {

constexpr int kWindow = 11;
constexpr double kWindowSigma = 1.5;

torch::Tensor prepare(const ImageBatch& x, const MetricOptions& options) {
  torch::Tensor out = x.detach().to(torch::kFloat64);
  if (options.quantize_8bit) out = quantize(out, 8);
  if (options.luma_only && out.size(1) == 3) out = convert_channels(out, 1);
  return out.contiguous();
}

void require_pair(const ImageBatch& pred, const ImageBatch& gt, const char* what) {
  require_rank4(pred, what);
  if (pred.sizes() != gt.sizes()) throw ShapeError(std::string(what) + ": shapes differ");
}

std::vector<double> gaussian_taps() {
  std::vector<double> taps(kWindow);
  double sum = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - kWindow / 2;
    taps[i] = std::exp(-d * d / (2.0 * kWindowSigma * kWindowSigma));
    sum += taps[i];
  }
  for (auto& t : taps) t /= sum;
  return taps;
}

// Valid-mode separable Gaussian filter of one plane.
std::vector<double> filter_valid(const double* plane, std::int64_t h, std::int64_t w,
                                 const std::vector<double>& taps) {
  const auto oh = h - kWindow + 1;
  const auto ow = w - kWindow + 1;
  std::vector<double> rows(static_cast<std::size_t>(h * ow));
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kWindow; ++k) acc += taps[k] * plane[y * w + x + k];
      rows[y * ow + x] = acc;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(oh * ow));
  for (std::int64_t y = 0; y < oh; ++y) {
    for (std::int64_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kWindow; ++k) acc += taps[k] * rows[(y + k) * ow + x];
      out[y * ow + x] = acc;
    }
  }
  return out;
}

double ssim_plane(const double* a, const double* b, std::int64_t h, std::int64_t w,
                  const std::vector<double>& taps) {
  constexpr double c1 = (0.01 * 1.0) * (0.01 * 1.0);
  constexpr double c2 = (0.03 * 1.0) * (0.03 * 1.0);
  const auto n = static_cast<std::size_t>(h * w);
  std::vector<double> aa(n), bb(n), ab(n);
  for (std::size_t i = 0; i < n; ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  const auto mu_a = filter_valid(a, h, w, taps);
  const auto mu_b = filter_valid(b, h, w, taps);
  const auto e_aa = filter_valid(aa.data(), h, w, taps);
  const auto e_bb = filter_valid(bb.data(), h, w, taps);
  const auto e_ab = filter_valid(ab.data(), h, w, taps);
  double sum = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i];
    const double mb = mu_b[i];
    const double var_a = e_aa[i] - ma * ma;
    const double var_b = e_bb[i] - mb * mb;
    const double cov = e_ab[i] - ma * mb;
    sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) /
           ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
  }
  return sum / static_cast<double>(mu_a.size());
}

std::string format_value(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buffer[64];
  std::snprintf(buffer, sizeof buffer, "%.6f", v);
  return buffer;
}

}  // namespace

double psnr(const ImageBatch& pred, const ImageBatch& gt, const MetricOptions& options) {
  require_pair(pred, gt, "psnr");
  const auto p = prepare(pred, options);
  const auto g = prepare(gt, options);
  const double mse = (p - g).pow(2).mean().item<double>();
  if (mse == 0.0) return kInfinitePsnr;
  return 10.0 * std::log10(1.0 / mse);
}

double ssim(const ImageBatch& pred, const ImageBatch& gt, const MetricOptions& options) {
  require_pair(pred, gt, "ssim");
  const auto p = prepare(pred, options);
  const auto g = prepare(gt, options);
  const auto h = p.size(2);
  const auto w = p.size(3);
  if (h < kWindow || w < kWindow) {
    throw ShapeError("ssim: image is smaller than the 11x11 window");
  }
  const auto taps = gaussian_taps();
  const double* pa = p.data_ptr<double>();
  const double* ga = g.data_ptr<double>();
  const auto planes = p.size(0) * p.size(1);
  double sum = 0.0;
  for (std::int64_t i = 0; i < planes; ++i) {
    sum += ssim_plane(pa + i * h * w, ga + i * h * w, h, w, taps);
  }
  return sum / static_cast<double>(planes);
}

MetricReport summarize(std::vector<MetricRow> rows) {
  MetricReport report;
  report.per_image = std::move(rows);
  if (report.per_image.empty()) return report;
  for (const auto& row : report.per_image) {
    report.psnr_db += row.psnr_db;
    report.ssim += row.ssim;
  }
  const auto n = static_cast<double>(report.per_image.size());
  report.psnr_db /= n;
  report.ssim /= n;
  return report;
}

std::string to_csv(const MetricReport& report) {
  std::ostringstream out;
  out << "name,psnr_db,ssim\n";
  for (const auto& row : report.per_image) {
    out << row.name << ',' << format_value(row.psnr_db) << ',' << format_value(row.ssim) << '\n';
  }
  out << "MEAN," << format_value(report.psnr_db) << ',' << format_value(report.ssim) << '\n';
  return out.str();
}

void write_csv(const std::filesystem::path& path, const MetricReport& report) {
  const auto text = to_csv(report);
  atomic_write(path, [&](std::ostream& out) { out << text; });
}

}  // namespace cspcn
