#include "cspcn/image_io.hpp"

#include <ostream>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "cspcn/persistence.hpp"

namespace cspcn {

Image read_png(const std::filesystem::path& path) {
  cv::Mat raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (raw.empty()) throw ImageIOError("cannot read image '" + path.string() + "'");
  int bit_depth = 0;
  if (raw.depth() == CV_8U) {
    bit_depth = 8;
  } else if (raw.depth() == CV_16U) {
    bit_depth = 16;
  } else {
    throw ImageIOError("unsupported pixel depth in '" + path.string() + "'");
  }

  cv::Mat rgb;
  switch (raw.channels()) {
    case 1:
      rgb = raw;
      break;
    case 2: {
      cv::extractChannel(raw, rgb, 0);
      break;
    }
    case 3:
      cv::cvtColor(raw, rgb, cv::COLOR_BGR2RGB);
      break;
    case 4:
      cv::cvtColor(raw, rgb, cv::COLOR_BGRA2RGB);
      break;
    default:
      throw ImageIOError("unsupported channel count in '" + path.string() + "'");
  }

  cv::Mat as_double;
  const double scale = 1.0 / (bit_depth == 8 ? 255.0 : 65535.0);
  rgb.convertTo(as_double, CV_64F, scale);
  const int channels = as_double.channels();
  auto hwc = torch::from_blob(as_double.data, {as_double.rows, as_double.cols, channels},
                              torch::kFloat64);
  return {hwc.permute({2, 0, 1}).unsqueeze(0).contiguous().clone(), bit_depth};
}

void write_png(const std::filesystem::path& path, const ImageBatch& pixels, int bit_depth) {
  require_rank4(pixels, "write_png");
  if (pixels.size(0) != 1 || (pixels.size(1) != 1 && pixels.size(1) != 3)) {
    throw ImageIOError("write_png expects one image with 1 or 3 channels");
  }
  if (bit_depth != 8 && bit_depth != 16) throw ImageIOError("bit depth must be 8 or 16");
  const double max_value = bit_depth == 8 ? 255.0 : 65535.0;
  const int channels = static_cast<int>(pixels.size(1));
  auto hwc = pixels[0]
                 .detach()
                 .to(torch::kFloat64)
                 .clamp(0.0, 1.0)
                 .mul(max_value)
                 .round()
                 .permute({1, 2, 0})
                 .contiguous();
  cv::Mat as_double(static_cast<int>(hwc.size(0)), static_cast<int>(hwc.size(1)),
                    CV_64FC(channels), hwc.data_ptr<double>());
  cv::Mat quantized;
  as_double.convertTo(quantized, bit_depth == 8 ? CV_8U : CV_16U);
  if (channels == 3) cv::cvtColor(quantized, quantized, cv::COLOR_RGB2BGR);
  std::vector<std::uint8_t> encoded;
  if (!cv::imencode(".png", quantized, encoded, {cv::IMWRITE_PNG_COMPRESSION, 3})) {
    throw ImageIOError("cannot encode image '" + path.string() + "'");
  }
  try {
    atomic_write(path, [&](std::ostream& out) {
      out.write(reinterpret_cast<const char*>(encoded.data()),
                static_cast<std::streamsize>(encoded.size()));
    });
  } catch (const std::exception& e) {
    throw ImageIOError("cannot write image '" + path.string() + "': " + e.what());
  }
}

ImageBatch convert_channels(const ImageBatch& x, int channels) {
  require_rank4(x, "convert_channels");
  if (x.size(1) == channels) return x;
  if (x.size(1) == 3 && channels == 1) {
    return 0.299 * x.slice(1, 0, 1) + 0.587 * x.slice(1, 1, 2) + 0.114 * x.slice(1, 2, 3);
  }
  if (x.size(1) == 1 && channels == 3) return x.repeat({1, 3, 1, 1});
  throw ShapeError("convert_channels: unsupported conversion");
}

ImageBatch quantize(const ImageBatch& x, int bit_depth) {
  const double max_value = bit_depth == 8 ? 255.0 : 65535.0;
  return x.clamp(0.0, 1.0).mul(max_value).round().div(max_value);
}

}  // namespace cspcn
