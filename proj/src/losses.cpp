#include "cspcn/losses.hpp"

#include <numeric>

namespace cspcn {

namespace {

void require_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (!a.defined() || !b.defined() || a.sizes() != b.sizes()) {
    throw ShapeError(std::string(what) + ": prediction and target shapes differ");
  }
}

}  // namespace

torch::Tensor charbonnier(const ImageBatch& pred, const ImageBatch& gt, double eps) {
  require_same_shape(pred, gt, "charbonnier");
  if (!(eps > 0)) throw std::invalid_argument("charbonnier: eps must be > 0");
  const auto diff = pred - gt;
  return torch::sqrt(diff * diff + eps * eps).mean();
}

ImageBatch laplacian(const ImageBatch& x, LaplacianKernel kernel) {
  require_rank4(x, "laplacian");
  const auto channels = x.size(1);
  torch::Tensor k;
  if (kernel == LaplacianKernel::four_neighbor) {
    k = torch::tensor({0.0, 1.0, 0.0, 1.0, -4.0, 1.0, 0.0, 1.0, 0.0});
  } else {
    k = torch::tensor({1.0, 1.0, 1.0, 1.0, -8.0, 1.0, 1.0, 1.0, 1.0});
  }
  k = k.to(x.scalar_type()).reshape({1, 1, 3, 3}).repeat({channels, 1, 1, 1});
  namespace F = torch::nn::functional;
  const auto padded = F::pad(x, F::PadFuncOptions({1, 1, 1, 1}).mode(torch::kReplicate));
  const std::int64_t stride = 1, no_pad = 0, dilation = 1;
  return torch::conv2d(padded, k, torch::Tensor{}, stride, no_pad, dilation, channels);
}

torch::Tensor edge_loss(const ImageBatch& pred, const ImageBatch& gt, double eps,
                        LaplacianKernel kernel) {
  require_same_shape(pred, gt, "edge_loss");
  return charbonnier(laplacian(pred, kernel), laplacian(gt, kernel), eps);
}

torch::Tensor recon_l1(const std::vector<ImageBatch>& decoded, const ImageBatch& gt) {
  if (decoded.empty() || decoded.size() > 2) {
    throw std::invalid_argument("recon_l1: expected one or two decoded outputs, got " +
                                std::to_string(decoded.size()));
  }
  torch::Tensor total;
  for (const auto& y : decoded) {
    require_same_shape(y, gt, "recon_l1");
    auto term = (y - gt).abs().mean();
    total = total.defined() ? total + term : term;
  }
  return total;
}

double LossReport::charbonnier_sum() const {
  return std::accumulate(charbonnier_per_stage.begin(), charbonnier_per_stage.end(), 0.0);
}

double LossReport::edge_sum() const {
  return std::accumulate(edge_per_stage.begin(), edge_per_stage.end(), 0.0);
}

LossReport total_loss(const ForwardResult& result, const ImageBatch& gt, const LossConfig& config) {
  if (result.stage_outputs.empty()) throw std::invalid_argument("total_loss: no stage outputs");
  LossReport report;
  torch::Tensor objective;
  for (const auto& y : result.stage_outputs) {
    const auto c = charbonnier(y, gt, config.epsilon);
    const auto e = edge_loss(y, gt, config.epsilon, config.laplacian);
    report.charbonnier_per_stage.push_back(c.item<double>());
    report.edge_per_stage.push_back(e.item<double>());
    const auto stage_term = c + config.lambda1 * e;
    objective = objective.defined() ? objective + stage_term : stage_term;
  }
  if (!result.decoded_outputs.empty()) {
    const auto r = recon_l1(result.decoded_outputs, gt);
    report.recon = r.item<double>();
    objective = objective + config.lambda2 * r;
  }
  report.objective = objective;
  report.total = objective.item<double>();
  return report;
}

}  // namespace cspcn
