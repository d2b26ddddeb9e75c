#pragma once

#include <vector>

#include "cspcn/config.hpp"
#include "cspcn/model.hpp"

namespace cspcn {

/// mean(sqrt((pred - gt)^2 + eps^2)) as a differentiable scalar.
torch::Tensor charbonnier(const ImageBatch& pred, const ImageBatch& gt, double eps);

/// Per-channel discrete Laplacian with replicate borders.
ImageBatch laplacian(const ImageBatch& x,
                     LaplacianKernel kernel = LaplacianKernel::four_neighbor);

/// Charbonnier distance between the Laplacians of pred and gt.
torch::Tensor edge_loss(const ImageBatch& pred, const ImageBatch& gt, double eps,
                        LaplacianKernel kernel = LaplacianKernel::four_neighbor);

/// Sum over decoded outputs of mean |decoded - gt|. Needs one or two entries.
torch::Tensor recon_l1(const std::vector<ImageBatch>& decoded, const ImageBatch& gt);

struct LossReport {
  std::vector<double> charbonnier_per_stage;
  std::vector<double> edge_per_stage;
  double recon = 0.0;
  double total = 0.0;
  torch::Tensor objective;  // differentiable total

  double charbonnier_sum() const;
  double edge_sum() const;
};

/// Stage-weighted objective: every stage contributes char + lambda1 * edge;
/// the reconstruction term over all decoded outputs is added once with
/// weight lambda2.
LossReport total_loss(const ForwardResult& result, const ImageBatch& gt, const LossConfig& config);

}  // namespace cspcn
