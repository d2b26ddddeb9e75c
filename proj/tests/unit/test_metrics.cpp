#include "unit.hpp"

#include <cmath>

#include "cspcn/image_io.hpp"
#include "cspcn/metrics.hpp"
#include "cspcn/testing/oracles.hpp"
#include "helpers.hpp"

using namespace cspcn;
namespace oracle = cspcn::testing;

TEST_CASE("psnr closed forms") {
  const auto gt = test::uniform({1, 3, 8, 8}, 1, 0.0, 0.9);
  CHECK(psnr(gt, gt) == kInfinitePsnr);
  CHECK(std::abs(psnr(gt + 0.1, gt) - 20.0) < 1e-9);
  CHECK(std::abs(psnr(gt, gt + 0.1) - 20.0) < 1e-9);
}

TEST_CASE("psnr against the direct formula") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto a = test::uniform({1, 3, 8, 8}, 10 + seed);
    const auto b = test::uniform({1, 3, 8, 8}, 50 + seed);
    const double ref = oracle::psnr(oracle::to_array(a), oracle::to_array(b));
    CHECK(std::abs(psnr(a, b) - ref) < 1e-9);
    CHECK(psnr(a, b) == psnr(b, a));
  }
}

TEST_CASE("psnr falls as noise grows") {
  const auto gt = test::uniform({1, 1, 16, 16}, 2, 0.2, 0.8);
  const auto noise = test::normal({1, 1, 16, 16}, 3);
  double previous = kInfinitePsnr;
  for (const double amplitude : {0.001, 0.01, 0.02, 0.05, 0.1, 0.2}) {
    const double v = psnr(gt + amplitude * noise, gt);
    CHECK(v < previous);
    previous = v;
  }
}

TEST_CASE("ssim self-similarity and anti-correlation") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto x = test::uniform({1, 3, 16, 13}, 100 + seed, -2.0, 3.0);
    CHECK(ssim(x, x) == 1.0);
  }
  // Checkerboard.
  const auto yy = torch::arange(24).reshape({24, 1});
  const auto xx = torch::arange(24).reshape({1, 24});
  const auto board = ((yy + xx) % 2).to(torch::kFloat64).reshape({1, 1, 24, 24});
  const double anti = ssim(1 - board, board);
  CHECK(anti < 0.0);
  CHECK(std::abs(anti - oracle::ssim(oracle::to_array(1 - board), oracle::to_array(board))) < 1e-6);
}

TEST_CASE("ssim against the brute-force window oracle") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto gt = test::uniform({1, 2, 16, 14}, 200 + seed);
    const auto pred = (gt + 0.1 * test::normal({1, 2, 16, 14}, 300 + seed)).clamp(0, 1);
    const double ref = oracle::ssim(oracle::to_array(pred), oracle::to_array(gt));
    CHECK(std::abs(ssim(pred, gt) - ref) < 1e-6);
    CHECK(std::abs(ssim(pred, gt) - ssim(gt, pred)) < 1e-12);
  }
}

TEST_CASE("metric errors") {
  const auto a = torch::zeros({1, 1, 16, 16}, torch::kFloat64);
  CHECK_THROWS_AS(psnr(a, torch::zeros({1, 1, 16, 15}, torch::kFloat64)), ShapeError);
  CHECK_THROWS_AS(ssim(a, torch::zeros({1, 3, 16, 16}, torch::kFloat64)), ShapeError);
  const auto small = torch::zeros({1, 1, 10, 16}, torch::kFloat64);
  CHECK_THROWS_AS(ssim(small, small), ShapeError);
}

TEST_CASE("metric options") {
  const auto gt = test::uniform({1, 3, 16, 16}, 4);
  const auto pred = (gt + 0.03 * test::normal({1, 3, 16, 16}, 5)).clamp(0, 1);
  MetricOptions q;
  q.quantize_8bit = true;
  CHECK(psnr(pred, gt, q) == doctest::Approx(psnr(quantize(pred), quantize(gt))).epsilon(1e-12));
  MetricOptions luma;
  luma.luma_only = true;
  CHECK(psnr(pred, gt, luma) ==
        doctest::Approx(psnr(convert_channels(pred, 1), convert_channels(gt, 1))).epsilon(1e-12));
  CHECK(ssim(pred, gt, luma) ==
        doctest::Approx(ssim(convert_channels(pred, 1), convert_channels(gt, 1))).epsilon(1e-12));
}

TEST_CASE("report aggregation and CSV") {
  const auto report = summarize({{"a.png", 30.0, 0.9}, {"b.png", 20.0, 0.5}, {"c.png", 25.0, 0.7}});
  CHECK(report.psnr_db == doctest::Approx(25.0));
  CHECK(report.ssim == doctest::Approx(0.7));
  CHECK(to_csv(report) ==
        "name,psnr_db,ssim\n"
        "a.png,30.000000,0.900000\n"
        "b.png,20.000000,0.500000\n"
        "c.png,25.000000,0.700000\n"
        "MEAN,25.000000,0.700000\n");

  test::TempDir dir;
  write_csv(dir / "m.csv", report);
  CHECK(test::read_file(dir / "m.csv") == to_csv(report));
  CHECK(to_csv(summarize({{"same.png", kInfinitePsnr, 1.0}})).find("same.png,inf,1.000000") !=
        std::string::npos);
}
