#include "unit.hpp"

#include <set>

#include "cspcn/numerics.hpp"
#include "cspcn/testing/gradcheck.hpp"
#include "cspcn/testing/oracles.hpp"
#include "helpers.hpp"

using namespace cspcn;
namespace oracle = cspcn::testing;

namespace {

struct Stateless : torch::nn::Module {};

}  // namespace

TEST_CASE("conv2d: dilated impulse response covers the dilated 3x3 grid") {
  auto x = torch::zeros({1, 1, 9, 9}, torch::kFloat64);
  x[0][0][4][4] = 1.0;
  Conv2DSpec spec{1, 1, 3, 2};
  const auto y = conv2d(x, spec, torch::ones({1, 1, 3, 3}, torch::kFloat64),
                        torch::zeros({1}, torch::kFloat64));
  std::set<std::pair<int, int>> support;
  for (int i = 0; i < 9; ++i) {
    for (int j = 0; j < 9; ++j) {
      if (y[0][0][i][j].item<double>() != 0.0) support.insert({i, j});
    }
  }
  std::set<std::pair<int, int>> expected;
  for (int i : {2, 4, 6}) {
    for (int j : {2, 4, 6}) expected.insert({i, j});
  }
  CHECK(support == expected);
  CHECK(spec.radius() == 2);
}

TEST_CASE("conv2d: zero weights give zeros of the right shape") {
  const auto x = test::uniform({2, 3, 6, 5}, 1);
  Conv2DSpec spec{3, 4, 3};
  const auto y = conv2d(x, spec, torch::zeros({4, 3, 3, 3}, torch::kFloat64),
                        torch::zeros({4}, torch::kFloat64));
  CHECK(y.sizes() == std::vector<std::int64_t>{2, 4, 6, 5});
  CHECK(y.abs().max().item<double>() == 0.0);
}

TEST_CASE("conv2d matches the sliding-window oracle") {
  const auto x = test::uniform({1, 2, 5, 5}, 2);
  const auto w = test::normal({3, 2, 3, 3}, 3);
  const auto b = test::normal({3}, 4);
  for (const auto padding : {Padding::same_reflect, Padding::same_zero}) {
    Conv2DSpec spec{2, 3, 3};
    spec.padding = padding;
    const auto ref = oracle::conv2d(oracle::to_array(x), oracle::to_array(w), oracle::to_vector(b),
                                    1, 1, 1,
                                    padding == Padding::same_zero ? oracle::Border::zero
                                                                  : oracle::Border::reflect);
    CHECK(oracle::max_abs_diff(ref, conv2d(x, spec, w, b)) < 1e-12);
  }
}

TEST_CASE("conv2d: reflection stays valid when the pad exceeds the plane") {
  const auto x = test::uniform({1, 2, 3, 2}, 5);
  const auto w = test::normal({2, 2, 3, 3}, 6);
  Conv2DSpec spec{2, 2, 3, 3};
  const auto ref = oracle::conv2d(oracle::to_array(x), oracle::to_array(w), {}, 3, 1, 1,
                                  oracle::Border::reflect);
  CHECK(oracle::max_abs_diff(ref, conv2d(x, spec, w, torch::Tensor())) < 1e-12);
}

TEST_CASE("reflect_pad mirrors without repeating the edge") {
  const auto x = torch::tensor({1.0, 2.0, 3.0}, torch::kFloat64).reshape({1, 1, 1, 3});
  const auto y = reflect_pad(x, 0, 0, 4, 2);
  const auto expected =
      torch::tensor({1.0, 2.0, 3.0, 2.0, 1.0, 2.0, 3.0, 2.0, 1.0}, torch::kFloat64);
  CHECK(torch::equal(y.reshape({-1}), expected));
  const auto one = torch::full({1, 1, 1, 1}, 5.0, torch::kFloat64);
  CHECK(torch::equal(reflect_pad(one, 2, 2, 2, 2), torch::full({1, 1, 5, 5}, 5.0, torch::kFloat64)));
}

TEST_CASE("conv2d is linear in its input") {
  const auto x = test::uniform({2, 4, 8, 8}, 7);
  const auto z = test::uniform({2, 4, 8, 8}, 8);
  const auto w = test::normal({4, 4, 3, 3}, 9);
  Conv2DSpec spec{4, 4, 3, 2};
  spec.has_bias = false;
  const double a = 0.7, b = -1.3;
  const auto lhs = conv2d(a * x + b * z, spec, w, torch::Tensor());
  const auto rhs = a * conv2d(x, spec, w, torch::Tensor()) + b * conv2d(z, spec, w, torch::Tensor());
  CHECK(test::max_diff(lhs, rhs) < 1e-10);
}

TEST_CASE("conv2d rejects bad inputs") {
  const auto x = test::uniform({1, 2, 5, 5}, 10);
  CHECK_THROWS_AS(conv2d(x, Conv2DSpec{3, 1, 3}, torch::zeros({1, 3, 3, 3}, torch::kFloat64),
                         torch::Tensor()),
                  ShapeError);
  CHECK_THROWS(conv2d(x, Conv2DSpec{2, 1, 2}, torch::zeros({1, 2, 2, 2}, torch::kFloat64),
                      torch::Tensor()));
  CHECK_THROWS_AS(conv2d(torch::zeros({2, 5, 5}), Conv2DSpec{2, 1, 3},
                         torch::zeros({1, 2, 3, 3}), torch::Tensor()),
                  ShapeError);
}

TEST_CASE("strided conv2d halves the plane") {
  Conv2DSpec spec{2, 3, 3};
  spec.stride = 2;
  const auto y = conv2d(test::uniform({1, 2, 8, 6}, 11), spec, test::normal({3, 2, 3, 3}, 12),
                        torch::Tensor());
  CHECK(y.sizes() == std::vector<std::int64_t>{1, 3, 4, 3});
}

TEST_CASE("global_avg_pool") {
  CHECK(global_avg_pool(torch::full({1, 1, 3, 4}, 2.5, torch::kFloat64)).item<double>() == 2.5);
  const auto plane = torch::tensor({0.0, 1.0, 2.0, 3.0}, torch::kFloat64).reshape({1, 1, 2, 2});
  CHECK(global_avg_pool(plane).item<double>() == 1.5);
  const auto x = test::uniform({2, 4, 7, 5}, 13);
  const auto y = global_avg_pool(x);
  CHECK(y.sizes() == std::vector<std::int64_t>{2, 4, 1, 1});
  CHECK(oracle::max_abs_diff(oracle::global_avg_pool(oracle::to_array(x)), y) < 1e-12);
}

TEST_CASE("softmax_rows") {
  const auto uniform_row = softmax_rows(torch::zeros({1, 3}, torch::kFloat64));
  CHECK(test::max_diff(uniform_row, torch::full({1, 3}, 1.0 / 3.0, torch::kFloat64)) < 1e-15);

  const auto base = torch::tensor({0.0, 0.5, 1.0}, torch::kFloat64).reshape({1, 3});
  for (double shift : {-50.0, -1.0, 3.0, 400.0}) {
    CHECK(test::max_diff(softmax_rows(base + shift), softmax_rows(base)) < 1e-12);
  }

  const auto m = test::normal({8, 8}, 14) * 3;
  oracle::Matrix rows(8, std::vector<double>(8));
  for (int i = 0; i < 8; ++i) {
    for (int j = 0; j < 8; ++j) rows[i][j] = m[i][j].item<double>();
  }
  const auto ref = oracle::softmax_rows(rows);
  const auto got = softmax_rows(m);
  double err = 0.0;
  for (int i = 0; i < 8; ++i) {
    for (int j = 0; j < 8; ++j) err = std::max(err, std::abs(ref[i][j] - got[i][j].item<double>()));
  }
  CHECK(err < 1e-10);

  const auto extreme = test::normal({3, 16, 16}, 15) * 1e3;
  const auto s = softmax_rows(extreme);
  CHECK((s.sum(-1) - 1).abs().max().item<double>() < 1e-6);
  CHECK(s.min().item<double>() >= 0.0);

  auto bad = torch::zeros({2, 2}, torch::kFloat64);
  bad[0][1] = std::nan("");
  CHECK_THROWS_AS(softmax_rows(bad), std::domain_error);
  CHECK_THROWS(softmax_rows(torch::zeros({2, 2, 2, 2})));
}

TEST_CASE("bilinear_upsample") {
  const auto c = bilinear_upsample(torch::full({1, 2, 3, 5}, 0.25, torch::kFloat64), 2);
  CHECK(c.sizes() == std::vector<std::int64_t>{1, 2, 6, 10});
  CHECK(test::max_diff(c, torch::full({1, 2, 6, 10}, 0.25, torch::kFloat64)) < 1e-15);

  const auto single = bilinear_upsample(torch::full({1, 1, 1, 1}, 0.8, torch::kFloat64), 2);
  CHECK(test::max_diff(single, torch::full({1, 1, 2, 2}, 0.8, torch::kFloat64)) < 1e-15);

  const auto x = test::uniform({1, 1, 3, 3}, 16);
  CHECK(oracle::max_abs_diff(oracle::bilinear_upsample(oracle::to_array(x), 2),
                             bilinear_upsample(x, 2)) < 1e-10);
  const auto x3 = test::uniform({2, 3, 4, 5}, 17);
  CHECK(oracle::max_abs_diff(oracle::bilinear_upsample(oracle::to_array(x3), 3),
                             bilinear_upsample(x3, 3)) < 1e-10);

  CHECK_THROWS(bilinear_upsample(x, 1));
  CHECK_THROWS(bilinear_upsample(x, 0));
}

TEST_CASE("primitive gradients match finite differences") {
  const auto x = test::uniform({2, 4, 8, 8}, 18);
  SUBCASE("conv2d") {
    for (const auto padding : {Padding::same_reflect, Padding::same_zero}) {
      Conv2DSpec spec{4, 4, 3, 2};
      spec.padding = padding;
      Conv2d conv(spec);
      conv->to(torch::kFloat64);
      oracle::randomize_parameters(*conv, 19);
      const auto r = oracle::gradcheck(*conv, x, [&](const torch::Tensor& in) { return conv(in); });
      CHECK(r.max_relative_error < 1e-4);
      CHECK(r.directional_error < 1e-4);
    }
  }
  SUBCASE("global_avg_pool, softmax_rows, bilinear_upsample") {
    Stateless none;
    const auto check = [&](const oracle::ForwardFn& f) {
      const auto r = oracle::gradcheck(none, x, f);
      CHECK(r.max_relative_error < 1e-4);
      CHECK(r.directional_error < 1e-4);
    };
    check([](const torch::Tensor& in) { return global_avg_pool(in); });
    check([](const torch::Tensor& in) { return softmax_rows(in.reshape({8, 64})); });
    check([](const torch::Tensor& in) { return bilinear_upsample(in, 2); });
  }
}

TEST_CASE("batch norm uses momentum 0.1 and eps 1e-5") {
  NormAct bn(2, NormActSpec{NormKind::batch_norm, Activation::none});
  bn->to(torch::kFloat64);
  const auto x = test::uniform({4, 2, 5, 5}, 20) * 3 + 1;
  bn->train();
  const auto y = bn(x);
  const auto mean = x.mean({0, 2, 3}, true);
  const auto var = x.var({0, 2, 3}, false, true);
  CHECK(test::max_diff(y, (x - mean) / torch::sqrt(var + 1e-5)) < 1e-10);

  const auto buffers = bn->named_buffers();
  const auto running_mean = buffers["bn.running_mean"];
  CHECK(test::max_diff(running_mean, 0.1 * mean.reshape({-1})) < 1e-12);

  bn->eval();
  const auto unbiased = x.var({0, 2, 3}, true, true);
  const auto rm = (0.1 * mean);
  const auto rv = 0.9 + 0.1 * unbiased;
  CHECK(test::max_diff(bn(x), (x - rm) / torch::sqrt(rv + 1e-5)) < 1e-10);
}

TEST_CASE("activations") {
  const auto x = torch::tensor({-2.0, 0.0, 3.0}, torch::kFloat64);
  CHECK(torch::equal(apply_activation(x, Activation::relu), torch::tensor({0.0, 0.0, 3.0}, torch::kFloat64)));
  CHECK(torch::equal(apply_activation(x, Activation::none), x));
  CHECK(test::max_diff(apply_activation(x, Activation::sigmoid), 1 / (1 + torch::exp(-x))) < 1e-15);
}
