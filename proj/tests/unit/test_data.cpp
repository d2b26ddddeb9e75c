#include "unit.hpp"

#include <cmath>

#include "cspcn/data.hpp"
#include "cspcn/image_io.hpp"
#include "helpers.hpp"

using namespace cspcn;

namespace {

// Pixel value encodes its own coordinates, so any misaligned crop or flip shows.
torch::Tensor coordinate_image(std::int64_t h, std::int64_t w) {
  const auto y = torch::arange(h, torch::kFloat64).reshape({h, 1});
  const auto x = torch::arange(w, torch::kFloat64).reshape({1, w});
  return (y * 1000 + x).reshape({1, 1, h, w}).expand({1, 3, h, w}).contiguous();
}

void write_gray(const std::filesystem::path& p, std::uint64_t seed, int h = 8, int w = 8) {
  write_png(p, test::uniform({1, 1, h, w}, seed));
}

}  // namespace

TEST_CASE("add_awgn") {
  const auto clean = test::uniform({1, 3, 16, 16}, 1);
  CHECK(torch::equal(add_awgn(clean, NoiseSpec{0.0, ColorMode::color, 5}), clean));
  CHECK(torch::equal(add_awgn(clean, NoiseSpec{30.0, ColorMode::color, 5}),
                     add_awgn(clean, NoiseSpec{30.0, ColorMode::color, 5})));
  CHECK_FALSE(torch::equal(add_awgn(clean, NoiseSpec{30.0, ColorMode::color, 5}),
                           add_awgn(clean, NoiseSpec{30.0, ColorMode::color, 6})));
  CHECK_THROWS(add_awgn(clean, NoiseSpec{-1.0, ColorMode::color, 5}));

  const auto big = torch::full({1, 1, 1000, 1000}, 0.5, torch::kFloat64);
  const auto noise = add_awgn(big, NoiseSpec{25.0, ColorMode::grayscale, 42}) - big;
  CHECK(std::abs(noise.mean().item<double>()) < 5e-4);
  CHECK(std::abs(noise.std().item<double>() / (25.0 / 255.0) - 1.0) < 0.02);

  // Not clipped.
  const auto edge = torch::zeros({1, 1, 64, 64}, torch::kFloat64);
  CHECK(add_awgn(edge, NoiseSpec{50.0, ColorMode::grayscale, 1}).min().item<double>() < 0.0);
  const bool keeps_dtype =
      add_awgn(clean.to(torch::kFloat32), NoiseSpec{10.0, ColorMode::color, 1}).scalar_type() ==
      torch::kFloat32;
  CHECK(keeps_dtype);
}

TEST_CASE("grid patches tile the image") {
  const auto img = test::uniform({1, 3, 256, 256}, 2);
  const auto tiles = extract_grid_patches(img, 64);
  REQUIRE(tiles.size(0) == 16);
  // Reassemble raster order.
  const auto rebuilt = tiles.reshape({4, 4, 3, 64, 64}).permute({2, 0, 3, 1, 4}).reshape({1, 3, 256, 256});
  CHECK(torch::equal(rebuilt, img));
}

TEST_CASE("random patches") {
  const auto img = test::uniform({1, 3, 64, 64}, 3);
  const auto same = extract_patches(img, 64, 5, 9);
  CHECK(same.size(0) == 5);
  for (int i = 0; i < 5; ++i) CHECK(torch::equal(same[i], img[0]));

  const auto boxes = sample_crops(65, 97, 32, 1000, 11);
  bool saw_bottom = false, saw_right = false;
  for (const auto& b : boxes) {
    CHECK(b.top >= 0);
    CHECK(b.left >= 0);
    CHECK(b.top + 32 <= 65);
    CHECK(b.left + 32 <= 97);
    saw_bottom |= b.top == 33;
    saw_right |= b.left == 65;
  }
  CHECK(saw_bottom);
  CHECK(saw_right);
  CHECK(extract_patches(test::uniform({1, 1, 65, 97}, 4), 32, 1000, 11).size(0) == 1000);
  CHECK_THROWS_AS(extract_patches(img, 65, 1, 0), DataError);
  CHECK(torch::equal(extract_patches(img, 16, 4, 7), extract_patches(img, 16, 4, 7)));
}

TEST_CASE("pairs stay aligned through cropping and flipping") {
  const auto clean = coordinate_image(40, 52);
  const auto noisy = clean + 0.25;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto [c, n] = extract_patch_pairs(clean, noisy, 16, 3, seed);
    CHECK(torch::equal(n - c, torch::full_like(c, 0.25)));
    const auto [ca, na] = augment({c, n}, seed);
    CHECK(torch::equal(na - ca, torch::full_like(ca, 0.25)));
  }
  CHECK_THROWS_AS(extract_patch_pairs(clean, noisy.slice(3, 0, 50), 16, 1, 0), ShapeError);
}

TEST_CASE("augment") {
  std::optional<std::uint64_t> horizontal_only;
  for (std::uint64_t s = 0; s < 100 && !horizontal_only; ++s) {
    const auto f = draw_flips(s);
    if (f.horizontal && !f.vertical) horizontal_only = s;
  }
  REQUIRE(horizontal_only);
  const auto clean = coordinate_image(6, 7);
  const auto noisy = clean * 2;
  const auto [c, n] = augment({clean, noisy}, *horizontal_only);
  CHECK(torch::equal(c, clean.flip({3})));
  CHECK(torch::equal(n, noisy.flip({3})));

  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto once = augment({clean, noisy}, s);
    const auto twice = augment(once, s);
    CHECK(torch::equal(twice.first, clean));
    CHECK(torch::equal(twice.second, noisy));
  }

  int h = 0, v = 0;
  const int draws = 10000;
  for (int s = 0; s < draws; ++s) {
    const auto f = draw_flips(mix_seed(77, static_cast<std::uint64_t>(s)));
    h += f.horizontal;
    v += f.vertical;
  }
  CHECK(h / double(draws) >= 0.47);
  CHECK(h / double(draws) <= 0.53);
  CHECK(v / double(draws) >= 0.47);
  CHECK(v / double(draws) <= 0.53);
  CHECK_THROWS_AS(augment({clean, noisy.slice(2, 0, 5)}, 0), ShapeError);
}

TEST_CASE("index_dataset") {
  test::TempDir dir;
  std::filesystem::create_directories(dir / "flat");
  for (const char* name : {"c.png", "a.png", "b.png"}) write_gray(dir.path() / "flat" / name, 1);
  test::write_file(dir.path() / "flat" / "notes.txt", "ignored");
  const auto index = index_dataset(dir / "flat", DatasetMode::synthetic);
  REQUIRE(index.entries.size() == 3);
  CHECK(index.entries[0].name == "a.png");
  CHECK(index.entries[1].name == "b.png");
  CHECK(index.entries[2].name == "c.png");
  CHECK_FALSE(index.entries[0].noisy.has_value());
  CHECK(index == index_dataset(dir / "flat", DatasetMode::synthetic));

  const auto paired = dir / "paired";
  std::filesystem::create_directories(paired / "clean");
  std::filesystem::create_directories(paired / "noisy");
  for (const char* name : {"x.png", "y.png"}) {
    write_gray(paired / "clean" / name, 2);
    write_gray(paired / "noisy" / name, 3);
  }
  const auto p = index_dataset(paired, DatasetMode::paired);
  REQUIRE(p.entries.size() == 2);
  CHECK(p.entries[1].noisy->filename().string() == "y.png");
  // Synthetic mode falls back to clean/.
  CHECK(index_dataset(paired, DatasetMode::synthetic).entries.size() == 2);

  write_gray(paired / "clean" / "z.png", 4);
  try {
    index_dataset(paired, DatasetMode::paired);
    FAIL("expected a pairing error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("z.png") != std::string::npos);
  }

  std::filesystem::create_directories(dir / "empty");
  CHECK_THROWS_AS(index_dataset(dir / "empty", DatasetMode::synthetic), DataError);
  CHECK_THROWS_AS(index_dataset(dir / "missing", DatasetMode::synthetic), DataError);
  CHECK_THROWS_AS(index_dataset(dir / "flat", DatasetMode::paired), DataError);
}

TEST_CASE("mix_seed separates streams") {
  CHECK(mix_seed(1, 2, 3) == mix_seed(1, 2, 3));
  CHECK(mix_seed(1, 2, 3) != mix_seed(1, 3, 2));
  CHECK(mix_seed(1, 2) != mix_seed(2, 2));
}

TEST_CASE("PNG round trips") {
  test::TempDir dir;
  for (const int depth : {8, 16}) {
    for (const int channels : {1, 3}) {
      const double levels = depth == 8 ? 255.0 : 65535.0;
      const auto x = torch::round(test::uniform({1, channels, 9, 13}, 5) * levels) / levels;
      const auto path = dir / ("img" + std::to_string(depth) + std::to_string(channels) + ".png");
      write_png(path, x, depth);
      const auto back = read_png(path);
      CHECK(back.bit_depth == depth);
      CHECK(back.pixels.sizes() == x.sizes());
      CHECK(test::max_diff(back.pixels, x) < 1e-12);
    }
  }
  const auto out_of_range = test::uniform({1, 3, 4, 4}, 6, -1.0, 2.0);
  write_png(dir / "clip.png", out_of_range);
  CHECK(test::max_diff(read_png(dir / "clip.png").pixels, quantize(out_of_range)) < 1e-12);
  CHECK_THROWS_AS(read_png(dir / "none.png"), ImageIOError);
  test::write_file(dir / "bad.png", "not an image");
  CHECK_THROWS_AS(read_png(dir / "bad.png"), ImageIOError);
  CHECK_THROWS_AS(write_png(dir / "x.png", torch::zeros({1, 2, 4, 4}, torch::kFloat64)), ImageIOError);
}

TEST_CASE("channel conversion") {
  const auto rgb = test::uniform({1, 3, 4, 5}, 7);
  const auto gray = convert_channels(rgb, 1);
  const auto expected = 0.299 * rgb.select(1, 0) + 0.587 * rgb.select(1, 1) + 0.114 * rgb.select(1, 2);
  CHECK(test::max_diff(gray.squeeze(1), expected) < 1e-12);
  const auto back = convert_channels(gray, 3);
  for (int c = 0; c < 3; ++c) CHECK(torch::equal(back.select(1, c), gray.select(1, 0)));
  CHECK(torch::equal(convert_channels(rgb, 3), rgb));
}
