#include <doctest.h>
#include <png.h>

#include <cmath>
#include <fstream>

#include "pp/error.hpp"
#include "pp/image.hpp"
#include "test_util.hpp"

using namespace pp;

TEST_CASE("image construction rejects empty extents") {
  CHECK_THROWS_AS(Image(0, 4, 3), DomainError);
  CHECK_THROWS_AS(Image(4, 4, 0), DomainError);
  CHECK_THROWS_AS(DepthMap(4, 0), DomainError);
}

TEST_CASE("validity requires 1 or 3 channels and values in [0,1]") {
  CHECK(is_valid_image(Image(2, 2, 1, 0.5)));
  CHECK(is_valid_image(Image(2, 2, 3, 1.0)));
  CHECK_FALSE(is_valid_image(Image(2, 2, 2, 0.5)));
  Image bad(2, 2, 3, 0.5);
  bad.at(1, 1, 1) = 1.5;
  CHECK_FALSE(is_valid_image(bad));
  bad.at(1, 1, 1) = std::nan("");
  CHECK_FALSE(is_valid_image(bad));
  CHECK_THROWS_AS(require_valid_image(bad, "x"), DomainError);
}

TEST_CASE("png round trip of zeros, ones and mid grey") {
  const auto dir = test::scratch_dir("imaging");
  save_image(Image(4, 4, 3, 0.0), dir / "zeros.png");
  CHECK(load_image(dir / "zeros.png") == Image(4, 4, 3, 0.0));

  save_image(Image(4, 4, 1, 1.0), dir / "ones.png");
  CHECK(load_image(dir / "ones.png") == Image(4, 4, 1, 1.0));

  save_image(Image(3, 5, 3, 0.5), dir / "half.png");
  const Image half = load_image(dir / "half.png");
  CHECK(half.height() == 3);
  CHECK(half.width() == 5);
  for (double v : half.values()) CHECK(v == doctest::Approx(128.0 / 255.0).epsilon(1e-12));
  CHECK(128.0 / 255.0 == doctest::Approx(0.50196).epsilon(1e-5));
}

TEST_CASE("saved png reloads as the 8-bit quantized image") {
  const auto dir = test::scratch_dir("imaging-q");
  Rng rng(7);
  const Image img = test::random_image(rng, 6, 7, 3);
  save_image(img, dir / "r.png");
  CHECK(load_image(dir / "r.png") == quantize_8bit(img));
}

TEST_CASE("load_image error paths") {
  const auto dir = test::scratch_dir("imaging-err");
  CHECK_THROWS_AS(load_image(dir / "missing.png"), IoError);

  std::ofstream(dir / "junk.png") << "not a png at all, just text padding the header";
  CHECK_THROWS_AS(load_image(dir / "junk.png"), FormatError);

  // 16-bit greyscale written through libpng's linear format.
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = 2;
  png.height = 2;
  png.format = PNG_FORMAT_LINEAR_Y;
  const png_uint_16 px[4] = {0, 1000, 40000, 65535};
  const auto path = (dir / "deep.png").string();
  REQUIRE(png_image_write_to_file(&png, path.c_str(), 0, px, 0, nullptr) != 0);
  CHECK_THROWS_AS(load_image(path), FormatError);
}

TEST_CASE("luma conversion") {
  const Image grey(2, 3, 1, 0.3);
  CHECK(to_luma(grey) == grey);
  const Image luma_white = to_luma(Image(2, 2, 3, 1.0));
  for (double v : luma_white.values()) CHECK(v == doctest::Approx(1.0).epsilon(1e-15));
  Image red(1, 1, 3, 0.0);
  red.at(0, 0, 0) = 1.0;
  CHECK(to_luma(red).at(0, 0, 0) == doctest::Approx(0.299).epsilon(1e-12));
  CHECK_THROWS_AS(to_luma(Image(1, 1, 2)), DomainError);
}

TEST_CASE("clamp and quantize") {
  Image img(1, 3, 1);
  img.at(0, 0, 0) = -0.2;
  img.at(0, 0, 1) = 0.5;
  img.at(0, 0, 2) = 1.7;
  const Image c = clamp_unit(img);
  CHECK(c.at(0, 0, 0) == 0.0);
  CHECK(c.at(0, 0, 1) == 0.5);
  CHECK(c.at(0, 0, 2) == 1.0);
  CHECK(quantize_8bit(c).at(0, 0, 1) == 128.0 / 255.0);
}
