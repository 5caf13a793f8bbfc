// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "doctest.h"
#include "stst/config.hpp"
#include "stst/error.hpp"
#include "stst/image.hpp"
#include "stst/io.hpp"
#include "support.hpp"

using namespace stst;
using testing::random_rgb;
using testing::uniform_rgb;

TEST_CASE("grayscale uses BT.601 weights") {
  CHECK(to_grayscale(uniform_rgb(3, 2, 255, 255, 255)).at(0, 2, 1) == doctest::Approx(255.0).epsilon(1e-15));
  CHECK(to_grayscale(uniform_rgb(3, 2, 255, 0, 0)).at(0, 1, 1) == doctest::Approx(76.245).epsilon(1e-15));
  CHECK(to_grayscale(uniform_rgb(3, 2, 0, 0, 0)).at(0, 0, 0) == 0.0);
  const auto g = to_grayscale(RgbImage(5, 4));
  CHECK(g.width() == 5);
  CHECK(g.height() == 4);
  CHECK(g.space() == ColorSpace::Grayscale);
}

TEST_CASE("grayscale lies between the channel extremes") {
  const int bad = testing::for_all(11, 200, [](Rng& rng, int) {
    const auto img = random_rgb(rng, 4, 3);
    const auto g = to_grayscale(img);
    for (std::size_t y = 0; y < 3; ++y) {
      for (std::size_t x = 0; x < 4; ++x) {
        const double lo = std::min({img.at(x, y, 0), img.at(x, y, 1), img.at(x, y, 2)});
        const double hi = std::max({img.at(x, y, 0), img.at(x, y, 1), img.at(x, y, 2)});
        if (g.at(0, x, y) < lo - 1e-12 || g.at(0, x, y) > hi + 1e-12) return false;
      }
    }
    return true;
  });
  CHECK(bad == -1);
}

TEST_CASE("optical density of single samples") {
  CHECK(rgb_to_od(uniform_rgb(1, 1, 255, 255, 255)).at(0, 0, 0) == 0.0);
  CHECK(rgb_to_od(uniform_rgb(1, 1, 0, 0, 0)).at(1, 0, 0) == doctest::Approx(std::log10(255.0)).epsilon(1e-14));
  CHECK(rgb_to_od(uniform_rgb(1, 1, 26, 26, 26)).at(2, 0, 0) == doctest::Approx(0.991567).epsilon(1e-6));
  CHECK(rgb_to_od(uniform_rgb(1, 1, 200, 200, 200), 240.0).at(0, 0, 0) ==
        doctest::Approx(-std::log10(200.0 / 240.0)).epsilon(1e-14));
  CHECK_THROWS_AS(rgb_to_od(uniform_rgb(1, 1, 1, 1, 1), 0.0), Error);
}

TEST_CASE("inverse optical density rounds half away from zero") {
  PlanarImage od(3, 1, 1, ColorSpace::OpticalDensity);
  CHECK(od_to_rgb(od).at(0, 0, 0) == 255);
  od.data()[0] = 1.0;
  CHECK(od_to_rgb(od).at(0, 0, 0) == 26);  // 25.5
  od.data()[0] = 40.0;
  CHECK(od_to_rgb(od).at(0, 0, 0) == 0);
  CHECK_THROWS_AS(od_to_rgb(PlanarImage(3, 1, 1, ColorSpace::Grayscale)), Error);
}

TEST_CASE("optical density round trip is exact for every sample value >= 1") {
  RgbImage img(255, 1);
  for (std::size_t x = 0; x < 255; ++x) {
    for (std::size_t c = 0; c < 3; ++c) img.at(x, 0, c) = static_cast<std::uint8_t>(x + 1);
  }
  CHECK(od_to_rgb(rgb_to_od(img)) == img);
  CHECK(od_to_rgb(rgb_to_od(uniform_rgb(1, 1, 0, 0, 0))) == uniform_rgb(1, 1, 1, 1, 1));
}

TEST_CASE("optical density is monotone in intensity") {
  RgbImage ramp(256, 1);
  for (std::size_t x = 0; x < 256; ++x) ramp.at(x, 0, 0) = ramp.at(x, 0, 1) = ramp.at(x, 0, 2) = x;
  const auto od = rgb_to_od(ramp);
  for (std::size_t x = 1; x < 256; ++x) CHECK(od.at(0, x, 0) <= od.at(0, x - 1, 0));
  for (double v : od.data()) CHECK(v >= 0.0);
}

TEST_CASE("lab space: achromatic axis and black guard") {
  for (int g : {1, 17, 128, 255}) {
    const auto g8 = static_cast<std::uint8_t>(g);
    const auto lab = rgb_to_lalphabeta(uniform_rgb(1, 1, g8, g8, g8));
    CHECK(std::abs(lab.at(1, 0, 0)) < 1e-9);
    CHECK(std::abs(lab.at(2, 0, 0)) < 1e-9);
  }
  const auto black = rgb_to_lalphabeta(uniform_rgb(2, 2, 0, 0, 0));
  for (double v : black.data()) CHECK(std::isfinite(v));
}

TEST_CASE("lab round trip within one level on a 16^3 lattice") {
  RgbImage lattice(16 * 16, 16);
  for (std::size_t r = 0; r < 16; ++r) {
    for (std::size_t g = 0; g < 16; ++g) {
      for (std::size_t b = 0; b < 16; ++b) {
        const std::size_t x = r * 16 + g;
        lattice.at(x, b, 0) = static_cast<std::uint8_t>(r * 17);
        lattice.at(x, b, 1) = static_cast<std::uint8_t>(g * 17);
        lattice.at(x, b, 2) = static_cast<std::uint8_t>(b * 17);
      }
    }
  }
  const auto back = lalphabeta_to_rgb(rgb_to_lalphabeta(lattice));
  int worst = 0;
  for (std::size_t i = 0; i < lattice.data().size(); ++i) {
    worst = std::max(worst, std::abs(int(back.data()[i]) - int(lattice.data()[i])));
  }
  CHECK(worst <= 1);
}

TEST_CASE("lab round trip within one level on random images") {
  const int bad = testing::for_all(12, 100, [](Rng& rng, int) {
    const auto img = random_rgb(rng, 6, 5);
    const auto back = lalphabeta_to_rgb(rgb_to_lalphabeta(img));
    for (std::size_t i = 0; i < img.data().size(); ++i) {
      if (std::abs(int(back.data()[i]) - int(img.data()[i])) > 1) return false;
    }
    return true;
  });
  CHECK(bad == -1);
}

TEST_CASE("unit range mapping") {
  CHECK(round_to_u8(127.5) == 128);
  CHECK(round_to_u8(-0.5) == 0);
  CHECK(round_to_u8(254.5) == 255);
  CHECK(round_to_u8(300.0) == 255);
  CHECK(round_to_u8(std::nan("")) == 0);

  const auto n = normalize_unit(uniform_rgb(2, 2, 0, 255, 51));
  CHECK(n.space() == ColorSpace::Normalized);
  CHECK(n.at(0, 0, 0) == -1.0);
  CHECK(n.at(1, 0, 0) == 1.0);
  CHECK(denormalize_rgb(n) == uniform_rgb(2, 2, 0, 255, 51));

  Rng rng(5);
  const auto img = random_rgb(rng, 7, 3);
  CHECK(denormalize_rgb(normalize_unit(img)) == img);
}

TEST_CASE("crop") {
  Rng rng(3);
  const auto img = random_rgb(rng, 10, 8);
  const auto c = crop(img, 2, 3, 4, 5);
  CHECK(c.width() == 4);
  CHECK(c.height() == 5);
  CHECK(c.at(0, 0, 1) == img.at(2, 3, 1));
  CHECK(c.at(3, 4, 2) == img.at(5, 7, 2));
  CHECK_THROWS_AS(crop(img, 7, 0, 4, 1), Error);
}

TEST_CASE("image buffers validate their length") {
  CHECK_THROWS_AS(RgbImage(2, 2, std::vector<std::uint8_t>(11)), Error);
  CHECK_THROWS_AS(RgbImage(0, 2), Error);
  CHECK_NOTHROW(RgbImage(2, 2, std::vector<std::uint8_t>(12)));
}

TEST_CASE("png and ppm round trips") {
  Rng rng(21);
  const auto img = random_rgb(rng, 13, 7);
  CHECK(decode_image(encode_png(img)) == img);
  CHECK(decode_image(encode_ppm(img)) == img);
  CHECK(detect_format(encode_png(img)) == ImageFormat::Png);
  CHECK(detect_format(encode_ppm(img)) == ImageFormat::Ppm);

  const auto dir = testing::scratch_dir("io");
  write_image(img, dir / "a.png");
  write_image(img, dir / "b.ppm");
  CHECK(read_image(dir / "a.png") == img);
  CHECK(read_image(dir / "b.ppm") == img);
  CHECK(list_images(dir).size() == 2);
  CHECK_THROWS_AS(write_image(img, dir / "c.jpg"), Error);
}

TEST_CASE("lossy and unknown inputs are rejected") {
  const std::vector<std::uint8_t> jpeg{0xFF, 0xD8, 0xFF, 0xE0, 0, 0x10, 'J', 'F', 'I', 'F'};
  try {
    (void)decode_image(jpeg);
    FAIL("jpeg accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Format);
  }
  CHECK_THROWS_AS(decode_image(std::vector<std::uint8_t>{'P', '3', '\n'}), Error);
  CHECK_THROWS_AS(decode_image(std::vector<std::uint8_t>{}), Error);
  auto png = encode_png(RgbImage(4, 4));
  png.resize(png.size() / 2);
  CHECK_THROWS_AS(decode_image(png), Error);
}

TEST_CASE("sha256 of known strings") {
  CHECK(sha256_hex(std::string_view("")) == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex(std::string_view("abc")) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("key value config") {
  const auto cfg = KeyValueConfig::parse("# comment\n\nlr = 0.001\nepochs=3\nname =  a b \nflag = true\n");
  CHECK(cfg.get_double("lr", 0) == 0.001);
  CHECK(cfg.get_int("epochs", 0) == 3);
  CHECK(cfg.get_string("name", "") == "a b");
  CHECK(cfg.get_bool("flag", false));
  CHECK(cfg.get_int("missing", 7) == 7);
  CHECK_THROWS_AS(KeyValueConfig::parse("a = 1\na = 2\n"), Error);
  CHECK_THROWS_AS(KeyValueConfig::parse("no equals sign\n"), Error);
  CHECK_THROWS_AS(cfg.get_int("lr", 0), Error);
  CHECK_THROWS_AS(cfg.require_known({"lr", "epochs", "name"}), Error);
  CHECK_NOTHROW(cfg.require_known({"lr", "epochs", "name", "flag"}));
  CHECK(KeyValueConfig::parse(cfg.serialize()).entries() == cfg.entries());
}

TEST_CASE("stain matrices round trip through config") {
  KeyValueConfig cfg;
  stain_matrix_to_config(ruifrok_he_matrix(), cfg);
  const auto m = stain_matrix_from_config(cfg);
  REQUIRE(m.stains() == 3);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(m.label(k) == ruifrok_he_matrix().label(k));
    for (std::size_t c = 0; c < 3; ++c) CHECK(m.column(k)[c] == doctest::Approx(ruifrok_he_matrix().column(k)[c]));
  }
  CHECK(stain_matrix_from_config(KeyValueConfig::parse("stain.H = 0.65 0.70 0.29\nstain.E = 0.07 0.99 0.11\n"))
            .stains() == 2);
}
