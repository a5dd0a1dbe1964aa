#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include <png.h>

#include "ecn/augment.hpp"
#include "ecn/errors.hpp"
#include "ecn/image_io.hpp"
#include "ecn/kv_text.hpp"
#include "ecn/manifest.hpp"
#include "ecn/metrics.hpp"
#include "ecn/rng.hpp"
#include "ecn/synthetic.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace ecn;
using ecn::testing::random_tensor;

namespace {

fs::path scratch(const std::string& name) {
  fs::path p = fs::path(::testing::TempDir()) / ("ecn_data_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Writes raw 8-bit gray pixels, bypassing save_mask.
void write_gray(const fs::path& path, std::size_t h, std::size_t w, const std::vector<std::uint8_t>& px) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(w);
  img.height = static_cast<png_uint_32>(h);
  img.format = PNG_FORMAT_GRAY;
  ASSERT_TRUE(png_image_write_to_file(&img, path.c_str(), 0, px.data(), 0, nullptr));
}

std::pair<double, double> centroid(const Tensor4& mask) {
  double sx = 0, sy = 0, n = 0;
  for (std::size_t y = 0; y < mask.shape().h; ++y)
    for (std::size_t x = 0; x < mask.shape().w; ++x)
      if (mask.at(0, 0, y, x) > 0.5f) {
        sx += x;
        sy += y;
        n += 1;
      }
  return {sx / n, sy / n};
}

Sample blob_sample(std::size_t size) {
  Sample s;
  s.id = "blob";
  s.image = random_tensor<float>({1, 3, size, size}, 3, 0.0, 1.0);
  s.mask = Tensor4({1, 1, size, size});
  for (std::size_t y = size / 2 - 3; y < size / 2 + 1; ++y)
    for (std::size_t x = size / 2 - 1; x < size / 2 + 5; ++x) s.mask.at(0, 0, y, x) = 1.0f;
  return s;
}

}  // namespace

// --- Rng / derive_seed -------------------------------------------------------

TEST(Rng, ReproducibleAndRestorable) {
  Rng a(42), b(42);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(a.next(), b.next());
  const std::string st = a.state();
  const double u = a.uniform();
  Rng c;
  c.set_state(st);
  EXPECT_EQ(c.uniform(), u);
}

TEST(Rng, RangesAndDistinctStreams) {
  Rng r(1);
  for (int i = 0; i < 1000; ++i) {
    double u = r.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    EXPECT_LT(r.below(7), 7u);
  }
  EXPECT_NE(derive_seed(7, "init"), derive_seed(7, "shuffle"));
  EXPECT_NE(derive_seed(7, std::uint64_t{0}), derive_seed(7, std::uint64_t{1}));
  EXPECT_EQ(derive_seed(7, "init"), derive_seed(7, "init"));
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
}

TEST(Rng, NormalMoments) {
  Rng r(5);
  double s = 0, s2 = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    double v = r.normal();
    s += v;
    s2 += v * v;
  }
  EXPECT_NEAR(s / n, 0.0, 0.03);
  EXPECT_NEAR(s2 / n, 1.0, 0.05);
}

// --- kv text -----------------------------------------------------------------

TEST(KvText, ParsesSectionsAndComments) {
  auto secs = parse_kv_text("# top\n[a]\nx = 1\ny = hello world\n\n[b]\nflag = on\n");
  ASSERT_EQ(secs.size(), 2u);
  EXPECT_EQ(secs[0].get_uint("x"), 1u);
  EXPECT_EQ(secs[0].get_string("y"), "hello world");
  EXPECT_TRUE(secs[1].get_bool("flag", false));
  EXPECT_EQ(secs[1].get_double("missing", 2.5), 2.5);
}

TEST(KvText, ErrorsCarryLineNumbers) {
  try {
    parse_kv_text("[a]\nx = 1\nnot a pair\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  EXPECT_THROW(parse_kv_text("x = 1\n"), ParseError);
  auto secs = parse_kv_text("[a]\nx = abc\n");
  EXPECT_THROW(secs[0].get_uint("x"), ParseError);
  EXPECT_THROW(secs[0].get_string("nope"), ParseError);
}

TEST(KvText, DoubleFormattingRoundTrips) {
  for (double v : {0.1, 1.0 / 3.0, 1e-8, 12345.678, -0.0}) {
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
}

// --- image io ----------------------------------------------------------------

TEST(ImageIo, MaskRoundTrip) {
  fs::path dir = scratch("mask_rt");
  Tensor4 m = ecn::binarize(random_tensor<float>({1, 1, 7, 9}, 1, 0.0, 1.0));
  save_mask(m, (dir / "m.png").string());
  EXPECT_TRUE(load_mask((dir / "m.png").string()).identical(m));
}

TEST(ImageIo, AllWhiteMaskIsOnes) {
  fs::path dir = scratch("white");
  write_gray(dir / "w.png", 3, 4, std::vector<std::uint8_t>(12, 255));
  const auto out_v = load_mask((dir / "w.png").string());
  for (float v : out_v.data()) EXPECT_EQ(v, 1.0f);
}

TEST(ImageIo, ThresholdIs128Inclusive) {
  fs::path dir = scratch("thresh");
  std::vector<std::uint8_t> px(9, 0);
  px[4] = 128;
  px[5] = 127;
  write_gray(dir / "t.png", 3, 3, px);
  Tensor4 m = load_mask((dir / "t.png").string());
  EXPECT_EQ(m[4], 1.0f);
  EXPECT_EQ(m[5], 0.0f);
  EXPECT_EQ(m[0], 0.0f);
}

TEST(ImageIo, GrayImageReplicatedToRgb) {
  fs::path dir = scratch("gray");
  write_gray(dir / "g.png", 2, 2, {0, 51, 102, 255});
  Tensor4 img = load_image((dir / "g.png").string());
  ASSERT_EQ(img.shape(), (Shape4{1, 3, 2, 2}));
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_FLOAT_EQ(img.at(0, c, 0, 1), 0.2f);
    EXPECT_FLOAT_EQ(img.at(0, c, 1, 1), 1.0f);
  }
}

TEST(ImageIo, RgbRoundTripAndSampleLoading) {
  fs::path dir = scratch("rgb");
  Tensor4 img({1, 3, 4, 5});
  for (std::size_t i = 0; i < img.numel(); ++i) img[i] = static_cast<float>(i % 256) / 255.0f;
  save_image(img, (dir / "a.png").string());
  Tensor4 back = load_image((dir / "a.png").string());
  for (std::size_t i = 0; i < img.numel(); ++i) EXPECT_NEAR(back[i], img[i], 1e-6);

  save_mask(Tensor4({1, 1, 4, 5}), (dir / "a_mask.png").string());
  Sample s = load_sample((dir / "a.png").string(), (dir / "a_mask.png").string());
  EXPECT_EQ(s.id, "a");
  save_mask(Tensor4({1, 1, 3, 5}), (dir / "bad.png").string());
  EXPECT_THROW(load_sample((dir / "a.png").string(), (dir / "bad.png").string()), IoError);
  EXPECT_THROW(load_image((dir / "missing.png").string()), IoError);
}

TEST(ImageIo, ResizeKeepsMasksBinaryAndConstantsConstant) {
  Tensor4 m = ecn::binarize(random_tensor<float>({1, 1, 10, 7}, 4, 0.0, 1.0));
  const auto out_v = resize_nearest(m, 23, 5);
  for (float v : out_v.data()) EXPECT_TRUE(v == 0.0f || v == 1.0f);
  Tensor4 c({1, 3, 9, 9}, 0.3f);
  const auto out_b = resize_bilinear(c, 4, 13);
  for (float v : out_b.data()) EXPECT_FLOAT_EQ(v, 0.3f);
  EXPECT_TRUE(resize_nearest(m, 10, 7).identical(m));
}

// --- manifest ----------------------------------------------------------------

TEST(Manifest, EmptyAndSingleLine) {
  Manifest e = parse_manifest("");
  EXPECT_TRUE(e.train.empty() && e.val.empty() && e.test.empty());
  Manifest one = parse_manifest("train\ta.png\ta_mask.png\n");
  ASSERT_EQ(one.train.size(), 1u);
  EXPECT_EQ(one.train[0].id, "a");
  EXPECT_TRUE(one.val.empty() && one.test.empty());
}

TEST(Manifest, MalformedLinesNamed) {
  try {
    parse_manifest("train\tonly_image.png\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 1u);
  }
  try {
    parse_manifest("# header\ntrain\ta.png\tm.png\nval\ta.png\tm2.png\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  EXPECT_THROW(parse_manifest("holdout\ta.png\tm.png\n"), ParseError);
}

TEST(Manifest, WriteLoadRoundTripResolvesRelativePaths) {
  fs::path dir = scratch("manifest");
  fs::create_directories(dir / "img");
  Manifest m;
  m.train.push_back({"x", "img/x.png", "img/x_m.png", 0});
  m.test.push_back({"y", "img/y.png", "img/y_m.png", 0});
  write_manifest(m, (dir / "list.tsv").string());
  Manifest back = load_manifest((dir / "list.tsv").string());
  ASSERT_EQ(back.train.size(), 1u);
  ASSERT_EQ(back.test.size(), 1u);
  EXPECT_EQ(fs::path(back.train[0].image), dir / "img/x.png");
}

// --- augment -----------------------------------------------------------------

TEST(Augment, ZeroProbabilitiesAreIdentity) {
  Sample s = blob_sample(24);
  Rng rng(1);
  Sample out = augment(s, AugmentConfig::none(), rng);
  EXPECT_TRUE(out.image.identical(s.image));
  EXPECT_TRUE(out.mask.identical(s.mask));
}

TEST(Augment, FlipsAreInvolutions) {
  Tensor4 x = random_tensor<float>({1, 3, 5, 6}, 2);
  EXPECT_TRUE(flip_horizontal(flip_horizontal(x)).identical(x));
  EXPECT_TRUE(flip_vertical(flip_vertical(x)).identical(x));
  EXPECT_FALSE(flip_horizontal(x).identical(x));
}

TEST(Augment, SameSeedSameOutput) {
  Sample s = blob_sample(24);
  AugmentConfig cfg;
  cfg.p_color = cfg.p_blur = cfg.p_noise = cfg.p_shift_scale_rotate = cfg.p_invert = 1.0;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    Rng a(seed), b(seed);
    Sample x = augment(s, cfg, a);
    Sample y = augment(s, cfg, b);
    EXPECT_TRUE(x.image.identical(y.image));
    EXPECT_TRUE(x.mask.identical(y.mask));
    EXPECT_EQ(a.state(), b.state());
  }
}

TEST(Augment, DrawCountIndependentOfGates) {
  Sample s = blob_sample(16);
  Rng a(9), b(9);
  augment(s, AugmentConfig::none(), a);
  AugmentConfig all;
  all.p_flip = all.p_rotate = all.p_color = all.p_blur = all.p_shift_scale_rotate = all.p_noise = all.p_invert = 1.0;
  augment(s, all, b);
  EXPECT_EQ(a.state(), b.state());
}

TEST(Augment, OutputsStayInRangeAndBinary) {
  Sample s = blob_sample(20);
  AugmentConfig cfg;
  cfg.p_color = cfg.p_blur = cfg.p_noise = cfg.p_shift_scale_rotate = cfg.p_invert = 0.8;
  Rng rng(11);
  for (int i = 0; i < 20; ++i) {
    Sample o = augment(s, cfg, rng);
    for (float v : o.image.data()) {
      EXPECT_GE(v, 0.0f);
      EXPECT_LE(v, 1.0f);
    }
    for (float v : o.mask.data()) EXPECT_TRUE(v == 0.0f || v == 1.0f);
  }
}

TEST(Augment, PhotometricOnlyTouchesImage) {
  Sample s = blob_sample(16);
  AugmentConfig cfg = AugmentConfig::none();
  cfg.p_color = cfg.p_blur = cfg.p_noise = cfg.p_invert = 1.0;
  Rng rng(4);
  AugmentTrace t;
  Sample o = augment(s, cfg, rng, &t);
  EXPECT_TRUE(t.invert && t.noise && t.blur && t.color);
  EXPECT_TRUE(o.mask.identical(s.mask));
  EXPECT_FALSE(o.image.identical(s.image));
}

TEST(Augment, FlipMovesCentroidExactly) {
  Sample s = blob_sample(24);
  AugmentConfig cfg = AugmentConfig::none();
  cfg.p_flip = 1.0;
  Rng rng(5);
  AugmentTrace t;
  Sample o = augment(s, cfg, rng, &t);
  auto [cx, cy] = centroid(s.mask);
  auto [ox, oy] = centroid(o.mask);
  if (t.hflip) {
    EXPECT_DOUBLE_EQ(ox, 23.0 - cx);
    EXPECT_DOUBLE_EQ(oy, cy);
  } else {
    EXPECT_DOUBLE_EQ(ox, cx);
    EXPECT_DOUBLE_EQ(oy, 23.0 - cy);
  }
}

TEST(Augment, GeometricCentroidTracksTransform) {
  Sample s = blob_sample(32);
  AugmentConfig cfg = AugmentConfig::none();
  cfg.p_rotate = 1.0;
  cfg.p_shift_scale_rotate = 1.0;
  auto [cx, cy] = centroid(s.mask);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed);
    AugmentTrace t;
    Sample o = augment(s, cfg, rng, &t);
    // Compose the two output->input maps and invert to map the old centroid forward.
    Affine r = inverse_similarity(32, 32, t.angle_deg, 1.0, 0.0, 0.0);
    Affine q = inverse_similarity(32, 32, t.ssr_angle_deg, t.scale, t.shift_x, t.shift_y);
    auto fwd = [](const Affine& m, double x, double y) {
      const double det = m[0] * m[4] - m[1] * m[3];
      const double u = x - m[2], v = y - m[5];
      return std::pair{(m[4] * u - m[1] * v) / det, (-m[3] * u + m[0] * v) / det};
    };
    auto [x1, y1] = fwd(r, cx, cy);
    auto [x2, y2] = fwd(q, x1, y1);
    auto [ox, oy] = centroid(o.mask);
    EXPECT_NEAR(ox, x2, 1.0) << "seed " << seed;
    EXPECT_NEAR(oy, y2, 1.0) << "seed " << seed;
  }
}

TEST(Augment, ConfigTextRoundTripAndValidation) {
  AugmentConfig c;
  c.p_blur = 0.35;
  c.rotate_deg = 12.5;
  AugmentConfig back = parse_augment_config(to_text(c));
  EXPECT_EQ(back.p_blur, 0.35);
  EXPECT_EQ(back.rotate_deg, 12.5);
  EXPECT_EQ(back.p_flip, c.p_flip);
  EXPECT_THROW(parse_augment_config("[augment]\np_flip = 1.5\n"), ConfigError);
  EXPECT_THROW(parse_augment_config("[augment]\nwobble = 1\n"), ParseError);
  EXPECT_THROW(parse_augment_config("[other]\n"), ParseError);
}

// --- synthetic ---------------------------------------------------------------

TEST(Synthetic, PositiveFractionBounds) {
  auto data = make_synthetic_dataset(12, 48, 3);
  ASSERT_EQ(data.size(), 12u);
  for (const Sample& s : data) {
    double pos = 0;
    for (float v : s.mask.data()) pos += v;
    const double frac = pos / static_cast<double>(s.mask.numel());
    EXPECT_GE(frac, kSyntheticMinPositive);
    EXPECT_LE(frac, kSyntheticMaxPositive);
    for (float v : s.image.data()) {
      EXPECT_GE(v, 0.0f);
      EXPECT_LE(v, 1.0f);
    }
  }
}

TEST(Synthetic, SeededAndDistinct) {
  auto a = make_synthetic_dataset(3, 32, 8);
  auto b = make_synthetic_dataset(3, 32, 8);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_TRUE(a[i].image.identical(b[i].image));
    EXPECT_TRUE(a[i].mask.identical(b[i].mask));
    EXPECT_EQ(a[i].id, b[i].id);
  }
  EXPECT_FALSE(a[0].mask.identical(a[1].mask));
  EXPECT_TRUE(make_synthetic_dataset(0, 32, 1).empty());
  EXPECT_THROW(make_synthetic_sample(16, 1, "x"), ConfigError);
}

TEST(Synthetic, CracksAreDarker) {
  for (const Sample& s : make_synthetic_dataset(4, 64, 21)) {
    double crack = 0, bg = 0, nc = 0, nb = 0;
    for (std::size_t i = 0; i < s.mask.numel(); ++i) {
      const double lum = (s.image[i] + s.image[i + s.mask.numel()] + s.image[i + 2 * s.mask.numel()]) / 3.0;
      if (s.mask[i] > 0.5f) {
        crack += lum;
        ++nc;
      } else {
        bg += lum;
        ++nb;
      }
    }
    EXPECT_LT(crack / nc + 0.2, bg / nb);
  }
}
