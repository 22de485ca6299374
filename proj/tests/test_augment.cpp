#include <gtest/gtest.h>

#include <set>

#include "la3/augment.hpp"

using namespace la3;

namespace {

ImageRaster random_image(int h, int w, int c, std::uint64_t seed) {
  ImageRaster img(h, w, c);
  Rng rng(seed);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.index(256));
  return img;
}

Magnitude value_mag(double v) {
  Magnitude m;
  m.value = v;
  return m;
}

}  // namespace

TEST(OpList, SixteenCanonicalOps) {
  const auto ops = list_ops();
  EXPECT_EQ(ops.size(), 16u);
  EXPECT_EQ(ops[0], OpKind::Identity);
  EXPECT_EQ(op_code(ops[0]), 0);
  std::set<int> codes;
  for (auto k : ops) codes.insert(op_code(k));
  EXPECT_EQ(codes.size(), 16u);
  EXPECT_EQ(op_name(OpKind::Cutout), "Cutout");
  EXPECT_EQ(op_code(OpKind::Sharpness), 14);
  for (auto k : ops) EXPECT_EQ(op_from_name(op_name(k)), k);
  EXPECT_THROW(op_from_name("SamplePairing"), Error);
  EXPECT_THROW(op_from_code(16), Error);
}

TEST(AugTriple, CodeRoundTripAndOrder) {
  for (int c = 0; c < kNumTriples; ++c) EXPECT_EQ(AugTriple::from_code(c).code(), c);
  EXPECT_LT(AugTriple::from_codes(0, 15, 15), AugTriple::from_codes(1, 0, 0));
  EXPECT_EQ(AugTriple::from_codes(7, 7, 0).to_string(), "(Invert,Invert,Identity)");
}

TEST(Magnitude, RangeTable) {
  for (auto k : {OpKind::Identity, OpKind::AutoContrast, OpKind::Invert, OpKind::Equalize})
    EXPECT_FALSE(magnitude_spec(k).uses_magnitude);
  for (auto k : list_ops()) EXPECT_LE(magnitude_spec(k).lo, magnitude_spec(k).hi);
  EXPECT_DOUBLE_EQ(resolve_magnitude(OpKind::Rotate, 1.0, 1).value, 30.0);
  EXPECT_DOUBLE_EQ(resolve_magnitude(OpKind::Rotate, 1.0, -1).value, -30.0);
  EXPECT_EQ(posterize_bits(resolve_magnitude(OpKind::Posterize, 1.0).value), 4);
  EXPECT_EQ(posterize_bits(resolve_magnitude(OpKind::Posterize, 0.0).value), 8);
  EXPECT_DOUBLE_EQ(resolve_magnitude(OpKind::Solarize, 0.0).value, 256.0);
  EXPECT_DOUBLE_EQ(resolve_magnitude(OpKind::Solarize, 1.0).value, 0.0);
  EXPECT_DOUBLE_EQ(resolve_magnitude(OpKind::ShearX, 1.0, -1).value, -0.3);
  EXPECT_DOUBLE_EQ(resolve_magnitude(OpKind::TranslateY, 1.0, 1).value, 0.45);
  EXPECT_DOUBLE_EQ(resolve_magnitude(OpKind::Brightness, 1.0, 1).value, 1.9);
  EXPECT_NEAR(resolve_magnitude(OpKind::Contrast, 1.0, -1).value, 0.1, 1e-15);
  EXPECT_DOUBLE_EQ(resolve_magnitude(OpKind::Cutout, 1.0).value, 0.2);
}

TEST(Magnitude, SampledValuesStayInRange) {
  Rng rng(3);
  for (int i = 0; i < 2000; ++i) {
    const auto k = static_cast<OpKind>(rng.index(kNumOps));
    const auto m = sample_magnitude(k, rng);
    ASSERT_GE(m.normalized, 0.0);
    ASSERT_LT(m.normalized, 1.0);
    const auto& s = magnitude_spec(k);
    if (!s.uses_magnitude) continue;
    const double mag = std::abs(m.value - s.center);
    ASSERT_GE(mag, s.lo - 1e-12);
    ASSERT_LE(mag, s.hi + 1e-12);
  }
}

TEST(Magnitude, DrawCounts) {
  auto draws = [](OpKind k) {
    Rng a(11), b(11);
    sample_magnitude(k, a);
    int n = 0;
    while (b.state() != a.state()) {
      b.next();
      ++n;
    }
    return n;
  };
  EXPECT_EQ(draws(OpKind::Identity), 1);
  EXPECT_EQ(draws(OpKind::Invert), 1);
  EXPECT_EQ(draws(OpKind::Solarize), 1);
  EXPECT_EQ(draws(OpKind::Rotate), 2);
  EXPECT_EQ(draws(OpKind::Brightness), 2);
  EXPECT_EQ(draws(OpKind::Cutout), 3);
}

TEST(ApplyOp, IdentityCopies) {
  const auto img = random_image(8, 9, 3, 1);
  EXPECT_EQ(apply_op(img, OpKind::Identity, value_mag(0.7)), img);
}

TEST(ApplyOp, Invert) {
  ImageRaster img(1, 2, 1);
  img.pixels = {10, 255};
  const auto out = apply_op(img, OpKind::Invert, {});
  EXPECT_EQ(out.pixels[0], 245);
  EXPECT_EQ(out.pixels[1], 0);
}

TEST(ApplyOp, PosterizeFourBits) {
  ImageRaster img(1, 1, 1, 0b10111011);
  EXPECT_EQ(apply_op(img, OpKind::Posterize, value_mag(4)).pixels[0], 0b10110000);
}

TEST(ApplyOp, SolarizeThreshold) {
  ImageRaster img(1, 3, 1);
  img.pixels = {200, 100, 128};
  const auto out = apply_op(img, OpKind::Solarize, value_mag(128));
  EXPECT_EQ(out.pixels[0], 55);
  EXPECT_EQ(out.pixels[1], 100);
  EXPECT_EQ(out.pixels[2], 127);
}

TEST(ApplyOp, IdentityEndsOfRanges) {
  const auto img = random_image(7, 7, 3, 4);
  EXPECT_EQ(apply_op(img, OpKind::Posterize, value_mag(8)), img);
  EXPECT_EQ(apply_op(img, OpKind::Solarize, value_mag(256)), img);
  for (auto k : {OpKind::Contrast, OpKind::Color, OpKind::Brightness, OpKind::Sharpness})
    EXPECT_EQ(apply_op(img, k, value_mag(1.0)), img) << op_name(k);
  for (auto k : {OpKind::ShearX, OpKind::ShearY, OpKind::TranslateX, OpKind::TranslateY, OpKind::Rotate, OpKind::Cutout})
    EXPECT_EQ(apply_op(img, k, value_mag(0.0)), img) << op_name(k);
}

TEST(ApplyOp, BrightnessZeroIsBlack) {
  const auto out = apply_op(random_image(4, 4, 1, 2), OpKind::Brightness, value_mag(0.0));
  for (auto p : out.pixels) EXPECT_EQ(p, 0);
}

TEST(ApplyOp, ContrastZeroIsMeanGray) {
  ImageRaster img(1, 2, 1);
  img.pixels = {0, 101};
  const auto out = apply_op(img, OpKind::Contrast, value_mag(0.0));
  EXPECT_EQ(out.pixels[0], 51);
  EXPECT_EQ(out.pixels[1], 51);
}

TEST(ApplyOp, ColorOnGrayIsIdentity) {
  const auto img = random_image(5, 5, 1, 9);
  EXPECT_EQ(apply_op(img, OpKind::Color, value_mag(0.1)), img);
}

TEST(ApplyOp, ColorZeroGivesGray) {
  ImageRaster img(1, 1, 3);
  img.pixels = {200, 100, 50};
  const auto out = apply_op(img, OpKind::Color, value_mag(0.0));
  const int g = (299 * 200 + 587 * 100 + 114 * 50 + 500) / 1000;
  for (auto p : out.pixels) EXPECT_EQ(p, g);
}

TEST(ApplyOp, TranslateShiftsAndFills) {
  ImageRaster img(1, 4, 1);
  img.pixels = {1, 2, 3, 4};
  const auto right = apply_op(img, OpKind::TranslateX, value_mag(0.25));
  EXPECT_EQ(right.pixels, (std::vector<std::uint8_t>{128, 1, 2, 3}));
  const auto left = apply_op(img, OpKind::TranslateX, value_mag(-0.5));
  EXPECT_EQ(left.pixels, (std::vector<std::uint8_t>{3, 4, 128, 128}));
}

TEST(ApplyOp, TranslateY) {
  ImageRaster img(2, 1, 1);
  img.pixels = {7, 9};
  EXPECT_EQ(apply_op(img, OpKind::TranslateY, value_mag(0.45)).pixels, (std::vector<std::uint8_t>{128, 7}));
}

TEST(ApplyOp, ShearKeepsCentreRow) {
  const auto img = random_image(5, 5, 1, 6);
  const auto out = apply_op(img, OpKind::ShearX, value_mag(0.3));
  for (int x = 0; x < 5; ++x) EXPECT_EQ(out.at(2, x), img.at(2, x));
  const auto outy = apply_op(img, OpKind::ShearY, value_mag(-0.3));
  for (int y = 0; y < 5; ++y) EXPECT_EQ(outy.at(y, 2), img.at(y, 2));
}

TEST(ApplyOp, RotateKeepsCentrePixelAndNinetyDegreesIsExact) {
  const auto img = random_image(5, 5, 1, 8);
  const auto out = apply_op(img, OpKind::Rotate, value_mag(90.0));
  EXPECT_EQ(out.at(2, 2), img.at(2, 2));
  // one quarter turn maps every pixel inside a square image onto another
  for (int v : out.pixels) EXPECT_NE(std::count(img.pixels.begin(), img.pixels.end(), v), 0);
}

TEST(ApplyOp, AutoContrastStretches) {
  ImageRaster img(1, 3, 1);
  img.pixels = {50, 100, 150};
  EXPECT_EQ(apply_op(img, OpKind::AutoContrast, {}).pixels, (std::vector<std::uint8_t>{0, 128, 255}));
  ImageRaster flat(2, 2, 1, 77);
  EXPECT_EQ(apply_op(flat, OpKind::AutoContrast, {}), flat);
}

TEST(ApplyOp, EqualizeTwoLevels) {
  ImageRaster img(1, 4, 1);
  img.pixels = {10, 10, 200, 200};
  // step = (4 - 2) / 255 = 0 -> unchanged (too few pixels to spread)
  EXPECT_EQ(apply_op(img, OpKind::Equalize, {}), img);

  ImageRaster big(32, 32, 1);
  for (std::size_t i = 0; i < big.pixels.size(); ++i) big.pixels[i] = i < 512 ? 100 : 120;
  const auto out = apply_op(big, OpKind::Equalize, {});
  // step = 512 / 255 = 2; lut[100] = 1 / 2 = 0, lut[120] = (1 + 512) / 2 clamped to 255
  EXPECT_EQ(out.pixels.front(), 0);
  EXPECT_EQ(out.pixels.back(), 255);
}

TEST(ApplyOp, SharpnessLeavesBordersAndFlatRegions) {
  ImageRaster flat(4, 4, 1, 90);
  EXPECT_EQ(apply_op(flat, OpKind::Sharpness, value_mag(1.9)), flat);
  auto img = random_image(4, 4, 1, 2);
  const auto out = apply_op(img, OpKind::Sharpness, value_mag(0.1));
  for (int x = 0; x < 4; ++x) {
    EXPECT_EQ(out.at(0, x), img.at(0, x));
    EXPECT_EQ(out.at(3, x), img.at(3, x));
  }
}

TEST(ApplyOp, CutoutSquare) {
  ImageRaster img(10, 10, 1, 0);
  Magnitude m;
  m.value = 0.2;  // side 2
  m.pos_x = 0.5;
  m.pos_y = 0.5;
  const auto out = apply_op(img, OpKind::Cutout, m);
  int filled = 0;
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 10; ++x)
      if (out.at(y, x) == 128) {
        ++filled;
        EXPECT_TRUE(y >= 4 && y < 6 && x >= 4 && x < 6);
      }
  EXPECT_EQ(filled, 4);
}

TEST(ApplyOpProperties, ShapeRangePurityAcrossOpsAndMagnitudes) {
  Rng rng(17);
  for (int trial = 0; trial < 300; ++trial) {
    const int c = rng.coin() ? 1 : 3;
    const auto img = random_image(3 + static_cast<int>(rng.index(10)), 3 + static_cast<int>(rng.index(10)), c, rng.next());
    const auto copy = img;
    for (auto k : list_ops()) {
      const auto mag = sample_magnitude(k, rng);
      const auto out = apply_op(img, k, mag);
      ASSERT_TRUE(out.same_shape(img)) << op_name(k);
      ASSERT_EQ(out.pixels.size(), img.pixels.size());
      ASSERT_EQ(img, copy) << "input mutated by " << op_name(k);
    }
  }
}

TEST(ApplyOpProperties, MagnitudeFreeOpsIgnoreMagnitude) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const auto img = random_image(6, 6, trial % 2 ? 3 : 1, rng.next());
    for (auto k : {OpKind::Identity, OpKind::AutoContrast, OpKind::Equalize, OpKind::Invert}) {
      Magnitude a, b;
      a.value = rng.uniform(-100, 100);
      b.value = rng.uniform(-100, 100);
      a.normalized = rng.uniform();
      EXPECT_EQ(apply_op(img, k, a), apply_op(img, k, b));
    }
  }
}

TEST(ApplyOpProperties, InvertIsAnInvolution) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto img = random_image(5, 7, 3, s);
    EXPECT_EQ(apply_op(apply_op(img, OpKind::Invert, {}), OpKind::Invert, {}), img);
  }
}

TEST(ApplyTriple, IdentityTripleIsByteIdentical) {
  const auto img = random_image(8, 8, 3, 2);
  Rng rng(4);
  EXPECT_EQ(apply_triple(img, AugTriple{}, rng), img);
}

TEST(ApplyTriple, DoubleInvertIsByteIdentical) {
  const auto img = random_image(8, 8, 1, 2);
  Rng rng(4);
  EXPECT_EQ(apply_triple(img, {OpKind::Invert, OpKind::Invert, OpKind::Identity}, rng), img);
}

TEST(ApplyTriple, GrayImageKeepsShape) {
  ImageRaster gray(6, 9, 3, 128);
  Rng rng(1);
  for (int c = 0; c < kNumTriples; c += 37) {
    const auto out = apply_triple(gray, AugTriple::from_code(c), rng);
    EXPECT_TRUE(out.same_shape(gray));
  }
}

TEST(ApplyTriple, TraceAndDrawCount) {
  const auto img = random_image(6, 6, 1, 2);
  const AugTriple t{OpKind::Rotate, OpKind::Cutout, OpKind::Equalize};
  Rng a(9);
  std::vector<AppliedOp> trace;
  const auto out = apply_triple(img, t, a, &trace);
  ASSERT_EQ(trace.size(), 3u);
  EXPECT_EQ(trace[0].kind, OpKind::Rotate);
  EXPECT_EQ(trace[1].kind, OpKind::Cutout);
  EXPECT_EQ(trace[2].kind, OpKind::Equalize);
  // replay from the trace reproduces the output
  ImageRaster replay = img;
  for (const auto& op : trace) replay = apply_op(replay, op.kind, op.magnitude);
  EXPECT_EQ(replay, out);
  // Rotate: m + sign, Cutout: m + 2 positions, Equalize: m
  Rng b(9);
  for (int i = 0; i < 6; ++i) b.next();
  EXPECT_EQ(a.state(), b.state());
}

TEST(ApplyTriple, OrderMatters) {
  const auto img = random_image(8, 8, 1, 12);
  Rng a(1), b(1);
  const auto x = apply_triple(img, {OpKind::Solarize, OpKind::Invert, OpKind::Identity}, a);
  const auto y = apply_triple(img, {OpKind::Invert, OpKind::Solarize, OpKind::Identity}, b);
  EXPECT_NE(x, y);
}

TEST(ImageRaster, RejectsBadDims) {
  EXPECT_THROW(ImageRaster(0, 3, 1), Error);
  EXPECT_THROW(ImageRaster(2, 3, 2), Error);
  ImageRaster img(2, 2, 1);
  img.pixels.pop_back();
  EXPECT_THROW(apply_op(img, OpKind::Identity, {}), Error);
}
