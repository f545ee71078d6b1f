#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "ipn/png_io.hpp"

using namespace ipn;

TEST(Palette, DavisColors) {
  const auto& p = png::davis_palette();
  EXPECT_EQ(p[0], (std::array<std::uint8_t, 3>{0, 0, 0}));
  EXPECT_EQ(p[1], (std::array<std::uint8_t, 3>{128, 0, 0}));
  EXPECT_EQ(p[2], (std::array<std::uint8_t, 3>{0, 128, 0}));
  EXPECT_EQ(p[3], (std::array<std::uint8_t, 3>{128, 128, 0}));
  EXPECT_EQ(p[4], (std::array<std::uint8_t, 3>{0, 0, 128}));
}

TEST(LabelPng, RoundTripAndDeterministic) {
  std::mt19937 rng(1);
  LabelMask m{Grid<std::uint8_t>(17, 23), 3};
  for (auto& v : m.labels.values()) v = rng() % 4;
  const auto bytes = png::encode_labels(m);
  EXPECT_EQ(bytes, png::encode_labels(m));
  const auto back = png::decode_labels(bytes, 3);
  EXPECT_EQ(back, m);
}

TEST(ProbPng, SixteenBitQuantization) {
  ProbMask m{Grid<float>(4, 5), 1};
  std::mt19937 rng(2);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (auto& v : m.values.values()) v = u(rng);
  m.values(0, 0) = 0.0f;
  m.values(0, 1) = 1.0f;
  const auto back = png::decode_prob(png::encode_prob(m));
  for (std::size_t i = 0; i < m.values.size(); ++i) {
    EXPECT_NEAR(back.values[i], m.values[i], 0.5 / 65535.0 + 1e-7);
    EXPECT_EQ(std::lround(back.values[i] * 65535.0), std::lround(m.values[i] * 65535.0));
  }
  EXPECT_EQ(back.values(0, 1), 1.0f);
  // Decoding and re-encoding reproduces the same bytes.
  EXPECT_EQ(png::encode_prob(back), png::encode_prob(m));
}

TEST(FramePng, EightBitRoundTrip) {
  Frame f(9, 10);
  std::mt19937 rng(3);
  for (auto& v : f.data()) v = static_cast<float>(rng() % 256) / 255.0f;
  const auto back = png::decode_frame(png::encode_frame(f));
  ASSERT_EQ(back.height(), 9);
  ASSERT_EQ(back.width(), 10);
  for (std::size_t i = 0; i < f.data().size(); ++i) EXPECT_NEAR(back.data()[i], f.data()[i], 1e-6);
}

TEST(PngErrors, GarbageIsRejected) {
  const png::Bytes junk{1, 2, 3, 4, 5};
  EXPECT_THROW(png::decode_frame(junk), IoError);
  EXPECT_THROW(png::decode_labels(junk), IoError);
}

TEST(PngFiles, AtomicWriteAndRead) {
  const auto dir = std::filesystem::temp_directory_path() / "ipn_png_test";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  const png::Bytes data{9, 8, 7};
  png::write_file(dir / "x.bin", data);
  EXPECT_EQ(png::read_file(dir / "x.bin"), data);
  EXPECT_FALSE(std::filesystem::exists(dir / "x.bin.tmp"));
  EXPECT_THROW(png::read_file(dir / "missing.png"), IoError);
  std::filesystem::remove_all(dir);
}
