#include <gtest/gtest.h>

#include <filesystem>

#include "ipn/data.hpp"

using namespace ipn;
using namespace ipn::train;

namespace {

int area(const LabelMask& m, int id) {
  return static_cast<int>(std::count(m.labels.values().begin(), m.labels.values().end(), id));
}

}  // namespace

TEST(ToyVideo, DeterministicAndExact) {
  ToyVideoSpec spec;
  spec.num_frames = 6;
  spec.h = spec.w = 64;
  const auto a = generate_toy_video(spec, 5);
  const auto b = generate_toy_video(spec, 5);
  ASSERT_EQ(a.length(), 6);
  for (int t = 0; t < 6; ++t) {
    EXPECT_EQ(a.frames[t], b.frames[t]);
    EXPECT_EQ(a.gts[t], b.gts[t]);
    for (auto v : a.gts[t].labels.values()) EXPECT_LE(v, 1);
    for (float v : a.frames[t].data()) {
      EXPECT_GE(v, 0.0f);
      EXPECT_LE(v, 1.0f);
    }
  }
  EXPECT_NE(generate_toy_video(spec, 6).frames[0], a.frames[0]);
}

TEST(ToyVideo, ZeroMotionIsStatic) {
  ToyVideoSpec spec;
  spec.num_frames = 4;
  spec.h = spec.w = 48;
  spec.motion_amplitude = 0.0;
  const auto v = generate_toy_video(spec, 2);
  for (int t = 1; t < 4; ++t) EXPECT_EQ(v.gts[t], v.gts[0]);
}

TEST(ToyVideo, ObjectsStayMostlyInside) {
  ToyVideoSpec spec;
  spec.num_objects = 3;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto v = generate_toy_video(spec, seed);
    for (int m = 1; m <= 3; ++m) EXPECT_GT(area(v.gts[0], m) + area(v.gts[8], m), 0);
  }
}

TEST(Affine, InverseAndTranslation) {
  const auto a = Affine::similarity(12.0, 1.07, 10, 20, 3, -2);
  const auto [x, y] = a.apply(4.0, 5.0);
  const auto [bx, by] = a.inverse().apply(x, y);
  EXPECT_NEAR(bx, 4.0, 1e-9);
  EXPECT_NEAR(by, 5.0, 1e-9);

  LabelMask m{Grid<std::uint8_t>(20, 30, 0), 1};
  for (int r = 5; r < 10; ++r) {
    for (int c = 5; c < 12; ++c) m.labels(r, c) = 1;
  }
  const auto shifted = warp_labels(m, Affine::translation(5, 0));
  for (int r = 0; r < 20; ++r) {
    for (int c = 0; c < 30; ++c) {
      EXPECT_EQ(shifted.labels(r, c), c >= 5 ? m.labels(r, c - 5) : 0) << r << "," << c;
    }
  }
}

TEST(PretrainPair, IdentityAndTranslation) {
  ToyVideoSpec spec;
  spec.h = spec.w = 128;
  spec.num_objects = 1;
  const auto v = generate_toy_video(spec, 3);
  PairTransforms id{Affine::identity(), {Affine::identity()}};
  const auto same = compose_pretrain_pair(v.frames[0], v.gts[0], id);
  ASSERT_TRUE(same.has_value());
  ASSERT_EQ(same->length(), 2);
  EXPECT_EQ(same->gts[1], same->gts[0]);
  EXPECT_EQ(same->frames[1], same->frames[0]);

  PairTransforms shift{Affine::identity(), {Affine::translation(5, 0)}};
  const auto moved = compose_pretrain_pair(v.frames[0], v.gts[0], shift);
  ASSERT_TRUE(moved.has_value());
  EXPECT_EQ(moved->gts[1], warp_labels(moved->gts[0], Affine::translation(5, 0)));
}

TEST(PretrainPair, LaterObjectOccludesEarlier) {
  Frame img(32, 32);
  LabelMask m{Grid<std::uint8_t>(32, 32, 0), 2};
  for (int r = 4; r < 16; ++r) {
    for (int c = 4; c < 16; ++c) {
      m.labels(r, c) = 1;
      img.at(0, r, c) = 1.0f;
    }
  }
  for (int r = 18; r < 30; ++r) {
    for (int c = 4; c < 16; ++c) {
      m.labels(r, c) = 2;
      img.at(1, r, c) = 1.0f;
    }
  }
  // Object 2 moves up by 8 pixels onto rows 10..21, overlapping object 1.
  PairTransforms t{Affine::identity(), {Affine::identity(), Affine::translation(0, -8)}};
  const auto pair = compose_pretrain_pair(img, m, t);
  ASSERT_TRUE(pair.has_value());
  for (int r = 10; r < 16; ++r) {
    for (int c = 4; c < 16; ++c) {
      EXPECT_EQ(pair->gts[1].labels(r, c), 2);
      EXPECT_FLOAT_EQ(pair->frames[1].at(1, r, c), 1.0f);
      EXPECT_FLOAT_EQ(pair->frames[1].at(0, r, c), 0.0f);
    }
  }
}

TEST(PretrainPair, TinyObjectsAreSkipped) {
  Frame img(32, 32);
  LabelMask m{Grid<std::uint8_t>(32, 32, 0), 1};
  m.labels(3, 3) = 1;
  std::mt19937_64 rng(1);
  EXPECT_FALSE(synthesize_pretrain_pair(img, m, rng).has_value());
}

TEST(TrainingClip, StrideWindowAndObjects) {
  ToyVideoSpec spec;
  spec.num_frames = 10;
  spec.h = spec.w = 64;
  const auto v = generate_toy_video(spec, 4);
  std::mt19937_64 rng(3);
  ClipOptions opts;
  opts.short_edge = 64;
  opts.patch_size = 48;
  opts.augment = false;
  opts.skip = 1;
  const auto c1 = sample_training_clip(v, 4, rng, opts);
  ASSERT_EQ(c1.length(), 4);
  for (int i = 1; i < 4; ++i) EXPECT_EQ(c1.source_indices[i], c1.source_indices[0] + i);
  EXPECT_EQ(c1.frames[0].height(), 48);
  EXPECT_FALSE(c1.object_ids.empty());

  opts.skip = 3;
  const auto c3 = sample_training_clip(v, 4, rng, opts);
  EXPECT_EQ(c3.source_indices, (std::vector<int>{0, 3, 6, 9}));

  // One window for the whole clip: with no augmentation and a static video,
  // every patch is the same crop.
  spec.motion_amplitude = 0.0;
  const auto still = generate_toy_video(spec, 4);
  opts.skip = 1;
  const auto cs = sample_training_clip(still, 4, rng, opts);
  for (int i = 1; i < 4; ++i) EXPECT_EQ(cs.gts[i], cs.gts[0]);
  EXPECT_THROW(sample_training_clip(v, 11, rng, opts), ArgumentError);
}

TEST(Curriculum, Schedule) {
  EXPECT_EQ(curriculum_schedule(0, 1000), (Curriculum{4, 1}));
  EXPECT_EQ(curriculum_schedule(999, 1000), (Curriculum{8, 3}));
  EXPECT_EQ(curriculum_schedule(400, 1000), (Curriculum{6, 2}));
  Curriculum prev = curriculum_schedule(0, 500);
  for (long i = 1; i < 500; ++i) {
    const auto c = curriculum_schedule(i, 500);
    EXPECT_GE(c.clip_len, prev.clip_len);
    EXPECT_GE(c.rounds, prev.rounds);
    prev = c;
  }
}

TEST(VideoFiles, SaveLoadRoundTrip) {
  ToyVideoSpec spec;
  spec.num_frames = 3;
  spec.h = spec.w = 32;
  spec.num_objects = 2;
  const auto v = generate_toy_video(spec, 8);
  const auto dir = std::filesystem::temp_directory_path() / "ipn_video_test";
  std::filesystem::remove_all(dir);
  save_video(v, dir);
  const auto back = load_video(dir);
  ASSERT_EQ(back.length(), 3);
  EXPECT_EQ(back.num_objects, 2);
  for (int t = 0; t < 3; ++t) {
    EXPECT_EQ(back.gts[t].labels, v.gts[t].labels);
    for (std::size_t i = 0; i < v.frames[t].data().size(); ++i) {
      EXPECT_NEAR(back.frames[t].data()[i], v.frames[t].data()[i], 0.5 / 255.0 + 1e-6);
    }
  }
  std::filesystem::remove_all(dir);
}

TEST(ColorJitter, ClipWideAndBounded) {
  ToyVideoSpec spec;
  spec.num_frames = 3;
  spec.h = spec.w = 32;
  spec.motion_amplitude = 0.0;
  auto frames = generate_toy_video(spec, 1).frames;
  std::mt19937_64 rng(4);
  jitter_colors(frames, rng);
  EXPECT_EQ(frames[0], frames[1]);
  EXPECT_EQ(frames[1], frames[2]);
  for (float v : frames[0].data()) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
  const auto original = generate_toy_video(spec, 1).frames;
  EXPECT_NE(frames[0], original[0]);
}
