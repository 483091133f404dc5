#include "stal/data.hpp"

#include <gtest/gtest.h>

#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "stal/geometry.hpp"
#include "stal/rng.hpp"
#include "stal/tensor.hpp"

namespace {

using stal::Rng;
using stal::Tensor;
using stal::data::Annotation;
using stal::data::AugmentConfig;
using stal::data::ClipSample;
using stal::data::DetectionRow;
using stal::data::GroundTruthBox;
using stal::data::SynthConfig;
using stal::geom::Box;

// Actor pixels are drawn with every channel >= 0.5; the background stays
// below 0.3, so channel 0 alone separates them.
bool bright(const Tensor& clip, int t, int y, int x) {
  return clip.at({t, y, x, 0}) >= 0.5;
}

struct PixelRect {
  int x1 = 0, y1 = 0, x2 = 0, y2 = 0;  // half-open
  int width() const { return x2 - x1; }
  long long cx2() const { return static_cast<long long>(x1) + x2; }  // 2 * center
};

// Bounding rectangles of the bright regions in one frame, top to bottom.
// Actors occupy disjoint horizontal bands, so row extents identify them.
std::vector<PixelRect> actor_rects(const Tensor& clip, int t) {
  const int h = clip.dim(1), w = clip.dim(2);
  std::vector<PixelRect> rects;
  int y = 0;
  while (y < h) {
    int row_x1 = w, row_x2 = 0;
    for (int x = 0; x < w; ++x) {
      if (bright(clip, t, y, x)) {
        row_x1 = std::min(row_x1, x);
        row_x2 = std::max(row_x2, x + 1);
      }
    }
    if (row_x1 >= row_x2) {
      ++y;
      continue;
    }
    PixelRect r{row_x1, y, row_x2, y + 1};
    while (r.y2 < h && bright(clip, t, r.y2, r.x1)) ++r.y2;
    rects.push_back(r);
    y = r.y2;
  }
  return rects;
}

SynthConfig mini_config() {
  SynthConfig cfg;
  cfg.num_clips = 4;
  cfg.frames = 8;
  cfg.size = 32;
  cfg.min_actors = 1;
  cfg.max_actors = 1;
  cfg.split = "mini";
  return cfg;
}

TEST(SynthTest, GeneratesRequestedShape) {
  const auto samples = stal::data::generate_synthetic(mini_config());
  ASSERT_EQ(samples.size(), 4u);
  for (size_t i = 0; i < samples.size(); ++i) {
    char expect[16];
    std::snprintf(expect, sizeof(expect), "mini%04zu", i);
    EXPECT_EQ(samples[i].video_id, expect);
    EXPECT_EQ(samples[i].timestamp, 900);
    EXPECT_EQ(samples[i].clip.shape(), (std::vector<int>{8, 32, 32, 3}));
    ASSERT_EQ(samples[i].boxes.size(), 1u);
    for (std::int64_t k = 0; k < samples[i].clip.size(); ++k) {
      EXPECT_GE(samples[i].clip[k], 0.0);
      EXPECT_LE(samples[i].clip[k], 1.0);
    }
  }
}

TEST(SynthTest, DeterministicAcrossCalls) {
  const auto a = stal::data::generate_synthetic(mini_config());
  const auto b = stal::data::generate_synthetic(mini_config());
  ASSERT_EQ(a.size(), b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    ASSERT_EQ(a[i].clip.size(), b[i].clip.size());
    for (std::int64_t k = 0; k < a[i].clip.size(); ++k) {
      ASSERT_EQ(a[i].clip[k], b[i].clip[k]);
    }
    ASSERT_EQ(a[i].boxes.size(), b[i].boxes.size());
    for (size_t j = 0; j < a[i].boxes.size(); ++j) {
      EXPECT_EQ(a[i].boxes[j].box, b[i].boxes[j].box);
      EXPECT_EQ(a[i].boxes[j].actions, b[i].boxes[j].actions);
    }
  }
}

TEST(SynthTest, SplitAndSeedChangeContent) {
  SynthConfig val = mini_config();
  val.split = "val";
  SynthConfig reseeded = mini_config();
  reseeded.seed = 1;
  const auto base = stal::data::generate_synthetic(mini_config());
  for (const auto& other :
       {stal::data::generate_synthetic(val), stal::data::generate_synthetic(reseeded)}) {
    bool differs = false;
    for (std::int64_t k = 0; k < base[0].clip.size() && !differs; ++k) {
      differs = base[0].clip[k] != other[0].clip[k];
    }
    EXPECT_TRUE(differs);
  }
}

TEST(SynthTest, CenterFrameBoxesExactlyCoverActors) {
  SynthConfig cfg;
  cfg.num_clips = 8;
  cfg.frames = 16;
  cfg.size = 64;
  const auto samples = stal::data::generate_synthetic(cfg);
  for (const ClipSample& s : samples) {
    const int tc = cfg.frames / 2;
    long long box_area = 0;
    for (const Annotation& ann : s.boxes) {
      // synthetic boxes are pixel-aligned, so scaling back is exact
      const int x1 = static_cast<int>(ann.box.x1 * cfg.size);
      const int y1 = static_cast<int>(ann.box.y1 * cfg.size);
      const int x2 = static_cast<int>(ann.box.x2 * cfg.size);
      const int y2 = static_cast<int>(ann.box.y2 * cfg.size);
      EXPECT_EQ(x1 / static_cast<double>(cfg.size), ann.box.x1);
      EXPECT_EQ(y2 / static_cast<double>(cfg.size), ann.box.y2);
      box_area += static_cast<long long>(x2 - x1) * (y2 - y1);
      for (int y = y1; y < y2; ++y) {
        for (int x = x1; x < x2; ++x) {
          EXPECT_TRUE(bright(s.clip, tc, y, x)) << s.video_id;
        }
      }
    }
    long long bright_count = 0;
    for (int y = 0; y < cfg.size; ++y) {
      for (int x = 0; x < cfg.size; ++x) {
        bright_count += bright(s.clip, tc, y, x) ? 1 : 0;
      }
    }
    EXPECT_EQ(bright_count, box_area) << s.video_id;
  }
}

TEST(SynthTest, AnnotationsAreDisjoint) {
  SynthConfig cfg;
  cfg.num_clips = 12;
  const auto samples = stal::data::generate_synthetic(cfg);
  for (const ClipSample& s : samples) {
    EXPECT_GE(s.boxes.size(), 1u);
    EXPECT_LE(s.boxes.size(), 3u);
    for (size_t i = 0; i < s.boxes.size(); ++i) {
      for (size_t j = i + 1; j < s.boxes.size(); ++j) {
        EXPECT_EQ(stal::geom::iou(s.boxes[i].box, s.boxes[j].box), 0.0);
      }
    }
  }
}

TEST(SynthTest, LabelsMatchObservedMotion) {
  SynthConfig cfg;
  cfg.num_clips = 30;
  cfg.frames = 16;
  cfg.size = 64;
  cfg.min_actors = 1;
  cfg.max_actors = 1;
  const auto samples = stal::data::generate_synthetic(cfg);
  bool saw_right = false, saw_left = false, saw_expand = false, saw_static = false;
  for (const ClipSample& s : samples) {
    const auto first = actor_rects(s.clip, 0);
    const auto last = actor_rects(s.clip, cfg.frames - 1);
    ASSERT_EQ(first.size(), 1u);
    ASSERT_EQ(last.size(), 1u);
    const std::vector<int>& actions = s.boxes[0].actions;
    const bool right =
        std::count(actions.begin(), actions.end(), stal::data::kActionMoveRight) > 0;
    const bool left =
        std::count(actions.begin(), actions.end(), stal::data::kActionMoveLeft) > 0;
    const bool expand =
        std::count(actions.begin(), actions.end(), stal::data::kActionExpand) > 0;
    const bool is_static =
        std::count(actions.begin(), actions.end(), stal::data::kActionStatic) > 0;
    // growth is symmetric, so the center tracks translation alone
    EXPECT_EQ(right, last[0].cx2() > first[0].cx2()) << s.video_id;
    EXPECT_EQ(left, last[0].cx2() < first[0].cx2()) << s.video_id;
    EXPECT_EQ(expand, last[0].width() > first[0].width()) << s.video_id;
    if (is_static) {
      EXPECT_EQ(actions, (std::vector<int>{stal::data::kActionStatic}));
      EXPECT_EQ(first[0].x1, last[0].x1);
      EXPECT_EQ(first[0].width(), last[0].width());
    }
    saw_right |= right;
    saw_left |= left;
    saw_expand |= expand;
    saw_static |= is_static;
    EXPECT_TRUE(std::is_sorted(actions.begin(), actions.end()));
    EXPECT_TRUE(std::adjacent_find(actions.begin(), actions.end()) == actions.end());
  }
  EXPECT_TRUE(saw_right && saw_left && saw_expand && saw_static);
}

TEST(SynthTest, InfeasiblePlacementThrows) {
  SynthConfig cfg;
  cfg.num_clips = 1;
  cfg.size = 16;  // bands of ~5 rows cannot hold 8-pixel-tall actors
  cfg.min_actors = 3;
  cfg.max_actors = 3;
  try {
    stal::data::generate_synthetic(cfg);
    FAIL() << "expected a throw";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("infeasible"), std::string::npos);
  }
}

TEST(SynthTest, RejectsBadConfig) {
  SynthConfig cfg = mini_config();
  cfg.frames = 0;
  EXPECT_THROW(stal::data::generate_synthetic(cfg), std::invalid_argument);
  cfg = mini_config();
  cfg.min_actors = 0;
  EXPECT_THROW(stal::data::generate_synthetic(cfg), std::invalid_argument);
  cfg = mini_config();
  cfg.max_actors = 0;
  EXPECT_THROW(stal::data::generate_synthetic(cfg), std::invalid_argument);
}

// --- csv -----------------------------------------------------------------------

std::vector<ClipSample> csv_fixture() {
  std::vector<ClipSample> samples(2);
  samples[0].video_id = "vidA";
  samples[0].timestamp = 901;
  samples[0].boxes.resize(2);
  samples[0].boxes[0].box = {0.25, 0.125, 0.5, 0.75};
  samples[0].boxes[0].actions = {0};
  samples[0].boxes[0].person_id = 0;
  samples[0].boxes[1].box = {0.625, 0.25, 0.875, 0.5};
  samples[0].boxes[1].actions = {1, 3};
  samples[0].boxes[1].person_id = 1;
  samples[1].video_id = "vidB";
  samples[1].timestamp = 900;
  samples[1].boxes.resize(1);
  samples[1].boxes[0].box = {0.1, 0.2, 0.3, 0.4};
  samples[1].boxes[0].actions = {2};
  samples[1].boxes[0].person_id = 0;
  return samples;
}

TEST(GroundTruthCsvTest, WriteParseRoundTrip) {
  const auto samples = csv_fixture();
  std::ostringstream out;
  stal::data::write_groundtruth_csv(out, samples);
  std::istringstream in(out.str());
  const auto rows = stal::data::parse_groundtruth_csv(in);
  ASSERT_EQ(rows.size(), 3u);  // the multi-label box folds into one row
  EXPECT_EQ(rows[0].video_id, "vidA");
  EXPECT_EQ(rows[0].timestamp, 901);
  EXPECT_EQ(rows[0].annotation.actions, (std::vector<int>{0}));
  EXPECT_EQ(rows[1].annotation.actions, (std::vector<int>{1, 3}));
  EXPECT_EQ(rows[1].annotation.person_id, 1);
  EXPECT_EQ(rows[2].video_id, "vidB");
  // all fixture coordinates have short decimal expansions, so they survive
  // the 6-decimal format exactly
  EXPECT_EQ(rows[1].annotation.box, samples[0].boxes[1].box);
  EXPECT_EQ(rows[2].annotation.box, samples[1].boxes[0].box);
}

TEST(GroundTruthCsvTest, MergesWithinMicroTolerance) {
  std::istringstream in(
      "v,900,0.250000,0.250000,0.750000,0.750000,1\n"
      "v,900,0.2500004,0.250000,0.750000,0.750000,3\n");
  const auto rows = stal::data::parse_groundtruth_csv(in);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].annotation.actions, (std::vector<int>{1, 3}));
}

TEST(GroundTruthCsvTest, KeepsDistinctBoxesSeparate) {
  std::istringstream in(
      "v,900,0.250000,0.250000,0.750000,0.750000,1\n"
      "v,900,0.250002,0.250000,0.750000,0.750000,1\n");
  const auto rows = stal::data::parse_groundtruth_csv(in);
  EXPECT_EQ(rows.size(), 2u);
}

TEST(GroundTruthCsvTest, DuplicateRowsFoldOnce) {
  std::istringstream in(
      "v,900,0.1,0.1,0.2,0.2,2\n"
      "v,900,0.1,0.1,0.2,0.2,2\n");
  const auto rows = stal::data::parse_groundtruth_csv(in);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].annotation.actions, (std::vector<int>{2}));
}

TEST(GroundTruthCsvTest, ErrorsNameTheLine) {
  std::istringstream in(
      "v,900,0.1,0.1,0.2,0.2,0\n"
      "v,900,0.1,0.1,0.2,0.2,1\n"
      "v,900,zzz,0.1,0.2,0.2,0\n");
  try {
    stal::data::parse_groundtruth_csv(in);
    FAIL() << "expected a throw";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
}

TEST(GroundTruthCsvTest, RejectsInvertedCoordinates) {
  std::istringstream in("v,900,0.8,0.1,0.2,0.2,0\n");
  try {
    stal::data::parse_groundtruth_csv(in);
    FAIL() << "expected a throw";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("x1 > x2"), std::string::npos);
  }
}

TEST(GroundTruthCsvTest, RejectsBadShapes) {
  std::istringstream five("v,900,0.1,0.1,0.2\n");
  EXPECT_THROW(stal::data::parse_groundtruth_csv(five), std::runtime_error);
  std::istringstream negative("v,900,0.1,0.1,0.2,0.2,-1\n");
  EXPECT_THROW(stal::data::parse_groundtruth_csv(negative), std::runtime_error);
  std::istringstream empty_id(",900,0.1,0.1,0.2,0.2,0\n");
  EXPECT_THROW(stal::data::parse_groundtruth_csv(empty_id), std::runtime_error);
}

TEST(GroundTruthCsvTest, PersonIdIsOptional) {
  std::istringstream in(
      "v,900,0.1,0.1,0.2,0.2,0\n"
      "w,900,0.1,0.1,0.2,0.2,0,5\n");
  const auto rows = stal::data::parse_groundtruth_csv(in);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].annotation.person_id, -1);
  EXPECT_EQ(rows[1].annotation.person_id, 5);
}

TEST(GroundTruthCsvTest, ToleratesCrLfAndBlankLines) {
  std::istringstream in("\nv,900,0.1,0.1,0.2,0.2,0\r\n\n");
  const auto rows = stal::data::parse_groundtruth_csv(in);
  EXPECT_EQ(rows.size(), 1u);
}

TEST(DetectionCsvTest, RoundTripWithinTolerance) {
  Rng rng(23);
  std::vector<DetectionRow> rows;
  for (int i = 0; i < 40; ++i) {
    DetectionRow r;
    r.video_id = i % 2 == 0 ? "vid0" : "vid1";
    r.timestamp = 900 + i % 3;
    double x1 = rng.uniform(), x2 = rng.uniform();
    double y1 = rng.uniform(), y2 = rng.uniform();
    r.box = {std::min(x1, x2), std::min(y1, y2), std::max(x1, x2), std::max(y1, y2)};
    r.action_id = static_cast<int>(rng.uniform_int(4));
    r.score = rng.uniform();
    rows.push_back(std::move(r));
  }
  std::ostringstream out;
  stal::data::write_detections_csv(out, rows);
  std::istringstream in(out.str());
  const auto parsed = stal::data::parse_detections_csv(in);
  ASSERT_EQ(parsed.size(), rows.size());
  // written sorted by (video, timestamp, score desc)
  for (size_t i = 1; i < parsed.size(); ++i) {
    const auto& a = parsed[i - 1];
    const auto& b = parsed[i];
    const auto ka = std::make_pair(a.video_id, a.timestamp);
    const auto kb = std::make_pair(b.video_id, b.timestamp);
    EXPECT_TRUE(ka < kb || (ka == kb && a.score >= b.score));
  }
  // and every source row survives within the 6-decimal precision
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    if (a.video_id != b.video_id) return a.video_id < b.video_id;
    if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
    return a.score > b.score;
  });
  for (size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(parsed[i].video_id, rows[i].video_id);
    EXPECT_EQ(parsed[i].timestamp, rows[i].timestamp);
    EXPECT_EQ(parsed[i].action_id, rows[i].action_id);
    EXPECT_NEAR(parsed[i].box.x1, rows[i].box.x1, 5e-7);
    EXPECT_NEAR(parsed[i].box.y2, rows[i].box.y2, 5e-7);
    EXPECT_NEAR(parsed[i].score, rows[i].score, 5e-7);
  }
}

TEST(DetectionCsvTest, RejectsWrongFieldCount) {
  std::istringstream in("v,900,0.1,0.1,0.2,0.2,0\n");  // missing score
  try {
    stal::data::parse_detections_csv(in);
    FAIL() << "expected a throw";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("line 1"), std::string::npos);
  }
}

// --- dataset container ------------------------------------------------------

class DatasetIoTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() /
           ("stal_data_test_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }
  std::filesystem::path dir_;
};

TEST_F(DatasetIoTest, RoundTripPreservesEverything) {
  const auto samples = stal::data::generate_synthetic(mini_config());
  stal::data::save_dataset(dir_.string(), "mini", samples);
  const auto loaded = stal::data::load_dataset(dir_.string(), "mini");
  ASSERT_EQ(loaded.size(), samples.size());
  for (size_t i = 0; i < samples.size(); ++i) {
    EXPECT_EQ(loaded[i].video_id, samples[i].video_id);
    EXPECT_EQ(loaded[i].timestamp, samples[i].timestamp);
    ASSERT_TRUE(loaded[i].clip.same_shape(samples[i].clip));
    for (std::int64_t k = 0; k < samples[i].clip.size(); ++k) {
      ASSERT_EQ(loaded[i].clip[k], samples[i].clip[k]);
    }
    ASSERT_EQ(loaded[i].boxes.size(), samples[i].boxes.size());
    for (size_t j = 0; j < samples[i].boxes.size(); ++j) {
      // mini boxes sit on the 1/32 grid: exact through the 6-decimal csv
      EXPECT_EQ(loaded[i].boxes[j].box, samples[i].boxes[j].box);
      EXPECT_EQ(loaded[i].boxes[j].actions, samples[i].boxes[j].actions);
      EXPECT_EQ(loaded[i].boxes[j].person_id, samples[i].boxes[j].person_id);
    }
  }
}

TEST_F(DatasetIoTest, SavedBytesAreDeterministic) {
  const auto samples = stal::data::generate_synthetic(mini_config());
  const auto dir_a = dir_ / "a";
  const auto dir_b = dir_ / "b";
  std::filesystem::create_directories(dir_a);
  std::filesystem::create_directories(dir_b);
  stal::data::save_dataset(dir_a.string(), "mini", samples);
  stal::data::save_dataset(dir_b.string(), "mini", samples);
  for (const char* name : {"mini.stlc", "mini_gt.csv"}) {
    std::ifstream fa(dir_a / name, std::ios::binary);
    std::ifstream fb(dir_b / name, std::ios::binary);
    std::stringstream sa, sb;
    sa << fa.rdbuf();
    sb << fb.rdbuf();
    EXPECT_EQ(sa.str(), sb.str()) << name;
  }
}

TEST_F(DatasetIoTest, MissingDatasetThrows) {
  EXPECT_THROW(stal::data::load_dataset(dir_.string(), "absent"), std::runtime_error);
}

TEST_F(DatasetIoTest, GroundTruthForUnknownClipThrows) {
  const auto samples = stal::data::generate_synthetic(mini_config());
  stal::data::save_dataset(dir_.string(), "mini", samples);
  std::ofstream gt(dir_ / "mini_gt.csv", std::ios::app);
  gt << "ghost,900,0.1,0.1,0.2,0.2,0\n";
  gt.close();
  try {
    stal::data::load_dataset(dir_.string(), "mini");
    FAIL() << "expected a throw";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("ghost"), std::string::npos);
  }
}

// --- augmentation -----------------------------------------------------------

ClipSample flip_fixture() {
  ClipSample s;
  s.video_id = "aug";
  s.timestamp = 900;
  s.clip = Tensor({2, 4, 4, 1});
  for (std::int64_t k = 0; k < s.clip.size(); ++k) s.clip[k] = static_cast<double>(k);
  s.boxes.resize(3);
  s.boxes[0].box = {0.0, 0.0, 0.25, 0.5};
  s.boxes[0].actions = {stal::data::kActionMoveRight};
  s.boxes[1].box = {0.5, 0.5, 0.75, 1.0};
  s.boxes[1].actions = {stal::data::kActionMoveLeft, stal::data::kActionExpand};
  s.boxes[2].box = {0.25, 0.0, 0.5, 0.25};
  s.boxes[2].actions = {stal::data::kActionStatic};
  return s;
}

AugmentConfig always_flip_no_crop() {
  AugmentConfig cfg;
  cfg.flip_prob = 1.0;
  cfg.min_crop_scale = 1.0;
  return cfg;
}

TEST(AugmentTest, FlipMirrorsPixelsAndRemapsLabels) {
  const ClipSample s = flip_fixture();
  Rng rng(1);
  const ClipSample out = stal::data::augment_sample(s, always_flip_no_crop(), rng);
  for (int t = 0; t < 2; ++t) {
    for (int y = 0; y < 4; ++y) {
      for (int x = 0; x < 4; ++x) {
        EXPECT_EQ(out.clip.at({t, y, x, 0}), s.clip.at({t, y, 3 - x, 0}));
      }
    }
  }
  ASSERT_EQ(out.boxes.size(), 3u);
  EXPECT_EQ(out.boxes[0].box, (Box{0.75, 0.0, 1.0, 0.5}));
  EXPECT_EQ(out.boxes[0].actions, (std::vector<int>{stal::data::kActionMoveLeft}));
  EXPECT_EQ(out.boxes[1].actions, (std::vector<int>{stal::data::kActionMoveRight,
                                                    stal::data::kActionExpand}));
  EXPECT_EQ(out.boxes[2].actions, (std::vector<int>{stal::data::kActionStatic}));
}

TEST(AugmentTest, FlipTwiceRestoresTheSample) {
  const ClipSample s = flip_fixture();
  Rng rng(2);
  const ClipSample once = stal::data::augment_sample(s, always_flip_no_crop(), rng);
  const ClipSample twice = stal::data::augment_sample(once, always_flip_no_crop(), rng);
  for (std::int64_t k = 0; k < s.clip.size(); ++k) {
    ASSERT_EQ(twice.clip[k], s.clip[k]);
  }
  for (size_t j = 0; j < s.boxes.size(); ++j) {
    EXPECT_EQ(twice.boxes[j].box, s.boxes[j].box);
    EXPECT_EQ(twice.boxes[j].actions, s.boxes[j].actions);
  }
}

TEST(AugmentTest, NoOpConfigIsIdentity) {
  const ClipSample s = flip_fixture();
  AugmentConfig cfg;
  cfg.flip_prob = 0.0;
  cfg.min_crop_scale = 1.0;  // full-frame crop resamples onto itself
  Rng rng(3);
  const ClipSample out = stal::data::augment_sample(s, cfg, rng);
  for (std::int64_t k = 0; k < s.clip.size(); ++k) ASSERT_EQ(out.clip[k], s.clip[k]);
  for (size_t j = 0; j < s.boxes.size(); ++j) {
    EXPECT_EQ(out.boxes[j].box, s.boxes[j].box);
    EXPECT_EQ(out.boxes[j].actions, s.boxes[j].actions);
  }
}

TEST(AugmentTest, DeterministicGivenSeed) {
  SynthConfig cfg = mini_config();
  cfg.num_clips = 1;
  const ClipSample s = stal::data::generate_synthetic(cfg)[0];
  Rng r1(7), r2(7);
  const ClipSample a = stal::data::augment_sample(s, {}, r1);
  const ClipSample b = stal::data::augment_sample(s, {}, r2);
  ASSERT_EQ(a.boxes.size(), b.boxes.size());
  for (std::int64_t k = 0; k < a.clip.size(); ++k) ASSERT_EQ(a.clip[k], b.clip[k]);
  for (size_t j = 0; j < a.boxes.size(); ++j) EXPECT_EQ(a.boxes[j].box, b.boxes[j].box);
}

TEST(AugmentTest, BoxesKeepCoveringTheirActors) {
  // single synthetic actor: after any flip/crop the (unique) bright region
  // must stay >= 90% inside the surviving annotation box
  SynthConfig cfg = mini_config();
  cfg.num_clips = 5;
  cfg.frames = 8;
  cfg.size = 32;
  const auto samples = stal::data::generate_synthetic(cfg);
  for (int trial = 0; trial < 40; ++trial) {
    const ClipSample& s = samples[static_cast<size_t>(trial) % samples.size()];
    Rng rng(100 + static_cast<std::uint64_t>(trial));
    const ClipSample out = stal::data::augment_sample(s, {}, rng);
    ASSERT_EQ(out.boxes.size(), 1u);
    const Box& b = out.boxes[0].box;
    const int tc = cfg.frames / 2;
    long long inside = 0, total = 0;
    for (int y = 0; y < cfg.size; ++y) {
      for (int x = 0; x < cfg.size; ++x) {
        if (!bright(out.clip, tc, y, x)) continue;
        ++total;
        const double cx = (x + 0.5) / cfg.size;
        const double cy = (y + 0.5) / cfg.size;
        if (cx >= b.x1 && cx <= b.x2 && cy >= b.y1 && cy <= b.y2) ++inside;
      }
    }
    ASSERT_GT(total, 0);
    EXPECT_GE(static_cast<double>(inside) / static_cast<double>(total), 0.9)
        << s.video_id << " trial " << trial;
  }
}

TEST(AugmentTest, NeverReturnsEmptyAnnotations) {
  ClipSample s;
  s.video_id = "corner";
  s.timestamp = 900;
  s.clip = Tensor({2, 16, 16, 1});
  s.boxes.resize(1);
  s.boxes[0].box = {0.0, 0.0, 0.125, 0.125};  // tiny, easy for a crop to lose
  s.boxes[0].actions = {0};
  AugmentConfig cfg;
  cfg.min_crop_scale = 0.5;
  for (int trial = 0; trial < 200; ++trial) {
    Rng rng(static_cast<std::uint64_t>(trial));
    const ClipSample out = stal::data::augment_sample(s, cfg, rng);
    EXPECT_GE(out.boxes.size(), 1u) << "trial " << trial;
  }
}

TEST(AugmentTest, RejectsBadClipRank) {
  ClipSample s;
  s.clip = Tensor({4, 4, 1});
  s.boxes.resize(1);
  Rng rng(5);
  EXPECT_THROW(stal::data::augment_sample(s, {}, rng), std::invalid_argument);
}

}  // namespace
