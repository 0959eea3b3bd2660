#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "contexthoi/evaluation.hpp"
#include "support.hpp"

using namespace contexthoi;
namespace t = contexthoi::testing;
namespace fs = std::filesystem;

namespace {

CategoryMeta meta_of(int n_hoi, int count = 20) {
  CategoryMeta m;
  for (int h = 0; h < n_hoi; ++h) {
    m.hoi_object.push_back(h % 2);
    m.hoi_verb.push_back(h);
    m.train_count.push_back(count);
  }
  return m;
}

const BoxD kH{0.3, 0.5, 0.2, 0.4};
const BoxD kO{0.7, 0.5, 0.2, 0.2};

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("contexthoi_eval_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST(AveragePrecision, Fixtures) {
  EXPECT_DOUBLE_EQ(average_precision({true}, 1, ApMode::kAllPoints), 1.0);
  EXPECT_DOUBLE_EQ(average_precision({false, true}, 1, ApMode::kAllPoints), 0.5);
  EXPECT_DOUBLE_EQ(average_precision({}, 2, ApMode::kAllPoints), 0.0);
  EXPECT_DOUBLE_EQ(average_precision({true}, 2, ApMode::kAllPoints), 0.5);
  EXPECT_NEAR(average_precision({true}, 1, ApMode::kElevenPoint), 1.0, 1e-12);
  EXPECT_THROW(average_precision({true}, 0, ApMode::kAllPoints), std::invalid_argument);
}

TEST(ComputeMap, SingleHit) {
  const auto meta = meta_of(1);
  GroundTruthIndex gts = {{"a", {{kH, kO, 0, {0}}}}};
  const auto r = compute_map({{"a", 0, 0.9, kH, kO}}, gts, meta);
  EXPECT_EQ(r.full, 1.0);
  EXPECT_EQ(r.non_rare, 1.0);
  EXPECT_TRUE(std::isnan(r.rare));
}

TEST(ComputeMap, RankedMiss) {
  const auto meta = meta_of(1);
  GroundTruthIndex gts = {{"a", {{kH, kO, 0, {0}}}}};
  const BoxD wrong{0.8, 0.2, 0.1, 0.1};
  const auto r = compute_map({{"a", 0, 0.9, wrong, kO}, {"a", 0, 0.4, kH, kO}}, gts, meta);
  EXPECT_EQ(r.full, 0.5);
}

TEST(ComputeMap, IouOneSeventhRejected) {
  const auto meta = meta_of(1);
  const BoxD gt_h = BoxD::from_corners(0, 0, 2, 2), det_h = BoxD::from_corners(1, 1, 3, 3);
  GroundTruthIndex gts = {{"a", {{gt_h, kO, 0, {0}}}}};
  const auto r = compute_map({{"a", 0, 0.9, det_h, kO}}, gts, meta);
  EXPECT_EQ(r.full, 0.0);
}

TEST(ComputeMap, DuplicatesOneTruePositive) {
  const auto meta = meta_of(1);
  GroundTruthIndex gts = {{"a", {{kH, kO, 0, {0}}}}};
  const auto r = compute_map({{"a", 0, 0.9, kH, kO}, {"a", 0, 0.8, kH, kO}, {"a", 0, 0.7, kH, kO}}, gts, meta);
  // One hit at rank 1, then two false positives: precision envelope 1 up to recall 1.
  EXPECT_EQ(r.full, 1.0);
  const auto r2 = compute_map({{"a", 0, 0.9, kH, kO}, {"a", 0, 0.8, kH, kO}},
                              {{"a", {{kH, kO, 0, {0}}, {BoxD{0.2, 0.2, 0.1, 0.1}, kO, 0, {0}}}}}, meta);
  EXPECT_EQ(r2.full, 0.5);
}

TEST(ComputeMap, OrderInvariant) {
  Rng rng(1);
  const auto meta = meta_of(3);
  GroundTruthIndex gts;
  std::vector<DetectionRecord> dets;
  for (int i = 0; i < 20; ++i) {
    const std::string id = "img" + std::to_string(i);
    const BoxD h = t::random_box(rng), o = t::random_box(rng);
    const Index c = static_cast<Index>(rng.below(3));
    gts[id] = {{h, o, c % 2, {c}}};
    dets.push_back({id, c, rng.uniform(), h, o});
    dets.push_back({id, static_cast<Index>(rng.below(3)), rng.uniform(), t::random_box(rng), o});
  }
  const double ref = compute_map(dets, gts, meta).full;
  for (int k = 0; k < 5; ++k) {
    rng.shuffle(dets);
    EXPECT_EQ(compute_map(dets, gts, meta).full, ref);
  }
}

TEST(ComputeMap, AddingCorrectDetectionNeverHurts) {
  const auto meta = meta_of(2);
  const BoxD h2{0.2, 0.2, 0.2, 0.2};
  GroundTruthIndex gts = {{"a", {{kH, kO, 0, {0}}, {h2, kO, 0, {0}}}}, {"b", {{kH, kO, 1, {1}}}}};
  std::vector<DetectionRecord> dets = {{"a", 0, 0.9, kH, kO}, {"b", 1, 0.3, kO, kH}};
  const auto before = compute_map(dets, gts, meta);
  dets.push_back({"a", 0, 0.1, h2, kO});
  const auto after = compute_map(dets, gts, meta);
  EXPECT_GE(after.full, before.full);
  EXPECT_GE(after.non_rare, before.non_rare);
}

TEST(ComputeMap, RareSplit) {
  CategoryMeta meta = meta_of(2);
  meta.train_count[1] = 9;
  EXPECT_TRUE(meta.rare(1));
  EXPECT_FALSE(meta.rare(0));
  GroundTruthIndex gts = {{"a", {{kH, kO, 0, {0, 1}}}}};
  const auto r = compute_map({{"a", 0, 0.9, kH, kO}}, gts, meta);
  EXPECT_EQ(r.non_rare, 1.0);
  EXPECT_EQ(r.rare, 0.0);
  EXPECT_EQ(r.full, 0.5);
}

TEST(ComputeMap, Errors) {
  const auto meta = meta_of(1);
  GroundTruthIndex gts = {{"a", {{kH, kO, 0, {0}}}}, {"b", {}}};
  EXPECT_THROW(compute_map({}, {{"a", {}}}, meta), std::invalid_argument);
  EXPECT_THROW(compute_map({}, gts, meta, {}, SubsetSpec{}), std::invalid_argument);
  EXPECT_THROW(compute_map({}, gts, meta, {}, SubsetSpec{"b"}), std::invalid_argument);
  EXPECT_THROW(compute_map({}, gts, meta, {}, SubsetSpec{"zzz"}), std::invalid_argument);
}

TEST(ComputeMap, SubsetRestrictsDetectionsAndGt) {
  const auto meta = meta_of(2);
  GroundTruthIndex gts;
  std::vector<DetectionRecord> dets;
  SubsetSpec all;
  for (int i = 0; i < 1000; ++i) {
    char id[32];
    std::snprintf(id, sizeof(id), "HICO_test2015_%08d", i + 1);
    gts[id] = {{kH, kO, Index(i % 2), {Index(i % 2)}}};
    // Even images get a correct detection, odd ones a miss.
    dets.push_back({id, Index(i % 2), 0.5, i % 2 == 0 ? kH : kO, kO});
    all.push_back(id);
  }
  const fs::path dir = temp_dir("subset");
  SubsetSpec ids(all.begin(), all.begin() + 659);
  write_subset(ids, dir / "ambiguous.txt");
  {
    std::ifstream in(dir / "ambiguous.txt");
    int lines = 0;
    for (std::string l; std::getline(in, l);) ++lines;
    EXPECT_EQ(lines, 659);
  }
  const auto subset = read_subset(dir / "ambiguous.txt");
  ASSERT_EQ(subset.size(), 659u);
  const auto r = compute_map(dets, gts, meta, {}, subset);
  EXPECT_EQ(r.num_images, 659u);
  EXPECT_EQ(r.num_gt, 659u);
  EXPECT_EQ(r.num_detections, 659u);
  EXPECT_EQ(r.gt_count.at(0), 330);
  EXPECT_EQ(r.gt_count.at(1), 329);
  EXPECT_EQ(r.per_category.at(0), 1.0);
  EXPECT_EQ(r.per_category.at(1), 0.0);

  const auto full = compute_map(dets, gts, meta);
  const auto listed = compute_map(dets, gts, meta, {}, all);
  EXPECT_EQ(full.full, listed.full);
  EXPECT_EQ(full.num_detections, 1000u);
  fs::remove_all(dir);
}

TEST(ScorePredictions, ProductAndFiltering) {
  CategoryMeta meta = meta_of(2);  // hoi 0 -> object 0, hoi 1 -> object 1
  Matrix hb = t::box_rows({kH, kH}), ob = t::box_rows({kO, kO});
  Matrix obj(2, 3);
  // Query 0: p(object 0) = 0.5 via logits (log 2, log 1, log 1); query 1 argmax no-object.
  obj << std::log(2.0), 0.0, 0.0, 0.0, 0.0, 5.0;
  Matrix hoi(2, 2);
  hoi << std::log(0.8 / 0.2), -30, 0, 0;
  const auto d = score_predictions(hb, ob, obj, hoi, meta, "x");
  ASSERT_EQ(d.size(), 2u);
  EXPECT_NEAR(d[0].score, 0.4, 1e-12);
  EXPECT_EQ(d[0].hoi, 0);
  EXPECT_GE(d[0].score, d[1].score);
  EXPECT_EQ(score_predictions(hb, ob, obj, hoi, meta, "x", 1).size(), 1u);

  Matrix none(2, 3);
  none << 0, 0, 9, 0, 0, 9;
  EXPECT_TRUE(score_predictions(hb, ob, none, hoi, meta, "x").empty());
}

TEST(Detections, FileRoundTrip) {
  const fs::path dir = temp_dir("dets");
  std::vector<DetectionRecord> dets = {{"img_1", 3, 0.625, kH, kO}, {"img_2", 0, 0.125, kO, kH}};
  write_detections(dets, dir / "d.txt");
  const auto back = read_detections(dir / "d.txt");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].image_id, "img_1");
  EXPECT_EQ(back[0].hoi, 3);
  EXPECT_DOUBLE_EQ(back[0].score, 0.625);
  EXPECT_NEAR(back[1].human.cx, kO.cx, 1e-9);
  fs::remove_all(dir);
}
