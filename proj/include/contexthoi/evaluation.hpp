#pragma once

// Triplet mAP under the Default protocol: a detection is a true positive when
// both its human and object boxes overlap an unclaimed GT pair of the same
// HOI class with IoU > threshold. Reported for all, rare (< 10 training
// instances) and non-rare categories, optionally on an image subset.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "contexthoi/config.hpp"
#include "contexthoi/geometry.hpp"
#include "contexthoi/matching.hpp"
#include "contexthoi/model.hpp"

namespace contexthoi {

inline constexpr int kRareThreshold = 10;

struct CategoryMeta {
  std::vector<Index> hoi_object;  // hoi id -> object class
  std::vector<Index> hoi_verb;    // hoi id -> verb class
  std::vector<int> train_count;   // hoi id -> training instances

  Index num_hoi() const { return static_cast<Index>(hoi_object.size()); }
  bool rare(Index hoi) const { return train_count.at(hoi) < kRareThreshold; }
};

struct DetectionRecord {
  std::string image_id;
  Index hoi = 0;
  double score = 0.0;
  BoxD human;
  BoxD object;
};

using SubsetSpec = std::vector<std::string>;
using GroundTruthIndex = std::map<std::string, GroundTruthSet>;

// Query q contributes nothing when its object argmax is no-object; otherwise
// every HOI class h scores sigmoid(hoi[q,h]) * p_obj[q, object(h)]. The
// `top_k` best are kept, sorted by descending score.
std::vector<DetectionRecord> score_predictions(const RawPredictions& preds, const CategoryMeta& meta,
                                               const std::string& image_id, int top_k = 100);
std::vector<DetectionRecord> score_predictions(const Matrix& human_boxes, const Matrix& object_boxes,
                                               const Matrix& object_logits, const Matrix& hoi_logits,
                                               const CategoryMeta& meta,
                                               const std::string& image_id, int top_k = 100);

struct EvalOptions {
  double iou_threshold = 0.5;
  ApMode ap_mode = ApMode::kAllPoints;
};

struct MapResult {
  double full = 0.0;
  double rare = 0.0;      // NaN when no rare category has GT in the evaluated set
  double non_rare = 0.0;  // likewise
  std::map<Index, double> per_category;
  std::map<Index, int> gt_count;
  std::size_t num_images = 0;
  std::size_t num_detections = 0;
  std::size_t num_gt = 0;
};

// Average precision of a ranked list of hit flags against `num_gt` positives.
double average_precision(const std::vector<bool>& hits, int num_gt, ApMode mode);

MapResult compute_map(const std::vector<DetectionRecord>& dets, const GroundTruthIndex& gts,
                      const CategoryMeta& meta, const EvalOptions& opts = {},
                      const std::optional<SubsetSpec>& subset = std::nullopt);

// One detection per line: image_id hoi_id score hx0 hy0 hx1 hy1 ox0 oy0 ox1 oy1.
void write_detections(const std::vector<DetectionRecord>& dets, const std::filesystem::path& path);
std::vector<DetectionRecord> read_detections(const std::filesystem::path& path);

// One image id per line; blank lines are ignored.
SubsetSpec read_subset(const std::filesystem::path& path);
void write_subset(const SubsetSpec& ids, const std::filesystem::path& path);

nlohmann::json map_report(const MapResult& r, const CategoryMeta& meta);

}  // namespace contexthoi
