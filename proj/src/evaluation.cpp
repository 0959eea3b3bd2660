#include "contexthoi/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

namespace contexthoi {

namespace {

struct GtTriplet {
  BoxD human;
  BoxD object;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::vector<DetectionRecord> score_predictions(const RawPredictions& preds, const CategoryMeta& meta,
                                               const std::string& image_id, int top_k) {
  return score_predictions(preds.human_boxes.value(), preds.object_boxes.value(),
                           preds.object_logits.value(), preds.hoi_logits.value(), meta, image_id,
                           top_k);
}

std::vector<DetectionRecord> score_predictions(const Matrix& human_boxes, const Matrix& object_boxes,
                                               const Matrix& object_logits, const Matrix& hoi_logits,
                                               const CategoryMeta& meta,
                                               const std::string& image_id, int top_k) {
  if (hoi_logits.cols() != meta.num_hoi()) {
    throw std::invalid_argument("score_predictions: hoi logits do not match the category table");
  }
  const Index no_object = object_logits.cols() - 1;
  std::vector<DetectionRecord> out;
  for (Index q = 0; q < object_logits.rows(); ++q) {
    Eigen::RowVectorXd p = (object_logits.row(q).array() - object_logits.row(q).maxCoeff()).exp();
    p /= p.sum();
    Index best = 0;
    p.maxCoeff(&best);
    if (best == no_object) continue;
    const BoxD h{human_boxes(q, 0), human_boxes(q, 1), human_boxes(q, 2), human_boxes(q, 3)};
    const BoxD o{object_boxes(q, 0), object_boxes(q, 1), object_boxes(q, 2), object_boxes(q, 3)};
    for (Index c = 0; c < meta.num_hoi(); ++c) {
      const double s = 1.0 / (1.0 + std::exp(-hoi_logits(q, c)));
      out.push_back({image_id, c, s * p(meta.hoi_object[c]), h, o});
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return a.score > b.score; });
  if (top_k >= 0 && out.size() > static_cast<size_t>(top_k)) out.resize(static_cast<size_t>(top_k));
  return out;
}

double average_precision(const std::vector<bool>& hits, int num_gt, ApMode mode) {
  if (num_gt <= 0) throw std::invalid_argument("average_precision: no ground truth");
  std::vector<double> rec;
  std::vector<double> prec;
  int tp = 0;
  for (size_t i = 0; i < hits.size(); ++i) {
    tp += hits[i] ? 1 : 0;
    rec.push_back(static_cast<double>(tp) / num_gt);
    prec.push_back(static_cast<double>(tp) / static_cast<double>(i + 1));
  }
  if (mode == ApMode::kElevenPoint) {
    double ap = 0.0;
    for (int t = 0; t <= 10; ++t) {
      double p = 0.0;
      for (size_t i = 0; i < rec.size(); ++i)
        if (rec[i] >= t / 10.0 - 1e-12) p = std::max(p, prec[i]);
      ap += p / 11.0;
    }
    return ap;
  }
  std::vector<double> mrec{0.0};
  std::vector<double> mpre{0.0};
  mrec.insert(mrec.end(), rec.begin(), rec.end());
  mpre.insert(mpre.end(), prec.begin(), prec.end());
  mrec.push_back(1.0);
  mpre.push_back(0.0);
  for (size_t i = mpre.size() - 1; i > 0; --i) mpre[i - 1] = std::max(mpre[i - 1], mpre[i]);
  double ap = 0.0;
  for (size_t i = 1; i < mrec.size(); ++i) ap += (mrec[i] - mrec[i - 1]) * mpre[i];
  return ap;
}

MapResult compute_map(const std::vector<DetectionRecord>& dets, const GroundTruthIndex& gts,
                      const CategoryMeta& meta, const EvalOptions& opts,
                      const std::optional<SubsetSpec>& subset) {
  std::set<std::string> images;
  if (subset) {
    if (subset->empty()) throw std::invalid_argument("compute_map: empty subset");
    for (const auto& id : *subset) {
      if (!gts.count(id)) throw std::invalid_argument("compute_map: subset image '" + id + "' not in dataset");
      images.insert(id);
    }
  } else {
    for (const auto& [id, _] : gts) images.insert(id);
  }

  // (hoi, image) -> GT triplets
  std::map<Index, std::map<std::string, std::vector<GtTriplet>>> gt_by_cat;
  MapResult r;
  r.num_images = images.size();
  for (const auto& id : images) {
    for (const auto& a : gts.at(id)) {
      for (Index h : a.hoi_classes) {
        if (h < 0 || h >= meta.num_hoi()) throw std::invalid_argument("compute_map: hoi id out of range");
        gt_by_cat[h][id].push_back({a.human, a.object});
        ++r.gt_count[h];
        ++r.num_gt;
      }
    }
  }
  if (r.num_gt == 0) throw std::invalid_argument("compute_map: no ground truth in the evaluated set");

  std::map<Index, std::vector<const DetectionRecord*>> dets_by_cat;
  for (const auto& d : dets) {
    if (!images.count(d.image_id)) continue;
    dets_by_cat[d.hoi].push_back(&d);
    ++r.num_detections;
  }

  double sum_all = 0.0, sum_rare = 0.0, sum_non_rare = 0.0;
  int n_rare = 0, n_non_rare = 0;
  for (const auto& [cat, per_image] : gt_by_cat) {
    auto ranked = dets_by_cat[cat];
    // Ties broken by image id then submission-independent box order, so the
    // result does not depend on the order detections were supplied in.
    std::sort(ranked.begin(), ranked.end(), [](const DetectionRecord* a, const DetectionRecord* b) {
      if (a->score != b->score) return a->score > b->score;
      if (a->image_id != b->image_id) return a->image_id < b->image_id;
      return a->human.params() < b->human.params() ||
             (a->human.params() == b->human.params() && a->object.params() < b->object.params());
    });
    std::map<std::string, std::vector<bool>> claimed;
    for (const auto& [id, v] : per_image) claimed[id].assign(v.size(), false);
    std::vector<bool> hits;
    for (const DetectionRecord* d : ranked) {
      bool hit = false;
      auto it = per_image.find(d->image_id);
      if (it != per_image.end()) {
        double best = -1.0;
        int best_idx = -1;
        for (size_t g = 0; g < it->second.size(); ++g) {
          if (claimed[d->image_id][g]) continue;
          const double ih = iou(d->human, it->second[g].human);
          const double io = iou(d->object, it->second[g].object);
          if (ih > opts.iou_threshold && io > opts.iou_threshold) {
            const double m = std::min(ih, io);
            if (m > best) {
              best = m;
              best_idx = static_cast<int>(g);
            }
          }
        }
        if (best_idx >= 0) {
          claimed[d->image_id][best_idx] = true;
          hit = true;
        }
      }
      hits.push_back(hit);
    }
    const double ap = average_precision(hits, r.gt_count[cat], opts.ap_mode);
    r.per_category[cat] = ap;
    sum_all += ap;
    if (meta.rare(cat)) {
      sum_rare += ap;
      ++n_rare;
    } else {
      sum_non_rare += ap;
      ++n_non_rare;
    }
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  r.full = sum_all / static_cast<double>(r.per_category.size());
  r.rare = n_rare ? sum_rare / n_rare : nan;
  r.non_rare = n_non_rare ? sum_non_rare / n_non_rare : nan;
  return r;
}

void write_detections(const std::vector<DetectionRecord>& dets, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  char buf[512];
  for (const auto& d : dets) {
    const auto h = d.human.corners();
    const auto o = d.object.corners();
    std::snprintf(buf, sizeof(buf), " %ld %.9g %.9g %.9g %.9g %.9g %.9g %.9g %.9g %.9g\n",
                  static_cast<long>(d.hoi), d.score, h[0], h[1], h[2], h[3], o[0], o[1], o[2], o[3]);
    out << d.image_id << buf;
  }
}

std::vector<DetectionRecord> read_detections(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::vector<DetectionRecord> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::istringstream is(line);
    DetectionRecord d;
    long hoi = 0;
    double c[8];
    is >> d.image_id >> hoi >> d.score;
    for (double& v : c) is >> v;
    if (!is) throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": malformed detection");
    d.hoi = hoi;
    d.human = BoxD::from_corners(c[0], c[1], c[2], c[3]);
    d.object = BoxD::from_corners(c[4], c[5], c[6], c[7]);
    out.push_back(d);
  }
  return out;
}

SubsetSpec read_subset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read subset file " + path.string());
  SubsetSpec ids;
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (!line.empty()) ids.push_back(line);
  }
  return ids;
}

void write_subset(const SubsetSpec& ids, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& id : ids) out << id << '\n';
}

nlohmann::json map_report(const MapResult& r, const CategoryMeta& meta) {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  nlohmann::json j;
  j["full"] = num(r.full);
  j["rare"] = num(r.rare);
  j["non_rare"] = num(r.non_rare);
  j["num_images"] = r.num_images;
  j["num_detections"] = r.num_detections;
  j["num_gt"] = r.num_gt;
  nlohmann::json cats = nlohmann::json::array();
  for (const auto& [cat, ap] : r.per_category) {
    cats.push_back({{"hoi", cat},
                    {"object", meta.hoi_object.at(cat)},
                    {"verb", meta.hoi_verb.at(cat)},
                    {"rare", meta.rare(cat)},
                    {"gt", r.gt_count.at(cat)},
                    {"ap", ap}});
  }
  j["categories"] = cats;
  return j;
}

}  // namespace contexthoi
