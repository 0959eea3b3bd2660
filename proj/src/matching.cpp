#include "contexthoi/matching.hpp"

#include <algorithm>
#include <cmath>

#include "contexthoi/geometry_ops.hpp"
#include "contexthoi/hungarian.hpp"

namespace contexthoi {

namespace {

BoxD row_box(const Matrix& m, Index i) { return BoxD{m(i, 0), m(i, 1), m(i, 2), m(i, 3)}; }

Matrix softmax_rows(const Matrix& logits) {
  Matrix p = logits;
  for (Index i = 0; i < p.rows(); ++i) {
    p.row(i) = (p.row(i).array() - p.row(i).maxCoeff()).exp();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

Matrix box_rows(const GroundTruthSet& gts, const std::vector<Index>& order, bool human) {
  Matrix m(static_cast<Index>(order.size()), 4);
  for (size_t i = 0; i < order.size(); ++i) {
    const auto p = (human ? gts[order[i]].human : gts[order[i]].object).params();
    for (int j = 0; j < 4; ++j) m(static_cast<Index>(i), j) = p[j];
  }
  return m;
}

}  // namespace

std::optional<Index> MatchResult::gt_for_query(Index q) const {
  for (const auto& [query, gt] : pairs)
    if (query == q) return gt;
  return std::nullopt;
}

MatchResult match_cost_matrix(const Matrix& cost) {
  MatchResult r;
  r.pairs = hungarian(cost);
  std::vector<bool> matched(static_cast<size_t>(cost.rows()), false);
  for (const auto& [q, g] : r.pairs) matched[q] = true;
  for (Index q = 0; q < cost.rows(); ++q)
    if (!matched[q]) r.unmatched.push_back(q);
  return r;
}

Matrix matching_cost(const RawPredictions& preds, const GroundTruthSet& gts, const LossConfig& cfg) {
  const Index nq = preds.human_boxes.rows();
  const Index ng = static_cast<Index>(gts.size());
  const Matrix prob = softmax_rows(preds.object_logits.value());
  const Matrix hoi = preds.hoi_logits.value().unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
  const Matrix& hb = preds.human_boxes.value();
  const Matrix& ob = preds.object_boxes.value();
  Matrix cost(nq, ng);
  for (Index q = 0; q < nq; ++q) {
    const BoxD ph = row_box(hb, q);
    const BoxD po = row_box(ob, q);
    for (Index g = 0; g < ng; ++g) {
      const auto& gt = gts[g];
      if (gt.object_class < 0 || gt.object_class >= prob.cols() - 1) {
        throw std::invalid_argument("matching_cost: object class out of range");
      }
      const double c_cls = -prob(q, gt.object_class);
      double c_hoi = 0.0;
      if (!gt.hoi_classes.empty()) {
        for (Index h : gt.hoi_classes) c_hoi -= hoi(q, h);
        c_hoi /= static_cast<double>(gt.hoi_classes.size());
      }
      const double c_box = box_distance(ph, gt.human) + box_distance(po, gt.object);
      const double c_giou = -(giou(ph, gt.human) + giou(po, gt.object));
      cost(q, g) = cfg.cost_class * c_cls + cfg.cost_hoi * c_hoi + cfg.cost_box * c_box +
                   cfg.cost_giou * c_giou;
    }
  }
  return cost;
}

MatchResult match(const RawPredictions& preds, const GroundTruthSet& gts, const LossConfig& cfg) {
  if (gts.empty()) {
    MatchResult r;
    for (Index q = 0; q < preds.human_boxes.rows(); ++q) r.unmatched.push_back(q);
    return r;
  }
  return match_cost_matrix(matching_cost(preds, gts, cfg));
}

HoiLossTerms hoi_loss(const RawPredictions& preds, const GroundTruthSet& gts,
                      const MatchResult& match, const LossConfig& cfg) {
  const Index nq = preds.object_logits.rows();
  const Index num_classes = preds.object_logits.cols();  // N_o + 1
  const Index no_object = num_classes - 1;

  std::vector<Index> targets(static_cast<size_t>(nq), no_object);
  for (const auto& [q, g] : match.pairs) targets[q] = gts[g].object_class;
  Eigen::VectorXd weights = Eigen::VectorXd::Ones(num_classes);
  weights(no_object) = cfg.no_object_weight;

  HoiLossTerms t;
  t.object_class = ad::cross_entropy(preds.object_logits, targets, weights);

  if (gts.empty() || match.pairs.empty()) {
    t.box_l1 = ad::scalar_constant(0.0);
    t.giou = ad::scalar_constant(0.0);
    t.interaction = ad::scalar_constant(0.0);
    t.total = ad::scale(t.object_class, cfg.object_class);
    return t;
  }

  const double num_gt = static_cast<double>(gts.size());
  std::vector<Index> queries;
  std::vector<Index> order;
  for (const auto& [q, g] : match.pairs) {
    queries.push_back(q);
    order.push_back(g);
  }
  Var pred_h = ad::gather_rows(preds.human_boxes, queries);
  Var pred_o = ad::gather_rows(preds.object_boxes, queries);
  Var gt_h = ad::constant(box_rows(gts, order, true));
  Var gt_o = ad::constant(box_rows(gts, order, false));

  t.box_l1 = ad::scale(ad::add(ad::sum(ad::abs(ad::sub(pred_h, gt_h))),
                               ad::sum(ad::abs(ad::sub(pred_o, gt_o)))),
                       1.0 / num_gt);
  Var giou_sum = ad::add(ad::sum(ad::giou_rows(pred_h, gt_h)), ad::sum(ad::giou_rows(pred_o, gt_o)));
  t.giou = ad::scale(ad::add_scalar(ad::neg(giou_sum), 2.0 * static_cast<double>(queries.size())),
                     1.0 / num_gt);

  Matrix hoi_targets = Matrix::Zero(nq, preds.hoi_logits.cols());
  for (const auto& [q, g] : match.pairs)
    for (Index h : gts[g].hoi_classes) hoi_targets(q, h) = 1.0;
  t.interaction = ad::scale(
      ad::sigmoid_focal_loss(preds.hoi_logits, hoi_targets, cfg.focal_alpha, cfg.focal_gamma),
      1.0 / num_gt);

  t.total = ad::add(ad::add(ad::scale(t.box_l1, cfg.box_l1), ad::scale(t.giou, cfg.giou)),
                    ad::add(ad::scale(t.object_class, cfg.object_class),
                            ad::scale(t.interaction, cfg.interaction)));
  return t;
}

Var total_loss(const Var& l_hoi, const Var& l_sc) {
  if (!std::isfinite(l_hoi.scalar()) || !std::isfinite(l_sc.scalar())) {
    throw NonFiniteLoss("non-finite loss: L_HOI=" + std::to_string(l_hoi.scalar()) +
                        " L_SC=" + std::to_string(l_sc.scalar()));
  }
  return ad::add(l_hoi, l_sc);
}

}  // namespace contexthoi
