#pragma once

// Bipartite matching of predicted human-object pairs to ground truth and the
// set-prediction HOI loss on the matched pairs.

#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "contexthoi/autodiff.hpp"
#include "contexthoi/config.hpp"
#include "contexthoi/geometry.hpp"
#include "contexthoi/model.hpp"

namespace contexthoi {

// One annotated human-object pair; several interactions on the same pair
// appear as several hoi classes.
struct HoiAnnotation {
  BoxD human;
  BoxD object;
  Index object_class = 0;
  std::vector<Index> hoi_classes;
};

using GroundTruthSet = std::vector<HoiAnnotation>;

struct MatchResult {
  std::vector<std::pair<Index, Index>> pairs;  // (query, gt), sorted by query
  std::vector<Index> unmatched;                // queries assigned no-object

  std::optional<Index> gt_for_query(Index q) const;
};

// Optimal assignment for an explicit [queries, gts] cost matrix.
MatchResult match_cost_matrix(const Matrix& cost);

// class: -p(object class); hoi: -mean sigmoid over the GT's hoi classes;
// box: L1 of human plus object box; giou: -(GIoU human + GIoU object).
Matrix matching_cost(const RawPredictions& preds, const GroundTruthSet& gts, const LossConfig& cfg);

MatchResult match(const RawPredictions& preds, const GroundTruthSet& gts, const LossConfig& cfg);

struct HoiLossTerms {
  Var box_l1;
  Var giou;
  Var object_class;
  Var interaction;
  Var total;
};

// Weighted sum of box L1, (1 - GIoU), object cross-entropy (no-object
// down-weighted) and sigmoid focal interaction loss. Box and interaction terms
// are normalized by the number of GT pairs; an image without GT contributes
// only the no-object classification term.
HoiLossTerms hoi_loss(const RawPredictions& preds, const GroundTruthSet& gts,
                      const MatchResult& match, const LossConfig& cfg);

class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// L = L_HOI + L_SC; throws NonFiniteLoss on a non-finite component.
Var total_loss(const Var& l_hoi, const Var& l_sc);

}  // namespace contexthoi
