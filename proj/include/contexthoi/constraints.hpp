#pragma once

// Spatially contrastive constraints between the instance and context branches.
//
//   feature:  mean over non-padded k of |<z_ins^k, z_c^k>| / (|z_ins^k| |z_c^k| + eps)
//             on the per-query [L_dec x C] stacks flattened to vectors
//   region:   (1/N_q) sum_k exp(-||p_ins^k - p_c^k||_1)
//   instance: (1/(2|non-padded|)) sum_k [2 + W_d(b_h, b_c^k) GIoU(b_h, b_c^k)
//                                         + W_d(b_o, b_c^k) GIoU(b_o, b_c^k)]
//
// The instance branch has 2*N_q rows; it is reduced to N_q rows by the
// pair mean before the feature and region constraints.

#include <utility>
#include <vector>

#include "contexthoi/autodiff.hpp"
#include "contexthoi/config.hpp"
#include "contexthoi/geometry.hpp"
#include "contexthoi/model.hpp"

namespace contexthoi {

struct ConstraintConfig {
  double lambda_fc = 4.0;
  double lambda_rc = 1.0;
  double lambda_ic = 4.0;
  SimilarityNorm similarity_norm = SimilarityNorm::kCosineL2;
  DistanceReduction distance_reduction = DistanceReduction::kSum;
  bool use_distance_weight = true;
  double eps = kDefaultEps;

  static ConstraintConfig from(const LossConfig& loss, const SwitchConfig& sw);
};

// Rows are per-query flattened feature vectors [N_q, D]; `pad` rows are skipped.
Var feature_constraint(const Var& instance_rows, const Var& context_rows,
                       const std::vector<bool>& pad, SimilarityNorm norm, double eps);
// Flattens the per-layer stacks of both bundles; the instance stack is
// pair-reduced and Phi comes from the context bundle.
Var feature_constraint(const FeatureBundle& instance, const FeatureBundle& context,
                       const ConstraintConfig& cfg);

Var region_constraint(const Var& instance_guided_reduced, const Var& context_guided);
Var region_constraint(const FeatureBundle& instance, const FeatureBundle& context);

using GtBoxPair = std::pair<BoxD, BoxD>;  // (human, object)

// GT pairs assigned to each context query. A query with several pairs takes
// the mean of its per-pair terms; queries with none (or padded) are skipped.
struct InstanceTargets {
  std::vector<std::vector<GtBoxPair>> per_query;

  static InstanceTargets broadcast(Index num_queries, const BoxD& human, const BoxD& object);
};

Var instance_constraint(const Var& context_boxes, const std::vector<bool>& pad,
                        const InstanceTargets& targets, const Var& tau,
                        const ConstraintConfig& cfg);

// Single GT pair broadcast to every non-padded query.
Var instance_constraint(const Var& context_boxes, const std::vector<bool>& pad, const BoxD& human,
                        const BoxD& object, const Var& tau, const ConstraintConfig& cfg);

struct SpatialConstraintTerms {
  Var feature;
  Var region;
  Var instance;
  Var total;
};

Var spatial_constraint_total(const Var& l_fc, const Var& l_rc, const Var& l_ic,
                             const ConstraintConfig& cfg);

}  // namespace contexthoi
