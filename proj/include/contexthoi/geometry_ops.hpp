#pragma once

#include "contexthoi/autodiff.hpp"
#include "contexthoi/geometry.hpp"

namespace contexthoi::ad {

// Row-wise GIoU of two [n,4] center-size box matrices -> [n,1].
// Differentiable with respect to both inputs.
Var giou_rows(const Var& a, const Var& b);

// Row-wise coordinate distance -> [n,1].
Var box_distance_rows(const Var& a, const Var& b,
                      DistanceReduction reduction = DistanceReduction::kSum);

// exp(-box_distance_rows(a, b) / (tau + eps)), tau a 1x1 variable.
Var dynamic_distance_weight_rows(const Var& a, const Var& b, const Var& tau, double eps,
                                 DistanceReduction reduction = DistanceReduction::kSum);

}  // namespace contexthoi::ad
