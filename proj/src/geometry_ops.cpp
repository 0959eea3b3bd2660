#include "contexthoi/geometry_ops.hpp"

#include <stdexcept>

namespace contexthoi::ad {

namespace {

BoxD row_box(const Matrix& m, Index i) { return BoxD{m(i, 0), m(i, 1), m(i, 2), m(i, 3)}; }

}  // namespace

Var giou_rows(const Var& a, const Var& b) {
  if (a.cols() != 4 || b.cols() != 4 || a.rows() != b.rows()) {
    throw std::invalid_argument("giou_rows: expected two [n,4] box matrices");
  }
  const Index n = a.rows();
  Matrix value(n, 1);
  Matrix da(n, 4);
  Matrix db(n, 4);
  for (Index i = 0; i < n; ++i) {
    const auto g = giou_with_gradient(row_box(a.value(), i), row_box(b.value(), i));
    value(i, 0) = g.value;
    for (int k = 0; k < 4; ++k) {
      da(i, k) = g.d_a[k];
      db(i, k) = g.d_b[k];
    }
  }
  return make_result(std::move(value), {a, b},
                     [da = std::move(da), db = std::move(db)](Node& nd) {
                       const Matrix& g = nd.grad;
                       if (nd.parents[0]->requires_grad) {
                         nd.parents[0]->accumulate(g.col(0).asDiagonal() * da);
                       }
                       if (nd.parents[1]->requires_grad) {
                         nd.parents[1]->accumulate(g.col(0).asDiagonal() * db);
                       }
                     });
}

Var box_distance_rows(const Var& a, const Var& b, DistanceReduction reduction) {
  if (a.cols() != 4 || b.cols() != 4 || a.rows() != b.rows()) {
    throw std::invalid_argument("box_distance_rows: expected two [n,4] box matrices");
  }
  Var d = row_sum(abs(sub(a, b)));
  return reduction == DistanceReduction::kSum ? d : scale(d, 0.25);
}

Var dynamic_distance_weight_rows(const Var& a, const Var& b, const Var& tau, double eps,
                                 DistanceReduction reduction) {
  if (tau.rows() != 1 || tau.cols() != 1) {
    throw std::invalid_argument("dynamic_distance_weight_rows: tau must be 1x1");
  }
  if (!(tau.scalar() + eps > 0.0)) {
    throw std::invalid_argument("dynamic_distance_weight_rows: tau + eps must be positive");
  }
  Var inv = reciprocal(add_scalar(tau, eps));
  return exp(neg(scale_by(box_distance_rows(a, b, reduction), inv)));
}

}  // namespace contexthoi::ad
