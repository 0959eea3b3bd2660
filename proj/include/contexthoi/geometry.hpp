#pragma once

// Box geometry shared by the losses and the evaluator: IoU, generalized IoU
// with its analytic gradient, L1 coordinate distance and the dynamic distance
// weight exp(-d / (tau + eps)).
//
// Boxes are stored in center-size form (cx, cy, w, h). Functions are templated
// on the scalar type and free of shared state.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace contexthoi {

inline constexpr double kDefaultEps = 1e-8;

enum class DistanceReduction { kSum, kMean };

template <typename Scalar>
struct Box {
  Scalar cx{0};
  Scalar cy{0};
  Scalar w{0};
  Scalar h{0};

  static Box from_corners(Scalar x0, Scalar y0, Scalar x1, Scalar y1) {
    return Box{(x0 + x1) / 2, (y0 + y1) / 2, x1 - x0, y1 - y0};
  }
  static Box from_array(const std::array<Scalar, 4>& v) { return Box{v[0], v[1], v[2], v[3]}; }

  Scalar x0() const { return cx - w / 2; }
  Scalar y0() const { return cy - h / 2; }
  Scalar x1() const { return cx + w / 2; }
  Scalar y1() const { return cy + h / 2; }
  Scalar area() const { return w * h; }
  std::array<Scalar, 4> params() const { return {cx, cy, w, h}; }
  std::array<Scalar, 4> corners() const { return {x0(), y0(), x1(), y1()}; }

  bool finite() const {
    return std::isfinite(cx) && std::isfinite(cy) && std::isfinite(w) && std::isfinite(h);
  }
  bool valid() const { return finite() && w >= 0 && h >= 0; }
};

using BoxD = Box<double>;

// Padded entries are all-zero boxes flagged in pad_mask.
template <typename Scalar>
struct BoxSet {
  std::vector<Box<Scalar>> boxes;
  std::vector<bool> pad_mask;

  BoxSet() = default;
  explicit BoxSet(std::vector<Box<Scalar>> b)
      : boxes(std::move(b)), pad_mask(boxes.size(), false) {}

  size_t size() const { return boxes.size(); }

  // Rows of an [n,4] center-size matrix.
  static BoxSet from_matrix(const Eigen::MatrixXd& m) {
    if (m.cols() != 4) throw std::invalid_argument("BoxSet::from_matrix: expected 4 columns");
    BoxSet out;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      out.boxes.push_back(Box<Scalar>{Scalar(m(i, 0)), Scalar(m(i, 1)), Scalar(m(i, 2)),
                                      Scalar(m(i, 3))});
    }
    out.pad_mask.assign(out.boxes.size(), false);
    return out;
  }

  void pad(size_t i) {
    boxes.at(i) = Box<Scalar>{};
    pad_mask.at(i) = true;
  }
};

namespace detail {

template <typename Scalar>
void check_finite(const Box<Scalar>& b, const char* op) {
  if (!b.finite()) throw std::invalid_argument(std::string(op) + ": non-finite box coordinate");
}

}  // namespace detail

template <typename Scalar>
Scalar iou(const Box<Scalar>& a, const Box<Scalar>& b) {
  detail::check_finite(a, "iou");
  detail::check_finite(b, "iou");
  const Scalar iw = std::max(Scalar(0), std::min(a.x1(), b.x1()) - std::max(a.x0(), b.x0()));
  const Scalar ih = std::max(Scalar(0), std::min(a.y1(), b.y1()) - std::max(a.y0(), b.y0()));
  const Scalar inter = iw * ih;
  const Scalar uni = a.area() + b.area() - inter;
  if (uni <= Scalar(0)) return Scalar(0);
  return inter / uni;
}

// Value and partial derivatives with respect to (cx, cy, w, h) of both boxes.
template <typename Scalar>
struct GiouGradient {
  Scalar value{0};
  std::array<Scalar, 4> d_a{};
  std::array<Scalar, 4> d_b{};
};

// Generalized IoU in [-1, 1]. Both boxes zero-area gives 0 by convention, as
// does a zero-area enclosing box.
template <typename Scalar>
GiouGradient<Scalar> giou_with_gradient(const Box<Scalar>& a, const Box<Scalar>& b) {
  detail::check_finite(a, "giou");
  detail::check_finite(b, "giou");
  GiouGradient<Scalar> out;
  const auto ca = a.corners();
  const auto cb = b.corners();

  const Scalar area_a = a.area();
  const Scalar area_b = b.area();
  if (area_a <= Scalar(0) && area_b <= Scalar(0)) return out;

  // Intersection extents; a tie resolves to box a.
  const bool ix0_a = ca[0] >= cb[0];
  const bool iy0_a = ca[1] >= cb[1];
  const bool ix1_a = ca[2] <= cb[2];
  const bool iy1_a = ca[3] <= cb[3];
  const Scalar iw_raw = (ix1_a ? ca[2] : cb[2]) - (ix0_a ? ca[0] : cb[0]);
  const Scalar ih_raw = (iy1_a ? ca[3] : cb[3]) - (iy0_a ? ca[1] : cb[1]);
  const bool overlap = iw_raw > Scalar(0) && ih_raw > Scalar(0);
  const Scalar iw = overlap ? iw_raw : Scalar(0);
  const Scalar ih = overlap ? ih_raw : Scalar(0);
  const Scalar inter = iw * ih;

  // Enclosing extents; a tie resolves to box a.
  const bool ex0_a = ca[0] <= cb[0];
  const bool ey0_a = ca[1] <= cb[1];
  const bool ex1_a = ca[2] >= cb[2];
  const bool ey1_a = ca[3] >= cb[3];
  const Scalar ew = (ex1_a ? ca[2] : cb[2]) - (ex0_a ? ca[0] : cb[0]);
  const Scalar eh = (ey1_a ? ca[3] : cb[3]) - (ey0_a ? ca[1] : cb[1]);
  const Scalar encl = ew * eh;

  const Scalar uni = area_a + area_b - inter;
  if (encl <= Scalar(0) || uni <= Scalar(0)) return out;

  out.value = inter / uni - (encl - uni) / encl;

  // giou = inter/uni + uni/encl - 1
  const Scalar g_inter = Scalar(1) / uni;
  const Scalar g_uni = -inter / (uni * uni) + Scalar(1) / encl;
  const Scalar g_encl = -uni / (encl * encl);
  // uni = area_a + area_b - inter
  const Scalar g_inter_total = g_inter - g_uni;
  const Scalar g_area_a = g_uni;
  const Scalar g_area_b = g_uni;

  // Corner-space gradients (x0, y0, x1, y1) for each box.
  std::array<Scalar, 4> ga{};
  std::array<Scalar, 4> gb{};
  auto add_to = [&](bool to_a, int idx, Scalar v) { (to_a ? ga : gb)[idx] += v; };

  if (overlap) {
    const Scalar d_iw = g_inter_total * ih;
    const Scalar d_ih = g_inter_total * iw;
    add_to(ix1_a, 2, d_iw);
    add_to(ix0_a, 0, -d_iw);
    add_to(iy1_a, 3, d_ih);
    add_to(iy0_a, 1, -d_ih);
  }
  const Scalar d_ew = g_encl * eh;
  const Scalar d_eh = g_encl * ew;
  add_to(ex1_a, 2, d_ew);
  add_to(ex0_a, 0, -d_ew);
  add_to(ey1_a, 3, d_eh);
  add_to(ey0_a, 1, -d_eh);

  // area = (x1 - x0) * (y1 - y0)
  auto area_grad = [](std::array<Scalar, 4>& g, const std::array<Scalar, 4>& c, Scalar k) {
    const Scalar w = c[2] - c[0];
    const Scalar h = c[3] - c[1];
    g[2] += k * h;
    g[0] -= k * h;
    g[3] += k * w;
    g[1] -= k * w;
  };
  area_grad(ga, ca, g_area_a);
  area_grad(gb, cb, g_area_b);

  // x0 = cx - w/2, x1 = cx + w/2
  auto to_center = [](const std::array<Scalar, 4>& g) {
    return std::array<Scalar, 4>{g[0] + g[2], g[1] + g[3], (g[2] - g[0]) / 2, (g[3] - g[1]) / 2};
  };
  out.d_a = to_center(ga);
  out.d_b = to_center(gb);
  return out;
}

template <typename Scalar>
Scalar giou(const Box<Scalar>& a, const Box<Scalar>& b) {
  return giou_with_gradient(a, b).value;
}

template <typename Scalar>
Scalar box_distance(const Box<Scalar>& a, const Box<Scalar>& b,
                    DistanceReduction reduction = DistanceReduction::kSum) {
  detail::check_finite(a, "box_distance");
  detail::check_finite(b, "box_distance");
  const Scalar d = std::abs(a.cx - b.cx) + std::abs(a.cy - b.cy) + std::abs(a.w - b.w) +
                   std::abs(a.h - b.h);
  return reduction == DistanceReduction::kSum ? d : d / Scalar(4);
}

template <typename Scalar>
Scalar dynamic_distance_weight(const Box<Scalar>& a, const Box<Scalar>& b, Scalar tau,
                               Scalar eps = Scalar(kDefaultEps),
                               DistanceReduction reduction = DistanceReduction::kSum) {
  if (!(tau + eps > Scalar(0))) {
    throw std::invalid_argument("dynamic_distance_weight: tau + eps must be positive");
  }
  return std::exp(-box_distance(a, b, reduction) / (tau + eps));
}

// Inverse of softplus, for initializing a softplus-parameterized scalar.
inline double inverse_softplus(double y) {
  if (y <= 0) throw std::invalid_argument("inverse_softplus: argument must be positive");
  return y > 30 ? y : std::log(std::expm1(y));
}

}  // namespace contexthoi
