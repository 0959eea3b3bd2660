#pragma once

// Oracles shared by the unit tests and the acceptance runner: central finite
// differences, exhaustive assignment, rasterized GIoU, small fixtures.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "contexthoi/autodiff.hpp"
#include "contexthoi/config.hpp"
#include "contexthoi/dataset.hpp"
#include "contexthoi/detector.hpp"
#include "contexthoi/geometry.hpp"
#include "contexthoi/rng.hpp"

namespace contexthoi::testing {

struct GradCheck {
  double rel_error = 0.0;   // ||analytic - numeric|| / max(||analytic||, ||numeric||)
  double abs_error = 0.0;
  Index checked = 0;
};

// One scalar entry of a leaf.
struct Coordinate {
  Var leaf;
  Index row = 0;
  Index col = 0;
};

inline std::vector<Coordinate> all_coordinates(const std::vector<Var>& leaves) {
  std::vector<Coordinate> out;
  for (const auto& v : leaves)
    for (Index j = 0; j < v.cols(); ++j)
      for (Index i = 0; i < v.rows(); ++i) out.push_back({v, i, j});
  return out;
}

// Compares backward() of `f` against central differences at the listed
// coordinates. `f` must rebuild its graph from the current leaf values.
inline GradCheck check_gradient(const std::function<Var()>& f, const std::vector<Var>& leaves,
                                const std::vector<Coordinate>& coords, double h = 1e-6) {
  for (auto v : leaves) v.zero_grad();
  Var out = f();
  ad::backward(out);
  std::vector<double> analytic;
  for (const auto& c : coords) analytic.push_back(c.leaf.grad()(c.row, c.col));

  std::vector<double> numeric;
  {
    ad::NoGradGuard guard;
    for (auto c : coords) {
      double& x = c.leaf.mutable_value()(c.row, c.col);
      const double x0 = x;
      x = x0 + h;
      const double fp = f().scalar();
      x = x0 - h;
      const double fm = f().scalar();
      x = x0;
      numeric.push_back((fp - fm) / (2 * h));
    }
  }
  double diff = 0, na = 0, nn = 0;
  for (size_t i = 0; i < coords.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  GradCheck r;
  r.abs_error = std::sqrt(diff);
  const double scale = std::max(std::sqrt(std::max(na, nn)), 1e-12);
  r.rel_error = r.abs_error / scale;
  r.checked = static_cast<Index>(coords.size());
  return r;
}

inline GradCheck check_gradient(const std::function<Var()>& f, const std::vector<Var>& leaves,
                                double h = 1e-6) {
  return check_gradient(f, leaves, all_coordinates(leaves), h);
}

// Minimum total cost over all injective row->column (or column->row)
// assignments of min(rows, cols) pairs.
inline double brute_force_assignment(const Matrix& cost) {
  const bool t = cost.rows() > cost.cols();
  const Matrix c = t ? Matrix(cost.transpose()) : cost;
  std::vector<Index> cols(static_cast<size_t>(c.cols()));
  std::iota(cols.begin(), cols.end(), Index{0});
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0;
    for (Index i = 0; i < c.rows(); ++i) s += c(i, cols[i]);
    best = std::min(best, s);
  } while (std::next_permutation(cols.begin(), cols.end()));
  return best;
}

// GIoU from areas counted on an n x n pixel grid over [0,1]^2; both boxes
// must lie inside the unit square.
inline double rasterized_giou(const BoxD& a, const BoxD& b, int n = 512) {
  auto inside = [](const BoxD& box, double x, double y) {
    return x >= box.x0() && x < box.x1() && y >= box.y0() && y < box.y1();
  };
  long ia = 0, ib = 0, both = 0;
  for (int yi = 0; yi < n; ++yi) {
    const double y = (yi + 0.5) / n;
    for (int xi = 0; xi < n; ++xi) {
      const double x = (xi + 0.5) / n;
      const bool pa = inside(a, x, y);
      const bool pb = inside(b, x, y);
      ia += pa;
      ib += pb;
      both += pa && pb;
    }
  }
  const double px = 1.0 / (double(n) * n);
  const double inter = both * px;
  const double uni = (ia + ib - both) * px;
  const BoxD enc = BoxD::from_corners(std::min(a.x0(), b.x0()), std::min(a.y0(), b.y0()),
                                      std::max(a.x1(), b.x1()), std::max(a.y1(), b.y1()));
  long ie = 0;
  for (int yi = 0; yi < n; ++yi)
    for (int xi = 0; xi < n; ++xi) ie += inside(enc, (xi + 0.5) / n, (yi + 0.5) / n);
  const double encl = ie * px;
  if (uni <= 0 || encl <= 0) return 0.0;
  return inter / uni - (encl - uni) / encl;
}

// Random box inside the unit square with sides in [min_side, max_side].
inline BoxD random_box(Rng& rng, double min_side = 0.05, double max_side = 0.6) {
  const double w = rng.uniform(min_side, max_side);
  const double h = rng.uniform(min_side, max_side);
  return BoxD{rng.uniform(w / 2, 1 - w / 2), rng.uniform(h / 2, 1 - h / 2), w, h};
}

inline Matrix box_rows(const std::vector<BoxD>& boxes) {
  Matrix m(static_cast<Index>(boxes.size()), 4);
  for (size_t i = 0; i < boxes.size(); ++i) {
    const auto p = boxes[i].params();
    for (int j = 0; j < 4; ++j) m(static_cast<Index>(i), j) = p[j];
  }
  return m;
}

// Small category table: objects o0..o{n_o-1}, verbs v0..v{n_v-1}, every pair.
inline CategoryTable dense_categories(int n_o, int n_v) {
  CategoryTable t;
  for (int o = 0; o < n_o; ++o) t.objects.push_back("thing" + std::to_string(o));
  for (int v = 0; v < n_v; ++v) t.verbs.push_back("act" + std::to_string(v));
  for (int o = 0; o < n_o; ++o)
    for (int v = 0; v < n_v; ++v) t.hoi.emplace_back(o, v);
  return t;
}

// Desk-sized model config small enough for finite differences.
inline RunConfig tiny_config(const CategoryTable& t, std::uint64_t seed = 3) {
  RunConfig cfg = RunConfig::desk();
  cfg.seed = seed;
  cfg.model.hidden_dim = 8;
  cfg.model.num_queries = 3;
  cfg.model.encoder_layers = 1;
  cfg.model.decoder_layers = 2;
  cfg.model.num_heads = 2;
  cfg.model.ffn_dim = 16;
  cfg.model.backbone_width = 4;
  cfg.model.teacher_dim = 8;
  cfg.model.num_object_classes = static_cast<int>(t.num_objects());
  cfg.model.num_verb_classes = static_cast<int>(t.num_verbs());
  cfg.model.num_hoi_classes = static_cast<int>(t.num_hoi());
  return cfg;
}

inline Image random_image(Rng& rng, int w, int h) {
  Image img(w, h);
  img.pixels = rng.uniform_matrix(static_cast<Index>(w) * h, 3, 0.0, 1.0);
  return img;
}

}  // namespace contexthoi::testing
