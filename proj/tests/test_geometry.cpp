#include <gtest/gtest.h>

#include <cmath>

#include "contexthoi/geometry.hpp"
#include "contexthoi/geometry_ops.hpp"
#include "support.hpp"

using namespace contexthoi;
namespace t = contexthoi::testing;

TEST(Iou, Fixtures) {
  const BoxD unit = BoxD::from_corners(0, 0, 1, 1);
  EXPECT_DOUBLE_EQ(iou(unit, unit), 1.0);
  EXPECT_NEAR(iou(BoxD::from_corners(0, 0, 2, 2), BoxD::from_corners(1, 1, 3, 3)), 1.0 / 7.0, 1e-12);
  EXPECT_EQ(iou(unit, BoxD::from_corners(2, 2, 3, 3)), 0.0);
}

TEST(Iou, DegenerateIsZero) {
  const BoxD p{0.5, 0.5, 0, 0};
  EXPECT_EQ(iou(p, p), 0.0);
  EXPECT_EQ(giou(p, p), 0.0);
}

TEST(Iou, NonFiniteThrows) {
  const BoxD bad{std::nan(""), 0.5, 0.1, 0.1};
  EXPECT_THROW(iou(bad, BoxD{0.5, 0.5, 0.1, 0.1}), std::invalid_argument);
  EXPECT_THROW(giou(bad, BoxD{0.5, 0.5, 0.1, 0.1}), std::invalid_argument);
}

TEST(Giou, Fixtures) {
  const BoxD unit = BoxD::from_corners(0, 0, 1, 1);
  EXPECT_DOUBLE_EQ(giou(unit, unit), 1.0);
  EXPECT_NEAR(giou(BoxD::from_corners(0, 0, 2, 2), BoxD::from_corners(1, 1, 3, 3)), -5.0 / 63.0, 1e-12);
  EXPECT_NEAR(giou(unit, BoxD::from_corners(2, 2, 3, 3)), -7.0 / 9.0, 1e-12);
}

TEST(Giou, SymmetricAndBelowIou) {
  Rng rng(11);
  for (int i = 0; i < 1000; ++i) {
    const BoxD a = t::random_box(rng);
    const BoxD b = t::random_box(rng);
    EXPECT_NEAR(giou(a, b), giou(b, a), 1e-14);
    EXPECT_NEAR(iou(a, b), iou(b, a), 1e-14);
    EXPECT_LE(giou(a, b), iou(a, b) + 1e-14);
    EXPECT_GE(giou(a, b), -1.0);
  }
}

TEST(Giou, TouchingBoxesEqualIou) {
  // Side by side with equal heights: the enclosing box is the union.
  const BoxD a = BoxD::from_corners(0.1, 0.2, 0.4, 0.6);
  const BoxD b = BoxD::from_corners(0.4, 0.2, 0.7, 0.6);
  EXPECT_NEAR(giou(a, b), iou(a, b), 1e-14);
}

TEST(Giou, MatchesRasterization) {
  Rng rng(12);
  for (int i = 0; i < 10; ++i) {
    const BoxD a = t::random_box(rng);
    const BoxD b = t::random_box(rng);
    EXPECT_NEAR(giou(a, b), t::rasterized_giou(a, b, 256), 0.02);
  }
}

TEST(Giou, GradientMatchesFiniteDifferences) {
  Rng rng(13);
  for (int n = 0; n < 50; ++n) {
    const BoxD a = t::random_box(rng);
    const BoxD b = t::random_box(rng);
    const auto g = giou_with_gradient(a, b);
    const double h = 1e-6;
    for (int k = 0; k < 4; ++k) {
      auto pa = a.params(), ma = a.params();
      pa[k] += h;
      ma[k] -= h;
      const double fd_a = (giou(BoxD::from_array(pa), b) - giou(BoxD::from_array(ma), b)) / (2 * h);
      auto pb = b.params(), mb = b.params();
      pb[k] += h;
      mb[k] -= h;
      const double fd_b = (giou(a, BoxD::from_array(pb)) - giou(a, BoxD::from_array(mb))) / (2 * h);
      EXPECT_NEAR(g.d_a[k], fd_a, 1e-4 * std::max(1.0, std::abs(fd_a)));
      EXPECT_NEAR(g.d_b[k], fd_b, 1e-4 * std::max(1.0, std::abs(fd_b)));
    }
  }
}

TEST(Distance, Fixtures) {
  EXPECT_EQ(box_distance(BoxD{0.2, 0.2, 0.4, 0.4}, BoxD{0.2, 0.2, 0.4, 0.4}), 0.0);
  EXPECT_NEAR(box_distance(BoxD{0.2, 0.2, 0.4, 0.4}, BoxD{0.3, 0.3, 0.4, 0.4}), 0.2, 1e-12);
  EXPECT_DOUBLE_EQ(box_distance(BoxD{0, 0, 0, 0}, BoxD{1, 1, 1, 1}), 4.0);
  EXPECT_DOUBLE_EQ(box_distance(BoxD{0, 0, 0, 0}, BoxD{1, 1, 1, 1}, DistanceReduction::kMean), 1.0);
}

TEST(DistanceWeight, Fixtures) {
  const BoxD a{0.2, 0.2, 0.4, 0.4};
  EXPECT_DOUBLE_EQ(dynamic_distance_weight(a, a, 0.5), 1.0);
  EXPECT_DOUBLE_EQ(dynamic_distance_weight(a, a, 3.0), 1.0);
  EXPECT_NEAR(dynamic_distance_weight(a, BoxD{0.3, 0.3, 0.4, 0.4}, 0.5, 0.0), std::exp(-0.4), 1e-12);
  EXPECT_NEAR(std::exp(-0.4), 0.670320, 1e-6);
  EXPECT_LT(dynamic_distance_weight(BoxD{0, 0, 0, 0}, BoxD{2.5, 2.5, 2.5, 2.5}, 0.5), 1e-6);
  EXPECT_THROW(dynamic_distance_weight(a, a, -1.0), std::invalid_argument);
}

TEST(DistanceWeight, MonotoneInDistance) {
  const BoxD a{0.5, 0.5, 0.2, 0.2};
  double prev = 1.0;
  for (int i = 1; i <= 50; ++i) {
    const double w = dynamic_distance_weight(a, BoxD{0.5 + 0.02 * i, 0.5, 0.2, 0.2}, 0.5);
    EXPECT_LE(w, prev);
    EXPECT_GT(w, 0.0);
    prev = w;
  }
}

TEST(InverseSoftplus, RoundTrip) {
  for (double y : {0.01, 0.5, 2.0, 40.0}) EXPECT_NEAR(std::log1p(std::exp(inverse_softplus(y))), y, 1e-10);
}

TEST(GeometryOps, RowGradients) {
  Rng rng(14);
  for (int n = 0; n < 5; ++n) {
    std::vector<BoxD> as, bs;
    for (int i = 0; i < 3; ++i) {
      as.push_back(t::random_box(rng));
      bs.push_back(t::random_box(rng));
    }
    Var a(t::box_rows(as), true);
    Var b(t::box_rows(bs), true);
    Var tau(Matrix::Constant(1, 1, 0.7), true);
    auto f = [&] {
      return ad::sum(ad::add(ad::giou_rows(a, b), ad::dynamic_distance_weight_rows(a, b, tau, 1e-8)));
    };
    EXPECT_LT(t::check_gradient(f, {a, b, tau}).rel_error, 1e-4);
  }
}
