#include <gtest/gtest.h>

#include <cmath>

#include "contexthoi/constraints.hpp"
#include "contexthoi/geometry_ops.hpp"
#include "support.hpp"

using namespace contexthoi;
namespace t = contexthoi::testing;

namespace {

Var tau_var(double v) { return Var(Matrix::Constant(1, 1, v), true); }

Matrix rows(std::initializer_list<std::initializer_list<double>> r) {
  Matrix m(static_cast<Index>(r.size()), static_cast<Index>(r.begin()->size()));
  Index i = 0;
  for (const auto& row : r) {
    Index j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

}  // namespace

TEST(FeatureConstraint, Fixtures) {
  Var a(rows({{1, 0}, {1, 0}}));
  Var b(rows({{0.6, 0.8}, {-0.2, std::sqrt(0.96)}}));
  EXPECT_NEAR(feature_constraint(a, b, {false, false}, SimilarityNorm::kCosineL2, kDefaultEps).scalar(), 0.4, 1e-7);
  EXPECT_NEAR(feature_constraint(a, a, {false, false}, SimilarityNorm::kCosineL2, kDefaultEps).scalar(), 1.0, 1e-6);
  Var o(rows({{0, 3}, {0, -2}}));
  EXPECT_NEAR(feature_constraint(a, o, {false, false}, SimilarityNorm::kCosineL2, kDefaultEps).scalar(), 0.0, 1e-12);
}

TEST(FeatureConstraint, AllPaddedIsZero) {
  Var a(rows({{1, 2}}));
  EXPECT_EQ(feature_constraint(a, a, {true}, SimilarityNorm::kCosineL2, kDefaultEps).scalar(), 0.0);
}

TEST(FeatureConstraint, FormulaL1Bounded) {
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    Var a(rng.normal_matrix(4, 6, 1.0));
    Var b(rng.normal_matrix(4, 6, 1.0));
    const double v = feature_constraint(a, b, std::vector<bool>(4, false), SimilarityNorm::kFormulaL1, kDefaultEps).scalar();
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0 + 1e-6);
  }
}

TEST(FeatureConstraint, DescentReducesSimilarity) {
  Rng rng(2);
  Var a(rng.normal_matrix(1, 8, 1.0));
  Var b(a.value() + rng.normal_matrix(1, 8, 0.5), true);
  double prev = feature_constraint(a, b, {false}, SimilarityNorm::kCosineL2, kDefaultEps).scalar();
  for (int s = 0; s < 20; ++s) {
    b.zero_grad();
    Var l = feature_constraint(a, b, {false}, SimilarityNorm::kCosineL2, kDefaultEps);
    ad::backward(l);
    b.mutable_value() -= 0.05 * b.grad();
    const double cur = feature_constraint(a, b, {false}, SimilarityNorm::kCosineL2, kDefaultEps).scalar();
    EXPECT_LT(cur, prev);
    prev = cur;
  }
}

TEST(RegionConstraint, Fixtures) {
  Var p(rows({{0, 0}, {0, 0}}));
  EXPECT_DOUBLE_EQ(region_constraint(p, p).scalar(), 1.0);
  Var q(rows({{0.5, -0.5}, {1, 1}}));
  EXPECT_NEAR(region_constraint(p, q).scalar(), (std::exp(-1.0) + std::exp(-2.0)) / 2, 1e-12);
  EXPECT_NEAR(region_constraint(p, q).scalar(), 0.2516074, 1e-6);
  Var far(rows({{5, 5}, {-5, 5}}));
  EXPECT_LT(region_constraint(p, far).scalar(), 1e-4);
}

TEST(InstanceConstraint, Fixtures) {
  ConstraintConfig cfg;
  const BoxD h = BoxD::from_corners(0.3, 0.3, 0.5, 0.5);
  Var pred(t::box_rows({h, h}));
  EXPECT_DOUBLE_EQ(instance_constraint(pred, {false, false}, h, h, tau_var(0.5), cfg).scalar(), 2.0);

  // GIoU -5/63 against the human and -7/9 against the object, weights forced to 1.
  cfg.use_distance_weight = false;
  Var one(t::box_rows({BoxD::from_corners(0, 0, 2, 2)}));
  const double v = instance_constraint(one, {false}, BoxD::from_corners(1, 1, 3, 3),
                                       BoxD::from_corners(4, 4, 6, 6), tau_var(0.5), cfg)
                       .scalar();
  EXPECT_NEAR(v, (2 - 5.0 / 63 - 7.0 / 9) / 2, 1e-12);
  EXPECT_NEAR(v, 0.571, 1e-3);
}

TEST(InstanceConstraint, FarBoxesPlateau) {
  ConstraintConfig cfg;
  Var far(t::box_rows({BoxD{40, 40, 0.2, 0.2}}));
  const double v = instance_constraint(far, {false}, BoxD{0.3, 0.3, 0.2, 0.2}, BoxD{0.6, 0.6, 0.2, 0.2},
                                       tau_var(0.5), cfg)
                       .scalar();
  EXPECT_NEAR(v, 1.0, 1e-12);
}

TEST(InstanceConstraint, EmptyTargetsContributeZero) {
  ConstraintConfig cfg;
  Var pred(t::box_rows({BoxD{0.5, 0.5, 0.2, 0.2}}));
  InstanceTargets none;
  none.per_query.resize(1);
  EXPECT_EQ(instance_constraint(pred, {false}, none, tau_var(0.5), cfg).scalar(), 0.0);
}

TEST(Constraints, PaddingInvariance) {
  Rng rng(3);
  ConstraintConfig cfg;
  const std::vector<bool> pad = {false, true, false};
  Matrix a = rng.normal_matrix(3, 5, 1.0), b = rng.normal_matrix(3, 5, 1.0);
  std::vector<BoxD> boxes = {t::random_box(rng), t::random_box(rng), t::random_box(rng)};
  const BoxD h = t::random_box(rng), o = t::random_box(rng);
  const double fc = feature_constraint(Var(a), Var(b), pad, cfg.similarity_norm, cfg.eps).scalar();
  const double ic = instance_constraint(Var(t::box_rows(boxes)), pad, h, o, tau_var(0.5), cfg).scalar();
  a.row(1).setConstant(123.0);
  b.row(1).setConstant(-7.0);
  boxes[1] = BoxD{0.9, 0.1, 0.05, 0.7};
  EXPECT_EQ(feature_constraint(Var(a), Var(b), pad, cfg.similarity_norm, cfg.eps).scalar(), fc);
  EXPECT_EQ(instance_constraint(Var(t::box_rows(boxes)), pad, h, o, tau_var(0.5), cfg).scalar(), ic);
}

TEST(Constraints, BoundsOnRandomInputs) {
  Rng rng(4);
  ConstraintConfig cfg;
  for (int i = 0; i < 200; ++i) {
    const Index n = 1 + static_cast<Index>(rng.below(5));
    std::vector<bool> pad(static_cast<size_t>(n), false);
    const double fc = feature_constraint(Var(rng.normal_matrix(n, 6, 2.0)), Var(rng.normal_matrix(n, 6, 2.0)), pad,
                                         cfg.similarity_norm, cfg.eps)
                          .scalar();
    EXPECT_GE(fc, 0.0);
    EXPECT_LE(fc, 1.0 + 1e-6);
    const double rc = region_constraint(Var(rng.normal_matrix(n, 6, 1.0)), Var(rng.normal_matrix(n, 6, 1.0))).scalar();
    EXPECT_GT(rc, 0.0);
    EXPECT_LE(rc, 1.0);
    std::vector<BoxD> boxes;
    for (Index k = 0; k < n; ++k) boxes.push_back(t::random_box(rng));
    const double ic = instance_constraint(Var(t::box_rows(boxes)), pad, t::random_box(rng), t::random_box(rng),
                                          tau_var(rng.uniform(0.05, 2.0)), cfg)
                          .scalar();
    EXPECT_GE(ic, 0.0);
    EXPECT_LE(ic, 2.0);
  }
}

TEST(Constraints, Gradients) {
  Rng rng(5);
  ConstraintConfig cfg;
  for (int n = 0; n < 5; ++n) {
    Var a(rng.normal_matrix(3, 4, 1.0), true), b(rng.normal_matrix(3, 4, 1.0), true);
    const std::vector<bool> pad = {false, false, true};
    EXPECT_LT(t::check_gradient([&] { return feature_constraint(a, b, pad, cfg.similarity_norm, cfg.eps); }, {a, b})
                  .rel_error,
              1e-4);
    EXPECT_LT(t::check_gradient([&] { return region_constraint(a, b); }, {a, b}).rel_error, 1e-4);
    Var boxes(t::box_rows({t::random_box(rng), t::random_box(rng), t::random_box(rng)}), true);
    Var tau = tau_var(rng.uniform(0.2, 1.0));
    const BoxD h = t::random_box(rng), o = t::random_box(rng);
    EXPECT_LT(t::check_gradient([&] { return instance_constraint(boxes, pad, h, o, tau, cfg); }, {boxes, tau})
                  .rel_error,
              1e-4);
  }
}

TEST(SpatialConstraintTotal, Weighted) {
  ConstraintConfig cfg;
  auto s = [](double v) { return ad::scalar_constant(v); };
  EXPECT_DOUBLE_EQ(spatial_constraint_total(s(1), s(1), s(2), cfg).scalar(), 13.0);
  EXPECT_DOUBLE_EQ(spatial_constraint_total(s(0), s(0), s(0), cfg).scalar(), 0.0);
  SwitchConfig off;
  off.feature_constraint = off.region_constraint = off.instance_constraint = false;
  const ConstraintConfig none = ConstraintConfig::from(LossConfig{}, off);
  EXPECT_DOUBLE_EQ(spatial_constraint_total(s(0.7), s(0.3), s(1.9), none).scalar(), 0.0);
}
