#include <gtest/gtest.h>

#include <algorithm>
#include <map>

#include "contexthoi/aggregator.hpp"
#include "contexthoi/detector.hpp"
#include "support.hpp"

using namespace contexthoi;
namespace t = contexthoi::testing;

namespace {

struct Fixture {
  CategoryTable cats = t::dense_categories(2, 3);
  RunConfig cfg = t::tiny_config(cats);
};

// Shapes of every parameter under `prefix` with the prefix stripped.
std::multiset<std::pair<std::string, std::pair<Index, Index>>> shapes(const nn::ParameterStore& s,
                                                                      const std::string& prefix) {
  std::multiset<std::pair<std::string, std::pair<Index, Index>>> out;
  for (const auto& [name, v] : s.all())
    if (name.rfind(prefix, 0) == 0) out.insert({name.substr(prefix.size()), {v.rows(), v.cols()}});
  return out;
}

}  // namespace

TEST(PairOps, MeanAndConcat) {
  Matrix x(4, 2);
  x << 1, 2, 3, 4, 5, 6, 7, 8;
  Matrix mean(2, 2), cat(2, 4);
  mean << 2, 3, 6, 7;
  cat << 1, 2, 3, 4, 5, 6, 7, 8;
  EXPECT_TRUE(pair_mean(Var(x)).value() == mean);
  EXPECT_TRUE(pair_concat(Var(x)).value() == cat);
  EXPECT_TRUE(zero_padded_rows(Var(x), {false, true, false, true}).value().row(1).isZero(0.0));
}

TEST(Encoder, MemoryShape) {
  Fixture f;
  f.cfg.model.hidden_dim = 32;
  f.cfg.model.num_heads = 4;
  nn::ParameterStore store;
  Rng rng(1);
  FeatureEncoder enc(store, f.cfg.model, rng);
  Rng img_rng(2);
  const Image img = t::random_image(img_rng, 64, 64);
  const auto mem = enc(img.normalized(), 64, 64);
  EXPECT_EQ(mem.features.rows(), 64);
  EXPECT_EQ(mem.features.cols(), 32);
  EXPECT_TRUE(mem.features.value() == enc(img.normalized(), 64, 64).features.value());
  EXPECT_TRUE(mem.features.value().allFinite());
}

TEST(Encoder, ResidualBackboneStride32Shape) {
  nn::ParameterStore store;
  Rng rng(3);
  ResidualBackbone bb(store, "bb", 4, rng);
  EXPECT_EQ(bb.output_shape(800, 1333), std::make_pair(Index{25}, Index{42}));
  EXPECT_EQ(bb.output_shape(800, 1333).first * bb.output_shape(800, 1333).second, 1050);
  ToyCnnBackbone toy(store, "toy", 4, rng);
  EXPECT_EQ(toy.output_shape(64, 64), std::make_pair(Index{8}, Index{8}));
}

TEST(Encoder, RejectsTinyImage) {
  Fixture f;
  ContextHoiModel model(f.cfg, f.cats.prompts());
  Rng rng(4);
  EXPECT_THROW(model.forward(t::random_image(rng, 4, 4)), std::invalid_argument);
}

TEST(Model, OutputShapesAndRanges) {
  Fixture f;
  ContextHoiModel model(f.cfg, f.cats.prompts());
  Rng rng(5);
  const auto out = model.forward(t::random_image(rng, 40, 32));
  const Index nq = f.cfg.model.num_queries, c = f.cfg.model.hidden_dim;
  EXPECT_EQ(out.instance.bundle.layers(), f.cfg.model.decoder_layers);
  for (const auto& l : out.instance.bundle.per_layer) {
    EXPECT_EQ(l.rows(), 2 * nq);
    EXPECT_EQ(l.cols(), c);
  }
  ASSERT_TRUE(out.context.has_value());
  EXPECT_EQ(out.context->bundle.z.rows(), nq);
  const auto& p = out.predictions;
  EXPECT_EQ(p.human_boxes.rows(), nq);
  EXPECT_EQ(p.object_logits.cols(), f.cats.num_objects() + 1);
  EXPECT_EQ(p.hoi_logits.cols(), f.cats.num_hoi());
  ASSERT_TRUE(p.context_boxes.has_value());
  for (const Matrix* m : {&p.human_boxes.value(), &p.object_boxes.value(), &p.context_boxes->value()}) {
    EXPECT_EQ(m->cols(), 4);
    EXPECT_GT(m->minCoeff(), 0.0);
    EXPECT_LT(m->maxCoeff(), 1.0);
  }
  EXPECT_EQ(out.aggregated.fused.cols(), 3 * c);
}

TEST(Model, DeterministicEvalPass) {
  Fixture f;
  ContextHoiModel a(f.cfg, f.cats.prompts()), b(f.cfg, f.cats.prompts());
  Rng rng(6);
  const Image img = t::random_image(rng, 32, 32);
  EXPECT_TRUE(a.forward(img).predictions.hoi_logits.value() == b.forward(img).predictions.hoi_logits.value());
  Rng g1(7), g2(7);
  EXPECT_TRUE(a.forward(img, &g1).predictions.hoi_logits.value() ==
              a.forward(img, &g2).predictions.hoi_logits.value());
}

TEST(Model, FiniteOverSeeds) {
  Fixture f;
  for (std::uint64_t s = 0; s < 10; ++s) {
    f.cfg.seed = s;
    ContextHoiModel model(f.cfg, f.cats.prompts());
    Rng rng(100 + s);
    const auto out = model.forward(t::random_image(rng, 32, 32), &rng);
    EXPECT_TRUE(out.predictions.hoi_logits.value().allFinite());
    EXPECT_TRUE(out.predictions.human_boxes.value().allFinite());
    EXPECT_TRUE(out.predictions.object_logits.value().allFinite());
  }
}

TEST(Model, ZeroMemoryGivesFiniteBoxes) {
  Fixture f;
  ContextHoiModel model(f.cfg, f.cats.prompts());
  VisualMemory mem;
  mem.height = 2;
  mem.width = 2;
  mem.features = Var(Matrix::Zero(4, f.cfg.model.hidden_dim));
  mem.pos = Var(Matrix::Zero(4, f.cfg.model.hidden_dim));
  const auto out = model.instance_decoder()(mem, std::nullopt);
  EXPECT_TRUE(out.human_boxes.value().allFinite());
  EXPECT_GT(out.human_boxes.value().minCoeff(), 0.0);
  EXPECT_LT(out.human_boxes.value().maxCoeff(), 1.0);
}

TEST(Model, ContextBranchDisabled) {
  Fixture f;
  f.cfg.switches.context_branch = false;
  ContextHoiModel model(f.cfg, f.cats.prompts());
  Rng rng(8);
  const auto out = model.forward(t::random_image(rng, 32, 32));
  EXPECT_FALSE(out.context.has_value());
  EXPECT_FALSE(out.predictions.context_boxes.has_value());
  EXPECT_EQ(out.aggregated.last_cross_attention[1].cols(), f.cfg.model.num_queries);
}

TEST(Model, ContextExtractorSharesDecoderArchitecture) {
  Fixture f;
  ContextHoiModel model(f.cfg, f.cats.prompts());
  const auto& s = model.parameters();
  for (int l = 0; l < f.cfg.model.decoder_layers; ++l) {
    const std::string layer = ".layer" + std::to_string(l) + ".";
    EXPECT_EQ(shapes(s, "instance_decoder" + layer), shapes(s, "context_extractor" + layer));
  }
  EXPECT_EQ(s.get("instance_decoder.queries").rows(), 2 * s.get("context_extractor.queries").rows());
  EXPECT_EQ(s.get("instance_decoder.queries").cols(), s.get("context_extractor.queries").cols());
}

TEST(Model, ContextQueriesPermutationEquivariant) {
  Fixture f;
  ContextHoiModel model(f.cfg, f.cats.prompts());
  Rng rng(9);
  const Image img = t::random_image(rng, 32, 32);
  const auto mem = model.encoder()(img.normalized(), 32, 32);
  const auto& trunk = model.context_extractor().trunk();
  const std::vector<bool> pad(3, false);
  const Matrix before = trunk(mem, std::nullopt, pad).z.value();
  Var q = trunk.queries(), p = trunk.query_pos();
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(3);
  perm.indices() << 2, 0, 1;
  q.mutable_value() = perm * q.value();
  p.mutable_value() = perm * p.value();
  const Matrix after = trunk(mem, std::nullopt, pad).z.value();
  EXPECT_LT((after - perm * before).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Model, PaddedContextRowsAreZero) {
  Fixture f;
  ContextHoiModel model(f.cfg, f.cats.prompts());
  Rng rng(10);
  const auto mem = model.encoder()(t::random_image(rng, 32, 32).normalized(), 32, 32);
  const auto b = model.context_extractor().trunk()(mem, std::nullopt, {false, true, false});
  for (const auto& l : b.per_layer) EXPECT_TRUE(l.value().row(1).isZero(0.0));
  EXPECT_FALSE(b.z.value().row(0).isZero(0.0));
}

TEST(Aggregator, SharedCrossAttentionParameterCount) {
  Fixture f;
  ContextHoiModel model(f.cfg, f.cats.prompts());
  const Index c = f.cfg.model.hidden_dim, ffn = f.cfg.model.ffn_dim, nq = f.cfg.model.num_queries;
  const Index attn = 4 * (c * c + c);
  const Index per_layer = 2 * attn + (c * ffn + ffn) + (ffn * c + c) + 3 * 2 * c;
  const Index expected = nq * c + f.cfg.model.decoder_layers * per_layer + (3 * c * f.cats.num_hoi() + f.cats.num_hoi());
  EXPECT_EQ(model.parameters().scalar_count("aggregator."), expected);
}

TEST(Aggregator, IdenticalSourcesGiveIdenticalBranches) {
  Fixture f;
  ContextHoiModel model(f.cfg, f.cats.prompts());
  Rng rng(11);
  Var z(rng.normal_matrix(2 * f.cfg.model.num_queries, f.cfg.model.hidden_dim, 1.0));
  const auto out = model.aggregator()({z, z, z, {}});
  EXPECT_TRUE(out.instance.value() == out.context.value());
  EXPECT_TRUE(out.instance.value() == out.teacher.value());
  for (const auto& w : out.last_cross_attention)
    for (Index i = 0; i < w.rows(); ++i) EXPECT_NEAR(w.row(i).sum(), 1.0, 1e-5);
}

TEST(Aggregator, PaddedContextGetsNoAttention) {
  Fixture f;
  ContextHoiModel model(f.cfg, f.cats.prompts());
  Rng rng(12);
  const Index nq = f.cfg.model.num_queries, c = f.cfg.model.hidden_dim;
  Var z(rng.normal_matrix(2 * nq, c, 1.0));
  Var ctx(rng.normal_matrix(nq, c, 1.0));
  const auto out = model.aggregator()({z, ctx, z, {false, true, false}});
  EXPECT_TRUE(out.last_cross_attention[1].col(1).isZero(0.0));
}

TEST(Aggregator, GradientReachesBranchesAndExplorer) {
  Fixture f;
  ContextHoiModel model(f.cfg, f.cats.prompts());
  Rng rng(13);
  const auto out = model.forward(t::random_image(rng, 32, 32));
  ad::backward(ad::sum(out.predictions.hoi_logits));
  const auto& s = model.parameters();
  EXPECT_GT(s.get("context_extractor.queries").grad().norm(), 0.0);
  EXPECT_GT(s.get("instance_decoder.queries").grad().norm(), 0.0);
  EXPECT_GT(s.get("explorer.instance_mlp.layer0.weight").grad().norm(), 0.0);
}
