#include "contexthoi/constraints.hpp"

#include <iostream>
#include <stdexcept>

#include "contexthoi/geometry_ops.hpp"

namespace contexthoi {

namespace {

std::vector<Index> kept_rows(const std::vector<bool>& pad) {
  std::vector<Index> rows;
  for (size_t i = 0; i < pad.size(); ++i)
    if (!pad[i]) rows.push_back(static_cast<Index>(i));
  return rows;
}

Var flatten_layers(const std::vector<Var>& layers) {
  if (layers.empty()) throw std::invalid_argument("feature_constraint: empty per-layer stack");
  return layers.size() == 1 ? layers.front() : ad::concat_cols(layers);
}

}  // namespace

ConstraintConfig ConstraintConfig::from(const LossConfig& loss, const SwitchConfig& sw) {
  ConstraintConfig c;
  c.lambda_fc = sw.feature_constraint ? loss.lambda_fc : 0.0;
  c.lambda_rc = sw.region_constraint ? loss.lambda_rc : 0.0;
  c.lambda_ic = sw.instance_constraint ? loss.lambda_ic : 0.0;
  c.similarity_norm = loss.similarity_norm;
  c.distance_reduction = loss.distance_reduction;
  c.use_distance_weight = sw.distance_weight;
  c.eps = loss.eps;
  return c;
}

Var feature_constraint(const Var& instance_rows, const Var& context_rows,
                       const std::vector<bool>& pad, SimilarityNorm norm, double eps) {
  if (instance_rows.rows() != context_rows.rows() || instance_rows.cols() != context_rows.cols()) {
    throw std::invalid_argument("feature_constraint: instance/context shape mismatch");
  }
  if (static_cast<Index>(pad.size()) != instance_rows.rows()) {
    throw std::invalid_argument("feature_constraint: pad mask length mismatch");
  }
  const auto rows = kept_rows(pad);
  if (rows.empty()) {
    std::cerr << "warning: feature constraint has no non-padded queries; contributing 0\n";
    return ad::scalar_constant(0.0);
  }
  Var a = ad::gather_rows(instance_rows, rows);
  Var b = ad::gather_rows(context_rows, rows);
  Var dot = ad::row_sum(ad::mul(a, b));
  Var na;
  Var nb;
  if (norm == SimilarityNorm::kCosineL2) {
    // The tiny offset keeps the gradient of a zero vector finite.
    na = ad::sqrt(ad::add_scalar(ad::row_sum(ad::square(a)), 1e-30));
    nb = ad::sqrt(ad::add_scalar(ad::row_sum(ad::square(b)), 1e-30));
  } else {
    na = ad::row_sum(ad::abs(a));
    nb = ad::row_sum(ad::abs(b));
  }
  Var sim = ad::div(ad::abs(dot), ad::add_scalar(ad::mul(na, nb), eps));
  return ad::mean(sim);
}

Var feature_constraint(const FeatureBundle& instance, const FeatureBundle& context,
                       const ConstraintConfig& cfg) {
  if (instance.layers() != context.layers()) {
    throw std::invalid_argument("feature_constraint: decoder depth mismatch");
  }
  std::vector<Var> reduced;
  for (const auto& layer : instance.per_layer) reduced.push_back(pair_mean(layer));
  return feature_constraint(flatten_layers(reduced), flatten_layers(context.per_layer),
                            context.pad_mask, cfg.similarity_norm, cfg.eps);
}

Var region_constraint(const Var& instance_guided_reduced, const Var& context_guided) {
  if (instance_guided_reduced.rows() != context_guided.rows() ||
      instance_guided_reduced.cols() != context_guided.cols()) {
    throw std::invalid_argument("region_constraint: guided embedding shape mismatch");
  }
  Var dist = ad::row_sum(ad::abs(ad::sub(instance_guided_reduced, context_guided)));
  return ad::mean(ad::exp(ad::neg(dist)));
}

Var region_constraint(const FeatureBundle& instance, const FeatureBundle& context) {
  return region_constraint(pair_mean(instance.guided), context.guided);
}

InstanceTargets InstanceTargets::broadcast(Index num_queries, const BoxD& human,
                                           const BoxD& object) {
  InstanceTargets t;
  t.per_query.assign(static_cast<size_t>(num_queries), {GtBoxPair{human, object}});
  return t;
}

Var instance_constraint(const Var& context_boxes, const std::vector<bool>& pad,
                        const InstanceTargets& targets, const Var& tau,
                        const ConstraintConfig& cfg) {
  const Index nq = context_boxes.rows();
  if (context_boxes.cols() != 4) throw std::invalid_argument("instance_constraint: boxes must be [N_q,4]");
  if (static_cast<Index>(pad.size()) != nq ||
      static_cast<Index>(targets.per_query.size()) != nq) {
    throw std::invalid_argument("instance_constraint: pad/target length mismatch");
  }

  std::vector<Index> query_rows;
  std::vector<double> entry_weight;
  std::vector<GtBoxPair> entries;
  Index active = 0;
  for (Index k = 0; k < nq; ++k) {
    const auto& pairs = targets.per_query[k];
    if (pad[k] || pairs.empty()) continue;
    ++active;
    for (const auto& p : pairs) {
      query_rows.push_back(k);
      entry_weight.push_back(1.0 / static_cast<double>(pairs.size()));
      entries.push_back(p);
    }
  }
  if (active == 0) return ad::scalar_constant(0.0);

  const Index n = static_cast<Index>(entries.size());
  Matrix human(n, 4);
  Matrix object(n, 4);
  Matrix weight(n, 1);
  for (Index i = 0; i < n; ++i) {
    const auto h = entries[i].first.params();
    const auto o = entries[i].second.params();
    for (int j = 0; j < 4; ++j) {
      human(i, j) = h[j];
      object(i, j) = o[j];
    }
    weight(i, 0) = entry_weight[i];
  }
  Var pred = ad::gather_rows(context_boxes, query_rows);
  Var gt_h = ad::constant(std::move(human));
  Var gt_o = ad::constant(std::move(object));
  Var g_h = ad::giou_rows(gt_h, pred);
  Var g_o = ad::giou_rows(gt_o, pred);
  Var term_h = g_h;
  Var term_o = g_o;
  if (cfg.use_distance_weight) {
    term_h = ad::mul(ad::dynamic_distance_weight_rows(gt_h, pred, tau, cfg.eps, cfg.distance_reduction), g_h);
    term_o = ad::mul(ad::dynamic_distance_weight_rows(gt_o, pred, tau, cfg.eps, cfg.distance_reduction), g_o);
  }
  Var per_entry = ad::add_scalar(ad::add(term_h, term_o), 2.0);
  Var total = ad::sum(ad::scale_rows(per_entry, ad::constant(std::move(weight))));
  return ad::scale(total, 1.0 / (2.0 * static_cast<double>(active)));
}

Var instance_constraint(const Var& context_boxes, const std::vector<bool>& pad, const BoxD& human,
                        const BoxD& object, const Var& tau, const ConstraintConfig& cfg) {
  return instance_constraint(context_boxes, pad,
                             InstanceTargets::broadcast(context_boxes.rows(), human, object), tau,
                             cfg);
}

Var spatial_constraint_total(const Var& l_fc, const Var& l_rc, const Var& l_ic,
                             const ConstraintConfig& cfg) {
  return ad::add(ad::add(ad::scale(l_fc, cfg.lambda_fc), ad::scale(l_rc, cfg.lambda_rc)),
                 ad::scale(l_ic, cfg.lambda_ic));
}

}  // namespace contexthoi
