#include "contexthoi/aggregator.hpp"

#include <stdexcept>

namespace contexthoi {

ContextAggregator::ContextAggregator(nn::ParameterStore& store, const ModelConfig& cfg, Rng& rng) {
  const Index c = cfg.hidden_dim;
  queries_ = store.add("aggregator.queries", rng.normal_matrix(cfg.num_queries, c, 1.0));
  for (int i = 0; i < cfg.decoder_layers; ++i) {
    const std::string p = "aggregator.layer" + std::to_string(i);
    layers_.push_back(Layer{nn::MultiheadAttention(store, p + ".self_attn", c, cfg.num_heads, rng),
                            nn::MultiheadAttention(store, p + ".cross_attn", c, cfg.num_heads, rng),
                            nn::Linear(store, p + ".ffn1", c, cfg.ffn_dim, rng),
                            nn::Linear(store, p + ".ffn2", cfg.ffn_dim, c, rng),
                            nn::LayerNorm(store, p + ".norm1", c),
                            nn::LayerNorm(store, p + ".norm2", c),
                            nn::LayerNorm(store, p + ".norm3", c)});
  }
  hoi_head_ = nn::Linear(store, "aggregator.hoi_head", 3 * c, cfg.num_hoi_classes, rng);
}

AggregatedFeature ContextAggregator::operator()(const AggregatorInputs& in) const {
  const Index nq = queries_.rows();
  if (in.instance.rows() != 2 * nq) {
    throw std::invalid_argument("aggregate: instance features must have 2*N_q rows");
  }
  if (!in.context_pad.empty() && static_cast<Index>(in.context_pad.size()) != in.context.rows()) {
    throw std::invalid_argument("aggregate: context pad mask length mismatch");
  }
  const std::array<const Var*, 3> sources{&in.instance, &in.context, &in.teacher};
  AggregatedFeature out;
  Var state = pair_mean(in.instance);
  std::array<Var, 3> branch;
  for (const auto& layer : layers_) {
    Var qk = ad::add(state, queries_);
    state = layer.norm1(ad::add(state, layer.self_attn(qk, qk, state).out));
    Var query = ad::add(state, queries_);
    for (size_t b = 0; b < 3; ++b) {
      const std::vector<bool>* pad =
          (b == 1 && !in.context_pad.empty()) ? &in.context_pad : nullptr;
      auto cross = layer.cross_attn(query, *sources[b], *sources[b], pad);
      Var h = layer.norm2(ad::add(state, cross.out));
      branch[b] = layer.norm3(ad::add(h, layer.ff2(ad::relu(layer.ff1(h)))));
      out.last_cross_attention[b] = std::move(cross.weights);
    }
    state = ad::scale(ad::add(ad::add(branch[0], branch[1]), branch[2]), 1.0 / 3.0);
  }
  out.instance = branch[0];
  out.context = branch[1];
  out.teacher = branch[2];
  out.fused = ad::concat_cols({branch[0], branch[1], branch[2]});
  out.hoi_logits = hoi_head_(out.fused);
  return out;
}

}  // namespace contexthoi
