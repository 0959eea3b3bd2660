#pragma once

#include <array>
#include <vector>

#include "contexthoi/model.hpp"
#include "contexthoi/nn.hpp"

namespace contexthoi {

enum class AggregatorBranch { kInstance = 0, kContext = 1, kTeacher = 2 };

struct AggregatedFeature {
  Var instance;  // [N_q, C]
  Var context;   // [N_q, C]
  Var teacher;   // [N_q, C]
  Var fused;     // [N_q, 3C], order (instance, context, teacher)
  Var hoi_logits;  // [N_q, N_hoi]
  // Last-layer cross-attention of each branch, [N_q, keys of that branch].
  std::array<Matrix, 3> last_cross_attention;
};

struct AggregatorInputs {
  Var instance;  // Z_ins [2 N_q, C]
  Var context;   // Z_c [N_q, C] (zeros when the branch is disabled)
  Var teacher;   // Z_v [HW', C] (zeros when the teacher is absent)
  std::vector<bool> context_pad;
};

// Multi-branch decoder whose cross-attention (query/key/value/output
// projections) is one parameter set used by all three branches. Per layer:
// self-attention over the aggregation state, one cross-attention per branch,
// a shared feed-forward; the next layer's state is the branch mean. The
// initial state of query k is the mean of instance rows 2k and 2k+1, and the
// learned aggregation query Q_agg acts as its positional embedding.
class ContextAggregator {
 public:
  ContextAggregator(nn::ParameterStore& store, const ModelConfig& cfg, Rng& rng);
  AggregatedFeature operator()(const AggregatorInputs& in) const;
  const Var& queries() const { return queries_; }

 private:
  struct Layer {
    nn::MultiheadAttention self_attn;
    nn::MultiheadAttention cross_attn;
    nn::Linear ff1, ff2;
    nn::LayerNorm norm1, norm2, norm3;
  };
  Var queries_;
  std::vector<Layer> layers_;
  nn::Linear hoi_head_;
};

}  // namespace contexthoi
