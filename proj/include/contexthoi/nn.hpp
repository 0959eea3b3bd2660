#pragma once

// Transformer building blocks on top of the autodiff engine. Parameters live
// in a ParameterStore under hierarchical names ("encoder.layer0.attn.q.weight")
// so checkpoints can address them.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "contexthoi/autodiff.hpp"
#include "contexthoi/rng.hpp"

namespace contexthoi::nn {

using ad::Index;
using ad::Matrix;
using ad::Var;

class ParameterStore {
 public:
  Var add(const std::string& name, Matrix init);
  const Var& get(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  const std::map<std::string, Var>& all() const { return params_; }
  size_t size() const { return params_.size(); }
  Index scalar_count() const;
  // Scalar count of parameters whose name starts with `prefix`.
  Index scalar_count(const std::string& prefix) const;
  void zero_grad();

 private:
  std::map<std::string, Var> params_;
};

// Glorot-uniform weight for a [fan_in, fan_out] matrix.
Matrix xavier(Rng& rng, Index fan_in, Index fan_out);

class Linear {
 public:
  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, Index in, Index out, Rng& rng);
  Var operator()(const Var& x) const;
  const Var& weight() const { return weight_; }
  const Var& bias() const { return bias_; }

 private:
  Var weight_;  // [in, out]
  Var bias_;    // [1, out]
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParameterStore& store, const std::string& name, Index dim);
  Var operator()(const Var& x) const;

 private:
  Var gamma_;
  Var beta_;
};

// ReLU between layers, none after the last.
class Mlp {
 public:
  Mlp() = default;
  Mlp(ParameterStore& store, const std::string& name, const std::vector<Index>& dims, Rng& rng);
  Var operator()(const Var& x) const;
  const std::vector<Linear>& layers() const { return layers_; }

 private:
  std::vector<Linear> layers_;
};

struct AttentionOutput {
  Var out;
  // Head-averaged attention weights [queries, keys].
  Matrix weights;
};

class MultiheadAttention {
 public:
  MultiheadAttention() = default;
  MultiheadAttention(ParameterStore& store, const std::string& name, Index dim, Index heads,
                     Rng& rng);
  // key_padding marks keys that receive no attention mass.
  AttentionOutput operator()(const Var& query, const Var& key, const Var& value,
                             const std::vector<bool>* key_padding = nullptr) const;

 private:
  Linear q_, k_, v_, o_;
  Index heads_ = 1;
  Index dim_ = 0;
};

class EncoderLayer {
 public:
  EncoderLayer() = default;
  EncoderLayer(ParameterStore& store, const std::string& name, Index dim, Index heads, Index ffn,
               Rng& rng);
  Var operator()(const Var& x, const Var& pos) const;

 private:
  MultiheadAttention attn_;
  Linear ff1_, ff2_;
  LayerNorm norm1_, norm2_;
};

struct DecoderLayerOutput {
  Var out;
  Matrix cross_weights;
};

// Post-norm decoder block: self-attention, cross-attention, feed-forward.
class DecoderLayer {
 public:
  DecoderLayer() = default;
  DecoderLayer(ParameterStore& store, const std::string& name, Index dim, Index heads, Index ffn,
               Rng& rng);
  DecoderLayerOutput operator()(const Var& tgt, const Var& query_pos, const Var& memory,
                                const Var& memory_pos) const;

 private:
  MultiheadAttention self_attn_, cross_attn_;
  Linear ff1_, ff2_;
  LayerNorm norm1_, norm2_, norm3_;
};

// Sine positional encoding over an H x W grid -> [H*W, dim], half the
// channels for y and half for x.
Matrix sine_position_encoding(Index height, Index width, Index dim);

}  // namespace contexthoi::nn
