#pragma once

// Feature encoder, instance decoder and context extractor.
//
// The instance decoder runs 2*N_q queries; adjacent queries (2k, 2k+1) form
// the k-th human-object pair whose concatenated features feed the box and
// object-class heads. The context extractor shares the decoder architecture
// with N_q queries and a single context-box head.

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "contexthoi/autodiff.hpp"
#include "contexthoi/config.hpp"
#include "contexthoi/geometry.hpp"
#include "contexthoi/nn.hpp"

namespace contexthoi {

using ad::Index;
using ad::Matrix;
using ad::Var;

struct VisualMemory {
  Var features;  // [H*W, C]
  Var pos;       // [H*W, C], constant
  Index height = 0;
  Index width = 0;
};

struct FeatureBundle {
  Var z;                       // final layer [rows, C]
  std::vector<Var> per_layer;  // L_dec entries of [rows, C]
  Var guided;                  // positional guided embedding P [rows, C]
  std::vector<bool> pad_mask;  // per row
  Matrix last_cross_attention; // [rows, H*W]

  Index layers() const { return static_cast<Index>(per_layer.size()); }
};

struct RawPredictions {
  Var human_boxes;    // [N_q, 4] center-size in (0,1)
  Var object_boxes;   // [N_q, 4]
  Var object_logits;  // [N_q, N_o + 1], last column is no-object
  std::optional<Var> context_boxes;  // [N_q, 4]
  Var hoi_logits;     // [N_q, N_hoi]
};

// Mean of adjacent row pairs: [2n, C] -> [n, C].
Var pair_mean(const Var& x);
// Concatenation of adjacent row pairs: [2n, C] -> [n, 2C].
Var pair_concat(const Var& x);

// Rows flagged in `pad` become zero.
Var zero_padded_rows(const Var& x, const std::vector<bool>& pad);

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(nn::ParameterStore& store, const std::string& name, Index in, Index out, Index stride,
         Rng& rng);
  // image [h*w, in] -> [out_h*out_w, out]
  Var operator()(const Var& image, Index h, Index w, Index& out_h, Index& out_w) const;
  static Index output_extent(Index extent, Index stride);

 private:
  nn::Linear proj_;
  Index in_ = 0;
  Index stride_ = 1;
};

class Backbone {
 public:
  virtual ~Backbone() = default;
  virtual Var operator()(const Var& image, Index h, Index w, Index& out_h, Index& out_w) const = 0;
  virtual std::pair<Index, Index> output_shape(Index h, Index w) const = 0;
  virtual Index stride() const = 0;
  virtual Index channels() const = 0;
};

// Three stride-2 convolutions (stride 8).
class ToyCnnBackbone final : public Backbone {
 public:
  ToyCnnBackbone(nn::ParameterStore& store, const std::string& name, Index width, Rng& rng);
  Var operator()(const Var& image, Index h, Index w, Index& out_h, Index& out_w) const override;
  std::pair<Index, Index> output_shape(Index h, Index w) const override;
  Index stride() const override { return 8; }
  Index channels() const override { return channels_; }

 private:
  std::vector<Conv2d> convs_;
  Index channels_;
};

// Stem plus four residual stages, each halving resolution (stride 32).
class ResidualBackbone final : public Backbone {
 public:
  ResidualBackbone(nn::ParameterStore& store, const std::string& name, Index width, Rng& rng);
  Var operator()(const Var& image, Index h, Index w, Index& out_h, Index& out_w) const override;
  std::pair<Index, Index> output_shape(Index h, Index w) const override;
  Index stride() const override { return 32; }
  Index channels() const override { return channels_; }

 private:
  struct Stage {
    Conv2d down;
    Conv2d res1;
    Conv2d res2;
  };
  Conv2d stem_;
  std::vector<Stage> stages_;
  Index channels_;
};

class FeatureEncoder {
 public:
  FeatureEncoder(nn::ParameterStore& store, const ModelConfig& cfg, Rng& rng);
  // `image` is a normalized [h*w, 3] pixel matrix.
  VisualMemory operator()(const Matrix& image, Index h, Index w) const;
  std::pair<Index, Index> output_shape(Index h, Index w) const {
    return backbone_->output_shape(h, w);
  }
  const Backbone& backbone() const { return *backbone_; }

 private:
  std::unique_ptr<Backbone> backbone_;
  nn::Linear input_proj_;
  std::vector<nn::EncoderLayer> layers_;
  Index dim_;
  bool input_pos_ = false;
};

// Decoder trunk shared by the instance decoder and the context extractor:
// learned content queries Q, learned positional guided embedding P, L_dec
// decoder layers.
class QueryDecoder {
 public:
  QueryDecoder(nn::ParameterStore& store, const std::string& name, const ModelConfig& cfg,
               Index num_queries, Rng& rng);
  // `offset` is added to the content queries; `pad` rows produce zero features.
  FeatureBundle operator()(const VisualMemory& mem, const std::optional<Var>& offset,
                           const std::vector<bool>& pad) const;
  Index num_queries() const { return num_queries_; }
  const Var& queries() const { return queries_; }
  const Var& query_pos() const { return query_pos_; }

 private:
  Var queries_;
  Var query_pos_;
  std::vector<nn::DecoderLayer> layers_;
  Index num_queries_;
};

struct InstanceOutput {
  FeatureBundle bundle;
  Var human_boxes;
  Var object_boxes;
  Var object_logits;
};

class InstanceDecoder {
 public:
  InstanceDecoder(nn::ParameterStore& store, const ModelConfig& cfg, Rng& rng);
  InstanceOutput operator()(const VisualMemory& mem, const std::optional<Var>& guidance_offset) const;
  const QueryDecoder& trunk() const { return trunk_; }

 private:
  QueryDecoder trunk_;
  nn::Mlp human_head_;
  nn::Mlp object_head_;
  nn::Linear class_head_;
  Index num_pairs_;
};

struct ContextOutput {
  FeatureBundle bundle;
  Var context_boxes;
};

class ContextExtractor {
 public:
  ContextExtractor(nn::ParameterStore& store, const ModelConfig& cfg, Rng& rng);
  ContextOutput operator()(const VisualMemory& mem, const std::optional<Var>& guidance_offset,
                           const std::vector<bool>& pad) const;
  const QueryDecoder& trunk() const { return trunk_; }

 private:
  QueryDecoder trunk_;
  nn::Mlp box_head_;
  Index num_queries_;
};

}  // namespace contexthoi
