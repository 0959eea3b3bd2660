#include "contexthoi/model.hpp"

#include <stdexcept>

namespace contexthoi {

namespace {

Matrix pair_mean_matrix(Index pairs) {
  Matrix m = Matrix::Zero(pairs, 2 * pairs);
  for (Index k = 0; k < pairs; ++k) {
    m(k, 2 * k) = 0.5;
    m(k, 2 * k + 1) = 0.5;
  }
  return m;
}

std::vector<Index> strided_rows(Index count, Index start) {
  std::vector<Index> rows;
  for (Index k = 0; k < count; ++k) rows.push_back(2 * k + start);
  return rows;
}

}  // namespace

Var pair_mean(const Var& x) {
  if (x.rows() % 2 != 0) throw std::invalid_argument("pair_mean: odd row count");
  return ad::matmul(ad::constant(pair_mean_matrix(x.rows() / 2)), x);
}

Var pair_concat(const Var& x) {
  if (x.rows() % 2 != 0) throw std::invalid_argument("pair_concat: odd row count");
  const Index pairs = x.rows() / 2;
  return ad::concat_cols({ad::gather_rows(x, strided_rows(pairs, 0)),
                          ad::gather_rows(x, strided_rows(pairs, 1))});
}

Var zero_padded_rows(const Var& x, const std::vector<bool>& pad) {
  if (static_cast<Index>(pad.size()) != x.rows()) {
    throw std::invalid_argument("zero_padded_rows: mask length mismatch");
  }
  bool any = false;
  Matrix keep(x.rows(), 1);
  for (Index i = 0; i < x.rows(); ++i) {
    keep(i, 0) = pad[i] ? 0.0 : 1.0;
    any = any || pad[i];
  }
  return any ? ad::scale_rows(x, ad::constant(std::move(keep))) : x;
}

Conv2d::Conv2d(nn::ParameterStore& store, const std::string& name, Index in, Index out,
               Index stride, Rng& rng)
    : proj_(store, name, 9 * in, out, rng), in_(in), stride_(stride) {}

Index Conv2d::output_extent(Index extent, Index stride) { return (extent - 1) / stride + 1; }

Var Conv2d::operator()(const Var& image, Index h, Index w, Index& out_h, Index& out_w) const {
  if (image.cols() != in_) throw std::invalid_argument("Conv2d: channel mismatch");
  out_h = output_extent(h, stride_);
  out_w = output_extent(w, stride_);
  return proj_(ad::im2col(image, h, w, 3, stride_, 1));
}

ToyCnnBackbone::ToyCnnBackbone(nn::ParameterStore& store, const std::string& name, Index width,
                               Rng& rng)
    : channels_(2 * width) {
  convs_.emplace_back(store, name + ".conv0", 3, width, 2, rng);
  convs_.emplace_back(store, name + ".conv1", width, 2 * width, 2, rng);
  convs_.emplace_back(store, name + ".conv2", 2 * width, 2 * width, 2, rng);
}

Var ToyCnnBackbone::operator()(const Var& image, Index h, Index w, Index& out_h,
                               Index& out_w) const {
  Var x = image;
  for (const auto& conv : convs_) {
    Index nh = 0;
    Index nw = 0;
    x = ad::relu(conv(x, h, w, nh, nw));
    h = nh;
    w = nw;
  }
  out_h = h;
  out_w = w;
  return x;
}

std::pair<Index, Index> ToyCnnBackbone::output_shape(Index h, Index w) const {
  for (int i = 0; i < 3; ++i) {
    h = Conv2d::output_extent(h, 2);
    w = Conv2d::output_extent(w, 2);
  }
  return {h, w};
}

ResidualBackbone::ResidualBackbone(nn::ParameterStore& store, const std::string& name,
                                   Index width, Rng& rng)
    : stem_(store, name + ".stem", 3, width, 2, rng) {
  Index ch = width;
  for (int s = 0; s < 4; ++s) {
    const Index next = s < 3 ? 2 * ch : ch;
    const std::string prefix = name + ".stage" + std::to_string(s);
    stages_.push_back(Stage{Conv2d(store, prefix + ".down", ch, next, 2, rng),
                            Conv2d(store, prefix + ".res1", next, next, 1, rng),
                            Conv2d(store, prefix + ".res2", next, next, 1, rng)});
    ch = next;
  }
  channels_ = ch;
}

Var ResidualBackbone::operator()(const Var& image, Index h, Index w, Index& out_h,
                                 Index& out_w) const {
  Index nh = 0;
  Index nw = 0;
  Var x = ad::relu(stem_(image, h, w, nh, nw));
  h = nh;
  w = nw;
  for (const auto& stage : stages_) {
    x = ad::relu(stage.down(x, h, w, nh, nw));
    h = nh;
    w = nw;
    Var r = ad::relu(stage.res1(x, h, w, nh, nw));
    r = stage.res2(r, h, w, nh, nw);
    x = ad::relu(ad::add(x, r));
  }
  out_h = h;
  out_w = w;
  return x;
}

std::pair<Index, Index> ResidualBackbone::output_shape(Index h, Index w) const {
  for (int i = 0; i < 5; ++i) {
    h = Conv2d::output_extent(h, 2);
    w = Conv2d::output_extent(w, 2);
  }
  return {h, w};
}

FeatureEncoder::FeatureEncoder(nn::ParameterStore& store, const ModelConfig& cfg, Rng& rng)
    : dim_(cfg.hidden_dim), input_pos_(cfg.input_position_encoding) {
  if (cfg.backbone == "resnet") {
    backbone_ = std::make_unique<ResidualBackbone>(store, "encoder.backbone", cfg.backbone_width, rng);
  } else {
    backbone_ = std::make_unique<ToyCnnBackbone>(store, "encoder.backbone", cfg.backbone_width, rng);
  }
  input_proj_ = nn::Linear(store, "encoder.input_proj", backbone_->channels(), dim_, rng);
  for (int i = 0; i < cfg.encoder_layers; ++i) {
    layers_.emplace_back(store, "encoder.layer" + std::to_string(i), dim_, cfg.num_heads,
                         cfg.ffn_dim, rng);
  }
}

VisualMemory FeatureEncoder::operator()(const Matrix& image, Index h, Index w) const {
  if (image.rows() != h * w || image.cols() != 3) {
    throw std::invalid_argument("encode: image must be [h*w, 3]");
  }
  if (h < backbone_->stride() || w < backbone_->stride()) {
    throw std::invalid_argument("encode: image " + std::to_string(w) + "x" + std::to_string(h) +
                                " is smaller than the backbone stride " +
                                std::to_string(backbone_->stride()));
  }
  VisualMemory mem;
  Var x = (*backbone_)(ad::constant(image), h, w, mem.height, mem.width);
  x = input_proj_(x);
  mem.pos = ad::constant(nn::sine_position_encoding(mem.height, mem.width, dim_));
  if (input_pos_) x = ad::add(x, mem.pos);
  for (const auto& layer : layers_) x = layer(x, mem.pos);
  mem.features = x;
  return mem;
}

QueryDecoder::QueryDecoder(nn::ParameterStore& store, const std::string& name,
                           const ModelConfig& cfg, Index num_queries, Rng& rng)
    : num_queries_(num_queries) {
  queries_ = store.add(name + ".queries", rng.normal_matrix(num_queries, cfg.hidden_dim, 1.0));
  query_pos_ = store.add(name + ".query_pos", rng.normal_matrix(num_queries, cfg.hidden_dim, 1.0));
  for (int i = 0; i < cfg.decoder_layers; ++i) {
    layers_.emplace_back(store, name + ".layer" + std::to_string(i), cfg.hidden_dim,
                         cfg.num_heads, cfg.ffn_dim, rng);
  }
}

FeatureBundle QueryDecoder::operator()(const VisualMemory& mem, const std::optional<Var>& offset,
                                       const std::vector<bool>& pad) const {
  if (offset && (offset->rows() != queries_.rows() || offset->cols() != queries_.cols())) {
    throw std::invalid_argument("decoder: guidance offset shape [" +
                                std::to_string(offset->rows()) + "x" +
                                std::to_string(offset->cols()) + "] does not match queries [" +
                                std::to_string(queries_.rows()) + "x" +
                                std::to_string(queries_.cols()) + "]");
  }
  if (static_cast<Index>(pad.size()) != num_queries_) {
    throw std::invalid_argument("decoder: pad mask length mismatch");
  }
  FeatureBundle bundle;
  bundle.pad_mask = pad;
  bundle.guided = query_pos_;
  Var tgt = offset ? ad::add(queries_, *offset) : queries_;
  for (const auto& layer : layers_) {
    auto out = layer(tgt, query_pos_, mem.features, mem.pos);
    tgt = out.out;
    bundle.per_layer.push_back(zero_padded_rows(tgt, pad));
    bundle.last_cross_attention = std::move(out.cross_weights);
  }
  bundle.z = bundle.per_layer.back();
  return bundle;
}

InstanceDecoder::InstanceDecoder(nn::ParameterStore& store, const ModelConfig& cfg, Rng& rng)
    : trunk_(store, "instance_decoder", cfg, 2 * cfg.num_queries, rng),
      num_pairs_(cfg.num_queries) {
  const Index c = cfg.hidden_dim;
  human_head_ = nn::Mlp(store, "instance_decoder.human_box_head", {2 * c, c, c, 4}, rng);
  object_head_ = nn::Mlp(store, "instance_decoder.object_box_head", {2 * c, c, c, 4}, rng);
  class_head_ = nn::Linear(store, "instance_decoder.object_class_head", 2 * c,
                           cfg.num_object_classes + 1, rng);
}

InstanceOutput InstanceDecoder::operator()(const VisualMemory& mem,
                                           const std::optional<Var>& guidance_offset) const {
  InstanceOutput out;
  out.bundle = trunk_(mem, guidance_offset, std::vector<bool>(2 * num_pairs_, false));
  Var pairs = pair_concat(out.bundle.z);
  out.human_boxes = ad::sigmoid(human_head_(pairs));
  out.object_boxes = ad::sigmoid(object_head_(pairs));
  out.object_logits = class_head_(pairs);
  return out;
}

ContextExtractor::ContextExtractor(nn::ParameterStore& store, const ModelConfig& cfg, Rng& rng)
    : trunk_(store, "context_extractor", cfg, cfg.num_queries, rng),
      num_queries_(cfg.num_queries) {
  const Index c = cfg.hidden_dim;
  box_head_ = nn::Mlp(store, "context_extractor.context_box_head", {c, c, c, 4}, rng);
}

ContextOutput ContextExtractor::operator()(const VisualMemory& mem,
                                           const std::optional<Var>& guidance_offset,
                                           const std::vector<bool>& pad) const {
  ContextOutput out;
  out.bundle = trunk_(mem, guidance_offset, pad);
  out.context_boxes = ad::sigmoid(box_head_(out.bundle.z));
  return out;
}

}  // namespace contexthoi
