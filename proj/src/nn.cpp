#include "contexthoi/nn.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace contexthoi::nn {

Var ParameterStore::add(const std::string& name, Matrix init) {
  if (params_.count(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
  Var v(std::move(init), true);
  params_.emplace(name, v);
  return v;
}

const Var& ParameterStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return it->second;
}

Index ParameterStore::scalar_count() const { return scalar_count(""); }

Index ParameterStore::scalar_count(const std::string& prefix) const {
  Index n = 0;
  for (const auto& [name, v] : params_) {
    if (name.compare(0, prefix.size(), prefix) == 0) n += v.value().size();
  }
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& [name, v] : params_) {
    Var copy = v;
    copy.zero_grad();
  }
}

Matrix xavier(Rng& rng, Index fan_in, Index fan_out) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  return rng.uniform_matrix(fan_in, fan_out, -limit, limit);
}

Linear::Linear(ParameterStore& store, const std::string& name, Index in, Index out, Rng& rng)
    : weight_(store.add(name + ".weight", xavier(rng, in, out))),
      bias_(store.add(name + ".bias", Matrix::Zero(1, out))) {}

Var Linear::operator()(const Var& x) const { return ad::add_row(ad::matmul(x, weight_), bias_); }

LayerNorm::LayerNorm(ParameterStore& store, const std::string& name, Index dim)
    : gamma_(store.add(name + ".gamma", Matrix::Ones(1, dim))),
      beta_(store.add(name + ".beta", Matrix::Zero(1, dim))) {}

Var LayerNorm::operator()(const Var& x) const { return ad::layer_norm_rows(x, gamma_, beta_); }

Mlp::Mlp(ParameterStore& store, const std::string& name, const std::vector<Index>& dims, Rng& rng) {
  if (dims.size() < 2) throw std::invalid_argument("Mlp: need at least input and output dims");
  for (size_t i = 0; i + 1 < dims.size(); ++i) {
    layers_.emplace_back(store, name + ".layer" + std::to_string(i), dims[i], dims[i + 1], rng);
  }
}

Var Mlp::operator()(const Var& x) const {
  Var h = x;
  for (size_t i = 0; i < layers_.size(); ++i) {
    h = layers_[i](h);
    if (i + 1 < layers_.size()) h = ad::relu(h);
  }
  return h;
}

MultiheadAttention::MultiheadAttention(ParameterStore& store, const std::string& name, Index dim,
                                       Index heads, Rng& rng)
    : q_(store, name + ".q", dim, dim, rng),
      k_(store, name + ".k", dim, dim, rng),
      v_(store, name + ".v", dim, dim, rng),
      o_(store, name + ".o", dim, dim, rng),
      heads_(heads),
      dim_(dim) {
  if (dim % heads != 0) throw std::invalid_argument("MultiheadAttention: dim % heads != 0");
}

AttentionOutput MultiheadAttention::operator()(const Var& query, const Var& key, const Var& value,
                                               const std::vector<bool>* key_padding) const {
  if (key.rows() != value.rows()) throw std::invalid_argument("attention: key/value row mismatch");
  const Index nq = query.rows();
  const Index nk = key.rows();
  const Index head_dim = dim_ / heads_;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

  std::optional<Var> bias;
  if (key_padding) {
    if (static_cast<Index>(key_padding->size()) != nk) {
      throw std::invalid_argument("attention: key_padding length mismatch");
    }
    bool all_padded = true;
    bool any_padded = false;
    for (bool p : *key_padding) {
      all_padded = all_padded && p;
      any_padded = any_padded || p;
    }
    // Every key padded: padded rows are zero vectors, so attend uniformly.
    if (any_padded && !all_padded) {
      Matrix b = Matrix::Zero(nq, nk);
      for (Index j = 0; j < nk; ++j) {
        if ((*key_padding)[j]) b.col(j).setConstant(-std::numeric_limits<double>::infinity());
      }
      bias = ad::constant(std::move(b));
    }
  }

  Var q = q_(query);
  Var k = k_(key);
  Var v = v_(value);
  std::vector<Var> head_out;
  Matrix avg = Matrix::Zero(nq, nk);
  for (Index h = 0; h < heads_; ++h) {
    Var qh = ad::slice_cols(q, h * head_dim, head_dim);
    Var kh = ad::slice_cols(k, h * head_dim, head_dim);
    Var vh = ad::slice_cols(v, h * head_dim, head_dim);
    Var scores = ad::scale(ad::matmul_nt(qh, kh), scale);
    if (bias) scores = ad::add(scores, *bias);
    Var attn = ad::softmax_rows(scores);
    avg += attn.value();
    head_out.push_back(ad::matmul(attn, vh));
  }
  avg /= static_cast<double>(heads_);
  Var merged = heads_ == 1 ? head_out.front() : ad::concat_cols(head_out);
  return {o_(merged), std::move(avg)};
}

EncoderLayer::EncoderLayer(ParameterStore& store, const std::string& name, Index dim, Index heads,
                           Index ffn, Rng& rng)
    : attn_(store, name + ".self_attn", dim, heads, rng),
      ff1_(store, name + ".ffn1", dim, ffn, rng),
      ff2_(store, name + ".ffn2", ffn, dim, rng),
      norm1_(store, name + ".norm1", dim),
      norm2_(store, name + ".norm2", dim) {}

Var EncoderLayer::operator()(const Var& x, const Var& pos) const {
  Var qk = ad::add(x, pos);
  Var h = norm1_(ad::add(x, attn_(qk, qk, x).out));
  return norm2_(ad::add(h, ff2_(ad::relu(ff1_(h)))));
}

DecoderLayer::DecoderLayer(ParameterStore& store, const std::string& name, Index dim, Index heads,
                           Index ffn, Rng& rng)
    : self_attn_(store, name + ".self_attn", dim, heads, rng),
      cross_attn_(store, name + ".cross_attn", dim, heads, rng),
      ff1_(store, name + ".ffn1", dim, ffn, rng),
      ff2_(store, name + ".ffn2", ffn, dim, rng),
      norm1_(store, name + ".norm1", dim),
      norm2_(store, name + ".norm2", dim),
      norm3_(store, name + ".norm3", dim) {}

DecoderLayerOutput DecoderLayer::operator()(const Var& tgt, const Var& query_pos,
                                            const Var& memory, const Var& memory_pos) const {
  Var qk = ad::add(tgt, query_pos);
  Var h = norm1_(ad::add(tgt, self_attn_(qk, qk, tgt).out));
  AttentionOutput cross = cross_attn_(ad::add(h, query_pos), ad::add(memory, memory_pos), memory);
  h = norm2_(ad::add(h, cross.out));
  h = norm3_(ad::add(h, ff2_(ad::relu(ff1_(h)))));
  return {h, std::move(cross.weights)};
}

Matrix sine_position_encoding(Index height, Index width, Index dim) {
  if (dim % 4 != 0) throw std::invalid_argument("sine_position_encoding: dim % 4 != 0");
  const Index half = dim / 2;
  const double two_pi = 2.0 * std::numbers::pi;
  Matrix pe(height * width, dim);
  for (Index y = 0; y < height; ++y) {
    for (Index x = 0; x < width; ++x) {
      const double ny = (static_cast<double>(y) + 1.0) / (static_cast<double>(height) + 1e-6) * two_pi;
      const double nx = (static_cast<double>(x) + 1.0) / (static_cast<double>(width) + 1e-6) * two_pi;
      const Index r = y * width + x;
      for (Index i = 0; i < half; i += 2) {
        const double freq = std::pow(10000.0, static_cast<double>(i) / static_cast<double>(half));
        pe(r, i) = std::sin(ny / freq);
        pe(r, i + 1) = std::cos(ny / freq);
        pe(r, half + i) = std::sin(nx / freq);
        pe(r, half + i + 1) = std::cos(nx / freq);
      }
    }
  }
  return pe;
}

}  // namespace contexthoi::nn
