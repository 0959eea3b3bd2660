#include "contexthoi/explorer.hpp"

#include <algorithm>
#include <iostream>
#include <numeric>
#include <stdexcept>

namespace contexthoi {

StubTeacher::StubTeacher(Index dim, Index patch, std::uint64_t seed)
    : dim_(dim), patch_(patch), seed_(seed) {
  if (dim <= 0 || patch <= 0) throw std::invalid_argument("StubTeacher: dim and patch must be positive");
  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  projection_ = rng.normal_matrix(patch * patch * 3, dim, 1.0);
}

Eigen::VectorXd StubTeacher::text_embed(const std::string& prompt) const {
  Rng rng(fnv1a(prompt) ^ seed_);
  Eigen::VectorXd v(dim_);
  for (Index i = 0; i < dim_; ++i) v(i) = rng.normal();
  return v.normalized();
}

Matrix StubTeacher::visual_embed(const Image& image) const {
  const Index gh = (image.height + patch_ - 1) / patch_;
  const Index gw = (image.width + patch_ - 1) / patch_;
  Matrix patches = Matrix::Zero(gh * gw, patch_ * patch_ * 3);
  for (Index gy = 0; gy < gh; ++gy) {
    for (Index gx = 0; gx < gw; ++gx) {
      for (Index py = 0; py < patch_; ++py) {
        for (Index px = 0; px < patch_; ++px) {
          const int x = static_cast<int>(gx * patch_ + px);
          const int y = static_cast<int>(gy * patch_ + py);
          if (!image.contains(x, y)) continue;
          const Rgb c = image.get(x, y);
          for (int k = 0; k < 3; ++k) {
            patches(gy * gw + gx, (py * patch_ + px) * 3 + k) = c[k] - 0.5;
          }
        }
      }
    }
  }
  Matrix out = patches * projection_;
  for (Index i = 0; i < out.rows(); ++i) {
    const double n = out.row(i).norm();
    if (n > 0) out.row(i) /= n;
  }
  return out;
}

std::unique_ptr<SemanticTeacher> make_teacher(const ModelConfig& cfg, Index patch) {
  if (cfg.teacher_provider == "stub") {
    return std::make_unique<StubTeacher>(cfg.teacher_dim, patch, cfg.teacher_seed);
  }
  std::cerr << "warning: semantic teacher provider '" << cfg.teacher_provider
            << "' is not available in this build; teacher features fall back to zeros\n";
  return nullptr;
}

Var gumbel_softmax_rows(const Var& logits, double temperature, Rng* rng) {
  if (!(temperature > 0.0)) {
    throw std::invalid_argument("gumbel_softmax_rows: temperature must be positive");
  }
  Var x = logits;
  if (rng) {
    Matrix noise(logits.rows(), logits.cols());
    for (Index i = 0; i < noise.rows(); ++i)
      for (Index j = 0; j < noise.cols(); ++j) noise(i, j) = rng->gumbel();
    x = ad::add(x, ad::constant(std::move(noise)));
  }
  return ad::softmax_rows(ad::scale(x, 1.0 / temperature));
}

std::vector<Index> top_categories(const Eigen::VectorXd& pooled, Index k) {
  std::vector<Index> order(static_cast<size_t>(pooled.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return pooled(a) > pooled(b); });
  order.resize(static_cast<size_t>(std::min<Index>(k, pooled.size())));
  return order;
}

SelectedGuidance select_guidance(const Var& memory, const Var& similarity, Index num_queries) {
  if (memory.rows() != similarity.rows()) {
    throw std::invalid_argument("select_guidance: token count mismatch");
  }
  const Eigen::VectorXd pooled = similarity.value().colwise().mean().transpose();
  SelectedGuidance out;
  out.selected = top_categories(pooled, num_queries);
  const Index chosen = static_cast<Index>(out.selected.size());

  Var weights = ad::normalize_cols(similarity);
  Var per_category = ad::matmul_tn(weights, memory);  // [N_cat, C]
  Var rows = ad::gather_rows(per_category, out.selected);
  if (chosen < num_queries) {
    rows = ad::concat_rows(
        {rows, ad::constant(Matrix::Zero(num_queries - chosen, memory.cols()))});
  }
  out.rows = rows;
  out.pad.assign(static_cast<size_t>(num_queries), false);
  for (Index i = chosen; i < num_queries; ++i) out.pad[i] = true;
  return out;
}

std::vector<bool> context_pad_from_guidance(const std::vector<bool>& context_guidance_pad) {
  if (context_guidance_pad.size() % 2 != 0) {
    throw std::invalid_argument("context_pad_from_guidance: odd length");
  }
  std::vector<bool> pad(context_guidance_pad.size() / 2);
  for (size_t k = 0; k < pad.size(); ++k) {
    pad[k] = context_guidance_pad[2 * k] && context_guidance_pad[2 * k + 1];
  }
  return pad;
}

SemanticExplorer::SemanticExplorer(nn::ParameterStore& store, const ModelConfig& cfg,
                                   const SemanticTeacher* teacher, const CategoryPrompts& prompts,
                                   Rng& rng)
    : num_queries_(cfg.num_queries) {
  const Index c = cfg.hidden_dim;
  const Index dt = cfg.teacher_dim;
  const Index n_obj = cfg.num_object_classes;
  const Index n_verb = cfg.num_verb_classes;
  instance_mlp_ = nn::Mlp(store, "explorer.instance_mlp", {c, dt, dt, n_obj}, rng);
  interaction_mlp_ = nn::Mlp(store, "explorer.interaction_mlp", {c, dt, dt, n_verb}, rng);

  // The hidden width equals the teacher width, so the final-layer columns are
  // the teacher text embeddings themselves.
  auto init_from_text = [&](const nn::Mlp& mlp, const std::vector<std::string>& names, Index n) {
    if (!teacher) return;
    if (static_cast<Index>(names.size()) != n) {
      throw std::invalid_argument("explorer: prompt count does not match category count");
    }
    if (teacher->dim() != dt) throw std::invalid_argument("explorer: teacher dim mismatch");
    Var w = mlp.layers().back().weight();
    for (Index j = 0; j < n; ++j) w.mutable_value().col(j) = teacher->text_embed(names[j]);
  };
  init_from_text(instance_mlp_, prompts.objects, n_obj);
  init_from_text(interaction_mlp_, prompts.verbs, n_verb);

  const Index nq = cfg.num_queries;
  instance_map_ = store.add("explorer.instance_map.weight", nn::xavier(rng, 2 * nq, nq));
  instance_map_bias_ = store.add("explorer.instance_map.bias", Matrix::Zero(2 * nq, 1));
  context_map_ = store.add("explorer.context_map.weight", nn::xavier(rng, nq, 2 * nq));
  context_map_bias_ = store.add("explorer.context_map.bias", Matrix::Zero(nq, 1));
}

std::pair<Var, Var> SemanticExplorer::explore_similarities(const VisualMemory& mem,
                                                           double temperature, Rng* rng) const {
  Var w_ins = gumbel_softmax_rows(instance_mlp_(mem.features), temperature, rng);
  Var w_int = gumbel_softmax_rows(interaction_mlp_(mem.features), temperature, rng);
  return {w_ins, w_int};
}

SemanticGuidance SemanticExplorer::guidance(const VisualMemory& mem, double temperature,
                                            Rng* rng) const {
  SemanticGuidance g;
  std::tie(g.instance_similarity, g.interaction_similarity) =
      explore_similarities(mem, temperature, rng);
  auto ins = select_guidance(mem.features, g.instance_similarity, num_queries_);
  auto inter = select_guidance(mem.features, g.interaction_similarity, num_queries_);
  g.instance_guidance = ins.rows;
  g.interaction_guidance = inter.rows;
  g.instance_pad = ins.pad;
  g.interaction_pad = inter.pad;
  g.instance_selected = ins.selected;
  g.interaction_selected = inter.selected;
  g.context_guidance = ad::concat_rows({ins.rows, inter.rows});
  g.context_pad = ins.pad;
  g.context_pad.insert(g.context_pad.end(), inter.pad.begin(), inter.pad.end());
  return g;
}

GuidanceOffsets SemanticExplorer::fuse(const Var& f_ins, const Var& f_int) const {
  if (f_ins.rows() != num_queries_ || f_int.rows() != num_queries_ || f_ins.cols() != f_int.cols()) {
    throw std::invalid_argument("fuse_guidance: expected two [N_q, C] guidance matrices");
  }
  Var f_c = ad::concat_rows({f_ins, f_int});
  GuidanceOffsets out;
  out.instance_offset = ad::add_col(ad::matmul(instance_map_, f_ins), instance_map_bias_);
  out.context_offset = ad::add_col(ad::matmul(context_map_, f_c), context_map_bias_);
  return out;
}

TeacherAdapter::TeacherAdapter(nn::ParameterStore& store, const ModelConfig& cfg, Rng& rng)
    : proj_(store, "teacher_adapter.proj", cfg.teacher_dim, cfg.hidden_dim, rng),
      norm_(store, "teacher_adapter.norm", cfg.hidden_dim) {}

Var TeacherAdapter::operator()(const Matrix& teacher_map) const {
  return norm_(proj_(ad::constant(teacher_map)));
}

}  // namespace contexthoi
