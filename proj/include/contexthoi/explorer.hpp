#pragma once

// Semantic-guided exploration: category explorers initialized from teacher
// text embeddings score every memory token against object and verb
// categories; the top-N_q categories by pooled similarity contribute
// similarity-weighted poolings of the memory as guidance rows, which are
// mapped along the query axis onto the instance and context queries.

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "contexthoi/autodiff.hpp"
#include "contexthoi/image.hpp"
#include "contexthoi/model.hpp"
#include "contexthoi/nn.hpp"
#include "contexthoi/rng.hpp"

namespace contexthoi {

class SemanticTeacher {
 public:
  virtual ~SemanticTeacher() = default;
  virtual Index dim() const = 0;
  // Unit-norm embedding of a category prompt.
  virtual Eigen::VectorXd text_embed(const std::string& prompt) const = 0;
  // Unit-norm rows [tokens, dim] over a patch grid of the image.
  virtual Matrix visual_embed(const Image& image) const = 0;
};

// Deterministic stand-in: prompt embeddings are hash-seeded unit vectors and
// the visual map is a fixed random linear map of pixel patches.
class StubTeacher final : public SemanticTeacher {
 public:
  StubTeacher(Index dim, Index patch, std::uint64_t seed);
  Index dim() const override { return dim_; }
  Eigen::VectorXd text_embed(const std::string& prompt) const override;
  Matrix visual_embed(const Image& image) const override;
  Index patch() const { return patch_; }

 private:
  Index dim_;
  Index patch_;
  std::uint64_t seed_;
  Matrix projection_;  // [patch*patch*3, dim]
};

// `stub` builds a StubTeacher; any other provider id is unavailable here and
// yields nullptr with a warning on stderr.
std::unique_ptr<SemanticTeacher> make_teacher(const ModelConfig& cfg, Index patch);

struct CategoryPrompts {
  std::vector<std::string> objects;
  std::vector<std::string> verbs;
};

struct SemanticGuidance {
  Var instance_similarity;     // omega_ins [HW, N_o]
  Var interaction_similarity;  // omega_int [HW, N_v]
  Var instance_guidance;       // f_ins [N_q, C]
  Var interaction_guidance;    // f_int [N_q, C]
  Var context_guidance;        // f_c [2 N_q, C]
  std::vector<bool> instance_pad;     // N_q
  std::vector<bool> interaction_pad;  // N_q
  std::vector<bool> context_pad;      // 2 N_q
  std::vector<Index> instance_selected;
  std::vector<Index> interaction_selected;
};

// Gumbel-softmax over the category axis. With `rng` the Gumbel noise is
// sampled from it; without, the noise-free tempered softmax is returned.
Var gumbel_softmax_rows(const Var& logits, double temperature, Rng* rng);

// Indices of the `k` largest pooled similarities, descending; ties keep the
// lower index first.
std::vector<Index> top_categories(const Eigen::VectorXd& pooled, Index k);

struct SelectedGuidance {
  Var rows;  // [N_q, C]
  std::vector<bool> pad;
  std::vector<Index> selected;
};

// Pooled similarity per category is the token mean of its column; the chosen
// categories each contribute the column-normalized similarity-weighted mean
// of `memory`. Short selections are zero-padded up to `num_queries`.
SelectedGuidance select_guidance(const Var& memory, const Var& similarity, Index num_queries);

// Context query k is padded when both rows 2k and 2k+1 of f_c are padded.
std::vector<bool> context_pad_from_guidance(const std::vector<bool>& context_guidance_pad);

struct GuidanceOffsets {
  Var instance_offset;  // [2 N_q, C]
  Var context_offset;   // [N_q, C]
};

class SemanticExplorer {
 public:
  SemanticExplorer(nn::ParameterStore& store, const ModelConfig& cfg, const SemanticTeacher* teacher,
                   const CategoryPrompts& prompts, Rng& rng);

  std::pair<Var, Var> explore_similarities(const VisualMemory& mem, double temperature,
                                           Rng* rng) const;
  SemanticGuidance guidance(const VisualMemory& mem, double temperature, Rng* rng) const;
  GuidanceOffsets fuse(const Var& f_ins, const Var& f_int) const;

  const nn::Mlp& instance_mlp() const { return instance_mlp_; }
  const nn::Mlp& interaction_mlp() const { return interaction_mlp_; }

 private:
  nn::Mlp instance_mlp_;
  nn::Mlp interaction_mlp_;
  Var instance_map_;      // [2 N_q, N_q]
  Var instance_map_bias_; // [2 N_q, 1]
  Var context_map_;       // [N_q, 2 N_q]
  Var context_map_bias_;  // [N_q, 1]
  Index num_queries_;
};

// Linear projection of the teacher visual map to the hidden width, then
// LayerNorm.
class TeacherAdapter {
 public:
  TeacherAdapter(nn::ParameterStore& store, const ModelConfig& cfg, Rng& rng);
  Var operator()(const Matrix& teacher_map) const;

 private:
  nn::Linear proj_;
  nn::LayerNorm norm_;
};

}  // namespace contexthoi
