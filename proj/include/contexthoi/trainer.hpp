#pragma once

// End-to-end training: forward both branches, match, L_HOI + L_SC, AdamW
// with a step learning-rate drop and global gradient clipping. Emits one JSON
// line per step and per evaluation to <output_dir>/metrics.jsonl and writes
// resumable binary checkpoints.

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "contexthoi/config.hpp"
#include "contexthoi/constraints.hpp"
#include "contexthoi/dataset.hpp"
#include "contexthoi/detector.hpp"
#include "contexthoi/evaluation.hpp"
#include "contexthoi/matching.hpp"

namespace contexthoi {

struct Sample {
  std::string id;
  Image image;
  GroundTruthSet gt;
};

std::vector<Sample> load_samples(const DatasetIndex& ds);

// Random horizontal flip and isotropic rescale in [0.75, 1.25]; boxes are
// normalized so only the flip moves them.
Sample augment(const Sample& s, Rng& rng);

struct LossBreakdown {
  MatchResult match;
  HoiLossTerms hoi;
  SpatialConstraintTerms sc;
  Var total;
};

// Matched queries take their GT pair for L_IC; unmatched non-padded queries
// average over every GT pair of the image.
InstanceTargets instance_targets(const MatchResult& match, const GroundTruthSet& gt, Index num_queries);

LossBreakdown compute_loss(const ContextHoiModel& model, const ModelOutput& out, const GroundTruthSet& gt);

class AdamW {
 public:
  AdamW() = default;
  AdamW(double weight_decay, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(nn::ParameterStore& store, double lr);
  long steps() const { return t_; }

  std::map<std::string, Matrix>& first_moment() { return m_; }
  std::map<std::string, Matrix>& second_moment() { return v_; }
  const std::map<std::string, Matrix>& first_moment() const { return m_; }
  const std::map<std::string, Matrix>& second_moment() const { return v_; }
  void set_steps(long t) { t_ = t; }

 private:
  double weight_decay_ = 0.0;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  long t_ = 0;
  std::map<std::string, Matrix> m_;
  std::map<std::string, Matrix> v_;
};

// Scales all gradients so their global L2 norm is at most `max_norm`
// (no-op when max_norm <= 0). Returns the norm before clipping.
double clip_grad_norm(nn::ParameterStore& store, double max_norm);

class TrainingAborted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EvalSummary {
  MapResult map;
  double verb_accuracy = 0.0;  // top detection's verb vs the image's first GT verb
};

EvalSummary evaluate_model(const ContextHoiModel& model, const std::vector<Sample>& samples,
                           const CategoryMeta& meta, const EvalConfig& cfg,
                           const std::optional<SubsetSpec>& subset = std::nullopt,
                           std::vector<DetectionRecord>* detections = nullptr);

// Rebuilds the model a checkpoint was written from.
struct CheckpointData {
  RunConfig config;
  CategoryTable categories;
  int epoch = 0;
  long step = 0;
  std::string rng_state;
  long adam_steps = 0;
  std::map<std::string, Matrix> params;
  std::map<std::string, Matrix> adam_m;
  std::map<std::string, Matrix> adam_v;
};

void write_checkpoint(const CheckpointData& ckpt, const std::filesystem::path& path);
CheckpointData read_checkpoint(const std::filesystem::path& path);
std::unique_ptr<ContextHoiModel> model_from_checkpoint(const CheckpointData& ckpt);

class Trainer {
 public:
  Trainer(RunConfig cfg, const DatasetIndex& train, std::optional<DatasetIndex> eval = std::nullopt);

  // Trains until cfg.optim.epochs; returns the last evaluation (if any ran).
  std::optional<EvalSummary> run();
  void resume(const std::filesystem::path& checkpoint);

  // One optimizer step on `batch`; returns the scalar metrics it logged.
  nlohmann::json train_step(const std::vector<const Sample*>& batch);
  EvalSummary evaluate() const;

  void save_checkpoint(const std::filesystem::path& path) const;

  ContextHoiModel& model() { return *model_; }
  const RunConfig& config() const { return cfg_; }
  int epoch() const { return epoch_; }
  long step() const { return step_; }
  double learning_rate() const;
  const std::vector<Sample>& train_samples() const { return train_; }
  std::filesystem::path metrics_path() const;

 private:
  void log(const nlohmann::json& record);

  RunConfig cfg_;
  CategoryTable categories_;
  CategoryMeta meta_;
  std::vector<Sample> train_;
  std::vector<Sample> eval_;
  std::unique_ptr<ContextHoiModel> model_;
  AdamW optimizer_;
  Rng rng_;
  int epoch_ = 0;
  long step_ = 0;
  std::optional<std::filesystem::path> last_good_;
};

// Fills the category counts of cfg.model from a dataset.
void bind_categories(RunConfig& cfg, const CategoryTable& categories);

}  // namespace contexthoi
