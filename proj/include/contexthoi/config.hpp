#pragma once

// Run configuration: model dimensions, loss coefficients, optimizer schedule
// and module switches. Stored as JSON; `desk` and `paper` profiles supply the
// defaults that a config file overlays.

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>

#include "contexthoi/geometry.hpp"

namespace contexthoi {

enum class SimilarityNorm { kCosineL2, kFormulaL1 };
enum class ApMode { kAllPoints, kElevenPoint };

struct ModelConfig {
  int hidden_dim = 32;
  int num_queries = 8;
  int encoder_layers = 2;
  int decoder_layers = 2;
  int num_heads = 4;
  int ffn_dim = 64;
  std::string backbone = "toy_cnn";
  int backbone_width = 16;
  // Add the sine encoding to the encoder input as well as to attention
  // queries/keys, so memory values carry absolute position.
  bool input_position_encoding = false;
  int teacher_dim = 64;
  std::string teacher_provider = "stub";
  std::uint64_t teacher_seed = 20240601;
  double gumbel_temperature = 1.0;
  double tau_init = 0.5;
  // Filled from the dataset at training time; needed to rebuild a checkpoint.
  int num_object_classes = 0;
  int num_verb_classes = 0;
  int num_hoi_classes = 0;
};

struct LossConfig {
  double lambda_fc = 4.0;
  double lambda_rc = 1.0;
  double lambda_ic = 4.0;
  SimilarityNorm similarity_norm = SimilarityNorm::kCosineL2;
  DistanceReduction distance_reduction = DistanceReduction::kSum;
  double eps = kDefaultEps;
  // Conventional set-prediction HOI loss coefficients and matching costs.
  double box_l1 = 2.5;
  double giou = 1.0;
  double object_class = 1.0;
  double interaction = 1.0;
  double no_object_weight = 0.1;
  double focal_alpha = 0.25;
  double focal_gamma = 2.0;
  double cost_class = 1.0;
  double cost_hoi = 1.0;
  double cost_box = 2.5;
  double cost_giou = 1.0;
  bool aux_loss = false;
};

// Module on/off switches used by the ablation configs.
struct SwitchConfig {
  bool context_branch = true;
  bool feature_constraint = true;
  bool region_constraint = true;
  bool instance_constraint = true;
  bool distance_weight = true;
  bool semantic_explorer = true;
  bool teacher_branch = true;
};

struct OptimConfig {
  double learning_rate = 1e-4;
  double weight_decay = 1e-4;
  int lr_drop_epoch = 40;
  double lr_drop_factor = 0.1;
  int batch_size = 16;
  int epochs = 60;
  double grad_clip_norm = 0.1;
};

struct EvalConfig {
  double iou_threshold = 0.5;
  int top_k = 100;
  ApMode ap_mode = ApMode::kAllPoints;
  int eval_every = 1;
};

struct RunConfig {
  std::string profile = "desk";
  std::uint64_t seed = 0;
  std::string data_root;
  std::string eval_root;
  std::string output_dir = "runs/default";
  int checkpoint_every = 0;
  bool augmentation = false;
  ModelConfig model;
  LossConfig loss;
  SwitchConfig switches;
  OptimConfig optim;
  EvalConfig eval;

  static RunConfig desk();
  static RunConfig paper();
  static RunConfig for_profile(const std::string& profile);

  void validate() const;
};

nlohmann::json to_json_value(const RunConfig& cfg);
// Overlays `j` on the defaults of the profile it names (desk when absent).
RunConfig config_from_json(const nlohmann::json& j);
std::string serialize_config(const RunConfig& cfg);
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
void save_config(const RunConfig& cfg, const std::filesystem::path& path);
// CONTEXTHOI_SEED and CONTEXTHOI_OUTPUT_DIR take precedence over the file.
void apply_env_overrides(RunConfig& cfg);

}  // namespace contexthoi
