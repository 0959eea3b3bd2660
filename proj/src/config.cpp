#include "contexthoi/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace contexthoi {

NLOHMANN_JSON_SERIALIZE_ENUM(SimilarityNorm, {{SimilarityNorm::kCosineL2, "cosine_l2"},
                                              {SimilarityNorm::kFormulaL1, "formula_l1"}})
NLOHMANN_JSON_SERIALIZE_ENUM(ApMode, {{ApMode::kAllPoints, "all_points"},
                                      {ApMode::kElevenPoint, "eleven_point"}})
NLOHMANN_JSON_SERIALIZE_ENUM(DistanceReduction, {{DistanceReduction::kSum, "sum"},
                                                 {DistanceReduction::kMean, "mean"}})

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ModelConfig, hidden_dim, num_queries,
                                                encoder_layers, decoder_layers, num_heads, ffn_dim,
                                                backbone, backbone_width, input_position_encoding, teacher_dim,
                                                teacher_provider, teacher_seed, gumbel_temperature,
                                                tau_init, num_object_classes, num_verb_classes,
                                                num_hoi_classes)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(LossConfig, lambda_fc, lambda_rc, lambda_ic,
                                                similarity_norm, distance_reduction, eps, box_l1,
                                                giou, object_class, interaction, no_object_weight,
                                                focal_alpha, focal_gamma, cost_class, cost_hoi,
                                                cost_box, cost_giou, aux_loss)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SwitchConfig, context_branch, feature_constraint,
                                                region_constraint, instance_constraint,
                                                distance_weight, semantic_explorer, teacher_branch)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(OptimConfig, learning_rate, weight_decay,
                                                lr_drop_epoch, lr_drop_factor, batch_size, epochs,
                                                grad_clip_norm)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(EvalConfig, iou_threshold, top_k, ap_mode,
                                                eval_every)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(RunConfig, profile, seed, data_root, eval_root,
                                                output_dir, checkpoint_every, augmentation, model,
                                                loss, switches, optim, eval)

RunConfig RunConfig::desk() {
  RunConfig cfg;
  cfg.profile = "desk";
  // Small model, few images: a higher rate and looser clipping converge in
  // minutes on one CPU core.
  cfg.model.input_position_encoding = true;
  cfg.optim.batch_size = 4;
  cfg.optim.learning_rate = 5e-4;
  cfg.optim.grad_clip_norm = 1.0;
  cfg.optim.epochs = 300;
  cfg.optim.lr_drop_epoch = 200;
  cfg.eval.eval_every = 10;
  return cfg;
}

RunConfig RunConfig::paper() {
  RunConfig cfg;
  cfg.profile = "paper";
  cfg.model.hidden_dim = 256;
  cfg.model.num_queries = 64;
  cfg.model.encoder_layers = 6;
  cfg.model.decoder_layers = 3;
  cfg.model.num_heads = 8;
  cfg.model.ffn_dim = 2048;
  cfg.model.backbone = "resnet";
  cfg.model.backbone_width = 64;
  cfg.model.teacher_dim = 768;
  cfg.optim.batch_size = 16;
  cfg.optim.epochs = 60;
  cfg.optim.learning_rate = 1e-4;
  cfg.optim.lr_drop_epoch = 40;
  cfg.augmentation = true;
  return cfg;
}

RunConfig RunConfig::for_profile(const std::string& profile) {
  if (profile == "desk") return desk();
  if (profile == "paper") return paper();
  throw std::invalid_argument("unknown config profile '" + profile + "'");
}

void RunConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("config: " + what); };
  if (model.hidden_dim <= 0 || model.num_heads <= 0 || model.hidden_dim % model.num_heads != 0) {
    fail("hidden_dim must be a positive multiple of num_heads");
  }
  if (model.hidden_dim % 4 != 0) fail("hidden_dim must be divisible by 4 for 2-D sine encoding");
  if (model.num_queries <= 0) fail("num_queries must be positive");
  if (model.encoder_layers < 0 || model.decoder_layers <= 0) fail("layer counts");
  if (model.backbone != "toy_cnn" && model.backbone != "resnet") {
    fail("backbone must be toy_cnn or resnet");
  }
  if (!(model.gumbel_temperature > 0)) fail("gumbel_temperature must be positive");
  if (!(model.tau_init > 0)) fail("tau_init must be positive");
  if (loss.aux_loss) fail("aux_loss (per-layer losses) is not supported; set it to false");
  if (loss.lambda_fc < 0 || loss.lambda_rc < 0 || loss.lambda_ic < 0) {
    fail("constraint coefficients must be non-negative");
  }
  if (!(loss.eps > 0)) fail("eps must be positive");
  if (optim.batch_size <= 0 || optim.epochs < 0) fail("batch_size/epochs");
  if (eval.top_k <= 0) fail("top_k must be positive");
  if (eval.eval_every < 0 || checkpoint_every < 0) fail("cadences must be non-negative");
}

nlohmann::json to_json_value(const RunConfig& cfg) { return nlohmann::json(cfg); }

RunConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("config: top level must be an object");
  const std::string profile = j.value("profile", std::string("desk"));
  nlohmann::json merged = to_json_value(RunConfig::for_profile(profile));
  merged.merge_patch(j);
  RunConfig cfg = merged.get<RunConfig>();
  cfg.validate();
  return cfg;
}

std::string serialize_config(const RunConfig& cfg) { return to_json_value(cfg).dump(2) + "\n"; }

RunConfig parse_config(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  return config_from_json(j);
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void save_config(const RunConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("config: cannot write " + path.string());
  out << serialize_config(cfg);
}

void apply_env_overrides(RunConfig& cfg) {
  if (const char* seed = std::getenv("CONTEXTHOI_SEED"); seed && *seed) {
    cfg.seed = std::stoull(seed);
  }
  if (const char* out = std::getenv("CONTEXTHOI_OUTPUT_DIR"); out && *out) {
    cfg.output_dir = out;
  }
}

}  // namespace contexthoi
