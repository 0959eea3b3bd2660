#pragma once

// The assembled dual-branch detector. Module switches in the run config gate
// the context branch, the semantic explorer and the teacher branch; disabled
// branches hand zeros to the aggregator so the parameter set stays the same
// for every ablation.

#include <memory>
#include <optional>
#include <vector>

#include "contexthoi/aggregator.hpp"
#include "contexthoi/config.hpp"
#include "contexthoi/explorer.hpp"
#include "contexthoi/image.hpp"
#include "contexthoi/model.hpp"
#include "contexthoi/nn.hpp"

namespace contexthoi {

struct ModelOutput {
  VisualMemory memory;
  InstanceOutput instance;
  std::optional<ContextOutput> context;
  std::optional<SemanticGuidance> guidance;
  std::optional<GuidanceOffsets> offsets;
  Var teacher_features;  // Z_v
  AggregatedFeature aggregated;
  RawPredictions predictions;
  std::vector<bool> context_pad;  // Phi over the N_q context queries
};

class ContextHoiModel {
 public:
  ContextHoiModel(const RunConfig& cfg, const CategoryPrompts& prompts);

  // With `rng` the forward pass is stochastic (Gumbel noise in the explorer);
  // without, it is the deterministic evaluation pass.
  ModelOutput forward(const Image& image, Rng* rng = nullptr) const;

  nn::ParameterStore& parameters() { return store_; }
  const nn::ParameterStore& parameters() const { return store_; }
  const RunConfig& config() const { return cfg_; }
  const SemanticTeacher* teacher() const { return teacher_.get(); }
  const FeatureEncoder& encoder() const { return *encoder_; }
  const InstanceDecoder& instance_decoder() const { return *instance_; }
  const ContextExtractor& context_extractor() const { return *context_; }
  const SemanticExplorer& explorer() const { return *explorer_; }
  const ContextAggregator& aggregator() const { return *aggregator_; }

  // Learnable margin of the dynamic distance weight, softplus-parameterized.
  Var tau() const;
  const Var& tau_raw() const { return tau_raw_; }

 private:
  RunConfig cfg_;
  nn::ParameterStore store_;
  std::unique_ptr<SemanticTeacher> teacher_;
  std::unique_ptr<FeatureEncoder> encoder_;
  std::unique_ptr<InstanceDecoder> instance_;
  std::unique_ptr<ContextExtractor> context_;
  std::unique_ptr<SemanticExplorer> explorer_;
  std::unique_ptr<TeacherAdapter> adapter_;
  std::unique_ptr<ContextAggregator> aggregator_;
  Var tau_raw_;
};

}  // namespace contexthoi
