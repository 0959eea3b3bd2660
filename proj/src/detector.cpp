#include "contexthoi/detector.hpp"

#include <stdexcept>

namespace contexthoi {

ContextHoiModel::ContextHoiModel(const RunConfig& cfg, const CategoryPrompts& prompts) : cfg_(cfg) {
  cfg_.validate();
  const ModelConfig& m = cfg_.model;
  if (m.num_object_classes <= 0 || m.num_verb_classes <= 0 || m.num_hoi_classes <= 0) {
    throw std::invalid_argument("model: category counts must be set before construction");
  }
  Rng rng(cfg_.seed);
  encoder_ = std::make_unique<FeatureEncoder>(store_, m, rng);
  teacher_ = make_teacher(m, encoder_->backbone().stride());
  instance_ = std::make_unique<InstanceDecoder>(store_, m, rng);
  context_ = std::make_unique<ContextExtractor>(store_, m, rng);
  explorer_ = std::make_unique<SemanticExplorer>(store_, m, teacher_.get(), prompts, rng);
  adapter_ = std::make_unique<TeacherAdapter>(store_, m, rng);
  aggregator_ = std::make_unique<ContextAggregator>(store_, m, rng);
  tau_raw_ = store_.add("constraints.tau_raw", Matrix::Constant(1, 1, inverse_softplus(m.tau_init)));
}

Var ContextHoiModel::tau() const { return ad::softplus(tau_raw_); }

ModelOutput ContextHoiModel::forward(const Image& image, Rng* rng) const {
  const SwitchConfig& sw = cfg_.switches;
  const Index nq = cfg_.model.num_queries;
  const Index c = cfg_.model.hidden_dim;

  ModelOutput out;
  out.memory = (*encoder_)(image.normalized(), image.height, image.width);
  out.context_pad.assign(static_cast<size_t>(nq), false);

  std::optional<Var> instance_offset;
  std::optional<Var> context_offset;
  if (sw.semantic_explorer) {
    out.guidance = explorer_->guidance(out.memory, cfg_.model.gumbel_temperature, rng);
    out.offsets = explorer_->fuse(out.guidance->instance_guidance, out.guidance->interaction_guidance);
    instance_offset = out.offsets->instance_offset;
    context_offset = out.offsets->context_offset;
    out.context_pad = context_pad_from_guidance(out.guidance->context_pad);
  }

  out.instance = (*instance_)(out.memory, instance_offset);
  if (sw.context_branch) out.context = (*context_)(out.memory, context_offset, out.context_pad);

  if (sw.teacher_branch && teacher_) {
    out.teacher_features = (*adapter_)(teacher_->visual_embed(image));
  } else {
    out.teacher_features = ad::constant(Matrix::Zero(out.memory.features.rows(), c));
  }

  AggregatorInputs agg;
  agg.instance = out.instance.bundle.z;
  if (out.context) {
    agg.context = out.context->bundle.z;
    agg.context_pad = out.context_pad;
  } else {
    agg.context = ad::constant(Matrix::Zero(nq, c));
  }
  agg.teacher = out.teacher_features;
  out.aggregated = (*aggregator_)(agg);

  out.predictions.human_boxes = out.instance.human_boxes;
  out.predictions.object_boxes = out.instance.object_boxes;
  out.predictions.object_logits = out.instance.object_logits;
  if (out.context) out.predictions.context_boxes = out.context->context_boxes;
  out.predictions.hoi_logits = out.aggregated.hoi_logits;
  return out;
}

}  // namespace contexthoi
