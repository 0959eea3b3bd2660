#include "contexthoi/trainer.hpp"

#include <cmath>
#include <cstring>
#include <iostream>

namespace contexthoi {

namespace {

constexpr char kMagic[8] = {'C', 'H', 'O', 'I', 'C', 'K', 'P', '1'};

nlohmann::json finite_or_null(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

void write_matrix(std::ofstream& out, const Matrix& m) {
  out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
}

Matrix read_matrix(std::ifstream& in, Index rows, Index cols, const std::filesystem::path& path) {
  Matrix m(rows, cols);
  in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
  if (!in) throw std::runtime_error("truncated checkpoint " + path.string());
  return m;
}

}  // namespace

std::vector<Sample> load_samples(const DatasetIndex& ds) {
  std::vector<Sample> out;
  for (const auto& e : ds.images) out.push_back({e.id, ds.load_image(e.id), ds.annotations.at(e.id)});
  return out;
}

Sample augment(const Sample& s, Rng& rng) {
  Sample out = s;
  if (rng.uniform() < 0.5) {
    out.image = out.image.flipped_horizontal();
    for (auto& a : out.gt) {
      a.human.cx = 1.0 - a.human.cx;
      a.object.cx = 1.0 - a.object.cx;
    }
  }
  const double f = rng.uniform(0.75, 1.25);
  const int w = std::max(1, static_cast<int>(std::lround(s.image.width * f)));
  const int h = std::max(1, static_cast<int>(std::lround(s.image.height * f)));
  out.image = out.image.resized(w, h);
  return out;
}

void bind_categories(RunConfig& cfg, const CategoryTable& categories) {
  cfg.model.num_object_classes = static_cast<int>(categories.num_objects());
  cfg.model.num_verb_classes = static_cast<int>(categories.num_verbs());
  cfg.model.num_hoi_classes = static_cast<int>(categories.num_hoi());
}

InstanceTargets instance_targets(const MatchResult& match, const GroundTruthSet& gt, Index num_queries) {
  InstanceTargets t;
  t.per_query.resize(static_cast<size_t>(num_queries));
  if (gt.empty()) return t;
  std::vector<GtBoxPair> all;
  for (const auto& a : gt) all.emplace_back(a.human, a.object);
  for (Index q = 0; q < num_queries; ++q) t.per_query[q] = all;
  for (const auto& [q, g] : match.pairs) t.per_query[q] = {GtBoxPair{gt[g].human, gt[g].object}};
  return t;
}

LossBreakdown compute_loss(const ContextHoiModel& model, const ModelOutput& out, const GroundTruthSet& gt) {
  const RunConfig& cfg = model.config();
  const auto& p = out.predictions;
  if (!p.human_boxes.value().allFinite() || !p.object_boxes.value().allFinite() ||
      !p.object_logits.value().allFinite() || !p.hoi_logits.value().allFinite()) {
    throw NonFiniteLoss("non-finite predictions");
  }
  LossBreakdown r;
  r.match = match(out.predictions, gt, cfg.loss);
  r.hoi = hoi_loss(out.predictions, gt, r.match, cfg.loss);

  const ConstraintConfig cc = ConstraintConfig::from(cfg.loss, cfg.switches);
  const Var zero = ad::scalar_constant(0.0);
  r.sc = {zero, zero, zero, zero};
  if (out.context) {
    const auto& ctx = *out.context;
    if (cc.lambda_fc != 0.0) r.sc.feature = feature_constraint(out.instance.bundle, ctx.bundle, cc);
    if (cc.lambda_rc != 0.0) r.sc.region = region_constraint(out.instance.bundle, ctx.bundle);
    if (cc.lambda_ic != 0.0 && !gt.empty()) {
      r.sc.instance = instance_constraint(ctx.context_boxes, out.context_pad,
                                          instance_targets(r.match, gt, ctx.context_boxes.rows()),
                                          model.tau(), cc);
    }
    r.sc.total = spatial_constraint_total(r.sc.feature, r.sc.region, r.sc.instance, cc);
  }
  r.total = total_loss(r.hoi.total, r.sc.total);
  return r;
}

AdamW::AdamW(double weight_decay, double beta1, double beta2, double eps)
    : weight_decay_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void AdamW::step(nn::ParameterStore& store, double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (auto [name, p] : store.all()) {
    const Matrix g = p.grad();
    auto& m = m_[name];
    auto& v = v_[name];
    if (m.size() == 0) {
      m = Matrix::Zero(g.rows(), g.cols());
      v = Matrix::Zero(g.rows(), g.cols());
    }
    m = beta1_ * m + (1.0 - beta1_) * g;
    v = beta2_ * v + (1.0 - beta2_) * g.cwiseProduct(g);
    Matrix& w = p.mutable_value();
    w *= (1.0 - lr * weight_decay_);
    w.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps_);
  }
}

double clip_grad_norm(nn::ParameterStore& store, double max_norm) {
  double sq = 0.0;
  for (const auto& [_, p] : store.all())
    if (p.node()->has_grad()) sq += p.node()->grad.squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / (norm + 1e-6);
    for (const auto& [_, p] : store.all())
      if (p.node()->has_grad()) p.node()->grad *= s;
  }
  return norm;
}

EvalSummary evaluate_model(const ContextHoiModel& model, const std::vector<Sample>& samples,
                           const CategoryMeta& meta, const EvalConfig& cfg,
                           const std::optional<SubsetSpec>& subset,
                           std::vector<DetectionRecord>* detections) {
  ad::NoGradGuard guard;
  std::vector<DetectionRecord> dets;
  GroundTruthIndex gts;
  int correct = 0;
  int counted = 0;
  for (const auto& s : samples) {
    gts[s.id] = s.gt;
    const ModelOutput out = model.forward(s.image);
    auto d = score_predictions(out.predictions, meta, s.id, cfg.top_k);
    if (!s.gt.empty() && !s.gt.front().hoi_classes.empty()) {
      ++counted;
      // Verb read off the highest-scoring detection, or off the raw
      // interaction logits when every query predicts no-object.
      Index verb = -1;
      if (!d.empty()) {
        verb = meta.hoi_verb[d.front().hoi];
      } else {
        Index q = 0, h = 0;
        out.predictions.hoi_logits.value().maxCoeff(&q, &h);
        verb = meta.hoi_verb[h];
      }
      if (verb == meta.hoi_verb[s.gt.front().hoi_classes.front()]) ++correct;
    }
    dets.insert(dets.end(), d.begin(), d.end());
  }
  EvalSummary r;
  r.map = compute_map(dets, gts, meta, {cfg.iou_threshold, cfg.ap_mode}, subset);
  r.verb_accuracy = counted ? static_cast<double>(correct) / counted : 0.0;
  if (detections) *detections = std::move(dets);
  return r;
}

void write_checkpoint(const CheckpointData& ckpt, const std::filesystem::path& path) {
  nlohmann::json header;
  header["config"] = to_json_value(ckpt.config);
  header["objects"] = ckpt.categories.objects;
  header["verbs"] = ckpt.categories.verbs;
  nlohmann::json hoi = nlohmann::json::array();
  for (const auto& [o, v] : ckpt.categories.hoi) hoi.push_back({o, v});
  header["hoi"] = hoi;
  header["epoch"] = ckpt.epoch;
  header["step"] = ckpt.step;
  header["rng_state"] = ckpt.rng_state;
  header["adam_steps"] = ckpt.adam_steps;
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& [name, m] : ckpt.params) {
    const bool has_moments = ckpt.adam_m.count(name) && ckpt.adam_m.at(name).size() == m.size();
    tensors.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}, {"moments", has_moments}});
  }
  header["tensors"] = tensors;
  const std::string text = header.dump();

  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
    out.write(kMagic, sizeof(kMagic));
    const std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, m] : ckpt.params) {
      write_matrix(out, m);
      if (ckpt.adam_m.count(name) && ckpt.adam_m.at(name).size() == m.size()) {
        write_matrix(out, ckpt.adam_m.at(name));
        write_matrix(out, ckpt.adam_v.at(name));
      }
    }
    if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

CheckpointData read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error(path.string() + " is not a checkpoint");
  }
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw std::runtime_error("truncated checkpoint " + path.string());
  const auto header = nlohmann::json::parse(text);

  CheckpointData c;
  c.config = config_from_json(header.at("config"));
  c.categories.objects = header.at("objects").get<std::vector<std::string>>();
  c.categories.verbs = header.at("verbs").get<std::vector<std::string>>();
  for (const auto& p : header.at("hoi")) c.categories.hoi.emplace_back(p[0].get<Index>(), p[1].get<Index>());
  c.epoch = header.at("epoch").get<int>();
  c.step = header.at("step").get<long>();
  c.rng_state = header.at("rng_state").get<std::string>();
  c.adam_steps = header.at("adam_steps").get<long>();
  for (const auto& t : header.at("tensors")) {
    const std::string name = t.at("name").get<std::string>();
    const Index rows = t.at("rows").get<Index>();
    const Index cols = t.at("cols").get<Index>();
    c.params[name] = read_matrix(in, rows, cols, path);
    if (t.at("moments").get<bool>()) {
      c.adam_m[name] = read_matrix(in, rows, cols, path);
      c.adam_v[name] = read_matrix(in, rows, cols, path);
    }
  }
  return c;
}

std::unique_ptr<ContextHoiModel> model_from_checkpoint(const CheckpointData& ckpt) {
  auto model = std::make_unique<ContextHoiModel>(ckpt.config, ckpt.categories.prompts());
  for (auto [name, p] : model->parameters().all()) {
    const auto it = ckpt.params.find(name);
    if (it == ckpt.params.end()) throw std::runtime_error("checkpoint lacks parameter " + name);
    if (it->second.rows() != p.rows() || it->second.cols() != p.cols()) {
      throw std::runtime_error("checkpoint shape mismatch for " + name);
    }
    p.mutable_value() = it->second;
  }
  return model;
}

Trainer::Trainer(RunConfig cfg, const DatasetIndex& train, std::optional<DatasetIndex> eval)
    : cfg_(std::move(cfg)), categories_(train.categories), meta_(train.meta) {
  bind_categories(cfg_, categories_);
  cfg_.validate();
  train_ = load_samples(train);
  if (train_.empty()) throw std::invalid_argument("training set is empty");
  if (eval) {
    if (eval->categories.hoi != categories_.hoi) {
      throw std::invalid_argument("evaluation set uses a different category table");
    }
    eval_ = load_samples(*eval);
  }
  model_ = std::make_unique<ContextHoiModel>(cfg_, categories_.prompts());
  optimizer_ = AdamW(cfg_.optim.weight_decay);
  // Separate stream from parameter initialization so data order and Gumbel
  // noise do not shift when the architecture changes.
  rng_ = Rng(cfg_.seed ^ 0x9e3779b97f4a7c15ULL);
}

std::filesystem::path Trainer::metrics_path() const {
  return std::filesystem::path(cfg_.output_dir) / "metrics.jsonl";
}

void Trainer::log(const nlohmann::json& record) {
  std::filesystem::create_directories(cfg_.output_dir);
  std::ofstream out(metrics_path(), std::ios::app);
  out << record.dump() << '\n';
}

double Trainer::learning_rate() const {
  const auto& o = cfg_.optim;
  return epoch_ >= o.lr_drop_epoch ? o.learning_rate * o.lr_drop_factor : o.learning_rate;
}

nlohmann::json Trainer::train_step(const std::vector<const Sample*>& batch) {
  auto& store = model_->parameters();
  store.zero_grad();
  const double inv = 1.0 / static_cast<double>(batch.size());
  double sums[10] = {};
  for (const Sample* original : batch) {
    std::optional<Sample> augmented;
    if (cfg_.augmentation) augmented = augment(*original, rng_);
    const Sample* s = augmented ? &*augmented : original;
    const ModelOutput out = model_->forward(s->image, &rng_);
    LossBreakdown l;
    try {
      l = compute_loss(*model_, out, s->gt);
    } catch (const NonFiniteLoss& e) {
      throw TrainingAborted(std::string(e.what()) + " at step " + std::to_string(step_) + " (image " + s->id +
                            "); last good checkpoint: " +
                            (last_good_ ? last_good_->string() : std::string("none")));
    }
    ad::backward(ad::scale(l.total, inv));
    const double v[10] = {l.total.scalar(),           l.hoi.total.scalar(),  l.hoi.box_l1.scalar(),
                          l.hoi.giou.scalar(),         l.hoi.object_class.scalar(),
                          l.hoi.interaction.scalar(),  l.sc.total.scalar(),   l.sc.feature.scalar(),
                          l.sc.region.scalar(),        l.sc.instance.scalar()};
    for (int i = 0; i < 10; ++i) sums[i] += v[i] * inv;
  }
  const double grad_norm = clip_grad_norm(store, cfg_.optim.grad_clip_norm);
  if (!std::isfinite(grad_norm)) {
    throw TrainingAborted("non-finite gradient at step " + std::to_string(step_) + "; last good checkpoint: " +
                          (last_good_ ? last_good_->string() : std::string("none")));
  }
  const double lr = learning_rate();
  optimizer_.step(store, lr);
  ++step_;
  nlohmann::json rec = {{"kind", "train"},       {"step", step_},         {"epoch", epoch_},
                        {"lr", lr},              {"loss", sums[0]},       {"l_hoi", sums[1]},
                        {"l_box", sums[2]},      {"l_giou", sums[3]},     {"l_obj", sums[4]},
                        {"l_int", sums[5]},      {"l_sc", sums[6]},       {"l_fc", sums[7]},
                        {"l_rc", sums[8]},       {"l_ic", sums[9]},       {"tau", model_->tau().scalar()},
                        {"grad_norm", grad_norm}};
  log(rec);
  return rec;
}

EvalSummary Trainer::evaluate() const {
  const auto& set = eval_.empty() ? train_ : eval_;
  return evaluate_model(*model_, set, meta_, cfg_.eval);
}

std::optional<EvalSummary> Trainer::run() {
  std::optional<EvalSummary> last;
  const int bs = std::max(1, cfg_.optim.batch_size);
  const auto out_dir = std::filesystem::path(cfg_.output_dir);
  // A fresh run starts a fresh stream; a resumed one appends.
  if (step_ == 0 && epoch_ == 0) std::filesystem::remove(metrics_path());
  while (epoch_ < cfg_.optim.epochs) {
    std::vector<const Sample*> order;
    for (const auto& s : train_) order.push_back(&s);
    rng_.shuffle(order);
    for (size_t i = 0; i < order.size(); i += bs) {
      std::vector<const Sample*> batch(order.begin() + i, order.begin() + std::min(order.size(), i + bs));
      train_step(batch);
    }
    ++epoch_;
    const int every = std::max(1, cfg_.eval.eval_every);
    if (epoch_ % every == 0 || epoch_ == cfg_.optim.epochs) {
      last = evaluate();
      log({{"kind", "eval"},
           {"epoch", epoch_},
           {"step", step_},
           {"map_full", finite_or_null(last->map.full)},
           {"map_rare", finite_or_null(last->map.rare)},
           {"map_non_rare", finite_or_null(last->map.non_rare)},
           {"verb_accuracy", last->verb_accuracy}});
    }
    if (cfg_.checkpoint_every > 0 && epoch_ % cfg_.checkpoint_every == 0) {
      const auto path = out_dir / ("checkpoint_epoch" + std::to_string(epoch_) + ".bin");
      save_checkpoint(path);
      last_good_ = path;
    }
  }
  std::filesystem::create_directories(out_dir);
  save_checkpoint(out_dir / "checkpoint.bin");
  return last;
}

void Trainer::save_checkpoint(const std::filesystem::path& path) const {
  CheckpointData c;
  c.config = cfg_;
  c.categories = categories_;
  c.epoch = epoch_;
  c.step = step_;
  c.rng_state = rng_.state();
  c.adam_steps = optimizer_.steps();
  for (const auto& [name, p] : model_->parameters().all()) c.params[name] = p.value();
  c.adam_m = optimizer_.first_moment();
  c.adam_v = optimizer_.second_moment();
  if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
  write_checkpoint(c, path);
}

void Trainer::resume(const std::filesystem::path& checkpoint) {
  const CheckpointData c = read_checkpoint(checkpoint);
  if (c.categories.hoi != categories_.hoi) throw std::invalid_argument("checkpoint category table differs");
  for (auto [name, p] : model_->parameters().all()) {
    const auto it = c.params.find(name);
    if (it == c.params.end() || it->second.rows() != p.rows() || it->second.cols() != p.cols()) {
      throw std::runtime_error("checkpoint does not match the model at " + name);
    }
    p.mutable_value() = it->second;
  }
  optimizer_.first_moment() = c.adam_m;
  optimizer_.second_moment() = c.adam_v;
  optimizer_.set_steps(c.adam_steps);
  rng_.set_state(c.rng_state);
  epoch_ = c.epoch;
  step_ = c.step;
  last_good_ = checkpoint;
}

}  // namespace contexthoi
