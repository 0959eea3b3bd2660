#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "contexthoi/config.hpp"
#include "contexthoi/dataset.hpp"
#include "contexthoi/evaluation.hpp"
#include "contexthoi/report.hpp"
#include "contexthoi/synthetic.hpp"
#include "contexthoi/trainer.hpp"
#include "contexthoi/visualize.hpp"

namespace fs = std::filesystem;
using namespace contexthoi;

namespace {

std::optional<DatasetIndex> eval_split(const RunConfig& cfg) {
  if (!cfg.eval_root.empty()) return load_dataset(cfg.eval_root, "test");
  if (fs::exists(fs::path(cfg.data_root) / "test.txt")) return load_dataset(cfg.data_root, "test");
  return std::nullopt;
}

void print_map(const MapResult& r) {
  auto show = [](double v) { return std::isfinite(v) ? std::to_string(v) : std::string("n/a"); };
  std::cout << "mAP full " << show(r.full) << "  rare " << show(r.rare) << "  non-rare " << show(r.non_rare)
            << "  (" << r.num_images << " images, " << r.num_gt << " GT, " << r.num_detections
            << " detections)\n";
}

int train(const std::string& config_path, const std::string& resume, const std::string& data) {
  RunConfig cfg = load_config(config_path);
  if (!data.empty()) cfg.data_root = data;
  apply_env_overrides(cfg);
  if (cfg.data_root.empty()) throw std::invalid_argument("config has no data_root (or pass --data)");
  const DatasetIndex train_set = load_dataset(cfg.data_root, "train");
  Trainer trainer(cfg, train_set, eval_split(cfg));
  if (!resume.empty()) {
    trainer.resume(resume);
    std::cout << "resumed at epoch " << trainer.epoch() << ", step " << trainer.step() << "\n";
  }
  save_config(trainer.config(), fs::path(cfg.output_dir) / "config.json");
  const auto last = trainer.run();
  std::cout << "trained " << trainer.epoch() << " epochs (" << trainer.step() << " steps); metrics in "
            << trainer.metrics_path() << "\n";
  if (last) print_map(last->map);
  return 0;
}

int eval(const std::string& checkpoint, const std::string& data, const std::string& split,
         const std::string& subset, const std::string& out) {
  const CheckpointData ckpt = read_checkpoint(checkpoint);
  const auto model = model_from_checkpoint(ckpt);
  const DatasetIndex ds = load_dataset(data, split);
  if (ds.categories.hoi != ckpt.categories.hoi) throw std::invalid_argument("dataset categories differ from checkpoint");
  std::optional<SubsetSpec> ids;
  if (!subset.empty()) ids = read_subset(subset);
  std::vector<DetectionRecord> dets;
  const auto summary = evaluate_model(*model, load_samples(ds), ds.meta, ckpt.config.eval, ids, &dets);
  print_map(summary.map);
  std::cout << "verb accuracy " << summary.verb_accuracy << "\n";
  if (!out.empty()) {
    fs::create_directories(out);
    write_detections(dets, fs::path(out) / "detections.txt");
    auto report = map_report(summary.map, ds.meta);
    report["verb_accuracy"] = summary.verb_accuracy;
    std::ofstream(fs::path(out) / "report.json") << report.dump(2) << '\n';
  }
  return 0;
}

int generate(const std::string& spec_path, const std::string& out) {
  const SyntheticSpec spec = load_synthetic_spec(spec_path);
  const SyntheticDataset ds = generate_synthetic(spec);
  write_synthetic(ds, out);
  std::cout << "wrote " << spec.num_train << " train and " << spec.num_test << " test scenes to " << out << " ("
            << ds.ambiguous("test").size() << " ambiguous)\n";
  return 0;
}

int visualize(const std::string& checkpoint, const std::string& image_id, const std::string& data,
              const std::string& out) {
  const CheckpointData ckpt = read_checkpoint(checkpoint);
  const auto model = model_from_checkpoint(ckpt);
  const fs::path root = data.empty() ? fs::path(ckpt.config.data_root) : fs::path(data);
  std::optional<Image> image;
  for (const std::string split : {"train", "test"}) {
    if (!fs::exists(root / (split + ".txt"))) continue;
    const DatasetIndex ds = load_dataset(root, split);
    if (ds.contains(image_id)) {
      image = ds.load_image(image_id);
      break;
    }
  }
  if (!image) throw std::invalid_argument("unknown image id '" + image_id + "' under " + root.string());
  for (const auto& p : write_visualization(*model, *image, out)) std::cout << p.string() << "\n";
  return 0;
}

int convert(const std::string& json, const std::string& categories, const std::string& out) {
  const CategoryTable table = load_categories(categories);
  write_split(convert_qpic(json, hico_object_ids(), table), out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ContextHOI: dual-branch human-object interaction detection"};
  app.require_subcommand(1);

  std::string config, resume, data, checkpoint, split = "test", subset, out, spec, image, metrics, json, cats;

  auto* t = app.add_subcommand("train", "train a model from a run config");
  t->add_option("--config", config, "run config (JSON)")->required()->check(CLI::ExistingFile);
  t->add_option("--resume", resume, "checkpoint to resume from")->check(CLI::ExistingFile);
  t->add_option("--data", data, "dataset root (overrides data_root)");

  auto* e = app.add_subcommand("eval", "evaluate a checkpoint");
  e->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  e->add_option("--data", data, "dataset root")->required()->check(CLI::ExistingDirectory);
  e->add_option("--split", split, "annotation split")->capture_default_str();
  e->add_option("--subset", subset, "file with one image id per line")->check(CLI::ExistingFile);
  e->add_option("--out", out, "directory for report.json and detections.txt");

  auto* g = app.add_subcommand("generate-synthetic", "render a synthetic dataset");
  g->add_option("--spec", spec, "generator spec (JSON)")->required()->check(CLI::ExistingFile);
  g->add_option("--out", out)->required();

  auto* v = app.add_subcommand("visualize", "attention heatmaps for one image");
  v->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  v->add_option("--image", image, "image id")->required();
  v->add_option("--data", data, "dataset root (default: the checkpoint's data_root)");
  v->add_option("--out", out)->required();

  auto* r = app.add_subcommand("report", "plots and summary from a metrics stream");
  r->add_option("--metrics", metrics)->required()->check(CLI::ExistingFile);
  r->add_option("--out", out)->required();

  auto* c = app.add_subcommand("convert-qpic", "convert QPIC-style HICO-DET JSON to a split file");
  c->add_option("--json", json)->required()->check(CLI::ExistingFile);
  c->add_option("--categories", cats)->required()->check(CLI::ExistingFile);
  c->add_option("--out", out)->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*t) return train(config, resume, data);
    if (*e) return eval(checkpoint, data, split, subset, out);
    if (*g) return generate(spec, out);
    if (*v) return visualize(checkpoint, image, data, out);
    if (*r) {
      const auto summary = write_report(metrics, out);
      std::cout << summary.dump(2) << "\n";
      return 0;
    }
    if (*c) return convert(json, cats, out);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
  return 0;
}
