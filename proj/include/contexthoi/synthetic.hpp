#pragma once

// Procedural scenes where the interaction can be read from the background.
//
// Each scene has a "human" marker, an object marker beside it and a
// background texture. In the context task the verb is the texture class and
// is drawn independently of everything in the foreground; in the foreground
// task the verb is the human marker's colour and the texture is random; the
// mixed task carries the verb in both cues. Difficulty flags degrade the
// foreground only: an occluder over at least 60% of the human, a blurred
// foreground, or markers shrunk to a few pixels.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "contexthoi/dataset.hpp"
#include "contexthoi/image.hpp"
#include "contexthoi/rng.hpp"

namespace contexthoi {

enum class SyntheticTask { kContext, kForeground, kMixed };
enum class Difficulty { kClear, kOccluded, kBlurred, kTiny };

NLOHMANN_JSON_SERIALIZE_ENUM(SyntheticTask, {{SyntheticTask::kContext, "context"},
                                             {SyntheticTask::kForeground, "foreground"},
                                             {SyntheticTask::kMixed, "mixed"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Difficulty, {{Difficulty::kClear, "clear"},
                                          {Difficulty::kOccluded, "occluded"},
                                          {Difficulty::kBlurred, "blurred"},
                                          {Difficulty::kTiny, "tiny"}})

// Fractions are turned into exact per-split counts (largest remainder).
struct DifficultyMix {
  double clear = 1.0;
  double occluded = 0.0;
  double blurred = 0.0;
  double tiny = 0.0;
};

struct SyntheticSpec {
  std::uint64_t seed = 7;
  int num_train = 20;
  int num_test = 20;
  int image_size = 64;
  SyntheticTask task = SyntheticTask::kContext;
  int num_verbs = 4;
  int num_objects = 2;
  // Fraction of the free canvas the marker pair may be placed in, centred;
  // 1 uses the whole canvas.
  double layout_jitter = 1.0;
  DifficultyMix train_mix;
  DifficultyMix test_mix;
};

void to_json(nlohmann::json& j, const DifficultyMix& m);
void from_json(const nlohmann::json& j, DifficultyMix& m);
void to_json(nlohmann::json& j, const SyntheticSpec& s);
void from_json(const nlohmann::json& j, SyntheticSpec& s);

SyntheticSpec load_synthetic_spec(const std::filesystem::path& path);

struct SceneInfo {
  std::string id;
  std::string split;
  Index verb = 0;
  Index texture = 0;
  Index human_colour = 0;
  Index object_class = 0;
  Difficulty difficulty = Difficulty::kClear;
};

struct SyntheticScene {
  Image image;
  PairRecord pair;
  SceneInfo info;
};

struct SceneParams {
  SyntheticTask task = SyntheticTask::kContext;
  int size = 64;
  Index verb = 0;
  Index object_class = 0;
  Index texture = 0;
  Index human_colour = 0;
  Difficulty difficulty = Difficulty::kClear;
  double layout_jitter = 1.0;
};

// Layout jitter comes from `rng`; GT boxes are the drawn pixel rectangles.
SyntheticScene render_scene(const SceneParams& p, const std::string& id, Rng& rng);

struct SyntheticDataset {
  SyntheticSpec spec;
  CategoryTable categories;
  std::vector<SyntheticScene> scenes;  // train scenes first

  SplitFile split(const std::string& name) const;
  // Images whose difficulty is not clear, within `split`.
  std::vector<std::string> ambiguous(const std::string& split) const;
};

SyntheticDataset generate_synthetic(const SyntheticSpec& spec);

// Writes categories.txt, train.txt, test.txt, images/*.ppm, scenes.txt and
// ambiguous.txt (non-clear test images).
void write_synthetic(const SyntheticDataset& ds, const std::filesystem::path& out);

}  // namespace contexthoi
