#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "contexthoi/config.hpp"
#include "contexthoi/dataset.hpp"
#include "contexthoi/synthetic.hpp"
#include "support.hpp"

using namespace contexthoi;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = CONTEXTHOI_FIXTURES;
const fs::path kConfigs = CONTEXTHOI_CONFIGS;

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("contexthoi_data_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Copies the tiny fixture and replaces train.txt with `body`.
fs::path tiny_with_split(const std::string& name, const std::string& body) {
  const fs::path d = temp_dir(name);
  fs::copy_file(kFixtures / "tiny" / "categories.txt", d / "categories.txt");
  std::ofstream(d / "train.txt") << body;
  return d;
}

std::string load_error(const fs::path& root) {
  try {
    load_dataset(root);
  } catch (const DatasetError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Config, RoundTripIsByteIdentical) {
  for (const auto& cfg : {RunConfig::desk(), RunConfig::paper()}) {
    const std::string s = serialize_config(cfg);
    EXPECT_EQ(serialize_config(parse_config(s)), s);
  }
}

TEST(Config, ShippedConfigsParseAndRoundTrip) {
  int n = 0;
  for (const auto& e : fs::recursive_directory_iterator(kConfigs)) {
    if (e.path().extension() != ".json" || e.path().parent_path().filename() == "synthetic") continue;
    const RunConfig cfg = load_config(e.path());
    const std::string s = serialize_config(cfg);
    EXPECT_EQ(serialize_config(parse_config(s)), s) << e.path();
    ++n;
  }
  EXPECT_GE(n, 16);
}

TEST(Config, AblationRowsDifferOnlyInSwitches) {
  const RunConfig base = load_config(kConfigs / "ablations" / "table3a_5_full.json");
  const RunConfig row1 = load_config(kConfigs / "ablations" / "table3a_1_baseline.json");
  EXPECT_FALSE(row1.switches.context_branch);
  EXPECT_FALSE(row1.switches.semantic_explorer);
  EXPECT_FALSE(row1.switches.feature_constraint || row1.switches.region_constraint || row1.switches.instance_constraint);
  auto strip = [](RunConfig c) {
    c.switches = SwitchConfig{};
    c.output_dir.clear();
    return serialize_config(c);
  };
  EXPECT_EQ(strip(base), strip(row1));
  const RunConfig zc = load_config(kConfigs / "ablations" / "table3d_1_zc.json");
  EXPECT_FALSE(zc.switches.teacher_branch);
  EXPECT_EQ(strip(zc), strip(base));
}

TEST(Config, ProfilesAndOverlay) {
  const RunConfig p = parse_config(R"({"profile": "paper", "seed": 5})");
  EXPECT_EQ(p.model.hidden_dim, 256);
  EXPECT_EQ(p.model.num_queries, 64);
  EXPECT_EQ(p.model.decoder_layers, 3);
  EXPECT_EQ(p.optim.epochs, 60);
  EXPECT_EQ(p.optim.lr_drop_epoch, 40);
  EXPECT_EQ(p.seed, 5u);
  const RunConfig d = parse_config(R"({"model": {"num_queries": 4}})");
  EXPECT_EQ(d.profile, "desk");
  EXPECT_EQ(d.model.num_queries, 4);
  EXPECT_EQ(d.model.hidden_dim, 32);
  EXPECT_DOUBLE_EQ(d.loss.lambda_fc, 4.0);
  EXPECT_DOUBLE_EQ(d.loss.lambda_rc, 1.0);
  EXPECT_DOUBLE_EQ(d.loss.lambda_ic, 4.0);
  EXPECT_THROW(parse_config(R"({"profile": "huge"})"), std::invalid_argument);
  EXPECT_THROW(parse_config(R"({"model": {"hidden_dim": 30}})"), std::invalid_argument);
  EXPECT_THROW(parse_config(R"({"loss": {"lambda_fc": -1}})"), std::invalid_argument);
  EXPECT_THROW(parse_config(R"({"loss": {"aux_loss": true}})"), std::invalid_argument);
  EXPECT_THROW(parse_config("{"), std::invalid_argument);
}

TEST(Config, EnvironmentOverrides) {
  RunConfig cfg = RunConfig::desk();
  setenv("CONTEXTHOI_SEED", "42", 1);
  setenv("CONTEXTHOI_OUTPUT_DIR", "/tmp/x", 1);
  apply_env_overrides(cfg);
  unsetenv("CONTEXTHOI_SEED");
  unsetenv("CONTEXTHOI_OUTPUT_DIR");
  EXPECT_EQ(cfg.seed, 42u);
  EXPECT_EQ(cfg.output_dir, "/tmp/x");
}

TEST(Dataset, TinyFixture) {
  const auto ds = load_dataset(kFixtures / "tiny");
  EXPECT_EQ(ds.images.size(), 3u);
  EXPECT_EQ(ds.num_annotations(), 5u);
  EXPECT_EQ(ds.annotations.at("img_a").size(), 1u);
  EXPECT_EQ(ds.annotations.at("img_a")[0].hoi_classes, (std::vector<Index>{0, 1}));
  EXPECT_EQ(ds.annotations.at("img_b").size(), 2u);
  EXPECT_EQ(ds.meta.train_count, (std::vector<int>{2, 1, 1, 1}));
  EXPECT_TRUE(ds.meta.rare(0));
  EXPECT_EQ(ds.categories.hoi_id(1, 1), 3);
  EXPECT_EQ(ds.categories.hoi_id(1, 2), -1);
  const auto prompts = ds.categories.prompts();
  EXPECT_EQ(prompts.objects[1], "a photo of a sports ball");
  EXPECT_EQ(prompts.verbs[2], "a photo of a person drink with something");
}

TEST(Dataset, HicoShapedTable) {
  const auto t = load_categories(kFixtures / "hico_shaped_categories.txt");
  EXPECT_EQ(t.num_objects(), 80);
  EXPECT_EQ(t.num_verbs(), 117);
  EXPECT_EQ(t.num_hoi(), 600);
}

TEST(Dataset, VerbOutOfRange) {
  const fs::path d = temp_dir("verb117");
  fs::copy_file(kFixtures / "hico_shaped_categories.txt", d / "categories.txt");
  std::ofstream(d / "train.txt") << "image x images/x.ppm 10 10\n"
                                    "pair x 0.1 0.1 0.5 0.5 0.5 0.5 0.9 0.9 0 117\n";
  const std::string err = load_error(d);
  EXPECT_NE(err.find("train.txt:2:"), std::string::npos) << err;
  EXPECT_NE(err.find("verb id 117 out of range [0,117)"), std::string::npos) << err;
  fs::remove_all(d);
}

TEST(Dataset, LineAccurateErrors) {
  const std::string img = "image a images/a.ppm 8 8\n";
  const std::map<std::string, std::string> cases = {
      {"pair b 0.1 0.1 0.5 0.5 0.5 0.5 0.9 0.9 0 0\n", "unknown image id 'b'"},
      {"pair a 0.1 0.1 0.5 1.5 0.5 0.5 0.9 0.9 0 0\n", "outside [0,1]"},
      {"pair a 0.5 0.1 0.1 0.5 0.5 0.5 0.9 0.9 0 0\n", "corners out of order"},
      {"pair a 0.1 0.1 0.5 0.5 0.5 0.5 0.9 0.9 1 2\n", "not in the category table"},
      {"pair a 0.1 0.1 0.5 0.5 0.5 0.5 0.9 0.9 2 0\n", "object id 2 out of range"},
      {"image a images/a.ppm 8 8\n", "duplicate image id"},
      {"frame a\n", "unknown record kind"},
  };
  int i = 0;
  for (const auto& [line, msg] : cases) {
    const fs::path d = tiny_with_split("err" + std::to_string(i++), "# header\n" + img + line);
    const std::string err = load_error(d);
    EXPECT_NE(err.find("train.txt:3: "), std::string::npos) << err;
    EXPECT_NE(err.find(msg), std::string::npos) << err;
    fs::remove_all(d);
  }
  EXPECT_NE(load_error(temp_dir("missing")).find("missing category file"), std::string::npos);
}

TEST(Dataset, CategoryErrors) {
  const fs::path d = temp_dir("cats");
  std::ofstream(d / "c1.txt") << "object 0 cup\nobject 2 bowl\nverb 0 hold\n";
  EXPECT_THROW(load_categories(d / "c1.txt"), DatasetError);
  std::ofstream(d / "c2.txt") << "object 0 cup\nverb 0 hold\nhoi 0 0 0\nhoi 1 0 0\n";
  EXPECT_THROW(load_categories(d / "c2.txt"), DatasetError);
  std::ofstream(d / "c3.txt") << "object 0 cup\nverb 0 hold\nhoi 0 0 4\n";
  EXPECT_THROW(load_categories(d / "c3.txt"), DatasetError);
  fs::remove_all(d);
}

TEST(Dataset, SplitRoundTrip) {
  const auto cats = load_categories(kFixtures / "tiny" / "categories.txt");
  const auto split = parse_split(kFixtures / "tiny" / "train.txt", cats);
  const fs::path d = temp_dir("roundtrip");
  write_split(split, d / "a.txt");
  write_split(parse_split(d / "a.txt", cats), d / "b.txt");
  EXPECT_EQ(slurp(d / "a.txt"), slurp(d / "b.txt"));
  EXPECT_EQ(split.pairs.size(), 5u);
  fs::remove_all(d);
}

TEST(Dataset, QpicConversion) {
  auto cats = load_categories(kFixtures / "hico_shaped_categories.txt");
  // motorcycle(3)-race(72), motorcycle-ride(76), sports_ball(32)-kick(44)
  cats.hoi = {{3, 72}, {3, 76}, {32, 44}};
  const auto split = convert_qpic(kFixtures / "qpic_sample.json", hico_object_ids(), cats);
  ASSERT_EQ(split.images.size(), 2u);
  EXPECT_EQ(split.images[0].id, "HICO_train2015_00000001");
  EXPECT_EQ(split.images[0].width, 640);
  ASSERT_EQ(split.pairs.size(), 3u);
  EXPECT_EQ(split.pairs[0].object_class, 3);
  EXPECT_EQ(split.pairs[0].verb_class, 72);
  EXPECT_EQ(split.pairs[1].verb_class, 76);
  EXPECT_NEAR(split.pairs[0].human.x0(), 208.0 / 640, 1e-12);
  EXPECT_NEAR(split.pairs[0].human.y1(), 300.0 / 480, 1e-12);
  // The ball box runs past the image edge and is clipped.
  EXPECT_EQ(split.pairs[2].object_class, 32);
  EXPECT_DOUBLE_EQ(split.pairs[2].object.x1(), 1.0);
  EXPECT_DOUBLE_EQ(split.pairs[2].object.y1(), 1.0);
  EXPECT_EQ(hico_object_ids().size(), 80u);

  cats.hoi = {{3, 72}};
  EXPECT_THROW(convert_qpic(kFixtures / "qpic_sample.json", hico_object_ids(), cats), DatasetError);
}

TEST(Synthetic, SameSeedByteIdentical) {
  SyntheticSpec spec;
  spec.num_train = 6;
  spec.num_test = 4;
  spec.test_mix = {0.25, 0.25, 0.25, 0.25};
  const fs::path a = temp_dir("syn_a"), b = temp_dir("syn_b");
  write_synthetic(generate_synthetic(spec), a);
  write_synthetic(generate_synthetic(spec), b);
  int files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    EXPECT_EQ(slurp(e.path()), slurp(b / fs::relative(e.path(), a))) << e.path();
    ++files;
  }
  EXPECT_EQ(files, 10 + 6);
  const auto ds = load_dataset(a, "test");
  EXPECT_EQ(ds.images.size(), 4u);
  EXPECT_EQ(ds.load_image("test_00000").width, 64);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Synthetic, VerbMarginalUniform) {
  SyntheticSpec spec;
  spec.num_train = 1000;
  spec.num_test = 0;
  spec.image_size = 32;
  const auto ds = generate_synthetic(spec);
  std::vector<int> count(4, 0);
  for (const auto& s : ds.scenes) {
    ++count[s.info.verb];
    EXPECT_EQ(s.info.texture, s.info.verb);
  }
  for (int c : count) EXPECT_NEAR(c / 1000.0, 0.25, 0.02);
}

TEST(Synthetic, ContextTaskForegroundCarriesNoVerb) {
  SyntheticSpec spec;
  spec.num_train = 400;
  spec.num_test = 0;
  spec.image_size = 32;
  const auto ds = generate_synthetic(spec);
  std::map<std::pair<Index, Index>, int> joint;
  for (const auto& s : ds.scenes) {
    EXPECT_EQ(s.info.human_colour, 0);
    ++joint[{s.info.object_class, s.info.verb}];
  }
  // Verbs are balanced within each object class.
  for (const auto& [k, n] : joint) EXPECT_NEAR(n, 50, 10);
}

TEST(Synthetic, DifficultySubset) {
  SyntheticSpec spec;
  spec.num_train = 0;
  spec.num_test = 100;
  spec.image_size = 32;
  spec.test_mix = {0.5, 0.5, 0.0, 0.0};
  const auto ds = generate_synthetic(spec);
  const auto listed_ids = ds.ambiguous("test");
  EXPECT_EQ(listed_ids.size(), 50u);
  for (const auto& s : ds.scenes) {
    const bool listed = std::count(listed_ids.begin(), listed_ids.end(), s.info.id) > 0;
    EXPECT_EQ(listed, s.info.difficulty == Difficulty::kOccluded);
  }
}

TEST(Synthetic, OccluderCoversMostOfHuman) {
  Rng rng(3);
  SceneParams p;
  p.difficulty = Difficulty::kOccluded;
  p.texture = 2;
  const auto scene = render_scene(p, "x", rng);
  const auto& h = scene.pair.human;
  const int x0 = static_cast<int>(std::ceil(h.x0() * 64)), x1 = static_cast<int>(std::floor(h.x1() * 64));
  const int y0 = static_cast<int>(std::ceil(h.y0() * 64)), y1 = static_cast<int>(std::floor(h.y1() * 64));
  int grey = 0, total = 0;
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) {
      const Rgb c = scene.image.get(x, y);
      grey += std::abs(c[0] - c[1]) < 1e-9 && std::abs(c[1] - c[2]) < 1e-9;
      ++total;
    }
  EXPECT_GE(static_cast<double>(grey) / total, 0.6);
}

TEST(Synthetic, SpecJson) {
  const auto spec = load_synthetic_spec(kConfigs / "synthetic" / "mixed.json");
  EXPECT_EQ(spec.task, SyntheticTask::kMixed);
  EXPECT_DOUBLE_EQ(spec.layout_jitter, 0.25);
  nlohmann::json j = spec;
  EXPECT_EQ(j.get<SyntheticSpec>().num_train, spec.num_train);
}
