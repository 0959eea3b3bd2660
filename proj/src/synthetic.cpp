#include "contexthoi/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace contexthoi {

namespace {

constexpr int kMaxCategories = 6;

const std::array<std::array<Rgb, 2>, kMaxCategories> kTextureColours = {{
    {{{0.85, 0.80, 0.55}, {0.55, 0.45, 0.25}}},
    {{{0.45, 0.70, 0.45}, {0.15, 0.40, 0.15}}},
    {{{0.60, 0.70, 0.90}, {0.25, 0.30, 0.60}}},
    {{{0.85, 0.55, 0.55}, {0.50, 0.20, 0.25}}},
    {{{0.75, 0.75, 0.75}, {0.35, 0.35, 0.35}}},
    {{{0.80, 0.65, 0.85}, {0.45, 0.25, 0.50}}},
}};

const std::array<Rgb, kMaxCategories> kHumanColours = {{
    {0.95, 0.75, 0.60}, {0.20, 0.85, 0.95}, {0.95, 0.95, 0.20},
    {0.95, 0.30, 0.80}, {0.30, 0.95, 0.40}, {1.00, 0.55, 0.10},
}};

const std::array<Rgb, kMaxCategories> kObjectColours = {{
    {0.10, 0.10, 0.90}, {0.90, 0.10, 0.10}, {0.05, 0.05, 0.05},
    {1.00, 1.00, 1.00}, {0.00, 0.60, 0.60}, {0.60, 0.00, 0.60},
}};

// Pattern value in {0,1} for texture class t at pixel (x, y).
int texture_bit(Index t, int x, int y, int phase) {
  const int px = x + phase;
  const int py = y + phase;
  switch (t) {
    case 0: return (py / 3) % 2;                      // horizontal stripes
    case 1: return (px / 3) % 2;                      // vertical stripes
    case 2: return ((px / 4) + (py / 4)) % 2;         // checkerboard
    case 3: return ((px + py) / 3) % 2;               // diagonal stripes
    case 4: return (px % 5 < 2 && py % 5 < 2) ? 1 : 0;  // dots
    default: return ((px - py + 64) / 3) % 2;         // anti-diagonal stripes
  }
}

void blur_region(Image& img, int x0, int y0, int x1, int y1, int radius) {
  x0 = std::max(x0, 0);
  y0 = std::max(y0, 0);
  x1 = std::min(x1, img.width);
  y1 = std::min(y1, img.height);
  const Image src = img;
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      Rgb acc{0, 0, 0};
      int n = 0;
      for (int dy = -radius; dy <= radius; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
          if (!src.contains(x + dx, y + dy)) continue;
          const Rgb c = src.get(x + dx, y + dy);
          for (int k = 0; k < 3; ++k) acc[k] += c[k];
          ++n;
        }
      }
      for (double& v : acc) v /= n;
      img.set(x, y, acc);
    }
  }
}

int rand_int(Rng& rng, int lo, int hi) {  // inclusive
  if (hi <= lo) return lo;
  return lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
}

std::vector<Difficulty> allocate(const DifficultyMix& mix, int n, Rng& rng) {
  const std::array<double, 4> w = {mix.clear, mix.occluded, mix.blurred, mix.tiny};
  double total = 0.0;
  for (double v : w) {
    if (v < 0.0) throw std::invalid_argument("difficulty fractions must be non-negative");
    total += v;
  }
  if (total <= 0.0) throw std::invalid_argument("difficulty fractions sum to zero");
  std::array<int, 4> count{};
  std::array<double, 4> rem{};
  int assigned = 0;
  for (int i = 0; i < 4; ++i) {
    const double exact = n * w[i] / total;
    count[i] = static_cast<int>(std::floor(exact));
    rem[i] = exact - count[i];
    assigned += count[i];
  }
  while (assigned < n) {
    int best = 0;
    for (int i = 1; i < 4; ++i)
      if (rem[i] > rem[best]) best = i;
    ++count[best];
    rem[best] = -1.0;
    ++assigned;
  }
  std::vector<Difficulty> out;
  for (int i = 0; i < 4; ++i) out.insert(out.end(), count[i], static_cast<Difficulty>(i));
  rng.shuffle(out);
  return out;
}

// Exactly balanced labels in [0, k), shuffled.
std::vector<Index> balanced(int n, int k, Rng& rng) {
  std::vector<Index> v;
  for (int i = 0; i < n; ++i) v.push_back(i % k);
  rng.shuffle(v);
  return v;
}

}  // namespace

void to_json(nlohmann::json& j, const DifficultyMix& m) {
  j = {{"clear", m.clear}, {"occluded", m.occluded}, {"blurred", m.blurred}, {"tiny", m.tiny}};
}

void from_json(const nlohmann::json& j, DifficultyMix& m) {
  m.clear = j.value("clear", 0.0);
  m.occluded = j.value("occluded", 0.0);
  m.blurred = j.value("blurred", 0.0);
  m.tiny = j.value("tiny", 0.0);
}

void to_json(nlohmann::json& j, const SyntheticSpec& s) {
  j = {{"seed", s.seed},           {"num_train", s.num_train}, {"num_test", s.num_test},
       {"image_size", s.image_size}, {"task", s.task},         {"num_verbs", s.num_verbs},
       {"num_objects", s.num_objects}, {"layout_jitter", s.layout_jitter}, {"train_mix", s.train_mix}, {"test_mix", s.test_mix}};
}

void from_json(const nlohmann::json& j, SyntheticSpec& s) {
  const SyntheticSpec d;
  s.seed = j.value("seed", d.seed);
  s.num_train = j.value("num_train", d.num_train);
  s.num_test = j.value("num_test", d.num_test);
  s.image_size = j.value("image_size", d.image_size);
  s.task = j.value("task", d.task);
  s.num_verbs = j.value("num_verbs", d.num_verbs);
  s.num_objects = j.value("num_objects", d.num_objects);
  s.layout_jitter = j.value("layout_jitter", d.layout_jitter);
  s.train_mix = j.value("train_mix", d.train_mix);
  s.test_mix = j.value("test_mix", d.test_mix);
}

SyntheticSpec load_synthetic_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read synthetic spec " + path.string());
  return nlohmann::json::parse(in).get<SyntheticSpec>();
}

SyntheticScene render_scene(const SceneParams& p, const std::string& id, Rng& rng) {
  const int s = p.size;
  Image img(s, s);

  const int phase = rand_int(rng, 0, 5);
  const auto& tc = kTextureColours.at(p.texture);
  for (int y = 0; y < s; ++y) {
    for (int x = 0; x < s; ++x) {
      Rgb c = tc[texture_bit(p.texture, x, y, phase)];
      for (double& v : c) v = std::clamp(v + rng.uniform(-0.03, 0.03), 0.0, 1.0);
      img.set(x, y, c);
    }
  }

  const double scale = p.difficulty == Difficulty::kTiny ? 0.35 : 1.0;
  const int hw = std::max(3, static_cast<int>(std::lround(rand_int(rng, 9, 14) * scale * s / 64.0)));
  const int hh = std::max(4, static_cast<int>(std::lround(rand_int(rng, 22, 32) * scale * s / 64.0)));
  const int ow = std::max(3, static_cast<int>(std::lround(rand_int(rng, 9, 14) * scale * s / 64.0)));
  const int oh = std::max(3, static_cast<int>(std::lround(rand_int(rng, 9, 14) * scale * s / 64.0)));
  const int gap = rand_int(rng, 1, 3);
  const int span = hw + gap + ow;
  const int margin = 2;
  auto place = [&](int extent) {
    const int lo = margin;
    const int hi = s - margin - extent;
    const double j = std::clamp(p.layout_jitter, 0.0, 1.0);
    const int mid = (lo + hi) / 2;
    const int half = static_cast<int>(std::lround(j * (hi - lo) / 2.0));
    return rand_int(rng, mid - half, mid + half);
  };
  const int left = place(span);
  const int hy0 = place(hh);
  const bool mirrored = rng.below(2) == 1;
  const int hx0 = mirrored ? left + ow + gap : left;
  const int ox0 = mirrored ? left : left + hw + gap;
  const int oy0 = std::clamp(hy0 + hh / 2 - oh / 2 + rand_int(rng, -2, 2), 0, s - oh);

  const Rgb& skin = kHumanColours.at(p.human_colour);
  img.fill_rect(hx0, hy0, hx0 + hw, hy0 + hh, skin);
  const int head = std::max(1, hh / 3);
  Rgb head_c = skin;
  for (double& v : head_c) v = 0.5 * v + 0.5;
  img.fill_rect(hx0 + hw / 4, hy0, hx0 + hw - hw / 4, hy0 + head, head_c);

  const Rgb& oc = kObjectColours.at(p.object_class);
  img.fill_rect(ox0, oy0, ox0 + ow, oy0 + oh, oc);
  Rgb inner = oc;
  for (double& v : inner) v = 1.0 - v;
  if (ow > 4 && oh > 4) img.fill_rect(ox0 + ow / 3, oy0 + oh / 3, ox0 + ow - ow / 3, oy0 + oh - oh / 3, inner);

  if (p.difficulty == Difficulty::kOccluded) {
    const double frac = rng.uniform(0.6, 0.85);
    const int rows = static_cast<int>(std::ceil(frac * hh));
    img.fill_rect(hx0 - 1, hy0 - 1, hx0 + hw + 1, hy0 + rows, {0.5, 0.5, 0.5});
  } else if (p.difficulty == Difficulty::kBlurred) {
    const int x0 = std::min(hx0, ox0) - 3;
    const int x1 = std::max(hx0 + hw, ox0 + ow) + 3;
    const int y0 = std::min(hy0, oy0) - 3;
    const int y1 = std::max(hy0 + hh, oy0 + oh) + 3;
    blur_region(img, x0, y0, x1, y1, 2);
    blur_region(img, x0, y0, x1, y1, 2);
  }

  // Stored at 8 bits so the in-memory scene equals its PPM file.
  img.pixels = (img.pixels.array() * 255.0).round() / 255.0;

  SyntheticScene scene;
  scene.image = std::move(img);
  const double inv = 1.0 / s;
  scene.pair.image_id = id;
  scene.pair.human = BoxD::from_corners(hx0 * inv, hy0 * inv, (hx0 + hw) * inv, (hy0 + hh) * inv);
  scene.pair.object = BoxD::from_corners(ox0 * inv, oy0 * inv, (ox0 + ow) * inv, (oy0 + oh) * inv);
  scene.pair.object_class = p.object_class;
  scene.pair.verb_class = p.verb;
  scene.info = {id, "", p.verb, p.texture, p.human_colour, p.object_class, p.difficulty};
  return scene;
}

SplitFile SyntheticDataset::split(const std::string& name) const {
  SplitFile f;
  for (const auto& sc : scenes) {
    if (sc.info.split != name) continue;
    f.images.push_back({sc.info.id, "images/" + sc.info.id + ".ppm", sc.image.width, sc.image.height});
    f.pairs.push_back(sc.pair);
  }
  return f;
}

std::vector<std::string> SyntheticDataset::ambiguous(const std::string& split) const {
  std::vector<std::string> ids;
  for (const auto& sc : scenes)
    if (sc.info.split == split && sc.info.difficulty != Difficulty::kClear) ids.push_back(sc.info.id);
  return ids;
}

SyntheticDataset generate_synthetic(const SyntheticSpec& spec) {
  if (spec.num_verbs < 1 || spec.num_verbs > kMaxCategories || spec.num_objects < 1 ||
      spec.num_objects > kMaxCategories) {
    throw std::invalid_argument("synthetic spec: verb and object counts must be in [1, 6]");
  }
  if (spec.image_size < 32) throw std::invalid_argument("synthetic spec: image_size must be at least 32");
  if (spec.num_train < 0 || spec.num_test < 0) throw std::invalid_argument("synthetic spec: negative scene count");

  SyntheticDataset ds;
  ds.spec = spec;
  for (int o = 0; o < spec.num_objects; ++o) ds.categories.objects.push_back("object_" + std::to_string(o));
  for (int v = 0; v < spec.num_verbs; ++v) ds.categories.verbs.push_back("verb_" + std::to_string(v));
  for (int o = 0; o < spec.num_objects; ++o)
    for (int v = 0; v < spec.num_verbs; ++v) ds.categories.hoi.emplace_back(o, v);

  Rng rng(spec.seed);
  for (const std::string split : {"train", "test"}) {
    const int n = split == "train" ? spec.num_train : spec.num_test;
    const auto verbs = balanced(n, spec.num_verbs, rng);
    const auto objects = balanced(n, spec.num_objects, rng);
    const auto nuisance = balanced(n, spec.num_verbs, rng);
    const auto diff = allocate(split == "train" ? spec.train_mix : spec.test_mix, n, rng);
    for (int i = 0; i < n; ++i) {
      SceneParams p;
      p.task = spec.task;
      p.size = spec.image_size;
      p.verb = verbs[i];
      p.object_class = objects[i];
      p.difficulty = diff[i];
      p.layout_jitter = spec.layout_jitter;
      switch (spec.task) {
        case SyntheticTask::kContext:
          p.texture = p.verb;
          p.human_colour = 0;
          break;
        case SyntheticTask::kForeground:
          p.texture = nuisance[i];
          p.human_colour = p.verb;
          break;
        case SyntheticTask::kMixed:
          p.texture = p.verb;
          p.human_colour = p.verb;
          break;
      }
      char id[32];
      std::snprintf(id, sizeof(id), "%s_%05d", split.c_str(), i);
      auto scene = render_scene(p, id, rng);
      scene.info.split = split;
      ds.scenes.push_back(std::move(scene));
    }
  }
  return ds;
}

void write_synthetic(const SyntheticDataset& ds, const std::filesystem::path& out) {
  std::filesystem::create_directories(out / "images");
  write_categories(ds.categories, out / "categories.txt");
  write_split(ds.split("train"), out / "train.txt");
  write_split(ds.split("test"), out / "test.txt");
  for (const auto& sc : ds.scenes) write_ppm(sc.image, out / "images" / (sc.info.id + ".ppm"));
  write_subset(ds.ambiguous("test"), out / "ambiguous.txt");
  std::ofstream meta(out / "scenes.txt");
  meta << "# id split verb texture human_colour object difficulty\n";
  for (const auto& sc : ds.scenes) {
    const auto& i = sc.info;
    meta << i.id << ' ' << i.split << ' ' << i.verb << ' ' << i.texture << ' ' << i.human_colour << ' '
         << i.object_class << ' ' << nlohmann::json(i.difficulty).get<std::string>() << '\n';
  }
  std::ofstream spec(out / "spec.json");
  spec << nlohmann::json(ds.spec).dump(2) << '\n';
}

}  // namespace contexthoi
