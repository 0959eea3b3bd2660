#include "contexthoi/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace contexthoi {

namespace {

std::string where(const std::filesystem::path& path, int line) {
  return path.string() + ":" + std::to_string(line) + ": ";
}

bool skip_line(const std::string& line) {
  const auto b = line.find_first_not_of(" \t\r");
  return b == std::string::npos || line[b] == '#';
}

std::string spaced(std::string s) {
  std::replace(s.begin(), s.end(), '_', ' ');
  return s;
}

void check_unit(double v, const std::filesystem::path& path, int line) {
  if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
    throw DatasetError(where(path, line) + "box coordinate " + std::to_string(v) + " outside [0,1]");
  }
}

BoxD read_box(std::istringstream& is, const std::filesystem::path& path, int line) {
  double c[4];
  for (double& v : c) {
    if (!(is >> v)) throw DatasetError(where(path, line) + "expected 4 box coordinates");
    check_unit(v, path, line);
  }
  if (c[2] < c[0] || c[3] < c[1]) throw DatasetError(where(path, line) + "box corners out of order");
  return BoxD::from_corners(c[0], c[1], c[2], c[3]);
}

GroundTruthIndex group_pairs(const SplitFile& split, const CategoryTable& cats) {
  GroundTruthIndex out;
  for (const auto& img : split.images) out[img.id];
  for (const auto& p : split.pairs) {
    auto& set = out[p.image_id];
    const Index hoi = cats.hoi_id(p.object_class, p.verb_class);
    auto same = std::find_if(set.begin(), set.end(), [&](const HoiAnnotation& a) {
      return a.object_class == p.object_class && a.human.params() == p.human.params() &&
             a.object.params() == p.object.params();
    });
    if (same == set.end()) {
      set.push_back({p.human, p.object, p.object_class, {hoi}});
    } else if (std::find(same->hoi_classes.begin(), same->hoi_classes.end(), hoi) == same->hoi_classes.end()) {
      same->hoi_classes.push_back(hoi);
    }
  }
  return out;
}

}  // namespace

Index CategoryTable::hoi_id(Index object, Index verb) const {
  for (size_t i = 0; i < hoi.size(); ++i)
    if (hoi[i].first == object && hoi[i].second == verb) return static_cast<Index>(i);
  return -1;
}

CategoryPrompts CategoryTable::prompts() const {
  CategoryPrompts p;
  for (const auto& o : objects) p.objects.push_back("a photo of a " + spaced(o));
  for (const auto& v : verbs) p.verbs.push_back("a photo of a person " + spaced(v) + " something");
  return p;
}

CategoryTable load_categories(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DatasetError("missing category file " + path.string());
  std::map<Index, std::string> objects, verbs;
  std::map<Index, std::pair<Index, Index>> hoi;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (skip_line(line)) continue;
    std::istringstream is(line);
    std::string kind;
    long id = -1;
    is >> kind >> id;
    if (!is || id < 0) throw DatasetError(where(path, n) + "expected '<kind> <id> ...'");
    auto dup = [&](const auto& m) {
      if (m.count(id)) throw DatasetError(where(path, n) + "duplicate " + kind + " id " + std::to_string(id));
    };
    if (kind == "object" || kind == "verb") {
      std::string name;
      if (!(is >> name)) throw DatasetError(where(path, n) + "missing " + kind + " name");
      auto& m = kind == "object" ? objects : verbs;
      dup(m);
      m[id] = name;
    } else if (kind == "hoi") {
      long o = -1, v = -1;
      if (!(is >> o >> v)) throw DatasetError(where(path, n) + "expected 'hoi <id> <object> <verb>'");
      dup(hoi);
      hoi[id] = {o, v};
    } else {
      throw DatasetError(where(path, n) + "unknown record kind '" + kind + "'");
    }
  }
  CategoryTable t;
  auto dense = [&](const auto& m, const char* what) {
    Index expect = 0;
    for (const auto& [id, _] : m) {
      if (id != expect++) throw DatasetError(path.string() + ": " + what + " ids are not dense from 0");
    }
  };
  dense(objects, "object");
  dense(verbs, "verb");
  dense(hoi, "hoi");
  for (const auto& [_, name] : objects) t.objects.push_back(name);
  for (const auto& [_, name] : verbs) t.verbs.push_back(name);
  std::set<std::pair<Index, Index>> seen;
  for (const auto& [id, ov] : hoi) {
    if (ov.first < 0 || ov.first >= t.num_objects() || ov.second < 0 || ov.second >= t.num_verbs()) {
      throw DatasetError(path.string() + ": hoi " + std::to_string(id) + " references an unknown category");
    }
    if (!seen.insert(ov).second) throw DatasetError(path.string() + ": duplicate triplet for hoi " + std::to_string(id));
    t.hoi.push_back(ov);
  }
  return t;
}

void write_categories(const CategoryTable& table, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DatasetError("cannot write " + path.string());
  for (size_t i = 0; i < table.objects.size(); ++i) out << "object " << i << ' ' << table.objects[i] << '\n';
  for (size_t i = 0; i < table.verbs.size(); ++i) out << "verb " << i << ' ' << table.verbs[i] << '\n';
  for (size_t i = 0; i < table.hoi.size(); ++i)
    out << "hoi " << i << ' ' << table.hoi[i].first << ' ' << table.hoi[i].second << '\n';
}

SplitFile parse_split(const std::filesystem::path& path, const CategoryTable& cats) {
  std::ifstream in(path);
  if (!in) throw DatasetError("missing annotation file " + path.string());
  SplitFile split;
  std::set<std::string> ids;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (skip_line(line)) continue;
    std::istringstream is(line);
    std::string kind;
    is >> kind;
    if (kind == "image") {
      ImageEntry e;
      if (!(is >> e.id >> e.path >> e.width >> e.height) || e.width <= 0 || e.height <= 0) {
        throw DatasetError(where(path, n) + "expected 'image <id> <path> <width> <height>'");
      }
      if (!ids.insert(e.id).second) throw DatasetError(where(path, n) + "duplicate image id '" + e.id + "'");
      split.images.push_back(e);
    } else if (kind == "pair") {
      PairRecord p;
      if (!(is >> p.image_id)) throw DatasetError(where(path, n) + "missing image id");
      if (!ids.count(p.image_id)) throw DatasetError(where(path, n) + "unknown image id '" + p.image_id + "'");
      p.human = read_box(is, path, n);
      p.object = read_box(is, path, n);
      long o = -1, v = -1;
      if (!(is >> o >> v)) throw DatasetError(where(path, n) + "expected object and verb ids");
      if (o < 0 || o >= cats.num_objects()) {
        throw DatasetError(where(path, n) + "object id " + std::to_string(o) + " out of range [0," +
                           std::to_string(cats.num_objects()) + ")");
      }
      if (v < 0 || v >= cats.num_verbs()) {
        throw DatasetError(where(path, n) + "verb id " + std::to_string(v) + " out of range [0," +
                           std::to_string(cats.num_verbs()) + ")");
      }
      if (cats.hoi_id(o, v) < 0) {
        throw DatasetError(where(path, n) + "triplet (" + std::to_string(o) + "," + std::to_string(v) +
                           ") is not in the category table");
      }
      p.object_class = o;
      p.verb_class = v;
      split.pairs.push_back(p);
    } else {
      throw DatasetError(where(path, n) + "unknown record kind '" + kind + "'");
    }
  }
  return split;
}

void write_split(const SplitFile& split, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DatasetError("cannot write " + path.string());
  out.precision(9);
  for (const auto& e : split.images)
    out << "image " << e.id << ' ' << e.path << ' ' << e.width << ' ' << e.height << '\n';
  for (const auto& p : split.pairs) {
    const auto h = p.human.corners();
    const auto o = p.object.corners();
    out << "pair " << p.image_id;
    for (double v : h) out << ' ' << v;
    for (double v : o) out << ' ' << v;
    out << ' ' << p.object_class << ' ' << p.verb_class << '\n';
  }
}

std::size_t DatasetIndex::num_annotations() const {
  std::size_t n = 0;
  for (const auto& [_, set] : annotations)
    for (const auto& a : set) n += a.hoi_classes.size();
  return n;
}

const ImageEntry& DatasetIndex::image(const std::string& id) const {
  for (const auto& e : images)
    if (e.id == id) return e;
  throw DatasetError("unknown image id '" + id + "'");
}

bool DatasetIndex::contains(const std::string& id) const { return annotations.count(id) > 0; }

Image DatasetIndex::load_image(const std::string& id) const {
  return read_ppm(root / image(id).path);
}

DatasetIndex load_dataset(const std::filesystem::path& root, const std::string& split) {
  DatasetIndex ds;
  ds.root = root;
  ds.split = split;
  ds.categories = load_categories(root / "categories.txt");
  const SplitFile file = parse_split(root / (split + ".txt"), ds.categories);
  ds.images = file.images;
  ds.annotations = group_pairs(file, ds.categories);

  ds.meta.hoi_object.clear();
  for (const auto& [o, v] : ds.categories.hoi) {
    ds.meta.hoi_object.push_back(o);
    ds.meta.hoi_verb.push_back(v);
  }
  ds.meta.train_count.assign(ds.categories.hoi.size(), 0);
  const auto train_path = root / "train.txt";
  const SplitFile train = split == "train" ? file
                          : std::filesystem::exists(train_path) ? parse_split(train_path, ds.categories)
                                                                : SplitFile{};
  for (const auto& p : train.pairs) ++ds.meta.train_count[ds.categories.hoi_id(p.object_class, p.verb_class)];
  return ds;
}

const std::vector<int>& hico_object_ids() {
  static const std::vector<int> ids = {
      1,  2,  3,  4,  5,  6,  7,  8,  9,  10, 11, 13, 14, 15, 16, 17, 18, 19, 20, 21,
      22, 23, 24, 25, 27, 28, 31, 32, 33, 34, 35, 36, 37, 38, 39, 40, 41, 42, 43, 44,
      46, 47, 48, 49, 50, 51, 52, 53, 54, 55, 56, 57, 58, 59, 60, 61, 62, 63, 64, 65,
      67, 70, 72, 73, 74, 75, 76, 77, 78, 79, 80, 81, 82, 84, 85, 86, 87, 88, 89, 90};
  return ids;
}

SplitFile convert_qpic(const std::filesystem::path& json_path, const std::vector<int>& object_ids,
                       const CategoryTable& categories) {
  std::ifstream in(json_path);
  if (!in) throw DatasetError("missing annotation file " + json_path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw DatasetError(json_path.string() + ": " + e.what());
  }
  if (!doc.is_array()) throw DatasetError(json_path.string() + ": expected a list of images");
  SplitFile out;
  for (size_t i = 0; i < doc.size(); ++i) {
    const auto& img = doc[i];
    const std::string ctx = json_path.string() + ": image " + std::to_string(i) + ": ";
    if (!img.contains("file_name") || !img.contains("width") || !img.contains("height")) {
      throw DatasetError(ctx + "file_name, width and height are required");
    }
    const std::string file = img["file_name"].get<std::string>();
    const double w = img["width"].get<double>();
    const double h = img["height"].get<double>();
    ImageEntry e{std::filesystem::path(file).stem().string(), "images/" + file, static_cast<int>(w),
                 static_cast<int>(h)};
    out.images.push_back(e);
    const auto& boxes = img.at("annotations");
    std::vector<std::pair<BoxD, Index>> objs;
    for (const auto& b : boxes) {
      const auto bb = b.at("bbox").get<std::vector<double>>();
      if (bb.size() != 4) throw DatasetError(ctx + "bbox needs 4 values");
      const int cid = b.at("category_id").get<int>();
      const auto it = std::find(object_ids.begin(), object_ids.end(), cid);
      if (it == object_ids.end()) throw DatasetError(ctx + "unknown object category id " + std::to_string(cid));
      auto clip = [](double v) { return std::clamp(v, 0.0, 1.0); };
      objs.emplace_back(BoxD::from_corners(clip(bb[0] / w), clip(bb[1] / h), clip(bb[2] / w), clip(bb[3] / h)),
                        static_cast<Index>(it - object_ids.begin()));
    }
    for (const auto& hoi : img.value("hoi_annotation", nlohmann::json::array())) {
      const size_t s = hoi.at("subject_id").get<size_t>();
      const size_t o = hoi.at("object_id").get<size_t>();
      const long v = hoi.at("category_id").get<long>() - 1;
      if (s >= objs.size() || o >= objs.size()) throw DatasetError(ctx + "hoi references a missing box");
      if (v < 0 || v >= categories.num_verbs()) throw DatasetError(ctx + "verb id out of range");
      if (categories.hoi_id(objs[o].second, v) < 0) throw DatasetError(ctx + "triplet not in category table");
      out.pairs.push_back({e.id, objs[s].first, objs[o].first, objs[o].second, v});
    }
  }
  return out;
}

}  // namespace contexthoi
