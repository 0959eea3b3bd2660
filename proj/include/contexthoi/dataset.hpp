#pragma once

// Dataset index and the annotation text format.
//
// A dataset root holds:
//   categories.txt   object <id> <name> | verb <id> <name> | hoi <id> <object_id> <verb_id>
//   <split>.txt      image <id> <relative_path> <width> <height>
//                    pair <image_id> hx0 hy0 hx1 hy1 ox0 oy0 ox1 oy1 <object_id> <verb_id>
//   images/          PPM files referenced by the split files
// Ids are 0-based and dense; box corners are normalized to [0,1]. Lines
// starting with '#' and blank lines are ignored. Pairs sharing both boxes and
// the object class are merged into one annotation with several HOI classes.

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "contexthoi/evaluation.hpp"
#include "contexthoi/explorer.hpp"
#include "contexthoi/image.hpp"
#include "contexthoi/matching.hpp"

namespace contexthoi {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ImageEntry {
  std::string id;
  std::string path;  // relative to the dataset root
  int width = 0;
  int height = 0;
};

struct CategoryTable {
  std::vector<std::string> objects;
  std::vector<std::string> verbs;
  std::vector<std::pair<Index, Index>> hoi;  // (object, verb)

  Index num_objects() const { return static_cast<Index>(objects.size()); }
  Index num_verbs() const { return static_cast<Index>(verbs.size()); }
  Index num_hoi() const { return static_cast<Index>(hoi.size()); }
  // -1 when the triplet is not in the table.
  Index hoi_id(Index object, Index verb) const;
  CategoryPrompts prompts() const;
};

CategoryTable load_categories(const std::filesystem::path& path);
void write_categories(const CategoryTable& table, const std::filesystem::path& path);

struct DatasetIndex {
  std::filesystem::path root;
  std::string split;
  CategoryTable categories;
  std::vector<ImageEntry> images;
  GroundTruthIndex annotations;  // every image has an entry, possibly empty
  CategoryMeta meta;             // train counts from <root>/train.txt when present

  std::size_t num_annotations() const;
  const ImageEntry& image(const std::string& id) const;
  bool contains(const std::string& id) const;
  Image load_image(const std::string& id) const;
};

// Raw annotation record as written in a split file.
struct PairRecord {
  std::string image_id;
  BoxD human;
  BoxD object;
  Index object_class = 0;
  Index verb_class = 0;
};

struct SplitFile {
  std::vector<ImageEntry> images;
  std::vector<PairRecord> pairs;
};

// Throws DatasetError with "<file>:<line>: <reason>" on malformed input.
SplitFile parse_split(const std::filesystem::path& path, const CategoryTable& categories);
void write_split(const SplitFile& split, const std::filesystem::path& path);

DatasetIndex load_dataset(const std::filesystem::path& root, const std::string& split = "train");

// Conversion of QPIC-style HICO-DET JSON (file_name, width, height,
// annotations[{bbox, category_id}], hoi_annotation[{subject_id, object_id,
// category_id}]) into the split format. `object_ids` maps the dataset's
// object category ids to dense 0-based ids by position; verb ids are 1-based.
SplitFile convert_qpic(const std::filesystem::path& json_path, const std::vector<int>& object_ids,
                       const CategoryTable& categories);

// The 80 COCO category ids used by HICO-DET, in class order.
const std::vector<int>& hico_object_ids();

}  // namespace contexthoi
