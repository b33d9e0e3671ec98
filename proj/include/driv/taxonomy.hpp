#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "driv/core/error.hpp"

namespace driv {

// Ordinal driveability category. Void is a sentinel for unlabeled pixels and
// never participates in encoding, loss or metrics.
enum class Level : std::uint8_t {
  Void = 0,
  Impossible = 1,  // rank 1
  Possible = 2,    // rank 2
  Preferable = 3,  // rank 3
};

inline bool is_void(Level l) { return l == Level::Void; }

// Natural rank of a non-void level.
inline int level_rank(Level l) {
  if (is_void(l)) throw Error("void level has no rank");
  return static_cast<int>(l);
}

const char* level_name(Level l);
std::optional<Level> level_from_name(std::string_view name);

// Per-pixel grid of source class ids, as decoded from an 8-bit indexed mask.
struct ClassMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> ids;  // row-major, height*width

  std::uint8_t at(int y, int x) const {
    return ids[static_cast<std::size_t>(y) * width + x];
  }
};

// Per-pixel grid of driveability levels (or void).
struct LevelMask {
  int width = 0;
  int height = 0;
  std::vector<Level> values;  // row-major, height*width

  Level at(int y, int x) const {
    return values[static_cast<std::size_t>(y) * width + x];
  }
  Level& at(int y, int x) {
    return values[static_cast<std::size_t>(y) * width + x];
  }
  std::int64_t pixel_count() const {
    return static_cast<std::int64_t>(width) * height;
  }
};

// Mapping from one dataset's class-id space to driveability levels.
// Class names are carried for diagnostics only; lookups go through ids.
struct TaxonomyMap {
  std::string dataset_id;
  std::map<int, Level> entries;          // class id -> level (or Void)
  std::map<int, std::string> class_names;

  std::optional<Level> lookup(int class_id) const {
    auto it = entries.find(class_id);
    if (it == entries.end()) return std::nullopt;
    return it->second;
  }
};

enum class BinaryMode {
  RoadVsRest,           // possible -> impossible
  FreespaceVsObstacles  // possible -> preferable
};

// Parses a taxonomy config:
//   dataset: <id>
//   <class_id>,<class_name>,<level>
// with '#' comments and blank lines. Duplicate ids and unknown level names
// are errors reported with the offending line number.
TaxonomyMap load_taxonomy(std::string_view config_text);
TaxonomyMap load_taxonomy_file(const std::string& path);

// Serializes a TaxonomyMap back into the config format.
std::string format_taxonomy(const TaxonomyMap& tax);

// Per-pixel substitution of class ids by levels. Every id present in `mask`
// must have an entry; otherwise a DataError names the ids and the number of
// affected pixels.
LevelMask remap_mask(const ClassMask& mask, const TaxonomyMap& tax);

// Collapses the 3-level space to a binary one. Void and the two extreme
// levels are fixed points; only `possible` moves.
LevelMask collapse_binary(const LevelMask& levels, BinaryMode mode);
Level collapse_binary(Level level, BinaryMode mode);

// Collapses every entry of a taxonomy; remap(collapse(tax)) equals
// collapse(remap(tax)) on any mask.
TaxonomyMap collapse_binary(const TaxonomyMap& tax, BinaryMode mode);

// True when at least one entry maps to `level`.
bool taxonomy_covers(const TaxonomyMap& tax, Level level);

}  // namespace driv
