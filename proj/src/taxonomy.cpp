#include "driv/taxonomy.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <map>
#include <sstream>

namespace driv {

const char* level_name(Level l) {
  switch (l) {
    case Level::Void:
      return "void";
    case Level::Impossible:
      return "impossible";
    case Level::Possible:
      return "possible";
    case Level::Preferable:
      return "preferable";
  }
  return "?";
}

std::optional<Level> level_from_name(std::string_view name) {
  if (name == "void") return Level::Void;
  if (name == "impossible") return Level::Impossible;
  if (name == "possible") return Level::Possible;
  if (name == "preferable") return Level::Preferable;
  return std::nullopt;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' ||
                        s.front() == '\r'))
    s.remove_prefix(1);
  while (!s.empty() &&
         (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

}  // namespace

TaxonomyMap load_taxonomy(std::string_view config_text) {
  TaxonomyMap tax;
  std::istringstream in{std::string(config_text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view sv = trim(line);
    if (sv.empty() || sv.front() == '#') continue;
    if (sv.starts_with("dataset:")) {
      tax.dataset_id = std::string(trim(sv.substr(8)));
      if (tax.dataset_id.empty())
        throw ConfigError("taxonomy line " + std::to_string(line_no) +
                          ": empty dataset id");
      continue;
    }
    // <class_id>,<class_name>,<level>
    const auto c1 = sv.find(',');
    const auto c2 = c1 == std::string_view::npos ? c1 : sv.find(',', c1 + 1);
    if (c2 == std::string_view::npos)
      throw ConfigError("taxonomy line " + std::to_string(line_no) +
                        ": expected <class_id>,<class_name>,<level>");
    const std::string id_str{trim(sv.substr(0, c1))};
    const std::string name{trim(sv.substr(c1 + 1, c2 - c1 - 1))};
    const std::string level_str{trim(sv.substr(c2 + 1))};

    int class_id = 0;
    std::size_t consumed = 0;
    try {
      class_id = std::stoi(id_str, &consumed);
    } catch (const std::exception&) {
      consumed = 0;
    }
    if (consumed != id_str.size() || id_str.empty())
      throw ConfigError("taxonomy line " + std::to_string(line_no) +
                        ": bad class id '" + id_str + "'");

    const auto level = level_from_name(level_str);
    if (!level)
      throw ConfigError("taxonomy line " + std::to_string(line_no) +
                        ": unknown level '" + level_str + "'");
    if (tax.entries.count(class_id))
      throw ConfigError("taxonomy line " + std::to_string(line_no) +
                        ": duplicate class id " + std::to_string(class_id));
    tax.entries.emplace(class_id, *level);
    tax.class_names.emplace(class_id, name);
  }
  if (tax.dataset_id.empty())
    throw ConfigError("taxonomy config is missing a 'dataset:' header");
  if (tax.entries.empty())
    throw ConfigError("taxonomy config has no class mappings");
  return tax;
}

TaxonomyMap load_taxonomy_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open taxonomy file: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return load_taxonomy(ss.str());
}

std::string format_taxonomy(const TaxonomyMap& tax) {
  std::ostringstream out;
  out << "dataset: " << tax.dataset_id << "\n";
  for (const auto& [id, level] : tax.entries) {
    auto name_it = tax.class_names.find(id);
    const std::string& name =
        name_it == tax.class_names.end() ? std::string("?") : name_it->second;
    out << id << "," << name << "," << level_name(level) << "\n";
  }
  return out.str();
}

LevelMask remap_mask(const ClassMask& mask, const TaxonomyMap& tax) {
  LevelMask out;
  out.width = mask.width;
  out.height = mask.height;
  out.values.resize(mask.ids.size());

  // Ids are 8-bit on disk; resolve the full lookup table once.
  std::array<Level, 256> table;
  std::array<bool, 256> known{};
  for (int id = 0; id < 256; ++id) {
    if (auto l = tax.lookup(id)) {
      table[static_cast<std::size_t>(id)] = *l;
      known[static_cast<std::size_t>(id)] = true;
    }
  }

  std::array<std::int64_t, 256> unmapped{};
  for (std::size_t i = 0; i < mask.ids.size(); ++i) {
    const std::uint8_t id = mask.ids[i];
    if (!known[id]) {
      ++unmapped[id];
      continue;
    }
    out.values[i] = table[id];
  }

  std::string missing;
  std::int64_t missing_pixels = 0;
  for (int id = 0; id < 256; ++id) {
    if (unmapped[static_cast<std::size_t>(id)] > 0) {
      if (!missing.empty()) missing += ", ";
      missing += std::to_string(id);
      missing_pixels += unmapped[static_cast<std::size_t>(id)];
    }
  }
  if (!missing.empty())
    throw DataError("mask contains class ids with no taxonomy entry: {" +
                    missing + "} covering " + std::to_string(missing_pixels) +
                    " pixel(s) in dataset '" + tax.dataset_id + "'");
  return out;
}

Level collapse_binary(Level level, BinaryMode mode) {
  if (level != Level::Possible) return level;
  return mode == BinaryMode::RoadVsRest ? Level::Impossible
                                        : Level::Preferable;
}

LevelMask collapse_binary(const LevelMask& levels, BinaryMode mode) {
  LevelMask out = levels;
  for (auto& v : out.values) v = collapse_binary(v, mode);
  return out;
}

TaxonomyMap collapse_binary(const TaxonomyMap& tax, BinaryMode mode) {
  TaxonomyMap out = tax;
  for (auto& [id, level] : out.entries) level = collapse_binary(level, mode);
  return out;
}

bool taxonomy_covers(const TaxonomyMap& tax, Level level) {
  return std::any_of(tax.entries.begin(), tax.entries.end(),
                     [&](const auto& kv) { return kv.second == level; });
}

}  // namespace driv
