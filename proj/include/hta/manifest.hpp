#pragma once

// Dataset index: CSV with header "file_name,class_id,class_name".

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "hta/error.hpp"
#include "hta/labels.hpp"
#include "hta/random.hpp"

namespace hta {

struct ManifestRecord {
  std::string file_name;
  ClassLabel label;

  bool operator==(const ManifestRecord&) const = default;
};

using Manifest = std::vector<ManifestRecord>;

inline constexpr std::string_view kManifestHeader = "file_name,class_id,class_name";

/// Rejects duplicate file names.
inline void validate(const Manifest& m) {
  std::set<std::string> seen;
  for (const auto& r : m)
    if (!seen.insert(r.file_name).second)
      fail(ErrorCode::DuplicateFile, "duplicate file " + r.file_name);
}

inline Manifest parse_manifest(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) fail(ErrorCode::ParseError, "empty manifest");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kManifestHeader)
    fail(ErrorCode::ParseError, "expected header '" + std::string(kManifestHeader) + "'");
  Manifest m;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (fields.size() != 3 || fields[0].empty())
      fail(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": expected 3 fields");
    int id = 0;
    try {
      std::size_t used = 0;
      id = std::stoi(fields[1], &used);
      if (used != fields[1].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      fail(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": bad class id");
    }
    const auto label = label_from_id(id);
    if (!label)
      fail(ErrorCode::UnknownClass, "line " + std::to_string(line_no) + ": class id " +
                                        std::to_string(id) + " is not one of 0..4");
    if (class_name(*label) != fields[2])
      fail(ErrorCode::UnknownClass, "line " + std::to_string(line_no) + ": class name '" +
                                        fields[2] + "' does not match id " + std::to_string(id));
    m.push_back({fields[0], *label});
  }
  validate(m);
  return m;
}

inline Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open manifest " + path.string());
  return parse_manifest(in);
}

inline void write_manifest(std::ostream& out, const Manifest& m) {
  out << kManifestHeader << '\n';
  for (const auto& r : m)
    out << r.file_name << ',' << class_id(r.label) << ',' << class_name(r.label) << '\n';
}

inline void save_manifest(const std::filesystem::path& path, const Manifest& m) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::IoError, "cannot write manifest " + path.string());
  write_manifest(out, m);
}

inline std::array<std::size_t, kNumClasses> class_counts(const Manifest& m) {
  std::array<std::size_t, kNumClasses> n{};
  for (const auto& r : m) ++n[static_cast<std::size_t>(class_id(r.label))];
  return n;
}

/// Per class, round(train_frac * count) records go to train and the rest to
/// validation. Which records is decided by a seeded shuffle; both halves keep
/// the input order.
inline std::pair<Manifest, Manifest> stratified_split(const Manifest& m, double train_frac,
                                                      std::uint64_t seed) {
  if (!(train_frac > 0 && train_frac < 1))
    fail(ErrorCode::ConfigError, "train_frac must lie in (0, 1)");
  std::array<std::vector<std::size_t>, kNumClasses> by_class;
  for (std::size_t i = 0; i < m.size(); ++i)
    by_class[static_cast<std::size_t>(class_id(m[i].label))].push_back(i);

  Rng rng(seed);
  std::vector<bool> to_train(m.size(), false);
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    auto& idx = by_class[c];
    if (idx.empty()) continue;
    if (idx.size() < 2)
      fail(ErrorCode::InsufficientClassSamples,
           "class " + std::string(kClassNames[c]) + " has fewer than 2 records");
    shuffle(idx.begin(), idx.end(), rng);
    const auto n_train = static_cast<std::size_t>(std::llround(train_frac * static_cast<double>(idx.size())));
    for (std::size_t k = 0; k < n_train; ++k) to_train[idx[k]] = true;
  }
  std::pair<Manifest, Manifest> out;
  for (std::size_t i = 0; i < m.size(); ++i) (to_train[i] ? out.first : out.second).push_back(m[i]);
  return out;
}

}  // namespace hta
