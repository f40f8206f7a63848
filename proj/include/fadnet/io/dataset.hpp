#pragma once

// Phantom datasets on disk: <stem>.pgm (image), <stem>_mask.pgm ({0,255}),
// <stem>.json (sidecar with seed, generator spec and planted stenoses).

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "fadnet/io/pgm.hpp"
#include "fadnet/train/phantom.hpp"
#include "fadnet/train/trainer.hpp"

namespace fadnet {

inline std::string phantom_stem(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "phantom_%04zu", index);
  return buf;
}

inline nlohmann::json phantom_sidecar(const PhantomSample& s, const PhantomSpec& spec) {
  return nlohmann::json{{"seed", s.seed}, {"spec", spec}, {"stenoses", s.gt}};
}

inline void write_phantom(const PhantomSample& s, const PhantomSpec& spec, const std::filesystem::path& dir,
                          const std::string& stem) {
  write_pgm(s.image, (dir / (stem + ".pgm")).string());
  write_mask(s.mask, (dir / (stem + "_mask.pgm")).string());
  write_file_bytes((dir / (stem + ".json")).string(), [&] {
    const std::string t = phantom_sidecar(s, spec).dump(2) + "\n";
    return std::vector<std::uint8_t>(t.begin(), t.end());
  }());
}

/// Generates `count` phantoms with seeds seed, seed+1, ... into `dir`.
inline void write_phantom_dataset(const std::filesystem::path& dir, std::size_t count, std::uint64_t seed,
                                  const PhantomSpec& spec) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < count; ++i) write_phantom(generate_phantom(seed + i, spec), spec, dir, phantom_stem(i));
}

/// Image stems in `dir` (every *.pgm that is not a *_mask.pgm), sorted.
inline std::vector<std::string> dataset_stems(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw std::runtime_error("dataset: '" + dir.string() + "' is not a directory");
  std::vector<std::string> stems;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (!e.is_regular_file() || e.path().extension() != ".pgm") continue;
    const std::string stem = e.path().stem().string();
    if (stem.size() >= 5 && stem.compare(stem.size() - 5, 5, "_mask") == 0) continue;
    stems.push_back(stem);
  }
  std::sort(stems.begin(), stems.end());
  return stems;
}

inline std::vector<GtStenosis> read_gt_sidecar(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  const auto j = nlohmann::json::parse(bytes.begin(), bytes.end());
  return j.at("stenoses").get<std::vector<GtStenosis>>();
}

inline std::vector<TrainingPair> load_training_pairs(const std::filesystem::path& dir) {
  std::vector<TrainingPair> out;
  for (const auto& stem : dataset_stems(dir)) {
    TrainingPair p{read_pgm((dir / (stem + ".pgm")).string()), read_mask((dir / (stem + "_mask.pgm")).string())};
    require_same_extent(p.image, p.mask, stem.c_str());
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace fadnet
