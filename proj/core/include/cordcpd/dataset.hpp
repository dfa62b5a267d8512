#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cordcpd/simulator.hpp"
#include "cordcpd/tensor.hpp"

namespace cordcpd {

enum class Split { train, val, test };

std::string to_string(Split split);
Split parse_split(const std::string& text);

/// Per-feature affine map x -> (x - center) / scale.
struct NormalizationScalers {
  std::vector<double> center;
  std::vector<double> scale;

  std::size_t features() const noexcept { return scale.size(); }
  void validate() const;
  /// Works on any tensor whose last dimension is the feature axis.
  void apply(Tensor& x) const;
  void invert(Tensor& x) const;
};

/// Scale = max |value| over the training series per feature (center 0), with
/// zero scales clamped to 1. Features listed in `fixed_scales` use the given
/// scale instead.
NormalizationScalers compute_scalers(std::span<const Tensor> train, const std::map<std::size_t, double>& fixed_scales = {});

struct SeriesEntry {
  std::string id;
  std::string path;            // relative to the manifest directory
  std::string adjacency_path;  // empty when there is no ground truth
  std::size_t change_step = 0;
  std::string change_type;
  Split split = Split::train;
};

struct DatasetManifest {
  std::string source;  // "synthetic" or "pamap2"
  std::uint64_t seed = 0;
  std::size_t t_steps = 0;
  std::size_t n_nodes = 0;
  std::size_t n_features = 0;
  std::vector<std::string> feature_names;
  NormalizationScalers scalers;
  std::map<std::string, std::string> config;
  std::vector<SeriesEntry> series;

  std::vector<const SeriesEntry*> entries(Split split) const;
  const SeriesEntry& find(const std::string& id) const;

  /// Checks scalers and that every referenced file exists with the declared shape.
  void validate(const std::filesystem::path& directory) const;
  void save(const std::filesystem::path& path) const;
  static DatasetManifest load(const std::filesystem::path& path);
};

/// A series as stored on disk plus its normalized copy.
struct LoadedSeries {
  const SeriesEntry* entry = nullptr;
  Tensor raw;
  Tensor values;     // normalized
  Tensor adjacency;  // T x N x N, empty if absent
};

class Dataset {
 public:
  /// Loads the manifest, validates every file and normalizes all series.
  static Dataset open(const std::filesystem::path& manifest_path);

  const DatasetManifest& manifest() const noexcept { return manifest_; }
  const std::filesystem::path& directory() const noexcept { return directory_; }
  const std::vector<LoadedSeries>& series() const noexcept { return series_; }
  std::vector<const LoadedSeries*> split(Split split) const;
  std::vector<Tensor> values(Split split) const;
  const LoadedSeries& find(const std::string& id) const;

 private:
  DatasetManifest manifest_;
  std::filesystem::path directory_;
  std::vector<LoadedSeries> series_;
};

using TypeCounts = std::array<std::size_t, 3>;  // location, speed, connection

struct SplitCounts {
  TypeCounts train{0, 0, 0};
  TypeCounts val{0, 0, 0};
  TypeCounts test{0, 0, 0};
};

/// "a,b,c" -> counts per change type.
TypeCounts parse_type_counts(const std::string& text);

/// Simulates every series on its own substream of `seed`, writes tensor files
/// under `out_dir` and a manifest.json; returns the manifest.
DatasetManifest generate_dataset(const SplitCounts& counts, std::uint64_t seed, const SimConfig& cfg,
                                 const std::filesystem::path& out_dir);

inline constexpr const char* kManifestFile = "manifest.json";

}  // namespace cordcpd
