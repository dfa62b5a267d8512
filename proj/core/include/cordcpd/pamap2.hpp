#pragma once

#include <cstddef>
#include <filesystem>
#include <istream>
#include <string>
#include <vector>

#include "cordcpd/dataset.hpp"
#include "cordcpd/tensor.hpp"

namespace cordcpd {

struct Pamap2Config {
  std::size_t downsample = 20;
  std::size_t window = 100;
  std::size_t change_lo = 25;
  std::size_t change_hi = 75;
  std::size_t preferred_change = 50;
  std::size_t interpolation_cap = 50;  // longest NaN run, in raw samples, that is interpolated
  std::size_t n_train = 150;
  std::size_t n_val = 14;

  void validate() const;
};

inline constexpr std::size_t kPamap2Imus = 3;
inline constexpr std::size_t kPamap2Features = 10;

/// Rows of one subject file with activity 0 removed; features are the 10
/// selected columns of each of the three IMUs (hand, chest, ankle).
struct Pamap2Recording {
  std::string source;
  std::vector<int> activity;
  std::vector<double> features;     // rows x 30, NaN where missing
  std::vector<std::uint8_t> valid;  // per row, after interpolation

  std::size_t rows() const noexcept { return activity.size(); }
};

struct Pamap2Window {
  std::string source;
  std::size_t start_row = 0;  // in the filtered raw rows
  std::size_t change_step = 0;
  int activity_before = 0;
  int activity_after = 0;
  Tensor values;  // window x 3 x 10
};

std::vector<std::string> pamap2_feature_names();

Pamap2Recording parse_pamap2(std::istream& in, const std::string& source);

/// Linear interpolation of NaN runs of at most cap rows; rows in longer or
/// unbounded runs are marked invalid.
void interpolate_missing(Pamap2Recording& rec, std::size_t cap);

/// Indices b where activity[b] differs from activity[b-1].
std::vector<std::size_t> activity_transitions(const Pamap2Recording& rec);

/// One window per usable transition, placed with the change at
/// preferred_change or the nearest offset in [change_lo, change_hi] that keeps
/// exactly one transition inside and no invalid rows.
std::vector<Pamap2Window> extract_windows(const Pamap2Recording& rec, const Pamap2Config& cfg);

/// Reads every *.dat file under raw_dir in sorted path order, writes tensor
/// files and a manifest to out_dir.
DatasetManifest ingest_pamap2(const std::filesystem::path& raw_dir, const std::filesystem::path& out_dir,
                              const Pamap2Config& cfg);

}  // namespace cordcpd
