#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cordcpd/scoring.hpp"

namespace cordcpd {

struct SeriesScores {
  std::string series_id;
  ScoreTriple scores;
};

/// CSV with header series_id,t,s_r,s_d,s_en; t is the 0-based time step.
void write_scores_csv(const std::filesystem::path& path, const std::vector<SeriesScores>& scores);
/// Series appear in first-seen order; rows of a series must have consecutive
/// t starting at 1.
std::vector<SeriesScores> read_scores_csv(const std::filesystem::path& path);

/// Shortest decimal text that parses back to the same double.
std::string format_number(double v);

/// Minimal CSV writer/reader for the simple numeric tables this tool emits.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;
  void write(const std::filesystem::path& path) const;
  static CsvTable read(const std::filesystem::path& path);
};

/// Three vertically stacked traces (s_r, s_d, s_en) sharing the time axis,
/// with an optional vertical marker at the labelled step.
std::string render_score_svg(const SeriesScores& scores, std::optional<std::size_t> label_step);

}  // namespace cordcpd
