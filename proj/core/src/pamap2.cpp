#include "cordcpd/pamap2.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "cordcpd/tensor_io.hpp"

namespace cordcpd {

namespace {

constexpr std::size_t kColumns = 54;
constexpr std::size_t kActivityColumn = 1;
constexpr std::size_t kImuStart[kPamap2Imus] = {3, 20, 37};
// Temperature, 3D acceleration (+-16g), 3D gyroscope, 3D magnetometer.
constexpr std::size_t kImuOffsets[kPamap2Features] = {0, 1, 2, 3, 7, 8, 9, 10, 11, 12};
constexpr std::size_t kRowWidth = kPamap2Imus * kPamap2Features;

double parse_value(std::string_view token) {
  if (token == "NaN" || token == "nan") return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc() || ptr != token.data() + token.size()) {
    throw FormatError("unparseable value '" + std::string(token) + "'");
  }
  return v;
}

}  // namespace

void Pamap2Config::validate() const {
  if (downsample == 0 || window < 3) throw std::invalid_argument("invalid PAMAP2 window settings");
  if (change_lo < 1 || change_hi >= window || change_lo > change_hi) {
    throw std::invalid_argument("PAMAP2 change range must lie inside the window");
  }
  if (preferred_change < change_lo || preferred_change > change_hi) {
    throw std::invalid_argument("preferred change position must lie in the change range");
  }
}

std::vector<std::string> pamap2_feature_names() {
  return {"temperature", "acc16_x", "acc16_y", "acc16_z", "gyro_x", "gyro_y", "gyro_z", "mag_x", "mag_y", "mag_z"};
}

Pamap2Recording parse_pamap2(std::istream& in, const std::string& source) {
  Pamap2Recording rec;
  rec.source = source;
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string_view> tokens;
  while (std::getline(in, line)) {
    ++line_no;
    tokens.clear();
    std::size_t pos = 0;
    while (pos < line.size()) {
      while (pos < line.size() && std::isspace(static_cast<unsigned char>(line[pos]))) ++pos;
      const std::size_t start = pos;
      while (pos < line.size() && !std::isspace(static_cast<unsigned char>(line[pos]))) ++pos;
      if (pos > start) tokens.emplace_back(line.data() + start, pos - start);
    }
    if (tokens.empty()) continue;
    if (tokens.size() < kColumns) {
      throw FormatError(source + ":" + std::to_string(line_no) + ": expected " + std::to_string(kColumns) +
                        " columns, found " + std::to_string(tokens.size()));
    }
    try {
      const double activity = parse_value(tokens[kActivityColumn]);
      if (!std::isfinite(activity)) throw FormatError("missing activity id");
      if (activity == 0.0) continue;  // transient rows
      rec.activity.push_back(static_cast<int>(activity));
      for (std::size_t imu = 0; imu < kPamap2Imus; ++imu)
        for (std::size_t off : kImuOffsets) rec.features.push_back(parse_value(tokens[kImuStart[imu] + off]));
    } catch (const FormatError& e) {
      throw FormatError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  rec.valid.assign(rec.rows(), 1);
  return rec;
}

void interpolate_missing(Pamap2Recording& rec, std::size_t cap) {
  const std::size_t rows = rec.rows();
  rec.valid.assign(rows, 1);
  for (std::size_t c = 0; c < kRowWidth; ++c) {
    auto at = [&](std::size_t r) -> double& { return rec.features[r * kRowWidth + c]; };
    std::size_t r = 0;
    while (r < rows) {
      if (!std::isnan(at(r))) {
        ++r;
        continue;
      }
      const std::size_t begin = r;
      while (r < rows && std::isnan(at(r))) ++r;
      const std::size_t end = r;  // exclusive
      const bool bounded = begin > 0 && end < rows;
      if (bounded && end - begin <= cap) {
        const double a = at(begin - 1), b = at(end);
        const double span = static_cast<double>(end - begin + 1);
        for (std::size_t q = begin; q < end; ++q) {
          at(q) = a + (b - a) * static_cast<double>(q - begin + 1) / span;
        }
      } else {
        for (std::size_t q = begin; q < end; ++q) rec.valid[q] = 0;
      }
    }
  }
}

std::vector<std::size_t> activity_transitions(const Pamap2Recording& rec) {
  std::vector<std::size_t> out;
  for (std::size_t b = 1; b < rec.rows(); ++b)
    if (rec.activity[b] != rec.activity[b - 1]) out.push_back(b);
  return out;
}

std::vector<Pamap2Window> extract_windows(const Pamap2Recording& rec, const Pamap2Config& cfg) {
  cfg.validate();
  const std::size_t rows = rec.rows();
  const std::size_t stride = cfg.downsample;
  const std::size_t span = stride * (cfg.window - 1);  // raw rows from first to last sample
  const std::vector<std::size_t> transitions = activity_transitions(rec);
  // Prefix count of invalid rows for O(1) range checks.
  std::vector<std::size_t> invalid_prefix(rows + 1, 0);
  for (std::size_t r = 0; r < rows; ++r) invalid_prefix[r + 1] = invalid_prefix[r] + (rec.valid[r] ? 0 : 1);

  std::vector<std::size_t> offsets{cfg.preferred_change};
  for (std::size_t d = 1; d <= cfg.window; ++d) {
    if (cfg.preferred_change >= d && cfg.preferred_change - d >= cfg.change_lo) offsets.push_back(cfg.preferred_change - d);
    if (cfg.preferred_change + d <= cfg.change_hi) offsets.push_back(cfg.preferred_change + d);
  }

  std::vector<Pamap2Window> out;
  for (const std::size_t b : transitions) {
    // First down-sampled step carrying the new activity.
    const std::size_t change_sample = (b + stride - 1) / stride;
    for (const std::size_t offset : offsets) {
      if (change_sample < offset) continue;
      const std::size_t s = change_sample - offset;
      const std::size_t first = s * stride, last = first + span;
      if (last >= rows) continue;
      std::size_t inside = 0;
      for (const std::size_t q : transitions) inside += q > first && q <= last;
      if (inside != 1) continue;
      if (invalid_prefix[last + 1] - invalid_prefix[first] != 0) continue;
      Pamap2Window w;
      w.source = rec.source;
      w.start_row = first;
      w.change_step = offset;
      w.activity_before = rec.activity[b - 1];
      w.activity_after = rec.activity[b];
      w.values = Tensor(Shape{cfg.window, kPamap2Imus, kPamap2Features});
      for (std::size_t t = 0; t < cfg.window; ++t) {
        const double* src = rec.features.data() + (first + t * stride) * kRowWidth;
        std::copy(src, src + kRowWidth, w.values.data().begin() + static_cast<std::ptrdiff_t>(t * kRowWidth));
      }
      out.push_back(std::move(w));
      break;
    }
  }
  return out;
}

DatasetManifest ingest_pamap2(const std::filesystem::path& raw_dir, const std::filesystem::path& out_dir,
                              const Pamap2Config& cfg) {
  cfg.validate();
  if (!std::filesystem::is_directory(raw_dir)) throw std::runtime_error("raw data directory not found: " + raw_dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(raw_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".dat") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw std::runtime_error("no .dat subject files under " + raw_dir.string());

  std::vector<Pamap2Window> windows;
  for (const auto& f : files) {
    std::ifstream in(f);
    if (!in) throw std::runtime_error("cannot open " + f.string());
    Pamap2Recording rec = parse_pamap2(in, std::filesystem::relative(f, raw_dir).string());
    interpolate_missing(rec, cfg.interpolation_cap);
    for (auto& w : extract_windows(rec, cfg)) windows.push_back(std::move(w));
  }
  if (windows.empty()) throw std::runtime_error("no usable change-point windows found under " + raw_dir.string());

  std::filesystem::create_directories(out_dir / "series");
  DatasetManifest m;
  m.source = "pamap2";
  m.t_steps = cfg.window;
  m.n_nodes = kPamap2Imus;
  m.n_features = kPamap2Features;
  m.feature_names = pamap2_feature_names();
  m.config = {{"downsample", std::to_string(cfg.downsample)},
              {"window", std::to_string(cfg.window)},
              {"change_lo", std::to_string(cfg.change_lo)},
              {"change_hi", std::to_string(cfg.change_hi)},
              {"interpolation_cap", std::to_string(cfg.interpolation_cap)},
              {"files", std::to_string(files.size())}};
  std::vector<Tensor> train_values;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const Pamap2Window& w = windows[i];
    SeriesEntry e;
    char id[32];
    std::snprintf(id, sizeof(id), "pamap2_%05zu", i);
    e.id = id;
    e.path = "series/" + e.id + ".cpdt";
    e.change_step = w.change_step;
    e.change_type = "activity";
    e.split = i < cfg.n_train ? Split::train : (i < cfg.n_train + cfg.n_val ? Split::val : Split::test);
    write_tensor(out_dir / e.path, w.values);
    if (e.split == Split::train) train_values.push_back(w.values);
    m.series.push_back(std::move(e));
  }
  m.scalers = compute_scalers(train_values);
  m.save(out_dir / kManifestFile);
  return m;
}

}  // namespace cordcpd
