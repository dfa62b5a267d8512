#include "cordcpd/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "cordcpd/report.hpp"
#include "cordcpd/tensor_io.hpp"

namespace cordcpd {

namespace {

using nlohmann::json;

constexpr int kManifestVersion = 1;

void apply_affine(Tensor& x, const NormalizationScalers& s, bool inverse) {
  const std::size_t M = s.features();
  if (x.cols() != M) {
    throw ShapeError("normalization expects " + std::to_string(M) + " features, tensor has shape " +
                     shape_string(x.shape()));
  }
  auto data = x.data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::size_t f = i % M;
    data[i] = inverse ? data[i] * s.scale[f] + s.center[f] : (data[i] - s.center[f]) / s.scale[f];
  }
}

void check_shape(const Tensor& t, const Shape& expected, const std::filesystem::path& path) {
  if (t.shape() != expected) {
    throw ShapeError("file " + path.string() + " has shape " + shape_string(t.shape()) + ", manifest declares " +
                     shape_string(expected));
  }
}

}  // namespace

std::string to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "unknown";
}

Split parse_split(const std::string& text) {
  if (text == "train") return Split::train;
  if (text == "val") return Split::val;
  if (text == "test") return Split::test;
  throw std::invalid_argument("unknown split '" + text + "' (expected train, val or test)");
}

void NormalizationScalers::validate() const {
  if (center.size() != scale.size() || scale.empty()) throw std::invalid_argument("scalers are empty or ragged");
  for (std::size_t f = 0; f < scale.size(); ++f) {
    if (!std::isfinite(center[f]) || !std::isfinite(scale[f]) || !(scale[f] > 0.0)) {
      throw std::invalid_argument("scaler for feature " + std::to_string(f) + " is not finite and positive");
    }
  }
}

void NormalizationScalers::apply(Tensor& x) const { apply_affine(x, *this, false); }
void NormalizationScalers::invert(Tensor& x) const { apply_affine(x, *this, true); }

NormalizationScalers compute_scalers(std::span<const Tensor> train, const std::map<std::size_t, double>& fixed_scales) {
  if (train.empty()) throw std::invalid_argument("cannot compute scalers from an empty training split");
  const std::size_t M = train.front().cols();
  NormalizationScalers s;
  s.center.assign(M, 0.0);
  s.scale.assign(M, 0.0);
  for (const Tensor& x : train) {
    if (x.cols() != M) throw ShapeError("training series disagree on the feature count");
    const auto data = x.data();
    for (std::size_t i = 0; i < data.size(); ++i) s.scale[i % M] = std::max(s.scale[i % M], std::abs(data[i]));
  }
  for (std::size_t f = 0; f < M; ++f) {
    if (!(s.scale[f] > 0.0) || !std::isfinite(s.scale[f])) s.scale[f] = 1.0;
  }
  for (const auto& [f, value] : fixed_scales) {
    if (f >= M) throw std::out_of_range("fixed scale for a feature index beyond the feature count");
    s.scale[f] = value;
  }
  s.validate();
  return s;
}

std::vector<const SeriesEntry*> DatasetManifest::entries(Split split) const {
  std::vector<const SeriesEntry*> out;
  for (const auto& e : series)
    if (e.split == split) out.push_back(&e);
  return out;
}

const SeriesEntry& DatasetManifest::find(const std::string& id) const {
  for (const auto& e : series)
    if (e.id == id) return e;
  throw std::out_of_range("series '" + id + "' is not in the manifest");
}

void DatasetManifest::validate(const std::filesystem::path& directory) const {
  if (t_steps < 2 || n_nodes < 1 || n_features < 1) throw std::invalid_argument("manifest declares an empty shape");
  scalers.validate();
  if (scalers.features() != n_features) throw std::invalid_argument("manifest scalers do not match the feature count");
  const Shape series_shape{t_steps, n_nodes, n_features};
  const Shape adjacency_shape{t_steps, n_nodes, n_nodes};
  for (const auto& e : series) {
    if (e.change_step < 1 || e.change_step >= t_steps) {
      throw std::invalid_argument("series " + e.id + " has change_step " + std::to_string(e.change_step) +
                                  " outside 1.." + std::to_string(t_steps - 1));
    }
    const auto path = directory / e.path;
    if (!std::filesystem::exists(path)) throw std::runtime_error("series file missing: " + path.string());
    check_shape(read_tensor(path), series_shape, path);
    if (!e.adjacency_path.empty()) {
      const auto apath = directory / e.adjacency_path;
      if (!std::filesystem::exists(apath)) throw std::runtime_error("adjacency file missing: " + apath.string());
      check_shape(read_tensor(apath), adjacency_shape, apath);
    }
  }
}

void DatasetManifest::save(const std::filesystem::path& path) const {
  json j;
  j["format_version"] = kManifestVersion;
  j["source"] = source;
  j["seed"] = seed;
  j["shape"] = {{"t_steps", t_steps}, {"n_nodes", n_nodes}, {"n_features", n_features}};
  j["feature_names"] = feature_names;
  j["scalers"] = {{"center", scalers.center}, {"scale", scalers.scale}};
  j["config"] = config;
  json list = json::array();
  for (const auto& e : series) {
    json item = {{"id", e.id},
                 {"path", e.path},
                 {"change_step", e.change_step},
                 {"change_type", e.change_type},
                 {"split", to_string(e.split)}};
    if (!e.adjacency_path.empty()) item["adjacency_path"] = e.adjacency_path;
    list.push_back(std::move(item));
  }
  j["series"] = std::move(list);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open manifest for writing: " + path.string());
  out << j.dump(2) << "\n";
  if (!out) throw std::runtime_error("failed writing manifest: " + path.string());
}

DatasetManifest DatasetManifest::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest: " + path.string());
  DatasetManifest m;
  try {
    const json j = json::parse(in);
    if (j.at("format_version").get<int>() != kManifestVersion) {
      throw FormatError("manifest " + path.string() + ": unsupported format version");
    }
    m.source = j.at("source").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.t_steps = j.at("shape").at("t_steps").get<std::size_t>();
    m.n_nodes = j.at("shape").at("n_nodes").get<std::size_t>();
    m.n_features = j.at("shape").at("n_features").get<std::size_t>();
    m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    m.scalers.center = j.at("scalers").at("center").get<std::vector<double>>();
    m.scalers.scale = j.at("scalers").at("scale").get<std::vector<double>>();
    m.config = j.at("config").get<std::map<std::string, std::string>>();
    for (const auto& item : j.at("series")) {
      SeriesEntry e;
      e.id = item.at("id").get<std::string>();
      e.path = item.at("path").get<std::string>();
      e.change_step = item.at("change_step").get<std::size_t>();
      e.change_type = item.at("change_type").get<std::string>();
      e.split = parse_split(item.at("split").get<std::string>());
      if (item.contains("adjacency_path")) e.adjacency_path = item.at("adjacency_path").get<std::string>();
      m.series.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw FormatError("manifest " + path.string() + ": " + e.what());
  }
  return m;
}

Dataset Dataset::open(const std::filesystem::path& manifest_path) {
  Dataset d;
  d.manifest_ = DatasetManifest::load(manifest_path);
  d.directory_ = manifest_path.parent_path();
  const Shape series_shape{d.manifest_.t_steps, d.manifest_.n_nodes, d.manifest_.n_features};
  const Shape adjacency_shape{d.manifest_.t_steps, d.manifest_.n_nodes, d.manifest_.n_nodes};
  d.manifest_.scalers.validate();
  if (d.manifest_.scalers.features() != d.manifest_.n_features) {
    throw std::invalid_argument("manifest scalers do not match the feature count");
  }
  d.series_.reserve(d.manifest_.series.size());
  for (const auto& e : d.manifest_.series) {
    if (e.change_step < 1 || e.change_step >= d.manifest_.t_steps) {
      throw std::invalid_argument("series " + e.id + " has change_step outside the scored range");
    }
    LoadedSeries s;
    s.entry = &e;
    const auto path = d.directory_ / e.path;
    s.raw = read_tensor(path);
    check_shape(s.raw, series_shape, path);
    s.values = s.raw;
    d.manifest_.scalers.apply(s.values);
    if (!e.adjacency_path.empty()) {
      const auto apath = d.directory_ / e.adjacency_path;
      s.adjacency = read_tensor(apath);
      check_shape(s.adjacency, adjacency_shape, apath);
    }
    d.series_.push_back(std::move(s));
  }
  return d;
}

std::vector<const LoadedSeries*> Dataset::split(Split split) const {
  std::vector<const LoadedSeries*> out;
  for (const auto& s : series_)
    if (s.entry->split == split) out.push_back(&s);
  return out;
}

std::vector<Tensor> Dataset::values(Split split) const {
  std::vector<Tensor> out;
  for (const auto* s : this->split(split)) out.push_back(s->values);
  return out;
}

const LoadedSeries& Dataset::find(const std::string& id) const {
  for (const auto& s : series_)
    if (s.entry->id == id) return s;
  throw std::out_of_range("series '" + id + "' is not in the dataset");
}

TypeCounts parse_type_counts(const std::string& text) {
  TypeCounts counts{0, 0, 0};
  std::stringstream in(text);
  std::string item;
  std::size_t i = 0;
  while (std::getline(in, item, ',')) {
    if (i >= 3) throw std::invalid_argument("counts '" + text + "' must have three comma-separated entries");
    std::size_t used = 0;
    long long v = 0;
    try {
      v = std::stoll(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || v < 0) throw std::invalid_argument("counts '" + text + "' contains an invalid entry");
    counts[i++] = static_cast<std::size_t>(v);
  }
  if (i != 3) throw std::invalid_argument("counts '" + text + "' must have three comma-separated entries");
  return counts;
}

DatasetManifest generate_dataset(const SplitCounts& counts, std::uint64_t seed, const SimConfig& cfg,
                                 const std::filesystem::path& out_dir) {
  cfg.validate();
  std::size_t n_train = 0;
  for (std::size_t c : counts.train) n_train += c;
  if (n_train == 0) throw std::invalid_argument("the training split needs at least one series");

  std::filesystem::create_directories(out_dir / "series");
  std::filesystem::create_directories(out_dir / "adjacency");

  DatasetManifest m;
  m.source = "synthetic";
  m.seed = seed;
  m.t_steps = cfg.t_steps;
  m.n_nodes = cfg.n_particles;
  m.n_features = 4;
  m.feature_names = {"l_x", "l_y", "v_x", "v_y"};
  m.config = {{"n_particles", std::to_string(cfg.n_particles)},
              {"t_steps", std::to_string(cfg.t_steps)},
              {"box_half_width", format_number(cfg.box_half_width)},
              {"spring_constant", format_number(cfg.spring_constant)},
              {"fine_dt", format_number(cfg.fine_dt)},
              {"sample_every", std::to_string(cfg.sample_every)},
              {"connection_prob", format_number(cfg.connection_prob)},
              {"change_window_lo", std::to_string(cfg.change_window_lo)},
              {"change_window_hi", std::to_string(cfg.change_window_hi)},
              {"loc_noise_sigma", format_number(cfg.loc_noise_sigma)},
              {"speed_noise_sigma", format_number(cfg.speed_noise_sigma)},
              {"min_connection_flips", std::to_string(cfg.min_connection_flips)}};

  std::vector<Tensor> train_values;
  const std::pair<Split, const TypeCounts*> plan[] = {
      {Split::train, &counts.train}, {Split::val, &counts.val}, {Split::test, &counts.test}};
  for (const auto& [split, per_type] : plan) {
    for (std::size_t c = 0; c < 3; ++c) {
      const ChangeType type = kAllChangeTypes[c];
      for (std::size_t i = 0; i < (*per_type)[c]; ++i) {
        // The substream index encodes split, type and position so that
        // changing one count leaves every other series untouched.
        const std::uint64_t index = (static_cast<std::uint64_t>(split) << 40) | (static_cast<std::uint64_t>(c) << 32) | i;
        const TrajectorySeries s = generate_series(type, Rng::derive(seed, index, "series"), cfg);
        char id[64];
        std::snprintf(id, sizeof(id), "%s_%s_%05zu", to_string(split).c_str(), to_string(type).c_str(), i);
        SeriesEntry e;
        e.id = id;
        e.path = "series/" + e.id + ".cpdt";
        e.adjacency_path = "adjacency/" + e.id + ".cpdt";
        e.change_step = s.change_step;
        e.change_type = to_string(type);
        e.split = split;
        write_tensor(out_dir / e.path, s.values);
        write_tensor(out_dir / e.adjacency_path, s.adjacency());
        if (split == Split::train) train_values.push_back(s.values);
        m.series.push_back(std::move(e));
      }
    }
  }
  // Locations are scaled by the box so they lie in [-1, 1]; velocities by
  // their training-split maximum.
  m.scalers = compute_scalers(train_values, {{0, cfg.box_half_width}, {1, cfg.box_half_width}});
  m.save(out_dir / kManifestFile);
  return m;
}

}  // namespace cordcpd
