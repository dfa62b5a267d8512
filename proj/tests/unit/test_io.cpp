#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "cordcpd/dataset.hpp"
#include "cordcpd/report.hpp"
#include "cordcpd/tensor_io.hpp"
#include "oracles.hpp"

namespace cordcpd {
namespace {

namespace fs = std::filesystem;
using testing::random_tensor;

fs::path temp_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("cordcpd_io_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string encode(const Tensor& t) {
  std::ostringstream out(std::ios::binary);
  write_tensor(out, t);
  return out.str();
}

Tensor decode(const std::string& bytes) {
  std::istringstream in(bytes, std::ios::binary);
  return read_tensor(in);
}

TEST(TensorFile, RoundTripIsBitExact) {
  Rng rng(1);
  Tensor t = random_tensor({3, 4, 5}, rng);
  t[0] = -0.0;
  t[1] = std::numeric_limits<double>::denorm_min();
  t[2] = 1e308;
  const Tensor back = decode(encode(t));
  EXPECT_EQ(back.shape(), t.shape());
  EXPECT_EQ(std::memcmp(back.data().data(), t.data().data(), t.size() * sizeof(double)), 0);
}

TEST(TensorFile, HeaderLayout) {
  const std::string bytes = encode(Tensor(Shape{2, 3}, 1.0));
  EXPECT_EQ(bytes.substr(0, 4), "CPDT");
  EXPECT_EQ(bytes.size(), 4 + 4 + 4 + 2 * 4 + 6 * 8u);
  EXPECT_EQ(static_cast<unsigned char>(bytes[12]), 2);  // first dim, little endian
  EXPECT_EQ(static_cast<unsigned char>(bytes[16]), 3);
}

TEST(TensorFile, CorruptionIsRejected) {
  const std::string good = encode(Tensor(Shape{2, 3}, 1.0));
  std::string bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode(bad_magic), FormatError);
  std::string bad_version = good;
  bad_version[4] = 9;
  EXPECT_THROW(decode(bad_version), FormatError);
  EXPECT_THROW(decode(good.substr(0, good.size() - 1)), FormatError);
  EXPECT_THROW(decode(good.substr(0, 6)), FormatError);
  EXPECT_THROW(decode(good + "x"), FormatError);
  std::string zero_dim = good;
  zero_dim[12] = 0;
  EXPECT_THROW(decode(zero_dim), FormatError);
}

TEST(TensorFile, PathRoundTripAndMissingFile) {
  const fs::path dir = temp_dir("tensor");
  Rng rng(2);
  const Tensor t = random_tensor({4, 2}, rng);
  write_tensor(dir / "t.cpdt", t);
  EXPECT_EQ(read_tensor(dir / "t.cpdt").storage(), t.storage());
  EXPECT_ANY_THROW(read_tensor(dir / "none.cpdt"));
}

TEST(FormatNumber, ShortestRoundTrip) {
  EXPECT_EQ(format_number(0.1), "0.1");
  EXPECT_EQ(format_number(1.0), "1");
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const double v = rng.normal() * std::pow(10.0, rng.uniform_int(-30, 30));
    EXPECT_EQ(std::stod(format_number(v)), v);
  }
}

TEST(CsvTable, RoundTripAndErrors) {
  const fs::path dir = temp_dir("csv");
  CsvTable t;
  t.header = {"a", "b"};
  t.rows = {{"1", "x"}, {"2", "y"}};
  t.write(dir / "t.csv");
  const CsvTable back = CsvTable::read(dir / "t.csv");
  EXPECT_EQ(back.header, t.header);
  EXPECT_EQ(back.rows, t.rows);
  EXPECT_EQ(back.column("b"), 1u);
  EXPECT_THROW(back.column("c"), FormatError);
  std::ofstream(dir / "ragged.csv") << "a,b\n1\n";
  EXPECT_THROW(CsvTable::read(dir / "ragged.csv"), FormatError);
  std::ofstream(dir / "empty.csv") << "";
  EXPECT_THROW(CsvTable::read(dir / "empty.csv"), FormatError);
}

SeriesScores make_scores(const std::string& id, std::size_t n, Rng& rng) {
  SeriesScores s;
  s.series_id = id;
  for (std::size_t i = 0; i < n; ++i) {
    s.scores.s_r.push_back(rng.uniform());
    s.scores.s_d.push_back(rng.uniform());
    s.scores.s_en.push_back(rng.normal());
  }
  return s;
}

TEST(ScoresCsv, RoundTripIsExact) {
  const fs::path dir = temp_dir("scores");
  Rng rng(4);
  const std::vector<SeriesScores> scores = {make_scores("b", 5, rng), make_scores("a", 3, rng)};
  write_scores_csv(dir / "s.csv", scores);
  const auto back = read_scores_csv(dir / "s.csv");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].series_id, "b");
  EXPECT_EQ(back[1].series_id, "a");
  for (std::size_t k = 0; k < 2; ++k) {
    EXPECT_EQ(back[k].scores.s_r, scores[k].scores.s_r);
    EXPECT_EQ(back[k].scores.s_d, scores[k].scores.s_d);
    EXPECT_EQ(back[k].scores.s_en, scores[k].scores.s_en);
  }
  const CsvTable table = CsvTable::read(dir / "s.csv");
  EXPECT_EQ(table.header, (std::vector<std::string>{"series_id", "t", "s_r", "s_d", "s_en"}));
  EXPECT_EQ(table.rows[0][1], "1");
}

TEST(ScoresCsv, RejectsGapsAndBadNumbers) {
  const fs::path dir = temp_dir("scores_bad");
  std::ofstream(dir / "gap.csv") << "series_id,t,s_r,s_d,s_en\na,1,0,0,0\na,3,0,0,0\n";
  EXPECT_THROW(read_scores_csv(dir / "gap.csv"), FormatError);
  std::ofstream(dir / "nan.csv") << "series_id,t,s_r,s_d,s_en\na,1,zero,0,0\n";
  EXPECT_THROW(read_scores_csv(dir / "nan.csv"), FormatError);
  std::ofstream(dir / "header.csv") << "series_id,t,s_r,s_d,s_en\n";
  EXPECT_THROW(read_scores_csv(dir / "header.csv"), FormatError);
}

TEST(ScoreSvg, HasThreeTracesAndMarker) {
  Rng rng(5);
  const auto s = make_scores("x", 20, rng);
  const std::string with = render_score_svg(s, 7);
  const std::string without = render_score_svg(s, std::nullopt);
  EXPECT_EQ(with.rfind("<svg", 0), 0u);
  auto count = [](const std::string& text, const std::string& what) {
    std::size_t n = 0;
    for (auto p = text.find(what); p != std::string::npos; p = text.find(what, p + 1)) ++n;
    return n;
  };
  EXPECT_EQ(count(with, "<polyline"), 3u);
  EXPECT_GT(count(with, "<line"), count(without, "<line"));
}

TEST(Scalers, MaxAbsWithFixedOverrides) {
  Tensor a(Shape{2, 1, 3}, std::vector<double>{1, -4, 0, -2, 3, 0});
  Tensor b(Shape{1, 1, 3}, std::vector<double>{0.5, 1, 0});
  const Tensor both[] = {a, b};
  const auto s = compute_scalers(both, {{2, 10.0}});
  EXPECT_EQ(s.scale, (std::vector<double>{2, 4, 10}));
  EXPECT_EQ(s.center, (std::vector<double>{0, 0, 0}));
  const auto z = compute_scalers(both);
  EXPECT_EQ(z.scale[2], 1.0);
  Tensor x = a;
  s.apply(x);
  EXPECT_DOUBLE_EQ(x[1], -1.0);
  s.invert(x);
  EXPECT_EQ(x.storage(), a.storage());
  Tensor wrong(Shape{2, 2});
  EXPECT_THROW(s.apply(wrong), ShapeError);
}

TEST(TypeCounts, Parsing) {
  EXPECT_EQ(parse_type_counts("1,2,3"), (TypeCounts{1, 2, 3}));
  EXPECT_THROW(parse_type_counts("1,2"), std::invalid_argument);
  EXPECT_THROW(parse_type_counts("1,2,3,4"), std::invalid_argument);
  EXPECT_THROW(parse_type_counts("1,-2,3"), std::invalid_argument);
  EXPECT_THROW(parse_type_counts("1,b,3"), std::invalid_argument);
}

SimConfig short_sim() {
  SimConfig cfg;
  cfg.t_steps = 20;
  cfg.change_window_lo = 5;
  cfg.change_window_hi = 15;
  return cfg;
}

TEST(Dataset, GenerateWritesLoadableManifest) {
  const fs::path dir = temp_dir("dataset");
  SplitCounts counts;
  counts.train = {2, 1, 1};
  counts.val = {1, 0, 1};
  counts.test = {0, 1, 1};
  const DatasetManifest m = generate_dataset(counts, 11, short_sim(), dir);
  EXPECT_EQ(m.series.size(), 8u);
  const Dataset d = Dataset::open(dir / kManifestFile);
  EXPECT_EQ(d.manifest().series.size(), 8u);
  EXPECT_EQ(d.split(Split::train).size(), 4u);
  EXPECT_EQ(d.manifest().scalers.scale[0], 5.0);
  EXPECT_EQ(d.manifest().feature_names, (std::vector<std::string>{"l_x", "l_y", "v_x", "v_y"}));
  for (const auto& s : d.series()) {
    EXPECT_EQ(s.values.shape(), (Shape{20, 5, 4}));
    EXPECT_EQ(s.adjacency.shape(), (Shape{20, 5, 5}));
    EXPECT_GE(s.entry->change_step, 5u);
    EXPECT_LE(s.entry->change_step, 15u);
    Tensor raw = s.values;
    d.manifest().scalers.invert(raw);
    for (std::size_t i = 0; i < raw.size(); ++i) EXPECT_NEAR(raw[i], s.raw[i], 1e-12);
  }
  for (const auto* s : d.split(Split::train))
    for (std::size_t i = 0; i < s->values.size(); ++i) EXPECT_LE(std::abs(s->values[i]), 1.0 + 1e-12);
  EXPECT_EQ(d.find("test_connection_00000").entry->change_type, "connection");
  EXPECT_THROW(d.find("nope"), std::out_of_range);
}

TEST(Dataset, SameSeedSameBytesAndCountsAreIndependent) {
  const fs::path a = temp_dir("det_a"), b = temp_dir("det_b");
  SplitCounts c1;
  c1.train = {1, 1, 1};
  SplitCounts c2 = c1;
  c2.train = {3, 1, 1};
  generate_dataset(c1, 5, short_sim(), a);
  generate_dataset(c2, 5, short_sim(), b);
  for (const char* id : {"train_location_00000", "train_speed_00000", "train_connection_00000"}) {
    const std::string p = std::string("series/") + id + ".cpdt";
    EXPECT_EQ(read_tensor(a / p).storage(), read_tensor(b / p).storage()) << id;
  }
}

TEST(Manifest, SaveLoadRoundTripAndValidation) {
  const fs::path dir = temp_dir("manifest");
  SplitCounts counts;
  counts.train = {1, 1, 1};
  const DatasetManifest m = generate_dataset(counts, 2, short_sim(), dir);
  const DatasetManifest back = DatasetManifest::load(dir / kManifestFile);
  EXPECT_EQ(back.seed, 2u);
  EXPECT_EQ(back.config, m.config);
  EXPECT_EQ(back.scalers.scale, m.scalers.scale);
  ASSERT_EQ(back.series.size(), m.series.size());
  for (std::size_t i = 0; i < m.series.size(); ++i) {
    EXPECT_EQ(back.series[i].id, m.series[i].id);
    EXPECT_EQ(back.series[i].change_step, m.series[i].change_step);
  }
  fs::remove(dir / m.series[0].path);
  EXPECT_ANY_THROW(back.validate(dir));
  std::ofstream(dir / "broken.json") << "{not json";
  EXPECT_THROW(DatasetManifest::load(dir / "broken.json"), FormatError);
}

TEST(Split, Names) {
  EXPECT_EQ(parse_split("val"), Split::val);
  EXPECT_EQ(to_string(Split::test), "test");
  EXPECT_THROW(parse_split("dev"), std::invalid_argument);
}

}  // namespace
}  // namespace cordcpd
