#include "cordcpd/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "cordcpd/tensor_io.hpp"

namespace cordcpd {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& text, const std::string& where) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw FormatError(where + ": '" + text + "' is not a number");
  }
  return v;
}

std::string svg_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

}  // namespace

std::string format_number(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw std::runtime_error("number formatting failed");
  return std::string(buf, ptr);
}

std::size_t CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw FormatError("CSV is missing column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

void CsvTable::write(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open CSV for writing: " + path.string());
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
    out << "\n";
  };
  line(header);
  for (const auto& r : rows) line(r);
  if (!out) throw std::runtime_error("failed writing CSV: " + path.string());
}

CsvTable CsvTable::read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open CSV: " + path.string());
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw FormatError("CSV " + path.string() + " is empty");
  t.header = split_csv_line(line);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != t.header.size()) {
      throw FormatError("CSV " + path.string() + ":" + std::to_string(line_no) + ": expected " +
                        std::to_string(t.header.size()) + " fields, found " + std::to_string(cells.size()));
    }
    t.rows.push_back(std::move(cells));
  }
  return t;
}

void write_scores_csv(const std::filesystem::path& path, const std::vector<SeriesScores>& scores) {
  CsvTable t;
  t.header = {"series_id", "t", "s_r", "s_d", "s_en"};
  for (const auto& s : scores) {
    for (std::size_t i = 0; i < s.scores.size(); ++i) {
      t.rows.push_back({s.series_id, std::to_string(ScoreTriple::step_of(i)), format_number(s.scores.s_r[i]),
                        format_number(s.scores.s_d[i]), format_number(s.scores.s_en[i])});
    }
  }
  t.write(path);
}

std::vector<SeriesScores> read_scores_csv(const std::filesystem::path& path) {
  const CsvTable t = CsvTable::read(path);
  const std::size_t c_id = t.column("series_id"), c_t = t.column("t"), c_r = t.column("s_r"), c_d = t.column("s_d"),
                    c_en = t.column("s_en");
  std::vector<SeriesScores> out;
  std::map<std::string, std::size_t> index;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::string where = path.string() + ":" + std::to_string(r + 2);
    auto [it, inserted] = index.emplace(row[c_id], out.size());
    if (inserted) out.push_back({row[c_id], {}});
    SeriesScores& s = out[it->second];
    const double step = parse_double(row[c_t], where);
    if (step != static_cast<double>(s.scores.size() + 1)) {
      throw FormatError(where + ": series " + row[c_id] + " rows must have consecutive t starting at 1");
    }
    s.scores.s_r.push_back(parse_double(row[c_r], where));
    s.scores.s_d.push_back(parse_double(row[c_d], where));
    s.scores.s_en.push_back(parse_double(row[c_en], where));
  }
  if (out.empty()) throw FormatError("score file " + path.string() + " has no rows");
  return out;
}

std::string render_score_svg(const SeriesScores& s, std::optional<std::size_t> label_step) {
  const double width = 720, panel_h = 140, margin_l = 70, margin_r = 20, margin_t = 30, gap = 30;
  const std::size_t n = s.scores.size();
  if (n == 0) throw std::invalid_argument("cannot plot an empty score vector");
  const double plot_w = width - margin_l - margin_r;
  const double height = margin_t + 3 * panel_h + 2 * gap + 40;
  const double t_min = 1.0, t_max = static_cast<double>(n);
  auto x_of = [&](double t) { return margin_l + (n == 1 ? 0.5 : (t - t_min) / (t_max - t_min)) * plot_w; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << " " << height << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << margin_l << "\" y=\"18\" font-size=\"14\">" << s.series_id << "</text>\n";

  const struct {
    const char* name;
    const std::vector<double>* values;
    const char* color;
  } traces[] = {{"s_r", &s.scores.s_r, "#1f77b4"}, {"s_d", &s.scores.s_d, "#ff7f0e"}, {"s_en", &s.scores.s_en, "#2ca02c"}};
  for (std::size_t p = 0; p < 3; ++p) {
    const auto& v = *traces[p].values;
    const double top = margin_t + static_cast<double>(p) * (panel_h + gap);
    double lo = *std::min_element(v.begin(), v.end()), hi = *std::max_element(v.begin(), v.end());
    if (!(hi > lo)) {
      lo -= 0.5;
      hi += 0.5;
    }
    auto y_of = [&](double value) { return top + panel_h - (value - lo) / (hi - lo) * panel_h; };
    svg << "<g class=\"" << traces[p].name << "\">\n";
    svg << "<rect x=\"" << margin_l << "\" y=\"" << top << "\" width=\"" << plot_w << "\" height=\"" << panel_h
        << "\" fill=\"none\" stroke=\"#888\"/>\n";
    svg << "<text x=\"8\" y=\"" << svg_number(top + panel_h / 2) << "\">" << traces[p].name << "</text>\n";
    svg << "<text x=\"" << margin_l - 4 << "\" y=\"" << svg_number(top + 10) << "\" text-anchor=\"end\" font-size=\"9\">"
        << format_number(hi) << "</text>\n";
    svg << "<text x=\"" << margin_l - 4 << "\" y=\"" << svg_number(top + panel_h) << "\" text-anchor=\"end\" font-size=\"9\">"
        << format_number(lo) << "</text>\n";
    svg << "<polyline fill=\"none\" stroke=\"" << traces[p].color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < n; ++i) {
      svg << (i ? " " : "") << svg_number(x_of(static_cast<double>(i + 1))) << "," << svg_number(y_of(v[i]));
    }
    svg << "\"/>\n";
    if (label_step) {
      const double x = x_of(static_cast<double>(*label_step));
      svg << "<line class=\"label\" x1=\"" << svg_number(x) << "\" y1=\"" << top << "\" x2=\"" << svg_number(x)
          << "\" y2=\"" << top + panel_h << "\" stroke=\"#d62728\" stroke-dasharray=\"4 3\"/>\n";
    }
    svg << "</g>\n";
  }
  const double axis_y = margin_t + 3 * panel_h + 2 * gap + 20;
  svg << "<text x=\"" << margin_l << "\" y=\"" << axis_y << "\">t = 1</text>\n";
  svg << "<text x=\"" << margin_l + plot_w << "\" y=\"" << axis_y << "\" text-anchor=\"end\">t = " << n << "</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace cordcpd
