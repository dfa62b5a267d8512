#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "cordcpd/dataset.hpp"
#include "cordcpd/metrics.hpp"
#include "cordcpd/pamap2.hpp"
#include "cordcpd/report.hpp"
#include "cordcpd/scoring.hpp"
#include "cordcpd/simulator.hpp"
#include "cordcpd/tensor_io.hpp"
#include "cordcpd/training.hpp"

namespace cordcpd::cli {

namespace {

namespace fs = std::filesystem;

enum ExitCode : int {
  kOk = 0,
  kInvalidInput = 2,
  kFormat = 3,
  kIo = 4,
  kNumeric = 5,
};

class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

void ensure_parent(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

void require_file(const fs::path& path, const std::string& flag) {
  if (!fs::exists(path)) throw std::runtime_error(flag + ": file not found: " + path.string());
}

fs::path manifest_path(const fs::path& data) {
  return fs::is_directory(data) ? data / kManifestFile : data;
}

std::optional<ChangeLabel> truth_label(const std::string& change_type) {
  if (change_type == "connection") return ChangeLabel::correlation;
  if (change_type == "location" || change_type == "speed") return ChangeLabel::independent;
  return std::nullopt;
}

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

// ---------------------------------------------------------------- simulate

struct SimulateOptions {
  std::string change_type = "all";
  std::string counts = "1,1,1";
  std::string val_counts = "0,0,0";
  std::string test_counts = "0,0,0";
  std::uint64_t seed = 1;
  std::string out;
  SimConfig sim;
};

int cmd_simulate(const SimulateOptions& o, std::ostream& out) {
  SplitCounts counts;
  counts.train = parse_type_counts(o.counts);
  counts.val = parse_type_counts(o.val_counts);
  counts.test = parse_type_counts(o.test_counts);
  if (o.change_type != "all") {
    const ChangeType only = parse_change_type(o.change_type);
    for (std::size_t c = 0; c < 3; ++c) {
      if (kAllChangeTypes[c] == only) continue;
      counts.train[c] = counts.val[c] = counts.test[c] = 0;
    }
  }
  const DatasetManifest m = generate_dataset(counts, o.seed, o.sim, o.out);
  out << "wrote " << m.series.size() << " series to " << o.out << "\n";
  return kOk;
}

// ---------------------------------------------------------------- train

struct TrainOptions {
  std::string data;
  std::string encoder = "rnn:gnn";
  std::size_t hidden = 0;
  std::size_t decoder_hidden = 0;
  std::string decoder_out = "rnn";
  std::string combine = "sum";
  std::string edge_head = "linear";
  std::size_t heads = 4;
  double temperature = 0.5;
  double lambda = 1.0;
  double sigma_sq = 5e-5;
  std::size_t epochs = 50;
  std::size_t batch_size = 0;
  std::size_t patience = 10;
  double lr = 0.001;
  std::uint64_t seed = 1;
  std::string out;
  std::string history;
  bool quiet = false;
};

ModelConfig model_config_from(const TrainOptions& o, const DatasetManifest& m) {
  ModelConfig c;
  const auto colon = o.encoder.find(':');
  if (colon == std::string::npos) throw UsageError("--encoder must be tel:sel, e.g. rnn:gnn");
  c.encoder.tel_kind = parse_tel_kind(o.encoder.substr(0, colon));
  c.encoder.sel_kind = parse_sel_kind(o.encoder.substr(colon + 1));
  if (c.encoder.tel_kind == TelKind::transformer && c.encoder.sel_kind == SelKind::transformer) {
    throw UsageError("--encoder transformer:transformer is not supported");
  }
  const bool any_transformer =
      c.encoder.tel_kind == TelKind::transformer || c.encoder.sel_kind == SelKind::transformer;
  c.encoder.hidden_dim = o.hidden ? o.hidden : (any_transformer ? 64 : 256);
  c.encoder.n_attention_heads = o.heads;
  c.encoder.gumbel_temperature = o.temperature;
  c.encoder.edge_head = parse_edge_head_kind(o.edge_head);
  c.decoder.out_kind = parse_out_kind(o.decoder_out);
  c.decoder.combine = parse_combine_kind(o.combine);
  c.decoder.hidden_dim = o.decoder_hidden ? o.decoder_hidden : c.encoder.hidden_dim;
  c.decoder.lambda_smooth = o.lambda;
  c.decoder.sigma_sq = o.sigma_sq;
  c.n_nodes = m.n_nodes;
  c.n_features = m.n_features;
  c.init_seed = o.seed;
  c.validate();
  return c;
}

int cmd_train(const TrainOptions& o, std::ostream& out, std::ostream& err) {
  const fs::path mpath = manifest_path(o.data);
  require_file(mpath, "--data");
  const Dataset data = Dataset::open(mpath);
  const ModelConfig mc = model_config_from(o, data.manifest());
  TrainConfig tc;
  tc.lr = o.lr;
  tc.epochs = o.epochs;
  tc.patience = o.patience;
  tc.seed = o.seed;
  tc.batch_size = o.batch_size ? o.batch_size : TrainConfig::default_batch_size(mc.encoder);
  const std::vector<Tensor> train = data.values(Split::train);
  const std::vector<Tensor> val = data.values(Split::val);
  if (train.empty()) throw std::invalid_argument("--data: dataset has no training series");

  FitResult result = fit(mc, train, val, tc, [&](const EpochStats& s) {
    if (!o.quiet) {
      err << "epoch " << s.epoch << "/" << tc.epochs << "  train " << fixed(s.train_loss, 3) << "  val "
          << fixed(s.validation_loss, 3) << "  (" << fixed(s.seconds, 1) << "s)\n";
    }
  });
  ensure_parent(o.out);
  save_checkpoint(result.best, o.out);
  if (!o.history.empty()) {
    CsvTable t;
    t.header = {"epoch", "train_loss", "validation_loss"};
    for (const auto& s : result.history) {
      t.rows.push_back({std::to_string(s.epoch), format_number(s.train_loss), format_number(s.validation_loss)});
    }
    ensure_parent(o.history);
    t.write(o.history);
  }
  out << "best epoch " << result.best.epoch << " validation loss " << fixed(result.best.validation_loss, 4)
      << "; checkpoint written to " << o.out << "\n";
  return kOk;
}

// ---------------------------------------------------------------- score

struct ScoreOptions {
  std::string checkpoint;
  std::string data;
  std::string split = "test";
  std::size_t window_k = 5;
  bool oracle = false;
  std::string out;
  std::string accuracy_out;
};

std::vector<const LoadedSeries*> select_split(const Dataset& data, const std::string& split) {
  if (split == "all") {
    std::vector<const LoadedSeries*> out;
    for (const auto& s : data.series()) out.push_back(&s);
    return out;
  }
  return data.split(parse_split(split));
}

int cmd_score(const ScoreOptions& o, std::ostream& out) {
  if (o.window_k < 1) throw UsageError("--window-k must be at least 1");
  const fs::path mpath = manifest_path(o.data);
  require_file(mpath, "--data");
  const Dataset data = Dataset::open(mpath);
  const auto selected = select_split(data, o.split);
  if (selected.empty()) throw std::invalid_argument("--split " + o.split + " selects no series");

  std::unique_ptr<CordModel> model;
  if (!o.oracle) {
    if (o.checkpoint.empty()) throw UsageError("--checkpoint is required unless --oracle is given");
    require_file(o.checkpoint, "--checkpoint");
    model = restore(load_checkpoint(o.checkpoint));
    if (model->config().n_nodes != data.manifest().n_nodes ||
        model->config().n_features != data.manifest().n_features) {
      throw std::invalid_argument("--checkpoint was trained on " + std::to_string(model->config().n_nodes) + "x" +
                                  std::to_string(model->config().n_features) + " series but --data holds " +
                                  std::to_string(data.manifest().n_nodes) + "x" +
                                  std::to_string(data.manifest().n_features));
    }
  } else if (!o.accuracy_out.empty()) {
    throw UsageError("--accuracy-out needs a trained model, not --oracle");
  }

  std::vector<SeriesScores> scores;
  CsvTable accuracy;
  accuracy.header = {"series_id", "p_acc"};
  for (const LoadedSeries* s : selected) {
    SeriesScores entry{s->entry->id, {}};
    if (o.oracle) {
      if (s->adjacency.size() == 0) {
        throw std::invalid_argument("--oracle: series " + s->entry->id + " has no ground-truth connections");
      }
      entry.scores.k = o.window_k;
      entry.scores.s_r = correlation_change_score(s->adjacency);
      entry.scores.s_d.assign(entry.scores.s_r.size(), 0.0);
      entry.scores.s_en = ensemble_score(entry.scores.s_r, entry.scores.s_d);
    } else {
      entry.scores = score_series(*model, s->values, o.window_k);
      if (!o.accuracy_out.empty() && s->adjacency.size() != 0) {
        const double p = correlation_accuracy(correlation_matrices(*model, s->values), s->adjacency);
        accuracy.rows.push_back({s->entry->id, format_number(p)});
      }
    }
    scores.push_back(std::move(entry));
  }
  ensure_parent(o.out);
  write_scores_csv(o.out, scores);
  if (!o.accuracy_out.empty()) {
    ensure_parent(o.accuracy_out);
    accuracy.write(o.accuracy_out);
  }
  out << "scored " << scores.size() << " series; scores written to " << o.out << "\n";
  return kOk;
}

// ---------------------------------------------------------------- evaluate

struct EvaluateOptions {
  std::string scores;
  std::string data;
  double tri_margin = 15.0;
  std::size_t auc_tolerance = 0;
  std::string accuracy;
  std::string out;
};

struct GroupMetrics {
  std::vector<double> auc_en, auc_r, auc_d, tri_values, p_acc;
};

int cmd_evaluate(const EvaluateOptions& o, std::ostream& out) {
  EvalConfig ec;
  ec.tri_margin = o.tri_margin;
  ec.auc_tolerance = o.auc_tolerance;
  ec.validate();
  require_file(o.scores, "--scores");
  const fs::path mpath = manifest_path(o.data);
  require_file(mpath, "--data");
  const DatasetManifest manifest = DatasetManifest::load(mpath);
  const auto scores = read_scores_csv(o.scores);

  std::map<std::string, double> accuracy;
  if (!o.accuracy.empty()) {
    require_file(o.accuracy, "--accuracy");
    const CsvTable t = CsvTable::read(o.accuracy);
    const std::size_t c_id = t.column("series_id"), c_p = t.column("p_acc");
    for (const auto& row : t.rows) accuracy[row[c_id]] = std::stod(row[c_p]);
  }

  std::map<std::string, GroupMetrics> groups;
  std::vector<std::string> order;
  for (const auto& s : scores) {
    const SeriesEntry& e = manifest.find(s.series_id);
    if (s.scores.size() + 1 != manifest.t_steps) {
      throw FormatError("--scores: series " + s.series_id + " has " + std::to_string(s.scores.size()) +
                        " steps, expected " + std::to_string(manifest.t_steps - 1));
    }
    for (const std::string& g : {e.change_type, std::string("all")}) {
      if (!groups.count(g)) order.push_back(g);
      GroupMetrics& m = groups[g];
      m.auc_en.push_back(step_auc(s.scores.s_en, e.change_step, ec.auc_tolerance));
      m.auc_r.push_back(step_auc(s.scores.s_r, e.change_step, ec.auc_tolerance));
      m.auc_d.push_back(step_auc(s.scores.s_d, e.change_step, ec.auc_tolerance));
      m.tri_values.push_back(tri(static_cast<double>(predict_change_point(s.scores.s_en)),
                                 static_cast<double>(e.change_step), ec.tri_margin));
      if (const auto it = accuracy.find(s.series_id); it != accuracy.end()) m.p_acc.push_back(it->second);
    }
  }
  // "all" last, data types in first-seen order.
  std::stable_partition(order.begin(), order.end(), [](const std::string& g) { return g != "all"; });

  CsvTable report;
  report.header = {"group", "n", "auc_en", "auc_r", "auc_d", "tri", "p_acc"};
  out << "group         n   AUC_en  AUC_r   AUC_d   TRI     p_acc\n";
  for (const auto& g : order) {
    const GroupMetrics& m = groups[g];
    const std::string p = m.p_acc.empty() ? "" : format_number(mean(m.p_acc));
    report.rows.push_back({g, std::to_string(m.auc_en.size()), format_number(mean(m.auc_en)),
                           format_number(mean(m.auc_r)), format_number(mean(m.auc_d)),
                           format_number(mean(m.tri_values)), p});
    char line[160];
    std::snprintf(line, sizeof(line), "%-12s %3zu  %.4f  %.4f  %.4f  %.4f  %s\n", g.c_str(), m.auc_en.size(),
                  mean(m.auc_en), mean(m.auc_r), mean(m.auc_d), mean(m.tri_values),
                  m.p_acc.empty() ? "-" : fixed(mean(m.p_acc)).c_str());
    out << line;
  }
  if (!o.out.empty()) {
    ensure_parent(o.out);
    report.write(o.out);
  }
  return kOk;
}

// ---------------------------------------------------------------- classify

struct ClassifyOptions {
  std::string scores;
  std::string data;
  double alpha = 0.75;
  double tau = 0.0;
  bool with_label = true;
  bool without_label = false;
  std::string out;
};

int cmd_classify(const ClassifyOptions& o, std::ostream& out) {
  if (o.alpha < 0.0) throw UsageError("--alpha must be non-negative");
  require_file(o.scores, "--scores");
  const auto scores = read_scores_csv(o.scores);
  const bool with_label = !o.without_label;
  std::optional<DatasetManifest> manifest;
  if (!o.data.empty()) {
    const fs::path mpath = manifest_path(o.data);
    require_file(mpath, "--data");
    manifest = DatasetManifest::load(mpath);
  } else if (with_label) {
    throw UsageError("--with-label needs --data for the change-point labels");
  }

  CsvTable table;
  table.header = {"series_id", "mode", "step", "discriminant", "label", "true_label"};
  std::vector<ChangeTypeDecision> decisions;
  std::vector<ChangeLabel> truth;
  std::vector<std::string> groups;
  for (const auto& s : scores) {
    const SeriesEntry* e = manifest ? &manifest->find(s.series_id) : nullptr;
    std::optional<std::size_t> step;
    if (with_label) step = e->change_step;
    const ChangeTypeDecision d = classify_change_type(s.scores.s_r, s.scores.s_d, step, o.alpha, o.tau);
    const auto actual = e ? truth_label(e->change_type) : std::nullopt;
    table.rows.push_back({s.series_id, to_string(d.mode), std::to_string(d.predicted_step),
                          format_number(d.discriminant), to_string(d.label), actual ? to_string(*actual) : ""});
    if (actual) {
      decisions.push_back(d);
      truth.push_back(*actual);
      groups.push_back(e->change_type);
    }
  }
  if (!o.out.empty()) {
    ensure_parent(o.out);
    table.write(o.out);
  }
  if (!decisions.empty()) {
    const bool both = std::count(truth.begin(), truth.end(), ChangeLabel::correlation) > 0 &&
                      std::count(truth.begin(), truth.end(), ChangeLabel::independent) > 0;
    if (both) {
      const ClassificationReport r = classification_report(decisions, truth, groups);
      out << "roc_auc " << fixed(r.roc_auc) << "\n";
      for (const auto& [g, acc] : r.accuracy) out << "accuracy " << g << " " << fixed(acc) << "\n";
    } else {
      std::map<std::string, std::pair<std::size_t, std::size_t>> acc;
      for (std::size_t i = 0; i < decisions.size(); ++i) {
        acc[groups[i]].first += decisions[i].label == truth[i];
        acc[groups[i]].second += 1;
      }
      out << "roc_auc unavailable (single class)\n";
      for (const auto& [g, c] : acc) {
        out << "accuracy " << g << " " << fixed(static_cast<double>(c.first) / static_cast<double>(c.second)) << "\n";
      }
    }
  }
  return kOk;
}

// ---------------------------------------------------------------- ingest-pamap2

struct IngestOptions {
  std::string raw;
  std::string out;
  Pamap2Config cfg;
};

int cmd_ingest(const IngestOptions& o, std::ostream& out) {
  const DatasetManifest m = ingest_pamap2(o.raw, o.out, o.cfg);
  std::size_t counts[3] = {0, 0, 0};
  for (const auto& e : m.series) counts[static_cast<int>(e.split)] += 1;
  out << "extracted " << m.series.size() << " windows (train " << counts[0] << ", val " << counts[1] << ", test "
      << counts[2] << ") into " << o.out << "\n";
  return kOk;
}

// ---------------------------------------------------------------- plot

struct PlotOptions {
  std::string scores;
  std::string series_id;
  std::string data;
  long long label_step = -1;
  std::string out;
};

int cmd_plot(const PlotOptions& o, std::ostream& out) {
  require_file(o.scores, "--scores");
  const auto all = read_scores_csv(o.scores);
  const auto it = std::find_if(all.begin(), all.end(), [&](const SeriesScores& s) { return s.series_id == o.series_id; });
  if (it == all.end()) throw std::invalid_argument("--series-id " + o.series_id + " is not in " + o.scores);
  std::optional<std::size_t> label;
  if (o.label_step >= 0) {
    label = static_cast<std::size_t>(o.label_step);
  } else if (!o.data.empty()) {
    const fs::path mpath = manifest_path(o.data);
    require_file(mpath, "--data");
    label = DatasetManifest::load(mpath).find(o.series_id).change_step;
  }
  fs::path svg_path = o.out;
  if (svg_path.extension() != ".svg") svg_path += ".svg";
  fs::path csv_path = svg_path;
  csv_path.replace_extension(".csv");
  ensure_parent(svg_path);
  {
    std::ofstream f(svg_path, std::ios::trunc);
    if (!f) throw std::runtime_error("--out: cannot write " + svg_path.string());
    f << render_score_svg(*it, label);
  }
  CsvTable t;
  t.header = {"t", "s_r", "s_d", "s_en", "label"};
  for (std::size_t i = 0; i < it->scores.size(); ++i) {
    const std::size_t step = ScoreTriple::step_of(i);
    t.rows.push_back({std::to_string(step), format_number(it->scores.s_r[i]), format_number(it->scores.s_d[i]),
                      format_number(it->scores.s_en[i]), label && *label == step ? "1" : "0"});
  }
  t.write(csv_path);
  out << "wrote " << svg_path.string() << " and " << csv_path.string() << "\n";
  return kOk;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

/// Removes `--config FILE` from args and appends `--key=value` for every
/// key in the file that the command line does not already set.
std::vector<std::string> expand_config(std::vector<std::string> args) {
  std::string file;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw UsageError("--config needs a file name");
      file = args[i + 1];
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i + 2));
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      file = args[i].substr(9);
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
      break;
    }
  }
  if (file.empty()) return args;
  require_file(file, "--config");
  std::ifstream in(file);
  if (!in) throw std::runtime_error("--config: cannot read " + file);
  auto given = [&](const std::string& flag) {
    return std::any_of(args.begin(), args.end(),
                       [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
  };
  std::vector<std::string> extra;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos || trim(line.substr(0, eq)).empty()) {
      throw FormatError("--config " + file + ":" + std::to_string(line_no) + ": expected key=value");
    }
    std::string key = trim(line.substr(0, eq));
    if (key.rfind("--", 0) != 0) key = "--" + key;
    if (!given(key)) extra.push_back(key + "=" + trim(line.substr(eq + 1)));
  }
  args.insert(args.end(), extra.begin(), extra.end());
  return args;
}

void add_seed(CLI::App* app, std::uint64_t& seed) {
  app->add_option("--seed", seed, "Random seed")->envname("CORDCPD_SEED")->capture_default_str();
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Correlation-aware change-point detection for multivariate time series", "cordcpd"};
  app.footer("Any subcommand accepts --config FILE with key=value lines naming its long flags; flags given on the\n"
             "command line take precedence.");
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  SimulateOptions sim;
  auto* simulate = app.add_subcommand("simulate", "Generate the particle-spring benchmark");
  simulate->add_option("--change-type", sim.change_type, "location, speed, connection or all")->capture_default_str();
  simulate->add_option("--counts", sim.counts, "Training series per type: location,speed,connection")->capture_default_str();
  simulate->add_option("--val-counts", sim.val_counts, "Validation series per type")->capture_default_str();
  simulate->add_option("--test-counts", sim.test_counts, "Test series per type")->capture_default_str();
  add_seed(simulate, sim.seed);
  simulate->add_option("--out", sim.out, "Output directory")->required();
  simulate->add_option("--n-particles", sim.sim.n_particles)->capture_default_str();
  simulate->add_option("--t-steps", sim.sim.t_steps)->capture_default_str();
  simulate->add_option("--box-half-width", sim.sim.box_half_width)->capture_default_str();
  simulate->add_option("--spring-constant", sim.sim.spring_constant)->capture_default_str();
  simulate->add_option("--fine-dt", sim.sim.fine_dt)->capture_default_str();
  simulate->add_option("--sample-every", sim.sim.sample_every)->capture_default_str();
  simulate->add_option("--connection-prob", sim.sim.connection_prob)->capture_default_str();
  simulate->add_option("--change-window-lo", sim.sim.change_window_lo)->capture_default_str();
  simulate->add_option("--change-window-hi", sim.sim.change_window_hi)->capture_default_str();
  simulate->add_option("--loc-noise-sigma", sim.sim.loc_noise_sigma)->capture_default_str();
  simulate->add_option("--speed-noise-sigma", sim.sim.speed_noise_sigma)->capture_default_str();
  simulate->add_option("--min-connection-flips", sim.sim.min_connection_flips)->capture_default_str();
  simulate->add_option("--init-position-sigma", sim.sim.init_position_sigma)->capture_default_str();
  simulate->add_option("--init-speed", sim.sim.init_speed)->capture_default_str();

  TrainOptions tr;
  auto* train = app.add_subcommand("train", "Train the encoder-decoder model");
  train->add_option("--data", tr.data, "Dataset directory or manifest.json")->required();
  train->add_option("--encoder", tr.encoder, "Temporal:spatial layer kinds (rnn|transformer):(gnn|transformer)")
      ->capture_default_str();
  train->add_option("--hidden", tr.hidden, "Encoder width (default 256 with gnn, 64 with a transformer)");
  train->add_option("--decoder-hidden", tr.decoder_hidden, "Decoder width (default: encoder width)");
  train->add_option("--decoder-out", tr.decoder_out, "Output head: rnn or mlp")->capture_default_str();
  train->add_option("--combine", tr.combine, "Node update input: sum or concat")->capture_default_str();
  train->add_option("--edge-head", tr.edge_head, "Edge classifier on node pairs: linear or mlp")->capture_default_str();
  train->add_option("--heads", tr.heads, "Attention heads")->capture_default_str();
  train->add_option("--temperature", tr.temperature, "Gumbel-Softmax temperature")->capture_default_str();
  train->add_option("--lambda", tr.lambda, "Smoothness weight")->capture_default_str();
  train->add_option("--sigma-sq", tr.sigma_sq, "Gaussian variance of the reconstruction term")->capture_default_str();
  train->add_option("--epochs", tr.epochs)->capture_default_str();
  train->add_option("--batch-size", tr.batch_size, "Default 128 with gnn, 32 with a transformer");
  train->add_option("--patience", tr.patience, "Early-stopping patience in epochs")->capture_default_str();
  train->add_option("--lr", tr.lr, "Adam learning rate")->capture_default_str();
  add_seed(train, tr.seed);
  train->add_option("--out", tr.out, "Checkpoint path")->required();
  train->add_option("--history", tr.history, "Optional CSV of per-epoch losses");
  train->add_flag("--quiet", tr.quiet, "Suppress per-epoch progress");

  ScoreOptions sc;
  auto* score = app.add_subcommand("score", "Compute change-point scores");
  score->add_option("--checkpoint", sc.checkpoint, "Trained checkpoint");
  score->add_option("--data", sc.data, "Dataset directory or manifest.json")->required();
  score->add_option("--split", sc.split, "train, val, test or all")->capture_default_str();
  score->add_option("--window-k", sc.window_k, "Rollout window length")->capture_default_str();
  score->add_flag("--oracle", sc.oracle, "Score ground-truth connections instead of a model");
  score->add_option("--out", sc.out, "Scores CSV")->required();
  score->add_option("--accuracy-out", sc.accuracy_out, "Optional CSV of per-series correlation accuracy");

  EvaluateOptions ev;
  auto* evaluate = app.add_subcommand("evaluate", "AUC and TRI per change type");
  evaluate->add_option("--scores", ev.scores, "Scores CSV")->required();
  evaluate->add_option("--data", ev.data, "Dataset directory or manifest.json")->required();
  evaluate->add_option("--tri-margin", ev.tri_margin)->capture_default_str();
  evaluate->add_option("--auc-tolerance", ev.auc_tolerance, "Half-width of the positive window in steps")
      ->capture_default_str();
  evaluate->add_option("--accuracy", ev.accuracy, "Correlation accuracy CSV from score --accuracy-out");
  evaluate->add_option("--out", ev.out, "Report CSV");

  ClassifyOptions cl;
  auto* classify = app.add_subcommand("classify", "Classify change-point types");
  classify->add_option("--scores", cl.scores, "Scores CSV")->required();
  classify->add_option("--data", cl.data, "Dataset directory or manifest.json (labels)");
  classify->add_option("--alpha", cl.alpha)->capture_default_str();
  classify->add_option("--tau", cl.tau)->capture_default_str();
  auto* with_flag = classify->add_flag("--with-label", cl.with_label, "Classify at the labelled step (default)");
  classify->add_flag("--without-label", cl.without_label, "Classify at the predicted step")->excludes(with_flag);
  classify->add_option("--out", cl.out, "Decisions CSV");

  IngestOptions in;
  auto* ingest = app.add_subcommand("ingest-pamap2", "Build a dataset from raw PAMAP2 subject files");
  ingest->add_option("--raw", in.raw, "Directory containing subject .dat files")->required();
  ingest->add_option("--out", in.out, "Output directory")->required();
  ingest->add_option("--downsample", in.cfg.downsample)->capture_default_str();
  ingest->add_option("--window", in.cfg.window)->capture_default_str();
  ingest->add_option("--interpolation-cap", in.cfg.interpolation_cap)->capture_default_str();
  ingest->add_option("--n-train", in.cfg.n_train)->capture_default_str();
  ingest->add_option("--n-val", in.cfg.n_val)->capture_default_str();

  PlotOptions pl;
  auto* plot = app.add_subcommand("plot", "Plot the score traces of one series as SVG plus CSV");
  plot->add_option("--scores", pl.scores, "Scores CSV")->required();
  plot->add_option("--series-id", pl.series_id)->required();
  plot->add_option("--data", pl.data, "Dataset for the change-point label");
  plot->add_option("--label-step", pl.label_step, "Change-point label, overrides --data");
  plot->add_option("--out", pl.out, "SVG path; a CSV is written next to it")->required();

  std::vector<std::string> expanded;
  try {
    expanded = expand_config(args);
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << "\n";
    return kFormat;
  } catch (const std::invalid_argument& e) {
    err << "invalid input: " << e.what() << "\n";
    return kInvalidInput;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kIo;
  }
  std::vector<std::string> reversed(expanded.rbegin(), expanded.rend());
  if (!reversed.empty()) reversed.pop_back();  // program name
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (*simulate) return cmd_simulate(sim, out);
    if (*train) return cmd_train(tr, out, err);
    if (*score) return cmd_score(sc, out);
    if (*evaluate) return cmd_evaluate(ev, out);
    if (*classify) return cmd_classify(cl, out);
    if (*ingest) return cmd_ingest(in, out);
    if (*plot) return cmd_plot(pl, out);
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << "\n";
    return kFormat;
  } catch (const ShapeError& e) {
    err << "shape error: " << e.what() << "\n";
    return kFormat;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::invalid_argument& e) {
    err << "invalid input: " << e.what() << "\n";
    return kInvalidInput;
  } catch (const std::out_of_range& e) {
    err << "invalid input: " << e.what() << "\n";
    return kInvalidInput;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kIo;
  }
  return kInvalidInput;
}

}  // namespace cordcpd::cli
