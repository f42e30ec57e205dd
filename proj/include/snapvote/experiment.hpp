#ifndef SNAPVOTE_EXPERIMENT_HPP_
#define SNAPVOTE_EXPERIMENT_HPP_

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "snapvote/config.hpp"
#include "snapvote/dataset.hpp"
#include "snapvote/ensemble.hpp"
#include "snapvote/metrics.hpp"
#include "snapvote/pretrain.hpp"
#include "snapvote/snapshot.hpp"
#include "snapvote/trainer.hpp"

namespace snapvote {

namespace fs = std::filesystem;

/// Every input set of one experiment, already min-max scaled.
struct PreparedData {
  MinMaxScaler scaler;
  Dataset train;
  Dataset valid;
  Matrix unlabeled;
  Matrix test;
  std::optional<LabelVector> test_labels;
  LabelMapping mapping;
};

/// Independent streams for the stages of one experiment seed.
inline std::uint64_t stage_seed(std::uint64_t seed, std::string_view stage) {
  return io::fnv1a(std::to_string(seed) + "/" + std::string(stage));
}

inline PreparedData prepare_data(const ExperimentConfig& cfg) {
  Dataset labeled;
  Matrix unlabeled;
  Matrix test;
  std::optional<LabelVector> test_labels;
  if (cfg.data.source == DataSource::synthetic) {
    SyntheticData s = generate_synthetic(cfg.data.synthetic);
    labeled = std::move(s.labeled);
    unlabeled = std::move(s.unlabeled.features);
    test = std::move(s.test.features);
    test_labels = std::move(s.test_labels);
  } else {
    CsvSchema schema;
    if (cfg.data.train_labels.empty()) {
      schema.labels = LabelSource::last_column;
    } else {
      schema.labels = LabelSource::separate_file;
      schema.label_file = cfg.data.train_labels;
    }
    labeled = load_csv(cfg.data.train, schema, SplitTag::labeled_train);
    if (!cfg.data.unlabeled.empty()) unlabeled = load_csv(cfg.data.unlabeled, {}, SplitTag::unlabeled).features;
    test = load_csv(cfg.data.test, {}, SplitTag::test).features;
    if (!cfg.data.test_labels.empty()) {
      auto raw = read_label_values(cfg.data.test_labels);
      detail::require(raw.size() == test.rows(), "test label file has " + std::to_string(raw.size()) +
                                                     " labels for " + std::to_string(test.rows()) + " test rows");
      test_labels = map_labels(raw, labeled.mapping);
    }
  }
  const std::size_t d = labeled.features.cols();
  detail::require(test.cols() == d, "test set has " + std::to_string(test.cols()) + " features, training set " +
                                        std::to_string(d));
  detail::require(unlabeled.rows() == 0 || unlabeled.cols() == d,
                  "unlabeled set has " + std::to_string(unlabeled.cols()) + " features, training set " +
                      std::to_string(d));
  detail::require(labeled.classes() >= 2, "training labels must cover at least 2 classes");

  PreparedData out;
  out.mapping = labeled.mapping;
  out.scaler = MinMaxScaler::fit(unlabeled.rows() > 0 ? unlabeled : labeled.features);
  auto split = split_train_valid(labeled, cfg.data.train_fraction, stage_seed(cfg.seed, "split"));
  out.train = std::move(split.train);
  out.valid = std::move(split.valid);
  out.train.features = out.scaler.transform(out.train.features);
  out.valid.features = out.scaler.transform(out.valid.features);
  if (unlabeled.rows() > 0) out.unlabeled = out.scaler.transform(unlabeled);
  out.test = out.scaler.transform(test);
  out.test_labels = std::move(test_labels);
  return out;
}

inline PretrainConfig seeded_pretrain(const ExperimentConfig& cfg) {
  PretrainConfig p = *cfg.pretrain;
  p.hidden_sizes = cfg.architecture.dae;
  p.seed = stage_seed(cfg.seed, "pretrain");
  return p;
}

inline PretrainResult run_pretrain(const ExperimentConfig& cfg, const PreparedData& data) {
  detail::require(cfg.pretrain.has_value(), "model " + std::to_string(cfg.model) + " has no pretraining stage");
  detail::require(data.unlabeled.rows() > 0, "pretraining needs unlabeled data");
  return stack_pretrain(data.unlabeled, seeded_pretrain(cfg));
}

/// Epochs whose snapshot the ensemble (or the plain softmax report) reads.
inline CapturePredicate capture_for(const ExperimentConfig& cfg) {
  const EnsembleSpec spec = cfg.ensemble;
  const std::size_t last = cfg.train.max_epoch;
  switch (spec.kind) {
    case EnsembleKind::horizontal:
    case EnsembleKind::stacked:
    case EnsembleKind::combined:
      return [spec, last](std::size_t e) { return e == last || spec.window.contains(e); };
    case EnsembleKind::vertical:
      return [spec, last](std::size_t e) { return e == last || e == spec.objective_epoch; };
    case EnsembleKind::none:
      break;
  }
  return [last](std::size_t e) { return e == last; };
}

inline TrainResult run_training(const ExperimentConfig& cfg, const PreparedData& data,
                                std::span<const DaeLayer> daes) {
  const std::size_t d = data.train.features.cols();
  const std::size_t classes = data.mapping.classes();
  const std::size_t top = daes.empty() ? d : daes.back().hidden_dim();
  if (!daes.empty())
    detail::require(daes.front().input_dim() == d, "pretrained stack expects " +
                                                       std::to_string(daes.front().input_dim()) +
                                                       " inputs, data has " + std::to_string(d));
  const auto supervised = cfg.supervised_specs(top, classes);
  Rng init(stage_seed(cfg.seed, "init"));
  Network net = init_network(daes, supervised, init);

  TrainingSets sets{data.train.features, *data.train.labels, data.valid.features, *data.valid.labels, data.test};
  TrainConfig tc = cfg.train;
  tc.seed = stage_seed(cfg.seed, "train");
  const std::vector<std::string> reps = cfg.ensemble.needs_layer_reps() ? cfg.ensemble.layers
                                                                        : std::vector<std::string>{};
  TrainResult result = train(net, sets, tc, capture_for(cfg), reps);
  result.store.fingerprint = fingerprint(cfg);
  result.store.run_id = "model" + std::to_string(cfg.model) + "-seed" + std::to_string(cfg.seed) + "-" +
                        result.store.fingerprint;
  return result;
}

/// Predictions of one method on the test set, as class ids.
struct MethodPrediction {
  std::string method;
  std::vector<std::uint32_t> labels;
};

struct EnsembleOutput {
  MethodPrediction primary;
  std::vector<MethodPrediction> per_layer;  // vertical only
  std::size_t feature_width = 0;            // stacked only
};

inline EnsembleSpec seeded_ensemble(const ExperimentConfig& cfg) {
  EnsembleSpec spec = cfg.ensemble;
  spec.classifier.seed = stage_seed(cfg.seed, "forest");
  spec.meta_classifier.seed = stage_seed(cfg.seed, "meta_forest");
  spec.classifier.threads = forest_threads(spec.classifier.threads);
  spec.meta_classifier.threads = forest_threads(spec.meta_classifier.threads);
  return spec;
}

inline EnsembleOutput run_ensemble(const ExperimentConfig& cfg, const SnapshotStore& store,
                                   const LabelVector& train_labels) {
  const EnsembleSpec spec = seeded_ensemble(cfg);
  EnsembleOutput out;
  switch (spec.kind) {
    case EnsembleKind::none: {
      const Snapshot* last = store.at_epoch(cfg.train.max_epoch);
      detail::require(last != nullptr, "no snapshot at the final epoch " + std::to_string(cfg.train.max_epoch));
      out.primary = {"softmax", argmax_rows(last->softmax_test)};
      break;
    }
    case EnsembleKind::vertical: {
      VerticalResult r = vertical_vote(store, spec, train_labels);
      out.primary = {"vertical_vote", std::move(r.voted.labels)};
      for (std::size_t i = 0; i < spec.layers.size(); ++i)
        out.per_layer.push_back({"rf_" + spec.layers[i], argmax_rows(r.per_layer[i].probabilities)});
      break;
    }
    case EnsembleKind::horizontal:
      out.primary = {"horizontal_vote", horizontal_vote(store, spec).labels};
      break;
    case EnsembleKind::combined:
      out.primary = {"combined_vote", combined_vote(store, spec, train_labels).labels};
      break;
    case EnsembleKind::stacked: {
      StackResult r = horizontal_stack(store, spec, train_labels);
      out.primary = {"horizontal_stack", std::move(r.output.labels)};
      out.feature_width = r.feature_width;
      break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// File stages. Each takes the resolved config and an output directory.

inline constexpr const char* kConfigFile = "config.ini";
inline constexpr const char* kStaleFile = "STALE";
inline constexpr const char* kStages[] = {"pretrain", "train", "ensemble", "eval"};

namespace detail {

inline std::string stage_error(std::string_view stage, const std::string& what) {
  return "stage " + std::string(stage) + ": " + what;
}

inline std::size_t stage_index(std::string_view stage) {
  for (std::size_t i = 0; i < std::size(kStages); ++i)
    if (kStages[i] == stage) return i;
  throw InvalidInput("unknown stage '" + std::string(stage) + "'");
}

inline std::string read_text(const fs::path& path) {
  auto in = io::open_in(path, false);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const fs::path& path, const std::string& text) {
  auto out = io::open_out(path, false);
  out << text;
  if (!out) throw FormatError("failed writing '" + path.string() + "'");
}

/// Pins the out dir to one config, refuses to build on top of a failed
/// earlier stage, and flags outputs stale if this stage throws.
inline void run_stage(const ExperimentConfig& cfg, const fs::path& out_dir, std::string_view stage,
                      const std::function<void()>& body) {
  fs::create_directories(out_dir);
  const std::string ini = to_ini(cfg);
  const fs::path cfg_path = out_dir / kConfigFile;
  if (fs::exists(cfg_path)) {
    if (read_text(cfg_path) != ini)
      throw InvalidInput(stage_error(stage, "'" + out_dir.string() + "' holds outputs of a different configuration"));
  } else {
    write_text(cfg_path, ini);
  }
  const fs::path stale = out_dir / kStaleFile;
  if (fs::exists(stale)) {
    std::istringstream in(read_text(stale));
    std::string failed;
    in >> failed;
    if (stage_index(stage) > stage_index(failed))
      throw InvalidInput(stage_error(stage, "outputs are stale after the failed '" + failed + "' stage; rerun it first"));
  }
  try {
    body();
  } catch (const std::exception& e) {
    write_text(stale, std::string(stage) + "\n" + e.what() + "\n");
    throw InvalidInput(stage_error(stage, e.what()));
  }
  if (fs::exists(stale)) fs::remove(stale);
}

}  // namespace detail

inline fs::path daes_path(const fs::path& out_dir) { return out_dir / "pretrain" / "daes.bin"; }

inline void write_pretrain_losses(const fs::path& path, const PretrainResult& r) {
  auto out = io::open_out(path, false);
  out << "layer\tepoch\tloss\n";
  for (std::size_t l = 0; l < r.loss_curves.size(); ++l)
    for (std::size_t e = 0; e < r.loss_curves[l].size(); ++e)
      out << l << '\t' << e << '\t' << io::format_double(r.loss_curves[l][e]) << '\n';
}

/// Returns false (and writes nothing) for presets without pretraining.
inline bool pretrain_stage(const ExperimentConfig& cfg, const fs::path& out_dir) {
  if (!cfg.pretrain) return false;
  detail::run_stage(cfg, out_dir, "pretrain", [&] {
    const PreparedData data = prepare_data(cfg);
    const PretrainResult r = run_pretrain(cfg, data);
    save_daes(daes_path(out_dir), data.scaler, r.layers);
    write_pretrain_losses(out_dir / "pretrain" / "loss.tsv", r);
  });
  return true;
}

inline void train_stage(const ExperimentConfig& cfg, const fs::path& out_dir) {
  detail::run_stage(cfg, out_dir, "train", [&] {
    const PreparedData data = prepare_data(cfg);
    DaeStack stack;
    if (cfg.pretrain) {
      if (!fs::exists(daes_path(out_dir))) throw InvalidInput("no pretrained stack; run the pretrain stage first");
      stack = load_daes(daes_path(out_dir));
      detail::require(stack.scaler == data.scaler, "pretrained stack was fitted on different data");
    }
    const TrainResult r = run_training(cfg, data, stack.layers);
    if (fs::exists(out_dir / "snapshots")) fs::remove_all(out_dir / "snapshots");
    save_store(out_dir, r.store);
    write_curve(out_dir / "curve.tsv", r.curve);
  });
}

inline void write_predictions(const fs::path& path, std::span<const std::uint32_t> labels,
                              const LabelMapping& mapping) {
  auto out = io::open_out(path, false);
  out << "example,label\n";
  for (std::size_t i = 0; i < labels.size(); ++i)
    out << i << ',' << io::format_double(mapping.values.at(labels[i])) << '\n';
}

/// Raw label values of a predictions file, in example order.
inline std::vector<double> read_predictions(const fs::path& path) {
  auto in = io::open_in(path, false);
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != "example,label")
    throw FormatError("'" + path.string() + "' lacks the 'example,label' header");
  std::vector<double> out;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw FormatError("bad prediction line '" + line + "'");
    const std::size_t index = detail::parse_count(detail::trim(line.substr(0, comma)), "example index");
    if (index != out.size()) throw FormatError("'" + path.string() + "': examples out of order at " + line);
    out.push_back(detail::parse_real(detail::trim(line.substr(comma + 1)), "label"));
  }
  return out;
}

inline fs::path prediction_file(const fs::path& out_dir, const std::string& method, bool primary) {
  return primary ? out_dir / "predictions.csv" : out_dir / "predictions" / (method + ".csv");
}

inline void ensemble_stage(const ExperimentConfig& cfg, const fs::path& out_dir) {
  detail::run_stage(cfg, out_dir, "ensemble", [&] {
    const PreparedData data = prepare_data(cfg);
    const SnapshotStore store = load_store(out_dir);
    detail::require(store.fingerprint == fingerprint(cfg), "snapshot store was produced by a different configuration");
    const EnsembleOutput r = run_ensemble(cfg, store, *data.train.labels);
    write_predictions(prediction_file(out_dir, r.primary.method, true), r.primary.labels, data.mapping);
    std::ostringstream listing;
    listing << r.primary.method << "\tpredictions.csv\n";
    for (const auto& p : r.per_layer) {
      write_predictions(prediction_file(out_dir, p.method, false), p.labels, data.mapping);
      listing << p.method << "\tpredictions/" << p.method << ".csv\n";
    }
    detail::write_text(out_dir / "methods.tsv", listing.str());
  });
}

struct AccuracyRow {
  std::string method;
  double accuracy = 0.0;
  std::size_t correct = 0;
  std::size_t total = 0;
  std::string predictions;  // relative to the out dir
};

inline AccuracyRow score_predictions(const std::string& method, const fs::path& out_dir, const std::string& file,
                                     const std::vector<double>& truth) {
  const auto predicted = read_predictions(out_dir / file);
  detail::require(predicted.size() == truth.size(), "'" + file + "' has " + std::to_string(predicted.size()) +
                                                        " predictions for " + std::to_string(truth.size()) +
                                                        " labels");
  detail::require(!truth.empty(), "no test labels to score against");
  AccuracyRow row{method, 0.0, 0, truth.size(), file};
  for (std::size_t i = 0; i < truth.size(); ++i) row.correct += predicted[i] == truth[i];
  row.accuracy = static_cast<double>(row.correct) / static_cast<double>(row.total);
  return row;
}

inline constexpr const char* kAccuracyHeader = "method\taccuracy\tcorrect\ttotal\tpredictions";
inline constexpr const char* kErrorStatsTsvHeader = "window\tsnapshots\tmin\tmax\tmean\tstd";

inline std::string accuracy_line(const AccuracyRow& r) {
  return r.method + "\t" + io::format_double(r.accuracy) + "\t" + std::to_string(r.correct) + "\t" +
         std::to_string(r.total) + "\t" + r.predictions;
}

inline std::string error_stats_line(const ErrorStats& s) {
  return s.window + "\t" + std::to_string(s.count) + "\t" + io::format_double(s.min) + "\t" +
         io::format_double(s.max) + "\t" + io::format_double(s.mean) + "\t" + io::format_double(s.std);
}

inline std::vector<std::pair<std::string, std::string>> read_methods(const fs::path& out_dir) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream in(detail::read_text(out_dir / "methods.tsv"));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw FormatError("bad methods.tsv line '" + line + "'");
    out.emplace_back(line.substr(0, tab), line.substr(tab + 1));
  }
  detail::require(!out.empty(), "methods.tsv lists no predictions");
  return out;
}

inline bool has_window(EnsembleKind k) {
  return k == EnsembleKind::horizontal || k == EnsembleKind::stacked || k == EnsembleKind::combined;
}

/// Scores every emitted prediction file against the answer key and writes
/// the reports. The answer key is copied to labels.csv so the bundle can
/// be re-verified on its own.
inline void eval_stage(const ExperimentConfig& cfg, const fs::path& out_dir) {
  detail::run_stage(cfg, out_dir, "eval", [&] {
    const PreparedData data = prepare_data(cfg);
    if (!data.test_labels) throw InvalidInput("no test labels configured; cannot score predictions");
    const std::vector<double> truth = raw_labels(*data.test_labels, data.mapping);
    save_label_file(out_dir / "labels.csv", truth);

    const auto methods = read_methods(out_dir);
    std::ostringstream acc, per_layer;
    acc << kAccuracyHeader << "\n";
    acc << accuracy_line(score_predictions(methods.front().first, out_dir, methods.front().second, truth)) << "\n";
    detail::write_text(out_dir / "reports" / "accuracy.tsv", acc.str());

    if (cfg.ensemble.kind == EnsembleKind::vertical) {
      per_layer << kAccuracyHeader << "\n";
      for (std::size_t i = 1; i < methods.size(); ++i)
        per_layer << accuracy_line(score_predictions(methods[i].first, out_dir, methods[i].second, truth)) << "\n";
      per_layer << accuracy_line(score_predictions(methods.front().first, out_dir, methods.front().second, truth))
                << "\n";
      detail::write_text(out_dir / "reports" / "per_layer.tsv", per_layer.str());
    }
    if (has_window(cfg.ensemble.kind)) {
      const SnapshotStore store = load_store(out_dir);
      std::ostringstream stats;
      stats << kErrorStatsTsvHeader << "\n" << error_stats_line(error_stats(store, cfg.ensemble.window)) << "\n";
      detail::write_text(out_dir / "reports" / "error_stats.tsv", stats.str());
    }
  });
}

/// pretrain (if any) -> train -> ensemble -> eval.
inline void run_experiment(const ExperimentConfig& cfg, const fs::path& out_dir) {
  pretrain_stage(cfg, out_dir);
  train_stage(cfg, out_dir);
  ensemble_stage(cfg, out_dir);
  eval_stage(cfg, out_dir);
}

// ---------------------------------------------------------------------------
// Report reading, printing and verification.

namespace detail {

inline std::string join_tabs(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) out += (i ? "\t" : "") + fields[i];
  return out;
}

inline std::vector<std::vector<std::string>> read_tsv(const fs::path& path, std::string_view header) {
  std::istringstream in(read_text(path));
  std::string line;
  if (!std::getline(in, line) || line != header)
    throw FormatError("'" + path.string() + "' does not start with the expected header");
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::istringstream ls(line);
    std::string f;
    while (std::getline(ls, f, '\t')) fields.push_back(f);
    rows.push_back(std::move(fields));
  }
  return rows;
}

}  // namespace detail

/// Human-readable summary of a finished bundle.
inline std::string render_report(const fs::path& out_dir) {
  std::ostringstream out;
  char buf[256];
  auto table = [&](const char* title, const fs::path& path) {
    out << title << "\n";
    for (const auto& row : detail::read_tsv(path, kAccuracyHeader)) {
      detail::require(row.size() == 5, "malformed row in '" + path.string() + "'");
      std::snprintf(buf, sizeof buf, "  %-18s %.6f  (%s/%s)\n", row[0].c_str(),
                    detail::parse_real(row[1], "accuracy"), row[2].c_str(), row[3].c_str());
      out << buf;
    }
  };
  table("Test accuracy", out_dir / "reports" / "accuracy.tsv");
  if (fs::exists(out_dir / "reports" / "per_layer.tsv")) {
    out << "\n";
    table("Per-layer accuracy", out_dir / "reports" / "per_layer.tsv");
  }
  if (fs::exists(out_dir / "reports" / "error_stats.tsv")) {
    for (const auto& row : detail::read_tsv(out_dir / "reports" / "error_stats.tsv", kErrorStatsTsvHeader)) {
      detail::require(row.size() == 6, "malformed error_stats.tsv row");
      ErrorStats s;
      s.window = row[0];
      s.count = detail::parse_count(row[1], "snapshot count");
      s.min = detail::parse_real(row[2], "min");
      s.max = detail::parse_real(row[3], "max");
      s.mean = detail::parse_real(row[4], "mean");
      s.std = detail::parse_real(row[5], "std");
      out << "\nValidation error over " << s.count << " snapshots, window " << s.window << "\n";
      out << kErrorStatsHeader << "\n" << format_error_stats_row(s) << "\n";
    }
  }
  return out.str();
}

struct VerifyResult {
  std::size_t checked = 0;
  std::vector<std::string> discrepancies;
  bool ok() const { return discrepancies.empty(); }
};

/// Recomputes every reported number of a bundle from its prediction files,
/// labels.csv and the snapshot manifest.
inline VerifyResult verify_bundle(const fs::path& out_dir) {
  VerifyResult result;
  auto note = [&](std::string what) { result.discrepancies.push_back(std::move(what)); };
  std::vector<double> truth;
  try {
    truth = read_label_values(out_dir / "labels.csv");
  } catch (const std::exception& e) {
    note(std::string("labels.csv: ") + e.what());
    return result;
  }
  auto check_table = [&](const fs::path& path) {
    std::vector<std::vector<std::string>> rows;
    try {
      rows = detail::read_tsv(path, kAccuracyHeader);
    } catch (const std::exception& e) {
      note(e.what());
      return;
    }
    for (const auto& row : rows) {
      ++result.checked;
      if (row.size() != 5) {
        note(path.filename().string() + ": malformed row");
        continue;
      }
      try {
        const AccuracyRow again = score_predictions(row[0], out_dir, row[4], truth);
        if (accuracy_line(again) != detail::join_tabs(row))
          note(path.filename().string() + ": " + row[0] + " reports " + row[1] + " (" + row[2] + "/" + row[3] +
               "), recomputed " + io::format_double(again.accuracy) + " (" + std::to_string(again.correct) + "/" +
               std::to_string(again.total) + ")");
      } catch (const std::exception& e) {
        note(path.filename().string() + ": " + row[0] + ": " + e.what());
      }
    }
  };
  check_table(out_dir / "reports" / "accuracy.tsv");
  if (fs::exists(out_dir / "reports" / "per_layer.tsv")) check_table(out_dir / "reports" / "per_layer.tsv");
  if (fs::exists(out_dir / "reports" / "error_stats.tsv")) {
    try {
      const ExperimentConfig cfg = load_config(out_dir / kConfigFile);
      const SnapshotStore store = load_store(out_dir);
      const std::string expected = error_stats_line(error_stats(store, cfg.ensemble.window));
      for (const auto& row : detail::read_tsv(out_dir / "reports" / "error_stats.tsv", kErrorStatsTsvHeader)) {
        ++result.checked;
        if (detail::join_tabs(row) != expected) note("error_stats.tsv: reported '" + detail::join_tabs(row) + "', recomputed '" + expected + "'");
      }
    } catch (const std::exception& e) {
      note(std::string("error_stats.tsv: ") + e.what());
    }
  }
  return result;
}

}  // namespace snapvote

#endif  // SNAPVOTE_EXPERIMENT_HPP_
