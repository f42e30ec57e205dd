// snapvote: command-line driver for the experiment pipeline.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "snapvote/experiment.hpp"

namespace fs = std::filesystem;
using namespace snapvote;

namespace {

struct GlobalOptions {
  std::optional<std::uint64_t> seed;
  fs::path out_dir = "snapvote-out";
  fs::path config;
  int model = 2;
  bool model_given = false;
};

ExperimentConfig resolve_config(const GlobalOptions& g) {
  ExperimentConfig cfg;
  if (!g.config.empty()) {
    cfg = load_config(g.config);
  } else if (fs::exists(g.out_dir / kConfigFile) && !g.model_given) {
    cfg = load_config(g.out_dir / kConfigFile);
  } else {
    cfg = preset(g.model);
  }
  if (g.seed) cfg.seed = *g.seed;
  cfg.validate();
  return cfg;
}

void gen_data(const GlobalOptions& g) {
  ExperimentConfig cfg = g.config.empty() ? preset(g.model) : load_config(g.config);
  if (g.seed) cfg.data.synthetic.seed = *g.seed;
  const SyntheticData data = generate_synthetic(cfg.data.synthetic);
  fs::create_directories(g.out_dir);
  const auto train_raw = raw_labels(*data.labeled.labels, data.labeled.mapping);
  save_csv(g.out_dir / "train.csv", data.labeled.features, &train_raw);
  save_csv(g.out_dir / "unlabeled.csv", data.unlabeled.features);
  save_csv(g.out_dir / "test.csv", data.test.features);
  save_label_file(g.out_dir / "test_labels.csv", raw_labels(data.test_labels, data.test.mapping));

  ExperimentConfig csv_cfg = cfg;
  csv_cfg.data.source = DataSource::csv;
  const fs::path abs = fs::absolute(g.out_dir);
  csv_cfg.data.train = abs / "train.csv";
  csv_cfg.data.unlabeled = abs / "unlabeled.csv";
  csv_cfg.data.test = abs / "test.csv";
  csv_cfg.data.test_labels = abs / "test_labels.csv";
  auto out = io::open_out(g.out_dir / "experiment.ini", false);
  out << to_ini(csv_cfg);
  std::printf("wrote %zu labeled, %zu unlabeled, %zu test rows (%zu features, %zu classes) to %s\n",
              data.labeled.size(), data.unlabeled.size(), data.test.size(), data.labeled.features.cols(),
              data.labeled.classes(), g.out_dir.string().c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Snapshot-ensemble deep network experiments"};
  app.require_subcommand(1);
  GlobalOptions g;
  std::uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "Experiment seed (gen-data: generator seed)");
  app.add_option("--out-dir", g.out_dir, "Output directory")->capture_default_str();
  app.add_option("--config", g.config, "Experiment config file")->check(CLI::ExistingFile);
  auto* model_opt = app.add_option("--model", g.model, "Preset 1-6 when no config is given")
                        ->check(CLI::Range(1, 6))
                        ->capture_default_str();

  auto* gen = app.add_subcommand("gen-data", "Write the synthetic task as CSV files");
  auto* pre = app.add_subcommand("pretrain", "Greedy autoencoder pretraining on the unlabeled set");
  auto* trn = app.add_subcommand("train", "Supervised fine-tuning with snapshot capture");
  auto* ens = app.add_subcommand("ensemble", "Build the configured ensemble and write predictions");
  auto* evl = app.add_subcommand("eval", "Score predictions and write the reports");
  auto* rep = app.add_subcommand("report", "Print the report tables of a finished run");
  auto* ver = app.add_subcommand("verify", "Recompute every reported number from the emitted files");
  auto* run = app.add_subcommand("run", "pretrain, train, ensemble and eval in one go");
  auto* shw = app.add_subcommand("config", "Print the resolved configuration");

  CLI11_PARSE(app, argc, argv);
  if (*seed_opt) g.seed = seed;
  g.model_given = static_cast<bool>(*model_opt);

  try {
    if (*gen) {
      gen_data(g);
    } else if (*pre) {
      const ExperimentConfig cfg = resolve_config(g);
      if (!pretrain_stage(cfg, g.out_dir)) std::printf("model %d has no pretraining stage; nothing to do\n", cfg.model);
    } else if (*trn) {
      train_stage(resolve_config(g), g.out_dir);
    } else if (*ens) {
      ensemble_stage(resolve_config(g), g.out_dir);
    } else if (*evl) {
      eval_stage(resolve_config(g), g.out_dir);
    } else if (*rep) {
      std::cout << render_report(g.out_dir);
    } else if (*ver) {
      const VerifyResult r = verify_bundle(g.out_dir);
      for (const auto& d : r.discrepancies) std::cout << "discrepancy: " << d << "\n";
      std::cout << "checked " << r.checked << " reported values, " << r.discrepancies.size() << " discrepancies\n";
      return r.ok() ? 0 : 1;
    } else if (*run) {
      const ExperimentConfig cfg = resolve_config(g);
      run_experiment(cfg, g.out_dir);
      std::cout << render_report(g.out_dir);
    } else if (*shw) {
      std::cout << to_ini(resolve_config(g));
    }
  } catch (const std::exception& e) {
    std::cerr << "snapvote: error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
