// Acceptance suite: one PASS/FAIL line per criterion.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "snapvote/experiment.hpp"
#include "support/ensemble_oracle.hpp"
#include "support/forest_oracle.hpp"
#include "support/gradient_check.hpp"
#include "support/pipeline_fixture.hpp"

using namespace snapvote;
using namespace snapvote::testing;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void fail(const std::string& why) {
    if (pass) detail.clear();
    pass = false;
    if (!detail.empty()) detail += "; ";
    detail += why;
  }
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// 1 ------------------------------------------------------------- gradients

Outcome gradient_correctness() {
  struct Case {
    const char* name;
    std::vector<LayerSpec> specs;
  };
  const std::vector<Case> cases{
      {"softmax+nll", {{LayerKind::softmax, 6, 4}}},
      {"sigmoid", {{LayerKind::affine_sigmoid, 6, 16}, {LayerKind::affine_sigmoid, 16, 8}, {LayerKind::softmax, 8, 3}}},
      {"tanh", {{LayerKind::affine_tanh, 6, 16}, {LayerKind::affine_tanh, 16, 7}, {LayerKind::softmax, 7, 3}}},
      {"relu", {{LayerKind::affine_relu, 6, 10}, {LayerKind::affine_relu, 10, 6}, {LayerKind::softmax, 6, 4}}},
      {"maxout k=2",
       {{LayerKind::maxout, 6, 16, 2}, {LayerKind::maxout, 16, 8, 2}, {LayerKind::maxout, 8, 5, 2}, {LayerKind::softmax, 5, 3}}},
      {"maxout k=3", {{LayerKind::maxout, 6, 8, 3}, {LayerKind::maxout, 8, 8, 3}, {LayerKind::softmax, 8, 3}}},
  };
  constexpr std::uint64_t kSeeds = 25;
  Outcome out;
  double worst = 0.0;
  std::size_t checked = 0;
  for (const auto& c : cases) {
    for (std::uint64_t seed = 1; seed <= kSeeds; ++seed) {
      Rng rng(seed * 7919 + c.specs.size());
      Network net = make_network(c.specs, rng);
      for (auto* p : parameter_tensors(net))
        for (double& v : p->values()) v += rng.uniform(-0.1, 0.1);
      const Matrix x = random_matrix(5, c.specs.front().input_dim, rng);
      const LabelVector y = random_labels(5, c.specs.back().output_dim, rng);
      const CheckReport r = check_network_gradients(net, x, y);
      worst = std::max(worst, r.max_relative_error);
      checked += r.checked;
      if (!(r.max_relative_error < 1e-5))
        out.fail(std::string(c.name) + " seed " + std::to_string(seed) + " rel err " + fmt("%.3g", r.max_relative_error));
    }
  }
  for (bool tied : {true, false}) {
    for (std::uint64_t seed = 1; seed <= kSeeds; ++seed) {
      Rng rng(seed + (tied ? 0 : 1000));
      DaeLayer layer = make_dae_layer(7, 5, tied, 0.25, rng);
      for (double& v : layer.encoder_bias.values()) v = rng.uniform(-0.2, 0.2);
      for (double& v : layer.decoder_bias.values()) v = rng.uniform(-0.2, 0.2);
      const Matrix clean = random_matrix(6, 7, rng, 0.0, 1.0);
      const Matrix noisy = corrupt(clean, 0.25, rng);
      const CheckReport r = check_dae_gradients(layer, noisy, clean);
      worst = std::max(worst, r.max_relative_error);
      checked += r.checked;
      if (!(r.max_relative_error < 1e-5))
        out.fail(std::string(tied ? "tied" : "untied") + " dae seed " + std::to_string(seed) + " rel err " +
                 fmt("%.3g", r.max_relative_error));
    }
  }
  if (out.pass)
    out.detail = std::to_string(cases.size()) + " layer kinds + tied/untied DAE x " + std::to_string(kSeeds) +
                 " seeds, " + std::to_string(checked) + " partials, max rel err " + fmt("%.3g", worst) + " < 1e-5";
  return out;
}

// 2 ---------------------------------------------------------- vote oracles

EpochWindow random_window(const SnapshotStore& store, Rng& rng) {
  const std::size_t first = store.epochs().front(), last = store.epochs().back();
  for (;;) {
    const bool strict = rng.bernoulli(0.5);
    const std::size_t low = first - 1 + rng.below(last - first + 2);
    const std::size_t high = low + rng.below(last - first + 3);
    const EpochWindow w = strict ? EpochWindow::strict(low, high) : EpochWindow::inclusive(low, high);
    if (low < high && !store.select(w).empty()) return w;
  }
}

bool same_probabilities(const Matrix& m, const std::vector<std::vector<double>>& ref) {
  return max_abs_diff(m, ref) <= 1e-12;
}

bool same_probabilities(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::abs(a.values()[i] - b.values()[i]) > 1e-12) return false;
  return true;
}

Outcome voting_oracles() {
  constexpr int kCases = 120;
  Outcome out;
  std::size_t counts[4] = {0, 0, 0, 0};
  for (int c = 0; c < kCases; ++c) {
    Rng rng(100 + c);
    StoreShape shape;
    shape.first_epoch = 1 + rng.below(20);
    shape.epochs = 1 + rng.below(9);
    shape.n_train = 6 + rng.below(20);
    shape.n_test = 1 + rng.below(15);
    shape.classes = 2 + rng.below(5);
    shape.layers = {"h5", "h6", "h7"};
    shape.layers.resize(1 + rng.below(3));
    shape.rep_width = 1 + rng.below(5);
    const SnapshotStore store = random_store(shape, rng);
    const LabelVector y = random_labels(shape.n_train, shape.classes, rng);

    EnsembleSpec spec;
    spec.window = random_window(store, rng);
    spec.layers = shape.layers;
    spec.objective_epoch = store.epochs()[rng.below(store.size())];
    spec.classifier.n_trees = 3 + rng.below(5);
    spec.classifier.seed = rng.next_u64();
    spec.classifier.threads = 1 + rng.below(3);
    spec.meta_classifier = spec.classifier;
    spec.meta_classifier.seed = rng.next_u64();
    const std::string tag = " (case " + std::to_string(c) + ")";

    const VoteResult h = horizontal_vote(store, spec);
    const LoopVote ho = oracle_horizontal(store, spec.window);
    if (h.labels != ho.labels || !same_probabilities(h.prediction.probabilities, ho.mean))
      out.fail("horizontal_vote differs" + tag);
    ++counts[0];

    const VerticalResult v = vertical_vote(store, spec, y);
    const LoopVote vo = oracle_vertical(store, spec.layers, spec.classifier, y, spec.objective_epoch);
    if (v.voted.labels != vo.labels || !same_probabilities(v.voted.prediction.probabilities, vo.mean))
      out.fail("vertical_vote differs" + tag);
    ++counts[1];

    const VoteResult cv = combined_vote(store, spec, y);
    const LoopVote co = oracle_combined(store, spec.window, spec.layers, spec.classifier, y);
    if (cv.labels != co.labels || !same_probabilities(cv.prediction.probabilities, co.mean))
      out.fail("combined_vote differs" + tag);
    ++counts[2];

    const StackResult s = horizontal_stack(store, spec, y);
    const StackOracle so = oracle_stack(store, spec.window, spec.meta_classifier, y);
    if (s.output.labels != so.labels || !same_probabilities(s.output.prediction.probabilities, so.probabilities))
      out.fail("horizontal_stack differs" + tag);
    ++counts[3];
  }
  if (out.pass)
    out.detail = std::to_string(counts[0]) + " horizontal, " + std::to_string(counts[1]) + " vertical, " +
                 std::to_string(counts[2]) + " combined, " + std::to_string(counts[3]) +
                 " stacked cases: labels exact, probabilities within 1e-12";
  return out;
}

// 3 ------------------------------------------------------ window accounting

SnapshotStore epoch_store(std::size_t epochs, std::size_t classes, std::size_t rows) {
  SnapshotStore store;
  store.classes = classes;
  Rng rng(3);
  for (std::size_t e = 1; e <= epochs; ++e) {
    Snapshot s;
    s.epoch = e;
    s.softmax_train = random_stochastic(rows, classes, rng);
    s.softmax_valid = Matrix(0, classes);
    s.softmax_test = random_stochastic(rows, classes, rng);
    store.add(std::move(s));
  }
  return store;
}

Outcome window_accounting() {
  Outcome out;
  const SnapshotStore store = epoch_store(1000, kFullClasses, 3);
  Rng rng(33);
  for (int t = 0; t < 2000; ++t) {
    const std::size_t low = rng.below(999);
    const std::size_t high = low + 1 + rng.below(1000 - low);
    const std::size_t strict = store.select(EpochWindow::strict(low, high)).size();
    const std::size_t incl = store.select(EpochWindow::inclusive(std::max<std::size_t>(low, 1), high)).size();
    if (strict != high - low - 1)
      out.fail("strict (" + std::to_string(low) + ", " + std::to_string(high) + ") gave " + std::to_string(strict));
    if (incl != high - std::max<std::size_t>(low, 1) + 1) out.fail("inclusive window miscounted");
  }

  const ExperimentConfig full = preset(6, 1);
  const auto selected = store.select(full.ensemble.window);
  if (selected.size() != 200 || selected.front()->epoch != 651 || selected.back()->epoch != 850)
    out.fail("full-preset window " + full.ensemble.window.describe() + " selected " +
             std::to_string(selected.size()) + " snapshots");
  if (store.select(EpochWindow::strict(650, 851)).size() != 200) out.fail("(650, 851) strict is not 200 snapshots");

  EnsembleSpec spec = full.ensemble;
  spec.meta_classifier.n_trees = 1;
  spec.meta_classifier.threads = 1;
  const LabelVector y({0, 1, 2}, kFullClasses);
  const StackResult stacked = horizontal_stack(store, spec, y);
  if (stacked.feature_width != 200 * kFullClasses || stacked.feature_width != 1800)
    out.fail("stacked width " + std::to_string(stacked.feature_width) + ", expected 1800");

  const ExperimentConfig desk = preset(6);
  EnsembleSpec desk_spec = desk.ensemble;
  desk_spec.meta_classifier.n_trees = 1;
  const std::size_t desk_width = horizontal_stack(store, desk_spec, y).feature_width;
  const std::size_t desk_s = store.select(desk.ensemble.window).size();
  if (desk_width != desk_s * kFullClasses) out.fail("desk stacked width is not S*K");

  if (out.pass)
    out.detail = "2000 random windows: strict H-L-1, inclusive H-L+1; " + full.ensemble.window.describe() +
                 " -> 200 snapshots (651..850); stacked width 200x9 = " + std::to_string(stacked.feature_width) +
                 ", desk " + std::to_string(desk_s) + "x9 = " + std::to_string(desk_width);
  return out;
}

// 4 ------------------------------------------------------ variance reduction

double test_error(const std::vector<std::uint32_t>& predicted, const LabelVector& truth) {
  return 1.0 - accuracy(predicted, truth.labels);
}

// One desk-scale task and one pretrained stack; only the fine-tuning seed
// (initialization, batch order, dropout) changes between the runs.
Outcome variance_reduction() {
  constexpr std::uint64_t kSeeds = 10;
  const ExperimentConfig base = preset(4);
  const PreparedData data = prepare_data(base);
  const PretrainResult stack = run_pretrain(base, data);
  std::vector<double> voted, single, spreads;
  for (std::uint64_t seed = 1; seed <= kSeeds; ++seed) {
    ExperimentConfig cfg = base;
    cfg.seed = seed;
    const TrainResult r = run_training(cfg, data, stack.layers);
    const auto window = r.store.select(cfg.ensemble.window);
    voted.push_back(test_error(horizontal_vote(r.store, seeded_ensemble(cfg)).labels, *data.test_labels));
    single.push_back(test_error(argmax_rows(window[window.size() / 2]->softmax_test), *data.test_labels));
    spreads.push_back(error_stats(r.store, cfg.ensemble.window).std);
  }
  const ErrorStats v = error_stats(voted), s = error_stats(single), tail = error_stats(spreads);
  Outcome out;
  if (!(tail.min > 0.0)) out.fail("learning curve tail does not oscillate (valid-error std 0 in some run)");
  if (!(v.std <= s.std)) out.fail("voted std " + fmt("%.4f", v.std) + " > single std " + fmt("%.4f", s.std));
  if (!(v.mean <= s.mean + 0.01))
    out.fail("voted mean " + fmt("%.4f", v.mean) + " > single mean " + fmt("%.4f", s.mean) + " + 0.01");
  const std::string numbers = "voted test error mean " + fmt("%.4f", v.mean) + " std " + fmt("%.4f", v.std) +
                              " vs midpoint snapshot mean " + fmt("%.4f", s.mean) + " std " + fmt("%.4f", s.std) +
                              " over " + std::to_string(kSeeds) + " seeds, window " +
                              base.ensemble.window.describe() + ", tail valid-error std >= " + fmt("%.4f", tail.min);
  if (out.pass) out.detail = numbers;
  else out.detail += " (" + numbers + ")";
  return out;
}

// 5 + 6 ----------------------------------------- pretraining and stacking

struct SeedRun {
  double model1 = 0.0, model2 = 0.0, vote = 0.0, stack = 0.0;
};

std::vector<SeedRun> desk_runs(std::size_t seeds, double& seconds) {
  const auto start = std::chrono::steady_clock::now();
  std::vector<SeedRun> runs;
  for (std::uint64_t seed = 1; seed <= seeds; ++seed) {
    ExperimentConfig m6 = preset(6);
    m6.seed = seed;
    m6.data.synthetic.seed = seed;
    const ExperimentConfig m1 = with_model(m6, 1);
    const PreparedData data = prepare_data(m6);
    const LabelVector& truth = *data.test_labels;
    SeedRun run;
    const TrainResult plain = run_training(m1, data, {});
    run.model1 = accuracy(argmax_rows(plain.store.at_epoch(m1.train.max_epoch)->softmax_test), truth.labels);
    const PretrainResult stack = run_pretrain(m6, data);
    const TrainResult deep = run_training(m6, data, stack.layers);
    run.model2 = accuracy(argmax_rows(deep.store.at_epoch(m6.train.max_epoch)->softmax_test), truth.labels);
    const EnsembleSpec spec = seeded_ensemble(m6);
    run.vote = accuracy(horizontal_vote(deep.store, spec).labels, truth.labels);
    run.stack = accuracy(horizontal_stack(deep.store, spec, *data.train.labels).output.labels, truth.labels);
    runs.push_back(run);
  }
  seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return runs;
}

Outcome pretraining_direction(const std::vector<SeedRun>& runs) {
  const ExperimentConfig desk = preset(2);
  double m1 = 0.0, m2 = 0.0;
  std::size_t wins = 0;
  for (const auto& r : runs) {
    m1 += r.model1;
    m2 += r.model2;
    wins += r.model2 > r.model1;
  }
  m1 /= static_cast<double>(runs.size());
  m2 /= static_cast<double>(runs.size());
  Outcome out;
  const std::size_t labeled = desk.data.synthetic.labeled, unlabeled = desk.data.synthetic.unlabeled;
  if (labeled > 100 || unlabeled < 10000) out.fail("desk task outside the labeled/unlabeled budget");
  if (!(m2 > m1)) out.fail("model 2 mean accuracy " + fmt("%.4f", m2) + " <= model 1 " + fmt("%.4f", m1));
  const std::string numbers = "mean test accuracy model 2 " + fmt("%.4f", m2) + " vs model 1 " + fmt("%.4f", m1) +
                              " (gap " + fmt("%+.4f", m2 - m1) + ", model 2 ahead on " + std::to_string(wins) + "/" +
                              std::to_string(runs.size()) + " seeds; " + std::to_string(labeled) + " labeled, " +
                              std::to_string(unlabeled) + " unlabeled)";
  if (out.pass) out.detail = numbers;
  else out.detail += " (" + numbers + ")";
  return out;
}

Outcome stacking_sanity(const std::vector<SeedRun>& runs) {
  double vote = 0.0, stack = 0.0, worst = 1.0;
  for (const auto& r : runs) {
    vote += r.vote;
    stack += r.stack;
    worst = std::min(worst, r.stack - r.vote);
  }
  vote /= static_cast<double>(runs.size());
  stack /= static_cast<double>(runs.size());
  Outcome out;
  if (!(stack >= vote - 0.02))
    out.fail("stacked mean accuracy " + fmt("%.4f", stack) + " < voted " + fmt("%.4f", vote) + " - 0.02");
  const std::string numbers = "mean test accuracy stacked " + fmt("%.4f", stack) + " vs voted " + fmt("%.4f", vote) +
                              " over " + std::to_string(runs.size()) + " seeds (worst per-seed difference " +
                              fmt("%+.4f", worst) + ")";
  if (out.pass) out.detail = numbers;
  else out.detail += " (" + numbers + ")";
  return out;
}

// 7 --------------------------------------------------------- random forest

Outcome forest_checks() {
  Outcome out;
  std::size_t fixtures = 0, rows_checked = 0, splits = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed);
    const std::size_t classes = 2 + rng.below(3), d = 1 + rng.below(6), n = 30 + rng.below(60);
    Matrix centres = random_matrix(classes, d, rng, -10.0, 10.0);
    // Push centres apart along every feature so any feature separates them.
    for (std::size_t c = 0; c < classes; ++c)
      for (std::size_t j = 0; j < d; ++j) centres(c, j) = 20.0 * static_cast<double>(c) + centres(c, j) * 0.1;
    Matrix x(n, d);
    std::vector<std::uint32_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      labels[i] = static_cast<std::uint32_t>(i % classes);
      for (std::size_t j = 0; j < d; ++j) x(i, j) = centres(labels[i], j) + rng.uniform(-1.0, 1.0);
    }
    ForestConfig cfg;
    cfg.n_trees = 50 + rng.below(30);
    cfg.seed = seed;
    const RandomForestModel model = rf_fit(x, LabelVector(labels, classes), cfg);
    if (rf_predict(model, x) != labels) out.fail("training accuracy below 1 on separable fixture " + std::to_string(seed));
    ++fixtures;
  }
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    Rng rng(500 + seed);
    const std::size_t n = 5 + rng.below(60), d = 1 + rng.below(8), k = 2 + rng.below(6);
    const Matrix x = random_matrix(n, d, rng);
    ForestConfig cfg;
    cfg.n_trees = 1 + rng.below(40);
    cfg.seed = seed;
    cfg.max_depth = rng.bernoulli(0.5) ? std::optional<std::size_t>(1 + rng.below(4)) : std::nullopt;
    const RandomForestModel model = rf_fit(x, random_labels(n, k, rng), cfg);
    const Matrix p = rf_predict_proba(model, random_matrix(25, d, rng, -2.0, 2.0));
    for (std::size_t i = 0; i < p.rows(); ++i) {
      double sum = 0.0;
      for (double v : p.row(i)) sum += v;
      if (std::abs(sum - 1.0) > 1e-12) out.fail("probability row sums to " + fmt("%.17g", sum));
      ++rows_checked;
    }
  }
  for (std::uint64_t seed = 1; seed <= 300; ++seed) {
    Rng rng(9000 + seed);
    const std::size_t n = 2 + rng.below(7), d = 1 + rng.below(3);
    Matrix x(n, d);
    for (double& v : x.values()) v = static_cast<double>(rng.below(4));
    const LabelVector y = random_labels(n, 2 + rng.below(2), rng);
    ForestConfig cfg;
    cfg.n_trees = 1;
    cfg.bootstrap = false;
    cfg.max_features = MaxFeatures::fraction;
    cfg.max_features_fraction = 1.0;
    cfg.max_depth = 1;
    const RandomForestModel model = rf_fit(x, y, cfg);
    const auto oracle = exhaustive_root_split(x, y);
    const TreeNode& root = model.trees[0].nodes[0];
    const bool pure = std::set<std::uint32_t>(y.labels.begin(), y.labels.end()).size() == 1;
    if (!oracle || pure) {
      if (!root.leaf) out.fail("split on an unsplittable fixture (seed " + std::to_string(seed) + ")");
      continue;
    }
    ++splits;
    if (root.leaf || root.feature != oracle->feature || root.threshold != oracle->threshold ||
        model.trees[0].nodes[root.left].counts != oracle->left_counts ||
        model.trees[0].nodes[root.right].counts != oracle->right_counts)
      out.fail("root split differs from the Gini oracle (seed " + std::to_string(seed) + ")");
  }
  if (out.pass)
    out.detail = std::to_string(fixtures) + " separable fixtures at 50+ trees fit exactly; " +
                 std::to_string(rows_checked) + " probability rows sum to 1 within 1e-12; " + std::to_string(splits) +
                 " root splits on <= 8 points match the exhaustive Gini oracle";
  return out;
}

// 8 ---------------------------------------------------------- determinism

Outcome determinism() {
  Outcome out;
  std::size_t files = 0, verified = 0;
  for (int model = 1; model <= 6; ++model) {
    const ExperimentConfig cfg = tiny_config(model, 17);
    const fs::path a = scratch_dir("accept_det_a" + std::to_string(model));
    const fs::path b = scratch_dir("accept_det_b" + std::to_string(model));
    run_experiment(cfg, a);
    // The second bundle goes through the CLI, one stage per process.
    const fs::path ini = scratch_dir("accept_det_cfg" + std::to_string(model)) / "cfg.ini";
    {
      std::ofstream f(ini);
      f << to_ini(cfg);
    }
    for (const char* stage : {"pretrain", "train", "ensemble", "eval"}) {
      const auto r = run_command(std::string(SNAPVOTE_CLI_PATH) + " --config " + ini.string() + " --out-dir " +
                                 b.string() + " " + stage);
      if (r.exit_code != 0) out.fail("model " + std::to_string(model) + " " + stage + " failed: " + r.output);
    }
    const auto ta = tree_contents(a), tb = tree_contents(b);
    if (ta != tb) out.fail("model " + std::to_string(model) + " bundles differ");
    files += ta.size();
    const auto v = run_command(std::string(SNAPVOTE_CLI_PATH) + " --out-dir " + b.string() + " verify");
    if (v.exit_code != 0 || v.output.find(" 0 discrepancies") == std::string::npos)
      out.fail("model " + std::to_string(model) + " verify: " + v.output);
    const VerifyResult r = verify_bundle(a);
    verified += r.checked;
    if (!r.ok()) out.fail("model " + std::to_string(model) + " verify_bundle reported discrepancies");
  }
  if (out.pass)
    out.detail = "models 1-6: in-process and staged CLI runs gave byte-identical bundles (" + std::to_string(files) +
                 " files); verify recomputed " + std::to_string(verified) + " reported values, 0 discrepancies";
  return out;
}

// 9 ------------------------------------------------------ table formatting

Outcome table_format() {
  ErrorStats s;
  s.min = 0.309999;
  s.max = 0.439999;
  s.mean = 0.375427;
  s.std = 0.024364;
  const std::string header = kErrorStatsHeader;
  const std::string row = format_error_stats_row(s);
  Outcome out;
  if (header != "Min Max Mean Standard Error") out.fail("header is '" + header + "'");
  if (row != "0.309999 0.439999 0.375427 0.024364") out.fail("row is '" + row + "'");
  if (out.pass) out.detail = "'" + header + "' / '" + row + "'";
  return out;
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double limit_seconds;  // 0: no limit
    std::function<Outcome()> run;
  };
  std::vector<SeedRun> runs;
  double runs_seconds = 0.0;
  auto shared_runs = [&]() -> const std::vector<SeedRun>& {
    if (runs.empty()) runs = desk_runs(10, runs_seconds);
    return runs;
  };
  const std::vector<Criterion> criteria{
      {1, "gradient correctness", 60, gradient_correctness},
      {2, "voting oracle equivalence", 60, voting_oracles},
      {3, "window accounting", 0, window_accounting},
      {4, "variance reduction", 600, variance_reduction},
      {5, "pretraining direction", 1200, [&] { return pretraining_direction(shared_runs()); }},
      {6, "stacked-ensemble sanity", 0, [&] { return stacking_sanity(shared_runs()); }},
      {7, "random forest", 60, forest_checks},
      {8, "determinism and self-consistency", 0, determinism},
      {9, "error-stats table format", 0, table_format},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.fail(std::string("threw: ") + e.what());
    }
    double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    // Criterion 6 reuses the runs timed under criterion 5.
    if (c.id == 5) seconds = std::max(seconds, runs_seconds);
    if (c.limit_seconds > 0 && seconds > c.limit_seconds)
      o.fail("took " + fmt("%.1f", seconds) + " s, limit " + fmt("%.0f", c.limit_seconds) + " s");
    std::printf("%s [%d] %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), seconds);
    std::fflush(stdout);
    failures += !o.pass;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
