#ifndef SNAPVOTE_ENSEMBLE_HPP_
#define SNAPVOTE_ENSEMBLE_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "snapvote/errors.hpp"
#include "snapvote/forest.hpp"
#include "snapvote/matrix.hpp"
#include "snapvote/snapshot.hpp"

namespace snapvote {

enum class EnsembleKind { none, vertical, horizontal, stacked, combined };

inline std::string_view to_string(EnsembleKind kind) {
  switch (kind) {
    case EnsembleKind::none: return "none";
    case EnsembleKind::vertical: return "vertical";
    case EnsembleKind::horizontal: return "horizontal";
    case EnsembleKind::stacked: return "stacked";
    case EnsembleKind::combined: return "combined";
  }
  return "?";
}

inline EnsembleKind parse_ensemble_kind(std::string_view text) {
  for (auto k : {EnsembleKind::none, EnsembleKind::vertical, EnsembleKind::horizontal, EnsembleKind::stacked,
                 EnsembleKind::combined})
    if (text == to_string(k)) return k;
  throw InvalidInput("unknown ensemble kind '" + std::string(text) + "'");
}

/// Which ensemble to build and over what.
struct EnsembleSpec {
  EnsembleKind kind = EnsembleKind::none;
  EpochWindow window;                  // horizontal, stacked, combined
  std::size_t objective_epoch = 0;     // vertical
  std::vector<std::string> layers;     // vertical, combined
  ForestConfig classifier;             // per-layer classifier
  ForestConfig meta_classifier;        // stacked
  std::vector<double> layer_weights;   // empty: uniform vertical voting

  bool needs_layer_reps() const { return kind == EnsembleKind::vertical || kind == EnsembleKind::combined; }

  void validate() const {
    if (kind == EnsembleKind::horizontal || kind == EnsembleKind::stacked || kind == EnsembleKind::combined)
      detail::require(window.low < window.high, "epoch window needs L < H, got " + window.describe());
    if (needs_layer_reps()) {
      detail::require(!layers.empty(), "vertical voting needs at least one layer");
      detail::require(layer_weights.empty() || layer_weights.size() == layers.size(),
                      "layer weights must match the layer list");
    }
    if (kind == EnsembleKind::vertical) detail::require(objective_epoch >= 1, "objective epoch must be >= 1");
  }
};

/// Row-stochastic class probabilities plus a note on where they came from.
struct PredictionMatrix {
  Matrix probabilities;
  std::string provenance;
};

struct VoteResult {
  PredictionMatrix prediction;
  std::vector<std::uint32_t> labels;
};

/// Weighted mean of equally shaped prediction matrices and its per-row
/// argmax (lowest index wins ties). Equal weights give the plain mean,
/// whose argmax matches that of the sum.
inline VoteResult weighted_vote(std::span<const PredictionMatrix> preds, std::span<const double> weights,
                                std::string provenance = "vote") {
  detail::require(!preds.empty(), "vote needs at least one prediction matrix");
  detail::require(weights.size() == preds.size(), "vote weights must match the prediction count");
  const Matrix& first = preds.front().probabilities;
  double total_weight = 0.0;
  for (double w : weights) {
    detail::require(w >= 0.0, "vote weights must be non-negative");
    total_weight += w;
  }
  detail::require(total_weight > 0.0, "vote weights sum to zero");
  Matrix acc(first.rows(), first.cols());
  for (std::size_t p = 0; p < preds.size(); ++p) {
    const Matrix& m = preds[p].probabilities;
    detail::require(m.rows() == first.rows() && m.cols() == first.cols(),
                    "prediction " + std::to_string(p) + " is " + m.shape() + ", prediction 0 is " + first.shape());
    auto dst = acc.values();
    auto src = m.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += weights[p] * src[i];
  }
  for (double& v : acc.values()) v /= total_weight;
  VoteResult result;
  result.labels = argmax_rows(acc);
  result.prediction = {std::move(acc), std::move(provenance)};
  return result;
}

inline VoteResult vote(std::span<const PredictionMatrix> preds, std::string provenance = "vote") {
  std::vector<double> weights(preds.size(), 1.0);
  return weighted_vote(preds, weights, std::move(provenance));
}

inline std::string window_error(const EpochWindow& window, const SnapshotStore& store) {
  return "epoch window " + window.describe() + " selects no snapshot; available epochs: " +
         describe_epochs(store.epochs());
}

/// Softmax test outputs of every snapshot inside the window.
inline std::vector<PredictionMatrix> window_predictions(const SnapshotStore& store, const EpochWindow& window) {
  std::vector<PredictionMatrix> preds;
  for (const Snapshot* s : store.select(window))
    preds.push_back({s->softmax_test, "softmax@" + std::to_string(s->epoch)});
  if (preds.empty()) throw InvalidInput(window_error(window, store));
  return preds;
}

/// Averages the test softmax outputs of all snapshots in the window.
inline VoteResult horizontal_vote(const SnapshotStore& store, const EnsembleSpec& spec) {
  const auto preds = window_predictions(store, spec.window);
  return vote(preds, "horizontal" + spec.window.describe());
}

struct VerticalResult {
  VoteResult voted;
  std::vector<PredictionMatrix> per_layer;  // classifier output per layer, spec order
};

/// Fits one classifier per selected layer on that layer's representation
/// of the training set at `epoch`, and votes their test-set probabilities.
/// Every layer classifier uses the same forest configuration and seed.
inline VerticalResult vertical_vote_at(const SnapshotStore& store, const EnsembleSpec& spec, const LabelVector& y,
                                       std::size_t epoch) {
  detail::require(!spec.layers.empty(), "vertical voting needs at least one layer");
  const Snapshot* s = store.at_epoch(epoch);
  if (!s)
    throw InvalidInput("no snapshot at epoch " + std::to_string(epoch) + "; available epochs: " +
                       describe_epochs(store.epochs()));
  VerticalResult result;
  for (const auto& name : spec.layers) {
    const LayerRep* rep = s->rep(name);
    if (!rep || rep->train.empty())
      throw InvalidInput("snapshot at epoch " + std::to_string(epoch) + " has no representation for layer '" + name +
                         "'");
    const RandomForestModel model = rf_fit(rep->train, y, spec.classifier);
    result.per_layer.push_back({rf_predict_proba(model, rep->test), "rf:" + name + "@" + std::to_string(epoch)});
  }
  const std::string provenance = "vertical@" + std::to_string(epoch);
  if (spec.layer_weights.empty())
    result.voted = vote(result.per_layer, provenance);
  else
    result.voted = weighted_vote(result.per_layer, spec.layer_weights, provenance);
  return result;
}

inline VerticalResult vertical_vote(const SnapshotStore& store, const EnsembleSpec& spec, const LabelVector& y) {
  return vertical_vote_at(store, spec, y, spec.objective_epoch);
}

/// Concatenates S n x K matrices into one n x (S*K) matrix; row i is
/// [pred_1(i, .), ..., pred_S(i, .)].
inline Matrix build_stacked_features(std::span<const PredictionMatrix> preds) {
  detail::require(!preds.empty(), "stacking needs at least one prediction matrix");
  const std::size_t n = preds.front().probabilities.rows();
  const std::size_t k = preds.front().probabilities.cols();
  for (std::size_t p = 0; p < preds.size(); ++p)
    detail::require(preds[p].probabilities.rows() == n && preds[p].probabilities.cols() == k,
                    "prediction " + std::to_string(p) + " is " + preds[p].probabilities.shape() +
                        ", prediction 0 is " + preds.front().probabilities.shape());
  Matrix out(n, preds.size() * k);
  for (std::size_t i = 0; i < n; ++i) {
    auto dst = out.row(i);
    for (std::size_t p = 0; p < preds.size(); ++p) {
      auto src = preds[p].probabilities.row(i);
      std::copy(src.begin(), src.end(), dst.begin() + static_cast<std::ptrdiff_t>(p * k));
    }
  }
  return out;
}

struct StackResult {
  VoteResult output;  // meta-classifier probabilities and labels
  std::vector<std::size_t> epochs;
  std::size_t feature_width = 0;
};

/// Fits the meta-classifier on the stacked training-set softmax outputs of
/// the window and applies it to the stacked test-set outputs. The training
/// features are in-sample outputs of the same network.
inline StackResult horizontal_stack(const SnapshotStore& store, const EnsembleSpec& spec, const LabelVector& y) {
  const auto selected = store.select(spec.window);
  if (selected.empty()) throw InvalidInput(window_error(spec.window, store));
  std::vector<std::size_t> missing_train, missing_test;
  std::vector<PredictionMatrix> train_preds, test_preds;
  StackResult result;
  for (const Snapshot* s : selected) {
    if (s->softmax_train.rows() == 0) missing_train.push_back(s->epoch);
    if (s->softmax_test.rows() == 0) missing_test.push_back(s->epoch);
    train_preds.push_back({s->softmax_train, "train@" + std::to_string(s->epoch)});
    test_preds.push_back({s->softmax_test, "test@" + std::to_string(s->epoch)});
    result.epochs.push_back(s->epoch);
  }
  if (!missing_train.empty() || !missing_test.empty())
    throw InvalidInput("stacking needs train and test outputs for the same epochs; train missing at " +
                       describe_epochs(missing_train) + ", test missing at " + describe_epochs(missing_test));
  const Matrix train_features = build_stacked_features(train_preds);
  const Matrix test_features = build_stacked_features(test_preds);
  detail::require(train_features.rows() == y.size(), "stacking: " + std::to_string(train_features.rows()) +
                                                         " training rows but " + std::to_string(y.size()) + " labels");
  result.feature_width = train_features.cols();
  const RandomForestModel meta = rf_fit(train_features, y, spec.meta_classifier);
  Matrix probs = rf_predict_proba(meta, test_features);
  result.output.labels = argmax_rows(probs);
  result.output.prediction = {std::move(probs), "stacked" + spec.window.describe()};
  return result;
}

/// Vertical vote at every epoch of the window, then a horizontal vote over
/// the per-epoch results.
inline VoteResult combined_vote(const SnapshotStore& store, const EnsembleSpec& spec, const LabelVector& y) {
  const auto selected = store.select(spec.window);
  if (selected.empty()) throw InvalidInput(window_error(spec.window, store));
  std::vector<PredictionMatrix> per_epoch;
  for (const Snapshot* s : selected) {
    try {
      per_epoch.push_back(vertical_vote_at(store, spec, y, s->epoch).voted.prediction);
    } catch (const InvalidInput& e) {
      throw InvalidInput("combined vote, epoch " + std::to_string(s->epoch) + ": " + e.what());
    }
  }
  return vote(per_epoch, "combined" + spec.window.describe());
}

}  // namespace snapvote

#endif  // SNAPVOTE_ENSEMBLE_HPP_
