#ifndef SNAPVOTE_TRAINER_HPP_
#define SNAPVOTE_TRAINER_HPP_

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "snapvote/binary_io.hpp"
#include "snapvote/errors.hpp"
#include "snapvote/matrix.hpp"
#include "snapvote/network.hpp"
#include "snapvote/rng.hpp"
#include "snapvote/snapshot.hpp"

namespace snapvote {

struct TrainConfig {
  double learning_rate = 0.025;
  double momentum = 0.5;
  double dropout_rate = 0.0;  // applied to maxout layers
  std::size_t max_epoch = 1;
  std::size_t batch_size = 0;  // 0 or >= n: full batch
  std::uint64_t seed = 0;

  void validate() const {
    detail::require(learning_rate > 0.0 && std::isfinite(learning_rate), "learning rate must be positive");
    detail::require(momentum >= 0.0 && momentum < 1.0, "momentum must lie in [0, 1)");
    detail::require(dropout_rate >= 0.0 && dropout_rate < 1.0, "dropout rate must lie in [0, 1)");
    detail::require(max_epoch >= 1, "max_epoch must be at least 1");
  }

  std::string describe() const {
    std::ostringstream out;
    out << "lr=" << io::format_double(learning_rate) << " momentum=" << io::format_double(momentum)
        << " dropout=" << io::format_double(dropout_rate) << " epochs=" << max_epoch
        << " batch=" << batch_size << " seed=" << seed;
    return out.str();
  }
};

/// velocity <- momentum * velocity - lr * grad; param <- param + velocity.
inline void sgd_step(Matrix& param, const Matrix& grad, Matrix& velocity, double learning_rate,
                     double momentum) {
  detail::require(param.rows() == grad.rows() && param.cols() == grad.cols(),
                  "sgd_step: parameter " + param.shape() + " vs gradient " + grad.shape());
  if (velocity.empty()) velocity = Matrix(param.rows(), param.cols());
  detail::require(velocity.rows() == param.rows() && velocity.cols() == param.cols(),
                  "sgd_step: velocity " + velocity.shape() + " vs parameter " + param.shape());
  auto p = param.values();
  auto g = grad.values();
  auto v = velocity.values();
  for (std::size_t i = 0; i < p.size(); ++i) {
    v[i] = momentum * v[i] - learning_rate * g[i];
    p[i] += v[i];
  }
}

/// Applies one update to every parameter tensor of `net`. `velocity` is
/// created on first use and must keep the same layout afterwards.
inline void sgd_step(Network& net, Gradients& grads, std::vector<Matrix>& velocity, const TrainConfig& cfg) {
  auto params = parameter_tensors(net);
  auto gs = gradient_tensors(grads);
  detail::require(params.size() == gs.size(), "sgd_step: gradient set does not match network");
  if (velocity.empty()) velocity.resize(params.size());
  detail::require(velocity.size() == params.size(), "sgd_step: velocity set does not match network");
  for (std::size_t i = 0; i < params.size(); ++i)
    sgd_step(*params[i], *gs[i], velocity[i], cfg.learning_rate, cfg.momentum);
}

/// Inverted-dropout mask: entries are 0 with probability `rate`, else
/// 1 / (1 - rate).
inline Matrix dropout_mask(std::size_t rows, std::size_t cols, double rate, Rng& rng) {
  detail::require(rate >= 0.0 && rate < 1.0, "dropout rate must lie in [0, 1)");
  Matrix mask(rows, cols, 1.0);
  if (rate == 0.0) return mask;
  const double keep_scale = 1.0 / (1.0 - rate);
  for (double& v : mask.values()) v = rng.uniform() < rate ? 0.0 : keep_scale;
  return mask;
}

inline Matrix apply_dropout(const Matrix& rep, double rate, Rng& rng) {
  Matrix mask = dropout_mask(rep.rows(), rep.cols(), rate, rng);
  Matrix out = rep;
  auto o = out.values();
  auto m = mask.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= m[i];
  return out;
}

inline double error_rate(const Matrix& probabilities, const LabelVector& truth) {
  detail::require(probabilities.rows() == truth.size(), "error_rate: row/label count mismatch");
  if (truth.size() == 0) return 0.0;
  const auto predicted = argmax_rows(probabilities);
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) wrong += predicted[i] != truth[i];
  return static_cast<double>(wrong) / static_cast<double>(truth.size());
}

/// Inputs of a supervised run. `valid` / `test` may be empty (0 rows).
struct TrainingSets {
  Matrix train;
  LabelVector train_labels;
  Matrix valid;
  LabelVector valid_labels;
  Matrix test;
};

struct CurvePoint {
  std::size_t epoch = 0;
  double train_error = 0.0;
  double valid_error = 0.0;

  bool operator==(const CurvePoint&) const = default;
};

using CapturePredicate = std::function<bool(std::size_t epoch)>;

inline CapturePredicate capture_window(const EpochWindow& window) {
  return [window](std::size_t epoch) { return window.contains(epoch); };
}

inline CapturePredicate capture_all() {
  return [](std::size_t) { return true; };
}

struct TrainResult {
  SnapshotStore store;
  std::vector<CurvePoint> curve;
};

/// Fine-tunes `net` for exactly cfg.max_epoch epochs of SGD with momentum
/// and records a snapshot after every epoch the predicate accepts.
/// Gradients are averaged over each mini-batch before the update.
/// `valid_error` falls back to the training error when no validation set
/// is given.
inline TrainResult train(Network& net, const TrainingSets& data, const TrainConfig& cfg,
                         const CapturePredicate& capture, const std::vector<std::string>& rep_layers = {}) {
  cfg.validate();
  const std::size_t n = data.train.rows();
  detail::require(n > 0, "training set is empty");
  detail::require(n == data.train_labels.size(), "training set has " + std::to_string(n) + " rows but " +
                                                     std::to_string(data.train_labels.size()) + " labels");
  detail::require(data.valid.rows() == data.valid_labels.size(), "validation rows/labels mismatch");
  detail::require(!net.layers.empty() && net.layers.back().spec.kind == LayerKind::softmax,
                  "training needs a network with a softmax head");
  std::vector<std::size_t> rep_index;
  for (const auto& name : rep_layers) {
    auto idx = net.find(name);
    detail::require(idx.has_value(), "network has no layer named '" + name + "'");
    rep_index.push_back(*idx);
  }

  TrainResult result;
  result.store.classes = net.output_dim();
  result.store.rep_layers = rep_layers;
  result.store.fingerprint = io::hex64(io::fnv1a(cfg.describe()));
  result.store.run_id = "run-" + result.store.fingerprint;

  Rng rng(cfg.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t batch = (cfg.batch_size == 0 || cfg.batch_size >= n) ? n : cfg.batch_size;
  std::vector<Matrix> velocity;
  const bool full_batch = batch == n;

  for (std::size_t epoch = 1; epoch <= cfg.max_epoch; ++epoch) {
    if (!full_batch) rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t stop = std::min(n, start + batch);
      std::span<const std::size_t> idx(order.data() + start, stop - start);
      Matrix xb = full_batch ? data.train : gather_rows(data.train, idx);
      LabelVector yb = full_batch ? data.train_labels : data.train_labels.gather(idx);

      DropoutMasks masks;
      if (cfg.dropout_rate > 0.0) {
        masks.resize(net.layers.size());
        for (std::size_t l = 0; l < net.layers.size(); ++l)
          if (net.layers[l].spec.kind == LayerKind::maxout)
            masks[l] = dropout_mask(xb.rows(), net.layers[l].spec.output_dim, cfg.dropout_rate, rng);
      }
      Tape tape = forward_tape(net, xb, masks.empty() ? nullptr : &masks);
      BackwardResult br;
      try {
        br = backward(net, tape, yb, epoch);
      } catch (const TrainingDiverged&) {
        throw TrainingDiverged("training diverged", epoch, epoch - 1);
      }
      const double scale = 1.0 / static_cast<double>(xb.rows());
      for (Matrix* g : gradient_tensors(br.grads))
        for (double& v : g->values()) v *= scale;
      sgd_step(net, br.grads, velocity, cfg);
    }

    // Evaluation passes run without dropout.
    std::vector<Matrix> train_reps = forward(net, data.train);
    Matrix softmax_train = train_reps.back();
    if (!softmax_train.all_finite()) throw TrainingDiverged("training diverged", epoch, epoch - 1);
    const double train_error = error_rate(softmax_train, data.train_labels);
    Matrix softmax_valid = data.valid.rows() > 0 ? predict_proba(net, data.valid) : Matrix(0, net.output_dim());
    const double valid_error =
        data.valid.rows() > 0 ? error_rate(softmax_valid, data.valid_labels) : train_error;
    result.curve.push_back({epoch, train_error, valid_error});

    if (capture && capture(epoch)) {
      Snapshot s;
      s.epoch = epoch;
      s.softmax_train = std::move(softmax_train);
      s.softmax_valid = std::move(softmax_valid);
      s.valid_error = valid_error;
      if (data.test.rows() > 0) {
        std::vector<Matrix> test_reps = forward(net, data.test);
        s.softmax_test = test_reps.back();
        for (std::size_t i = 0; i < rep_index.size(); ++i)
          s.layer_reps.push_back({rep_layers[i], train_reps[rep_index[i]], test_reps[rep_index[i]]});
      } else {
        s.softmax_test = Matrix(0, net.output_dim());
        for (std::size_t i = 0; i < rep_index.size(); ++i)
          s.layer_reps.push_back({rep_layers[i], train_reps[rep_index[i]], Matrix(0, train_reps[rep_index[i]].cols())});
      }
      result.store.add(std::move(s));
    }
  }
  return result;
}

/// One "epoch<TAB>train_error<TAB>valid_error" line per epoch.
inline void write_curve(const std::filesystem::path& path, const std::vector<CurvePoint>& curve) {
  auto out = io::open_out(path, false);
  for (const auto& p : curve)
    out << p.epoch << '\t' << io::format_double(p.train_error) << '\t' << io::format_double(p.valid_error)
        << '\n';
}

inline std::vector<CurvePoint> read_curve(const std::filesystem::path& path) {
  auto in = io::open_in(path, false);
  std::vector<CurvePoint> curve;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string epoch, train_err, valid_err;
    if (!std::getline(fields, epoch, '\t') || !std::getline(fields, train_err, '\t') ||
        !std::getline(fields, valid_err, '\t'))
      throw FormatError("bad learning-curve line '" + line + "'");
    curve.push_back({detail::parse_count(epoch, "epoch"), detail::parse_real(train_err, "train error"),
                     detail::parse_real(valid_err, "valid error")});
  }
  return curve;
}

}  // namespace snapvote

#endif  // SNAPVOTE_TRAINER_HPP_
