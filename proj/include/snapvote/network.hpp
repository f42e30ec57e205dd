#ifndef SNAPVOTE_NETWORK_HPP_
#define SNAPVOTE_NETWORK_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "snapvote/errors.hpp"
#include "snapvote/matrix.hpp"
#include "snapvote/rng.hpp"

namespace snapvote {

enum class LayerKind { affine_sigmoid, affine_tanh, affine_relu, maxout, softmax };

inline std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::affine_sigmoid: return "sigmoid";
    case LayerKind::affine_tanh: return "tanh";
    case LayerKind::affine_relu: return "relu";
    case LayerKind::maxout: return "maxout";
    case LayerKind::softmax: return "softmax";
  }
  return "?";
}

inline LayerKind parse_layer_kind(std::string_view name) {
  if (name == "sigmoid") return LayerKind::affine_sigmoid;
  if (name == "tanh") return LayerKind::affine_tanh;
  if (name == "relu") return LayerKind::affine_relu;
  if (name == "maxout") return LayerKind::maxout;
  if (name == "softmax") return LayerKind::softmax;
  throw InvalidInput("unknown layer kind '" + std::string(name) + "'");
}

struct LayerSpec {
  LayerKind kind = LayerKind::affine_sigmoid;
  std::size_t input_dim = 0;
  std::size_t output_dim = 0;
  std::size_t pool_size = 2;  // maxout only

  std::size_t pieces() const { return kind == LayerKind::maxout ? pool_size : 1; }
  bool operator==(const LayerSpec&) const = default;
};

/// One layer with its parameters. Non-maxout layers hold a single piece;
/// maxout layers hold pool_size pieces of shape input_dim x output_dim.
struct Layer {
  LayerSpec spec;
  std::vector<Matrix> weights;
  std::vector<Matrix> biases;  // each 1 x output_dim

  bool operator==(const Layer&) const = default;
};

struct Network {
  std::vector<Layer> layers;
  std::vector<std::string> names;

  std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().spec.input_dim; }
  std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().spec.output_dim; }

  /// Index of the layer called `name`, if any.
  std::optional<std::size_t> find(std::string_view name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return i;
    return std::nullopt;
  }

  bool operator==(const Network&) const = default;
};

/// Hidden layers are h0, h1, ...; a trailing softmax head is "softmax".
inline std::vector<std::string> default_layer_names(std::span<const LayerSpec> specs) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (specs[i].kind == LayerKind::softmax)
      names.emplace_back("softmax");
    else
      names.push_back("h" + std::to_string(i));
  }
  return names;
}

inline void validate_specs(std::span<const LayerSpec> specs) {
  detail::require(!specs.empty(), "network needs at least one layer");
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const LayerSpec& s = specs[i];
    detail::require(s.input_dim > 0 && s.output_dim > 0,
                    "layer " + std::to_string(i) + " has a zero dimension");
    if (s.kind == LayerKind::maxout)
      detail::require(s.pool_size >= 2, "maxout layer " + std::to_string(i) + " needs pool size >= 2");
    if (s.kind == LayerKind::softmax)
      detail::require(i + 1 == specs.size(), "softmax may only be the final layer");
    if (i > 0)
      detail::require(specs[i - 1].output_dim == s.input_dim,
                      "layer " + std::to_string(i - 1) + " outputs " +
                          std::to_string(specs[i - 1].output_dim) + " but layer " +
                          std::to_string(i) + " expects " + std::to_string(s.input_dim));
  }
}

/// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
inline Layer make_layer(const LayerSpec& spec, Rng& rng) {
  Layer layer{spec, {}, {}};
  const double limit = std::sqrt(6.0 / static_cast<double>(spec.input_dim + spec.output_dim));
  for (std::size_t p = 0; p < spec.pieces(); ++p) {
    Matrix w(spec.input_dim, spec.output_dim);
    for (double& v : w.values()) v = rng.uniform(-limit, limit);
    layer.weights.push_back(std::move(w));
    layer.biases.emplace_back(1, spec.output_dim);
  }
  return layer;
}

inline Network make_network(std::span<const LayerSpec> specs, Rng& rng) {
  validate_specs(specs);
  Network net;
  for (const auto& spec : specs) net.layers.push_back(make_layer(spec, rng));
  net.names = default_layer_names(specs);
  return net;
}

inline Network make_network(std::span<const LayerSpec> specs, std::uint64_t seed) {
  Rng rng(seed);
  return make_network(specs, rng);
}

struct MaxoutResult {
  Matrix output;
  std::vector<std::uint32_t> argmax;  // winning piece per element, row-major
};

/// Elementwise maximum across k >= 2 equally shaped pieces. Ties go to the
/// lowest piece index.
inline MaxoutResult maxout_forward(std::span<const Matrix> pieces) {
  detail::require(pieces.size() >= 2, "maxout needs at least 2 pieces");
  const Matrix& first = pieces.front();
  for (std::size_t p = 1; p < pieces.size(); ++p)
    detail::require(pieces[p].rows() == first.rows() && pieces[p].cols() == first.cols(),
                    "maxout piece " + std::to_string(p) + " is " + pieces[p].shape() +
                        ", piece 0 is " + first.shape());
  MaxoutResult result{first, std::vector<std::uint32_t>(first.size(), 0)};
  auto out = result.output.values();
  for (std::size_t p = 1; p < pieces.size(); ++p) {
    auto src = pieces[p].values();
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (src[i] > out[i]) {
        out[i] = src[i];
        result.argmax[i] = static_cast<std::uint32_t>(p);
      }
    }
  }
  return result;
}

/// Row-wise softmax with max subtraction.
inline Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto src = logits.row(i);
    auto dst = out.row(i);
    const double peak = *std::max_element(src.begin(), src.end());
    double total = 0.0;
    for (std::size_t j = 0; j < src.size(); ++j) {
      dst[j] = std::exp(src[j] - peak);
      total += dst[j];
    }
    for (double& v : dst) v /= total;
  }
  return out;
}

namespace detail {

inline double sigmoid(double z) {
  return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

inline Matrix affine(const Matrix& input, const Matrix& weights, const Matrix& bias) {
  Matrix z = matmul(input, weights);
  add_row_vector(z, bias);
  return z;
}

}  // namespace detail

/// Everything backward needs from one forward pass.
struct Tape {
  struct Entry {
    Matrix logits;      // pre-activation (single-piece layers)
    Matrix activation;  // f(logits) before any dropout mask
    std::vector<std::uint32_t> argmax;  // maxout routing
    Matrix mask;        // empty when no dropout was applied
    Matrix output;      // activation * mask
  };
  Matrix input;
  std::vector<Entry> entries;
};

/// Per-layer dropout masks for a training pass; an empty Matrix leaves the
/// layer untouched.
using DropoutMasks = std::vector<Matrix>;

inline Tape forward_tape(const Network& net, const Matrix& batch, const DropoutMasks* masks = nullptr) {
  detail::require(!net.layers.empty(), "forward on an empty network");
  detail::require(batch.cols() == net.input_dim(),
                  "input has " + std::to_string(batch.cols()) + " columns but the network expects " +
                      std::to_string(net.input_dim()));
  Tape tape;
  tape.input = batch;
  const Matrix* current = &tape.input;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const Layer& layer = net.layers[l];
    Tape::Entry e;
    switch (layer.spec.kind) {
      case LayerKind::maxout: {
        std::vector<Matrix> pieces;
        pieces.reserve(layer.weights.size());
        for (std::size_t p = 0; p < layer.weights.size(); ++p)
          pieces.push_back(detail::affine(*current, layer.weights[p], layer.biases[p]));
        auto mo = maxout_forward(pieces);
        e.activation = std::move(mo.output);
        e.argmax = std::move(mo.argmax);
        break;
      }
      case LayerKind::softmax:
        e.logits = detail::affine(*current, layer.weights[0], layer.biases[0]);
        e.activation = softmax_rows(e.logits);
        break;
      case LayerKind::affine_sigmoid:
      case LayerKind::affine_tanh:
      case LayerKind::affine_relu: {
        e.logits = detail::affine(*current, layer.weights[0], layer.biases[0]);
        e.activation = e.logits;
        for (double& v : e.activation.values()) {
          if (layer.spec.kind == LayerKind::affine_sigmoid)
            v = detail::sigmoid(v);
          else if (layer.spec.kind == LayerKind::affine_tanh)
            v = std::tanh(v);
          else
            v = v > 0.0 ? v : 0.0;
        }
        break;
      }
    }
    if (masks && l < masks->size() && !(*masks)[l].empty()) {
      const Matrix& m = (*masks)[l];
      detail::require(m.rows() == e.activation.rows() && m.cols() == e.activation.cols(),
                      "dropout mask " + m.shape() + " does not match layer output " +
                          e.activation.shape());
      e.mask = m;
      e.output = e.activation;
      auto out = e.output.values();
      auto mv = m.values();
      for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mv[i];
    } else {
      e.output = e.activation;
    }
    tape.entries.push_back(std::move(e));
    current = &tape.entries.back().output;
  }
  return tape;
}

/// Inference pass: one representation per layer, the last being the
/// network output (row-stochastic for a softmax head).
inline std::vector<Matrix> forward(const Network& net, const Matrix& batch) {
  Tape tape = forward_tape(net, batch);
  std::vector<Matrix> reps;
  reps.reserve(tape.entries.size());
  for (auto& e : tape.entries) reps.push_back(std::move(e.output));
  return reps;
}

inline Matrix predict_proba(const Network& net, const Matrix& batch) {
  return std::move(forward(net, batch).back());
}

/// Same layout as Network parameters: per layer, per piece.
struct Gradients {
  struct LayerGrad {
    std::vector<Matrix> weights;
    std::vector<Matrix> biases;
  };
  std::vector<LayerGrad> layers;

  static Gradients zeros_like(const Network& net) {
    Gradients g;
    for (const auto& layer : net.layers) {
      LayerGrad lg;
      for (const auto& w : layer.weights) lg.weights.emplace_back(w.rows(), w.cols());
      for (const auto& b : layer.biases) lg.biases.emplace_back(b.rows(), b.cols());
      g.layers.push_back(std::move(lg));
    }
    return g;
  }
};

struct BackwardResult {
  double loss = 0.0;  // summed negative log-likelihood over the batch
  Gradients grads;
};

/// Summed negative log-likelihood of `targets` under the recorded pass,
/// and the gradient of that sum w.r.t. every parameter tensor.
inline BackwardResult backward(const Network& net, const Tape& tape, const LabelVector& targets,
                               std::size_t epoch = 0) {
  const std::size_t n = tape.input.rows();
  detail::require(n > 0, "backward on an empty batch");
  detail::require(n == targets.size(), "batch has " + std::to_string(n) + " rows but " +
                                           std::to_string(targets.size()) + " targets");
  detail::require(net.layers.back().spec.kind == LayerKind::softmax,
                  "backward needs a softmax head");
  const std::size_t classes = net.output_dim();
  detail::require(targets.classes == 0 || targets.classes == classes,
                  "targets have " + std::to_string(targets.classes) + " classes, network outputs " +
                      std::to_string(classes));

  BackwardResult result;
  result.grads = Gradients::zeros_like(net);

  // Loss from the logits (log-sum-exp) rather than log(p) keeps it finite
  // when a probability underflows.
  const Tape::Entry& head = tape.entries.back();
  Matrix delta = head.activation;
  for (std::size_t i = 0; i < n; ++i) {
    auto z = head.logits.row(i);
    const std::uint32_t t = targets[i];
    detail::require(t < classes, "target " + std::to_string(t) + " out of range");
    const double peak = *std::max_element(z.begin(), z.end());
    double total = 0.0;
    for (double v : z) total += std::exp(v - peak);
    result.loss += std::log(total) - (z[t] - peak);
    delta(i, t) -= 1.0;
  }
  if (!std::isfinite(result.loss))
    throw TrainingDiverged("non-finite loss", epoch, epoch == 0 ? 0 : epoch - 1);

  for (std::size_t l = net.layers.size(); l-- > 0;) {
    const Layer& layer = net.layers[l];
    const Tape::Entry& e = tape.entries[l];
    const Matrix& input = l == 0 ? tape.input : tape.entries[l - 1].output;
    auto& lg = result.grads.layers[l];

    if (layer.spec.kind != LayerKind::softmax) {
      // delta holds d loss / d output; undo the mask, then the activation.
      if (!e.mask.empty()) {
        auto d = delta.values();
        auto m = e.mask.values();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] *= m[i];
      }
      auto d = delta.values();
      auto a = e.activation.values();
      switch (layer.spec.kind) {
        case LayerKind::affine_sigmoid:
          for (std::size_t i = 0; i < d.size(); ++i) d[i] *= a[i] * (1.0 - a[i]);
          break;
        case LayerKind::affine_tanh:
          for (std::size_t i = 0; i < d.size(); ++i) d[i] *= 1.0 - a[i] * a[i];
          break;
        case LayerKind::affine_relu: {
          auto z = e.logits.values();
          for (std::size_t i = 0; i < d.size(); ++i)
            if (!(z[i] > 0.0)) d[i] = 0.0;
          break;
        }
        default:
          break;
      }
    }

    Matrix next_delta;
    if (layer.spec.kind == LayerKind::maxout) {
      const std::size_t k = layer.weights.size();
      for (std::size_t p = 0; p < k; ++p) {
        Matrix piece_delta(delta.rows(), delta.cols());
        auto src = delta.values();
        auto dst = piece_delta.values();
        for (std::size_t i = 0; i < src.size(); ++i)
          if (e.argmax[i] == p) dst[i] = src[i];
        lg.weights[p] = matmul_tn(input, piece_delta);
        lg.biases[p] = column_sums(piece_delta);
        if (l > 0) {
          Matrix contrib = matmul_nt(piece_delta, layer.weights[p]);
          if (next_delta.empty()) {
            next_delta = std::move(contrib);
          } else {
            auto acc = next_delta.values();
            auto c = contrib.values();
            for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += c[i];
          }
        }
      }
    } else {
      lg.weights[0] = matmul_tn(input, delta);
      lg.biases[0] = column_sums(delta);
      if (l > 0) next_delta = matmul_nt(delta, layer.weights[0]);
    }
    delta = std::move(next_delta);
  }
  return result;
}

inline BackwardResult backward(const Network& net, const Matrix& batch, const LabelVector& targets,
                               std::size_t epoch = 0) {
  detail::require(batch.rows() > 0, "backward on an empty batch");
  return backward(net, forward_tape(net, batch), targets, epoch);
}

/// Flat views over parameters and gradients in matching order
/// (layer, piece, weights then bias).
inline std::vector<Matrix*> parameter_tensors(Network& net) {
  std::vector<Matrix*> out;
  for (auto& layer : net.layers)
    for (std::size_t p = 0; p < layer.weights.size(); ++p) {
      out.push_back(&layer.weights[p]);
      out.push_back(&layer.biases[p]);
    }
  return out;
}

inline std::vector<Matrix*> gradient_tensors(Gradients& grads) {
  std::vector<Matrix*> out;
  for (auto& lg : grads.layers)
    for (std::size_t p = 0; p < lg.weights.size(); ++p) {
      out.push_back(&lg.weights[p]);
      out.push_back(&lg.biases[p]);
    }
  return out;
}

}  // namespace snapvote

#endif  // SNAPVOTE_NETWORK_HPP_
