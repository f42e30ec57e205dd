#ifndef SNAPVOTE_PRETRAIN_HPP_
#define SNAPVOTE_PRETRAIN_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "snapvote/binary_io.hpp"
#include "snapvote/errors.hpp"
#include "snapvote/matrix.hpp"
#include "snapvote/network.hpp"
#include "snapvote/rng.hpp"
#include "snapvote/trainer.hpp"

namespace snapvote {

/// Per-feature min-max rescaling to [0, 1]. Statistics are frozen at fit
/// time; transform clamps values outside the fitted range and maps
/// constant features to 0.
struct MinMaxScaler {
  Matrix minimum;  // 1 x d
  Matrix maximum;  // 1 x d

  static MinMaxScaler fit(const Matrix& data) {
    detail::require(data.rows() > 0, "cannot fit a scaler on an empty matrix");
    MinMaxScaler s{Matrix(1, data.cols()), Matrix(1, data.cols())};
    for (std::size_t j = 0; j < data.cols(); ++j) {
      s.minimum(0, j) = data(0, j);
      s.maximum(0, j) = data(0, j);
    }
    for (std::size_t i = 1; i < data.rows(); ++i)
      for (std::size_t j = 0; j < data.cols(); ++j) {
        s.minimum(0, j) = std::min(s.minimum(0, j), data(i, j));
        s.maximum(0, j) = std::max(s.maximum(0, j), data(i, j));
      }
    return s;
  }

  Matrix transform(const Matrix& data) const {
    detail::require(data.cols() == minimum.cols(), "scaler fitted on " + std::to_string(minimum.cols()) +
                                                       " features, got " + std::to_string(data.cols()));
    Matrix out(data.rows(), data.cols());
    for (std::size_t i = 0; i < data.rows(); ++i)
      for (std::size_t j = 0; j < data.cols(); ++j) {
        const double range = maximum(0, j) - minimum(0, j);
        const double v = range > 0.0 ? (data(i, j) - minimum(0, j)) / range : 0.0;
        out(i, j) = std::clamp(v, 0.0, 1.0);
      }
    return out;
  }

  bool operator==(const MinMaxScaler&) const = default;
};

/// Masking noise: each entry is zeroed independently with probability
/// `level`; surviving entries are copied unchanged.
inline Matrix corrupt(const Matrix& input, double level, Rng& rng) {
  detail::require(level >= 0.0 && level < 1.0, "corruption level must lie in [0, 1)");
  Matrix out = input;
  if (level == 0.0) return out;
  for (double& v : out.values())
    if (rng.uniform() < level) v = 0.0;
  return out;
}

/// Sigmoid autoencoder layer. With tied weights the decoder is the
/// transpose of the encoder and `decoder_weights` stays empty.
struct DaeLayer {
  Matrix encoder_weights;  // d_in x d_hid
  Matrix encoder_bias;     // 1 x d_hid
  Matrix decoder_weights;  // d_hid x d_in, untied only
  Matrix decoder_bias;     // 1 x d_in
  double corruption_level = 0.25;

  std::size_t input_dim() const { return encoder_weights.rows(); }
  std::size_t hidden_dim() const { return encoder_weights.cols(); }
  bool tied() const { return decoder_weights.empty(); }

  Matrix encode(const Matrix& input) const {
    Matrix h = detail::affine(input, encoder_weights, encoder_bias);
    for (double& v : h.values()) v = detail::sigmoid(v);
    return h;
  }

  /// Decoder pre-activation for a hidden code.
  Matrix decode_logits(const Matrix& hidden) const {
    Matrix z = tied() ? matmul_nt(hidden, encoder_weights) : matmul(hidden, decoder_weights);
    add_row_vector(z, decoder_bias);
    return z;
  }

  Matrix reconstruct(const Matrix& input) const {
    Matrix r = decode_logits(encode(input));
    for (double& v : r.values()) v = detail::sigmoid(v);
    return r;
  }

  bool operator==(const DaeLayer&) const = default;
};

inline DaeLayer make_dae_layer(std::size_t input_dim, std::size_t hidden_dim, bool tied, double corruption_level,
                               Rng& rng) {
  detail::require(input_dim > 0 && hidden_dim > 0, "autoencoder dimensions must be positive");
  detail::require(corruption_level >= 0.0 && corruption_level < 1.0, "corruption level must lie in [0, 1)");
  DaeLayer layer;
  const double limit = std::sqrt(6.0 / static_cast<double>(input_dim + hidden_dim));
  layer.encoder_weights = Matrix(input_dim, hidden_dim);
  for (double& v : layer.encoder_weights.values()) v = rng.uniform(-limit, limit);
  layer.encoder_bias = Matrix(1, hidden_dim);
  if (!tied) {
    layer.decoder_weights = Matrix(hidden_dim, input_dim);
    for (double& v : layer.decoder_weights.values()) v = rng.uniform(-limit, limit);
  }
  layer.decoder_bias = Matrix(1, input_dim);
  layer.corruption_level = corruption_level;
  return layer;
}

namespace detail {

// -(x log s(z) + (1 - x) log(1 - s(z))) = softplus(z) - x z
inline double bernoulli_cross_entropy(double target, double logit) {
  const double softplus = std::max(logit, 0.0) + std::log1p(std::exp(-std::abs(logit)));
  return softplus - target * logit;
}

}  // namespace detail

/// Summed per-entry cross-entropy between `clean` and the reconstruction
/// of `corrupted`.
inline double reconstruction_loss(const DaeLayer& layer, const Matrix& corrupted, const Matrix& clean) {
  detail::require(corrupted.rows() == clean.rows() && corrupted.cols() == clean.cols(),
                  "corrupted " + corrupted.shape() + " vs clean " + clean.shape());
  const Matrix z = layer.decode_logits(layer.encode(corrupted));
  double loss = 0.0;
  auto zv = z.values();
  auto xv = clean.values();
  for (std::size_t i = 0; i < zv.size(); ++i) loss += detail::bernoulli_cross_entropy(xv[i], zv[i]);
  return loss;
}

struct DaeGradients {
  double loss = 0.0;
  Matrix encoder_weights;
  Matrix encoder_bias;
  Matrix decoder_weights;  // empty when tied
  Matrix decoder_bias;
};

/// Summed reconstruction loss and its gradient w.r.t. every DAE parameter.
inline DaeGradients dae_gradients(const DaeLayer& layer, const Matrix& corrupted, const Matrix& clean) {
  detail::require(corrupted.rows() == clean.rows() && corrupted.cols() == clean.cols(),
                  "corrupted " + corrupted.shape() + " vs clean " + clean.shape());
  detail::require(clean.cols() == layer.input_dim(),
                  "input has " + std::to_string(clean.cols()) + " columns, layer expects " +
                      std::to_string(layer.input_dim()));
  DaeGradients g;
  const Matrix hidden = layer.encode(corrupted);
  Matrix delta_out = layer.decode_logits(hidden);  // becomes r - x
  {
    auto z = delta_out.values();
    auto x = clean.values();
    for (std::size_t i = 0; i < z.size(); ++i) {
      g.loss += detail::bernoulli_cross_entropy(x[i], z[i]);
      z[i] = detail::sigmoid(z[i]) - x[i];
    }
  }
  g.decoder_bias = column_sums(delta_out);
  Matrix delta_hidden;
  if (layer.tied()) {
    delta_hidden = matmul(delta_out, layer.encoder_weights);
  } else {
    g.decoder_weights = matmul_tn(hidden, delta_out);
    delta_hidden = matmul_nt(delta_out, layer.decoder_weights);
  }
  {
    auto d = delta_hidden.values();
    auto h = hidden.values();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] *= h[i] * (1.0 - h[i]);
  }
  g.encoder_weights = matmul_tn(corrupted, delta_hidden);
  g.encoder_bias = column_sums(delta_hidden);
  if (layer.tied()) {
    // Decoder use of W^T contributes (r - x)^T h.
    const Matrix decoder_part = matmul_tn(delta_out, hidden);
    auto w = g.encoder_weights.values();
    auto p = decoder_part.values();
    for (std::size_t i = 0; i < w.size(); ++i) w[i] += p[i];
  }
  return g;
}

struct DaeLayerConfig {
  std::size_t hidden_dim = 0;
  double corruption_level = 0.25;
  std::size_t epochs = 10;
  double learning_rate = 0.1;
  double momentum = 0.0;
  std::size_t batch_size = 20;
  bool tied = true;
  std::uint64_t seed = 0;
};

struct DaeTrainResult {
  DaeLayer layer;
  /// Mean per-example clean reconstruction loss; entry 0 is the
  /// initialization, entry i follows epoch i.
  std::vector<double> loss_curve;
};

inline double mean_clean_loss(const DaeLayer& layer, const Matrix& input) {
  return reconstruction_loss(layer, input, input) / static_cast<double>(input.rows());
}

/// Trains one denoising autoencoder on `input` (entries in [0, 1]) with
/// mini-batch SGD on the cross-entropy reconstruction of the clean input.
inline DaeTrainResult train_dae_layer(const Matrix& input, const DaeLayerConfig& cfg) {
  detail::require(input.rows() > 0 && input.cols() > 0, "autoencoder input is empty");
  detail::require(cfg.hidden_dim > 0, "autoencoder hidden size must be positive");
  detail::require(cfg.learning_rate > 0.0, "learning rate must be positive");
  detail::require(cfg.momentum >= 0.0 && cfg.momentum < 1.0, "momentum must lie in [0, 1)");
  Rng rng(cfg.seed);
  DaeTrainResult result{make_dae_layer(input.cols(), cfg.hidden_dim, cfg.tied, cfg.corruption_level, rng), {}};
  DaeLayer& layer = result.layer;
  result.loss_curve.push_back(mean_clean_loss(layer, input));

  const std::size_t n = input.rows();
  const std::size_t batch = (cfg.batch_size == 0 || cfg.batch_size >= n) ? n : cfg.batch_size;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<Matrix> velocity(4);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    if (batch < n) rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t stop = std::min(n, start + batch);
      const Matrix clean = batch == n ? input : gather_rows(input, std::span(order.data() + start, stop - start));
      const Matrix noisy = corrupt(clean, cfg.corruption_level, rng);
      DaeGradients g = dae_gradients(layer, noisy, clean);
      if (!std::isfinite(g.loss)) throw TrainingDiverged("autoencoder diverged", epoch, epoch - 1);
      const double scale = 1.0 / static_cast<double>(clean.rows());
      sgd_step(layer.encoder_weights, g.encoder_weights, velocity[0], cfg.learning_rate * scale, cfg.momentum);
      sgd_step(layer.encoder_bias, g.encoder_bias, velocity[1], cfg.learning_rate * scale, cfg.momentum);
      if (!layer.tied())
        sgd_step(layer.decoder_weights, g.decoder_weights, velocity[2], cfg.learning_rate * scale, cfg.momentum);
      sgd_step(layer.decoder_bias, g.decoder_bias, velocity[3], cfg.learning_rate * scale, cfg.momentum);
    }
    const double loss = mean_clean_loss(layer, input);
    if (!std::isfinite(loss)) throw TrainingDiverged("autoencoder diverged", epoch, epoch - 1);
    result.loss_curve.push_back(loss);
  }
  return result;
}

struct PretrainConfig {
  std::vector<std::size_t> hidden_sizes;
  double corruption_level = 0.25;
  std::size_t epochs_per_layer = 10;
  double learning_rate = 0.1;
  double momentum = 0.0;
  std::size_t batch_size = 20;
  bool tied = true;
  std::uint64_t seed = 0;

  /// Settings for layer `index`; each layer gets seed + index.
  DaeLayerConfig layer_config(std::size_t index) const {
    return {hidden_sizes.at(index), corruption_level, epochs_per_layer, learning_rate, momentum, batch_size, tied,
            seed + index};
  }
};

struct PretrainResult {
  std::vector<DaeLayer> layers;
  std::vector<std::vector<double>> loss_curves;
};

/// Greedy layer-wise pretraining: layer i learns from the clean encoding
/// produced by layers 0..i-1.
inline PretrainResult stack_pretrain(const Matrix& unlabeled, const PretrainConfig& cfg) {
  detail::require(unlabeled.rows() > 0, "unlabeled set is empty");
  PretrainResult result;
  Matrix current = unlabeled;
  for (std::size_t i = 0; i < cfg.hidden_sizes.size(); ++i) {
    DaeTrainResult trained;
    try {
      trained = train_dae_layer(current, cfg.layer_config(i));
    } catch (const TrainingDiverged& e) {
      throw TrainingDiverged("autoencoder layer " + std::to_string(i) + " diverged", e.epoch(), e.last_good_epoch());
    } catch (const InvalidInput& e) {
      throw InvalidInput("autoencoder layer " + std::to_string(i) + ": " + e.what());
    }
    current = trained.layer.encode(current);
    result.layers.push_back(std::move(trained.layer));
    result.loss_curves.push_back(std::move(trained.loss_curve));
  }
  return result;
}

/// Builds the fine-tuning network: one sigmoid layer per autoencoder
/// (encoder weights copied, decoders dropped) followed by freshly
/// initialized supervised layers.
inline Network init_network(std::span<const DaeLayer> daes, std::span<const LayerSpec> supervised, Rng& rng) {
  std::vector<LayerSpec> specs;
  for (std::size_t i = 0; i < daes.size(); ++i) {
    if (i > 0)
      detail::require(daes[i - 1].hidden_dim() == daes[i].input_dim(),
                      "autoencoder " + std::to_string(i - 1) + " outputs " + std::to_string(daes[i - 1].hidden_dim()) +
                          " but autoencoder " + std::to_string(i) + " expects " + std::to_string(daes[i].input_dim()));
    specs.push_back({LayerKind::affine_sigmoid, daes[i].input_dim(), daes[i].hidden_dim(), 2});
  }
  if (!daes.empty() && !supervised.empty())
    detail::require(daes.back().hidden_dim() == supervised.front().input_dim,
                    "autoencoder stack outputs " + std::to_string(daes.back().hidden_dim()) +
                        " but the first supervised layer expects " + std::to_string(supervised.front().input_dim));
  specs.insert(specs.end(), supervised.begin(), supervised.end());
  validate_specs(specs);

  Network net;
  for (const auto& dae : daes) {
    Layer layer{specs[net.layers.size()], {dae.encoder_weights}, {dae.encoder_bias}};
    net.layers.push_back(std::move(layer));
  }
  for (const auto& spec : supervised) net.layers.push_back(make_layer(spec, rng));
  net.names = default_layer_names(specs);
  return net;
}

// DAES container: "DAES", version u32, layer count u32, scaler minimum and
// maximum matrices, then per layer {tied u32, corruption f64, encoder
// weights, encoder bias, decoder bias, [decoder weights if untied]}.
inline constexpr std::uint32_t kDaesVersion = 1;

inline void save_daes(const std::filesystem::path& path, const MinMaxScaler& scaler, std::span<const DaeLayer> layers) {
  auto out = io::open_out(path, true);
  io::put_magic(out, "DAES");
  io::put_u32(out, kDaesVersion);
  io::put_u32(out, static_cast<std::uint32_t>(layers.size()));
  io::put_matrix(out, scaler.minimum);
  io::put_matrix(out, scaler.maximum);
  for (const auto& l : layers) {
    io::put_u32(out, l.tied() ? 1u : 0u);
    io::put_f64(out, l.corruption_level);
    io::put_matrix(out, l.encoder_weights);
    io::put_matrix(out, l.encoder_bias);
    io::put_matrix(out, l.decoder_bias);
    if (!l.tied()) io::put_matrix(out, l.decoder_weights);
  }
  if (!out) throw FormatError("failed writing '" + path.string() + "'");
}

struct DaeStack {
  MinMaxScaler scaler;
  std::vector<DaeLayer> layers;
};

inline DaeStack load_daes(const std::filesystem::path& path) {
  auto in = io::open_in(path, true);
  io::expect_magic(in, "DAES");
  const std::uint32_t version = io::get_u32(in);
  if (version != kDaesVersion) throw FormatError("unsupported DAES version " + std::to_string(version));
  const std::uint32_t count = io::get_u32(in);
  DaeStack stack;
  stack.scaler.minimum = io::get_matrix(in);
  stack.scaler.maximum = io::get_matrix(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    DaeLayer l;
    const bool tied = io::get_u32(in) != 0;
    l.corruption_level = io::get_f64(in);
    l.encoder_weights = io::get_matrix(in);
    l.encoder_bias = io::get_matrix(in);
    l.decoder_bias = io::get_matrix(in);
    if (!tied) l.decoder_weights = io::get_matrix(in);
    stack.layers.push_back(std::move(l));
  }
  return stack;
}

}  // namespace snapvote

#endif  // SNAPVOTE_PRETRAIN_HPP_
