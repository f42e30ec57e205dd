#ifndef SNAPVOTE_TESTS_GRADIENT_CHECK_HPP_
#define SNAPVOTE_TESTS_GRADIENT_CHECK_HPP_

// Central finite differences over every parameter of a network or an
// autoencoder. Test-only: it touches the loss through the forward pass
// alone and never calls the analytic backward code.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "snapvote/matrix.hpp"
#include "snapvote/network.hpp"
#include "snapvote/pretrain.hpp"

namespace snapvote::testing {

inline constexpr double kFiniteDifferenceStep = 1e-5;

// Central differences carry roundoff of about eps * |loss| / step (~1e-10
// here), so entries whose analytic and numeric values are both below this
// magnitude are compared on the absolute scale of the floor.
inline constexpr double kRelativeFloor = 1e-4;

inline double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), kRelativeFloor});
  return std::abs(analytic - numeric) / scale;
}

/// Summed NLL computed from the plain forward pass.
inline double nll_loss(const Network& net, const Matrix& x, const LabelVector& y) {
  const Matrix p = predict_proba(net, x);
  double loss = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) loss -= std::log(p(i, y[i]));
  return loss;
}

struct CheckReport {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
};

/// Perturbs every entry of every tensor in `params` and compares the
/// central difference of `loss` against `analytic` (same layout).
inline CheckReport compare_with_finite_differences(const std::vector<Matrix*>& params,
                                                   const std::vector<const Matrix*>& analytic,
                                                   const std::function<double()>& loss,
                                                   double step = kFiniteDifferenceStep) {
  CheckReport report;
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto values = params[t]->values();
    auto grads = analytic[t]->values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + step;
      const double up = loss();
      values[i] = saved - step;
      const double down = loss();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      report.max_relative_error = std::max(report.max_relative_error, relative_error(grads[i], numeric));
      ++report.checked;
    }
  }
  return report;
}

inline CheckReport check_network_gradients(Network net, const Matrix& x, const LabelVector& y) {
  BackwardResult br = backward(net, x, y);
  auto grads = gradient_tensors(br.grads);
  std::vector<const Matrix*> analytic(grads.begin(), grads.end());
  return compare_with_finite_differences(parameter_tensors(net), analytic, [&] { return nll_loss(net, x, y); });
}

/// Reconstruction cross-entropy from reconstruct() alone.
inline double dae_loss_by_reconstruction(const DaeLayer& layer, const Matrix& noisy, const Matrix& clean) {
  const Matrix r = layer.reconstruct(noisy);
  double loss = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    const double x = clean.values()[i];
    const double p = r.values()[i];
    loss -= x * std::log(p) + (1.0 - x) * std::log(1.0 - p);
  }
  return loss;
}

inline CheckReport check_dae_gradients(DaeLayer layer, const Matrix& noisy, const Matrix& clean) {
  const DaeGradients g = dae_gradients(layer, noisy, clean);
  std::vector<Matrix*> params{&layer.encoder_weights, &layer.encoder_bias, &layer.decoder_bias};
  std::vector<const Matrix*> analytic{&g.encoder_weights, &g.encoder_bias, &g.decoder_bias};
  if (!layer.tied()) {
    params.push_back(&layer.decoder_weights);
    analytic.push_back(&g.decoder_weights);
  }
  return compare_with_finite_differences(params, analytic,
                                         [&] { return dae_loss_by_reconstruction(layer, noisy, clean); });
}

/// Random matrix with entries uniform in [lo, hi).
inline Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Matrix m(rows, cols);
  for (double& v : m.values()) v = rng.uniform(lo, hi);
  return m;
}

inline LabelVector random_labels(std::size_t n, std::size_t classes, Rng& rng) {
  std::vector<std::uint32_t> ids(n);
  for (auto& id : ids) id = static_cast<std::uint32_t>(rng.below(classes));
  return LabelVector(std::move(ids), classes);
}

/// Row-stochastic n x k matrix with strictly positive entries.
inline Matrix random_stochastic(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    double sum = 0.0;
    for (double& v : m.row(i)) sum += (v = rng.uniform(0.01, 1.0));
    for (double& v : m.row(i)) v /= sum;
  }
  return m;
}

}  // namespace snapvote::testing

#endif  // SNAPVOTE_TESTS_GRADIENT_CHECK_HPP_
