#include "snapvote/pretrain.hpp"

#include <cmath>
#include <filesystem>
#include <vector>

#include <gtest/gtest.h>

#include "support/gradient_check.hpp"

namespace snapvote {
namespace {

using testing::check_dae_gradients;
using testing::dae_loss_by_reconstruction;
using testing::random_matrix;

Matrix random_binary(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(rows, cols);
  for (double& v : m.values()) v = rng.uniform() < 0.5 ? 0.0 : 1.0;
  return m;
}

// Sigmoid encoder by scalar loops.
Matrix encode_by_loops(const DaeLayer& layer, const Matrix& x) {
  Matrix h(x.rows(), layer.hidden_dim());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < layer.hidden_dim(); ++j) {
      double z = layer.encoder_bias(0, j);
      for (std::size_t k = 0; k < x.cols(); ++k) z += x(i, k) * layer.encoder_weights(k, j);
      h(i, j) = 1.0 / (1.0 + std::exp(-z));
    }
  return h;
}

TEST(Corrupt, ZeroLevelIsIdentity) {
  Rng rng(1);
  Matrix m = random_matrix(5, 7, rng);
  EXPECT_EQ(corrupt(m, 0.0, rng), m);
}

TEST(Corrupt, ZerosStayZero) {
  Rng rng(2);
  Matrix z(20, 20);
  EXPECT_EQ(corrupt(z, 0.6, rng), z);
}

TEST(Corrupt, ZeroedFractionMatchesLevel) {
  Rng rng(3);
  Matrix ones(1000, 1000, 1.0);
  Matrix out = corrupt(ones, 0.25, rng);
  std::size_t zeroed = 0;
  for (double v : out.values()) zeroed += v == 0.0;
  EXPECT_NEAR(static_cast<double>(zeroed) / 1e6, 0.25, 0.002);
}

TEST(Corrupt, SurvivorsAreExactCopies) {
  Rng rng(4);
  Matrix m = random_matrix(50, 50, rng, 0.5, 1.0);
  Matrix out = corrupt(m, 0.4, rng);
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (out.values()[i] != 0.0) {
      EXPECT_EQ(out.values()[i], m.values()[i]);
    }
  }
}

TEST(Corrupt, LevelOneRejected) {
  Rng rng(5);
  EXPECT_THROW(corrupt(Matrix(2, 2), 1.0, rng), InvalidInput);
}

TEST(DaeGradients, MatchFiniteDifferencesTiedAndUntied) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    for (bool tied : {true, false}) {
      Rng rng(seed);
      DaeLayer layer = make_dae_layer(6, 5, tied, 0.25, rng);
      for (double& v : layer.encoder_bias.values()) v = rng.uniform(-0.2, 0.2);
      for (double& v : layer.decoder_bias.values()) v = rng.uniform(-0.2, 0.2);
      Matrix clean = random_matrix(4, 6, rng, 0.0, 1.0);
      Matrix noisy = corrupt(clean, 0.25, rng);
      auto report = check_dae_gradients(layer, noisy, clean);
      EXPECT_LT(report.max_relative_error, 1e-5) << "seed " << seed << " tied " << tied;
    }
  }
}

TEST(DaeLoss, MatchesScalarDefinition) {
  Rng rng(6);
  DaeLayer layer = make_dae_layer(5, 3, false, 0.0, rng);
  Matrix x = random_matrix(7, 5, rng, 0.0, 1.0);
  EXPECT_NEAR(reconstruction_loss(layer, x, x), dae_loss_by_reconstruction(layer, x, x), 1e-10);
}

TEST(TrainDaeLayer, ZeroEpochsReturnsInitialization) {
  Matrix x = random_binary(10, 4, 7);
  DaeLayerConfig cfg;
  cfg.hidden_dim = 3;
  cfg.epochs = 0;
  cfg.seed = 9;
  auto result = train_dae_layer(x, cfg);
  Rng rng(9);
  EXPECT_EQ(result.layer, make_dae_layer(4, 3, true, cfg.corruption_level, rng));
  EXPECT_EQ(result.loss_curve.size(), 1u);
}

TEST(TrainDaeLayer, LearnsIdentityOnBinaryData) {
  Matrix x = random_binary(64, 8, 1);
  DaeLayerConfig cfg;
  cfg.hidden_dim = 12;
  cfg.corruption_level = 0.0;
  cfg.epochs = 500;
  cfg.learning_rate = 0.1;
  cfg.batch_size = 8;
  cfg.seed = 3;
  auto result = train_dae_layer(x, cfg);
  ASSERT_EQ(result.loss_curve.size(), 501u);
  Rng rng(3);
  const DaeLayer initial = make_dae_layer(8, 12, true, 0.0, rng);
  const double initial_loss = dae_loss_by_reconstruction(initial, x, x);
  const double final_loss = dae_loss_by_reconstruction(result.layer, x, x);
  EXPECT_NEAR(result.loss_curve.front() * 64.0, initial_loss, 1e-9);
  EXPECT_NEAR(result.loss_curve.back() * 64.0, final_loss, 1e-9);
  EXPECT_LT(final_loss, 0.2 * initial_loss);
}

TEST(TrainDaeLayer, RejectsEmptyInput) {
  DaeLayerConfig cfg;
  cfg.hidden_dim = 2;
  EXPECT_THROW(train_dae_layer(Matrix(0, 3), cfg), InvalidInput);
}

PretrainConfig two_layer_config() {
  PretrainConfig cfg;
  cfg.hidden_sizes = {6, 4};
  cfg.epochs_per_layer = 5;
  cfg.learning_rate = 0.2;
  cfg.batch_size = 10;
  cfg.seed = 40;
  return cfg;
}

TEST(StackPretrain, SingleLayerEqualsTrainDaeLayer) {
  Matrix x = random_binary(30, 8, 2);
  PretrainConfig cfg = two_layer_config();
  cfg.hidden_sizes = {6};
  auto stack = stack_pretrain(x, cfg);
  ASSERT_EQ(stack.layers.size(), 1u);
  EXPECT_EQ(stack.layers[0], train_dae_layer(x, cfg.layer_config(0)).layer);
}

TEST(StackPretrain, SecondLayerTrainsOnCleanEncoding) {
  Matrix x = random_binary(30, 8, 3);
  PretrainConfig cfg = two_layer_config();
  auto stack = stack_pretrain(x, cfg);
  ASSERT_EQ(stack.layers.size(), 2u);
  const Matrix encoded = encode_by_loops(stack.layers[0], x);
  // Loop and matrix encoders agree to rounding; the recomposed layer must
  // land on the same parameters to the same order.
  const DaeLayer expected = train_dae_layer(encoded, cfg.layer_config(1)).layer;
  for (std::size_t i = 0; i < expected.encoder_weights.size(); ++i)
    EXPECT_NEAR(stack.layers[1].encoder_weights.values()[i], expected.encoder_weights.values()[i], 1e-9);
  EXPECT_EQ(stack.layers[1], train_dae_layer(stack.layers[0].encode(x), cfg.layer_config(1)).layer);
}

TEST(StackPretrain, LowerLayersUntouchedByLaterOnes) {
  Matrix x = random_binary(30, 8, 4);
  PretrainConfig one = two_layer_config();
  one.hidden_sizes = {6};
  EXPECT_EQ(stack_pretrain(x, two_layer_config()).layers[0], stack_pretrain(x, one).layers[0]);
}

TEST(StackPretrain, EmptyUnlabeledSetRejected) {
  EXPECT_THROW(stack_pretrain(Matrix(0, 8), two_layer_config()), InvalidInput);
}

TEST(InitNetwork, WithoutAutoencodersMatchesPlainInit) {
  std::vector<LayerSpec> supervised{{LayerKind::maxout, 5, 4, 2}, {LayerKind::softmax, 4, 3}};
  Rng a(11), b(11);
  EXPECT_EQ(init_network({}, supervised, a), make_network(supervised, b));
}

TEST(InitNetwork, FirstLayerReproducesEncoderBitwise) {
  Matrix x = random_binary(20, 8, 5);
  auto stack = stack_pretrain(x, two_layer_config());
  std::vector<LayerSpec> supervised{{LayerKind::maxout, 4, 5, 2}, {LayerKind::softmax, 5, 3}};
  Rng rng(12);
  Network net = init_network(stack.layers, supervised, rng);
  ASSERT_EQ(net.layers.size(), 4u);
  EXPECT_EQ(net.names, (std::vector<std::string>{"h0", "h1", "h2", "softmax"}));
  auto reps = forward(net, x);
  EXPECT_EQ(reps[0], stack.layers[0].encode(x));
  EXPECT_EQ(reps[1], stack.layers[1].encode(stack.layers[0].encode(x)));
  const Matrix loops = encode_by_loops(stack.layers[0], x);
  for (std::size_t i = 0; i < loops.size(); ++i) EXPECT_NEAR(reps[0].values()[i], loops.values()[i], 1e-14);
}

TEST(InitNetwork, DimensionBreakNamesBothSizes) {
  Rng rng(13);
  std::vector<DaeLayer> daes{make_dae_layer(8, 10, true, 0.25, rng)};
  std::vector<LayerSpec> supervised{{LayerKind::softmax, 12, 3}};
  try {
    init_network(daes, supervised, rng);
    FAIL() << "expected InvalidInput";
  } catch (const InvalidInput& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("10"), std::string::npos);
    EXPECT_NE(what.find("12"), std::string::npos);
  }
}

TEST(MinMaxScaler, MapsFittedRangeToUnitInterval) {
  Matrix data{{1.0, 5.0, 3.0}, {3.0, 5.0, -1.0}};
  auto s = MinMaxScaler::fit(data);
  EXPECT_EQ(s.transform(data), (Matrix{{0.0, 0.0, 1.0}, {1.0, 0.0, 0.0}}));
  EXPECT_EQ(s.transform(Matrix{{10.0, 2.0, 1.0}}), (Matrix{{1.0, 0.0, 0.5}}));
}

TEST(DaesFile, RoundTrips) {
  Matrix x = random_binary(20, 8, 6);
  PretrainConfig cfg = two_layer_config();
  cfg.tied = false;
  auto stack = stack_pretrain(x, cfg);
  auto scaler = MinMaxScaler::fit(random_matrix(5, 8, *std::make_unique<Rng>(1)));
  const auto path = std::filesystem::temp_directory_path() / "snapvote_daes.bin";
  save_daes(path, scaler, stack.layers);
  const DaeStack loaded = load_daes(path);
  EXPECT_EQ(loaded.scaler, scaler);
  EXPECT_EQ(loaded.layers, stack.layers);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace snapvote
