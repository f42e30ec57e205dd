#ifndef SNAPVOTE_FOREST_HPP_
#define SNAPVOTE_FOREST_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "snapvote/binary_io.hpp"
#include "snapvote/errors.hpp"
#include "snapvote/matrix.hpp"
#include "snapvote/rng.hpp"

namespace snapvote {

enum class MaxFeatures { sqrt, fraction };

struct ForestConfig {
  std::size_t n_trees = 500;
  MaxFeatures max_features = MaxFeatures::sqrt;
  double max_features_fraction = 1.0;  // used by MaxFeatures::fraction
  std::optional<std::size_t> max_depth;
  std::size_t min_samples_leaf = 1;
  bool bootstrap = true;
  std::uint64_t seed = 0;
  std::size_t threads = 1;  // results do not depend on this

  void validate() const {
    detail::require(n_trees >= 1, "forest needs at least one tree");
    detail::require(min_samples_leaf >= 1, "min_samples_leaf must be at least 1");
    if (max_features == MaxFeatures::fraction)
      detail::require(max_features_fraction > 0.0 && max_features_fraction <= 1.0,
                      "max_features fraction must lie in (0, 1]");
  }

  /// Features examined per split for a d-feature problem (at least 1).
  std::size_t features_per_split(std::size_t d) const {
    std::size_t k = 1;
    if (max_features == MaxFeatures::sqrt)
      k = static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(d))));
    else
      k = static_cast<std::size_t>(std::floor(max_features_fraction * static_cast<double>(d)));
    return std::clamp<std::size_t>(k, 1, std::max<std::size_t>(d, 1));
  }

  bool operator==(const ForestConfig&) const = default;
};

struct TreeNode {
  bool leaf = true;
  std::uint32_t feature = 0;
  double threshold = 0.0;  // x[feature] <= threshold goes left
  std::uint32_t left = 0;
  std::uint32_t right = 0;
  std::vector<std::uint64_t> counts;  // leaves only

  bool operator==(const TreeNode&) const = default;
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  const TreeNode& leaf_for(std::span<const double> x) const {
    const TreeNode* node = &nodes.front();
    while (!node->leaf) node = &nodes[x[node->feature] <= node->threshold ? node->left : node->right];
    return *node;
  }

  std::size_t depth() const {
    std::vector<std::pair<std::size_t, std::size_t>> stack{{0, 0}};
    std::size_t deepest = 0;
    while (!stack.empty()) {
      auto [idx, d] = stack.back();
      stack.pop_back();
      deepest = std::max(deepest, d);
      if (!nodes[idx].leaf) {
        stack.push_back({nodes[idx].left, d + 1});
        stack.push_back({nodes[idx].right, d + 1});
      }
    }
    return deepest;
  }

  bool operator==(const DecisionTree&) const = default;
};

struct RandomForestModel {
  std::vector<DecisionTree> trees;
  std::size_t classes = 0;
  std::size_t features = 0;

  bool operator==(const RandomForestModel&) const = default;
};

struct SplitCandidate {
  std::uint32_t feature = 0;
  double threshold = 0.0;
  double impurity = 0.0;  // weighted Gini of the two children
};

namespace detail {

inline double gini_sum(std::span<const std::uint64_t> counts, std::uint64_t total) {
  if (total == 0) return 0.0;
  double sq = 0.0;
  for (auto c : counts) sq += static_cast<double>(c) * static_cast<double>(c);
  return static_cast<double>(total) - sq / static_cast<double>(total);  // total * gini
}

inline bool better_split(const SplitCandidate& a, const std::optional<SplitCandidate>& best) {
  if (!best) return true;
  if (a.impurity != best->impurity) return a.impurity < best->impurity;
  if (a.feature != best->feature) return a.feature < best->feature;
  return a.threshold < best->threshold;
}

struct TreeBuilder {
  const Matrix& x;
  const LabelVector& y;
  std::size_t classes;
  std::size_t features_per_split;
  std::optional<std::size_t> max_depth;
  std::size_t min_samples_leaf;
  Rng& rng;
  DecisionTree tree;

  // Best split of `samples` on one feature, scanning midpoints between
  // consecutive distinct values.
  std::optional<SplitCandidate> best_on_feature(std::vector<std::size_t>& samples, std::uint32_t f) {
    std::sort(samples.begin(), samples.end(), [&](std::size_t a, std::size_t b) {
      return x(a, f) < x(b, f) || (x(a, f) == x(b, f) && a < b);
    });
    const std::size_t n = samples.size();
    std::vector<std::uint64_t> left(classes, 0), right(classes, 0);
    for (auto s : samples) ++right[y[s]];
    std::optional<SplitCandidate> best;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      const std::uint32_t label = y[samples[i]];
      ++left[label];
      --right[label];
      const double lo = x(samples[i], f);
      const double hi = x(samples[i + 1], f);
      if (!(lo < hi)) continue;
      const std::size_t n_left = i + 1;
      if (n_left < min_samples_leaf || n - n_left < min_samples_leaf) continue;
      double threshold = lo + (hi - lo) / 2.0;
      if (!(threshold < hi)) threshold = lo;
      const double impurity =
          (gini_sum(left, n_left) + gini_sum(right, n - n_left)) / static_cast<double>(n);
      SplitCandidate c{f, threshold, impurity};
      if (better_split(c, best)) best = c;
    }
    return best;
  }

  std::uint32_t build(std::vector<std::size_t> samples, std::size_t depth) {
    const auto index = static_cast<std::uint32_t>(tree.nodes.size());
    tree.nodes.emplace_back();
    std::vector<std::uint64_t> counts(classes, 0);
    for (auto s : samples) ++counts[y[s]];
    const bool pure = std::count_if(counts.begin(), counts.end(), [](auto c) { return c > 0; }) <= 1;
    const bool depth_capped = max_depth && depth >= *max_depth;

    std::optional<SplitCandidate> best;
    if (!pure && !depth_capped && samples.size() >= 2 * min_samples_leaf) {
      const std::size_t d = x.cols();
      std::vector<std::uint32_t> order(d);
      std::iota(order.begin(), order.end(), 0u);
      rng.shuffle(std::span<std::uint32_t>(order));
      // Examine features_per_split features; keep drawing past that only
      // while no valid split has been found.
      for (std::size_t k = 0; k < d; ++k) {
        if (k >= features_per_split && best) break;
        auto candidate = best_on_feature(samples, order[k]);
        if (candidate && better_split(*candidate, best)) best = candidate;
      }
    }
    if (!best) {
      tree.nodes[index].counts = std::move(counts);
      return index;
    }
    std::vector<std::size_t> left, right;
    for (auto s : samples) (x(s, best->feature) <= best->threshold ? left : right).push_back(s);
    samples.clear();
    samples.shrink_to_fit();
    const std::uint32_t l = build(std::move(left), depth + 1);
    const std::uint32_t r = build(std::move(right), depth + 1);
    TreeNode& node = tree.nodes[index];
    node.leaf = false;
    node.feature = best->feature;
    node.threshold = best->threshold;
    node.left = l;
    node.right = r;
    return index;
  }
};

}  // namespace detail

/// Grows one unpruned CART tree (Gini) on the rows listed in `samples`;
/// duplicates count with multiplicity. Ties between equally good splits go
/// to the lowest feature index, then the lowest threshold.
inline DecisionTree fit_tree(const Matrix& x, const LabelVector& y, std::vector<std::size_t> samples,
                             const ForestConfig& cfg, Rng& rng) {
  detail::require(!samples.empty(), "tree needs at least one sample");
  detail::TreeBuilder builder{x,           y, y.classes, cfg.features_per_split(x.cols()), cfg.max_depth,
                              cfg.min_samples_leaf, rng, {}};
  builder.build(std::move(samples), 0);
  return std::move(builder.tree);
}

/// Tree `index` of a forest: bootstrap draw (if enabled) and growth use an
/// RNG seeded with cfg.seed + index.
inline DecisionTree fit_forest_tree(const Matrix& x, const LabelVector& y, const ForestConfig& cfg,
                                    std::size_t index) {
  Rng rng(cfg.seed + index);
  const std::size_t n = x.rows();
  std::vector<std::size_t> samples(n);
  if (cfg.bootstrap) {
    for (auto& s : samples) s = static_cast<std::size_t>(rng.below(n));
  } else {
    std::iota(samples.begin(), samples.end(), std::size_t{0});
  }
  return fit_tree(x, y, std::move(samples), cfg, rng);
}

inline RandomForestModel rf_fit(const Matrix& x, const LabelVector& y, const ForestConfig& cfg) {
  cfg.validate();
  detail::require(x.rows() > 0, "random forest needs at least one example");
  detail::require(x.rows() == y.size(), "random forest: " + std::to_string(x.rows()) + " rows but " +
                                            std::to_string(y.size()) + " labels");
  detail::require(x.cols() > 0, "random forest needs at least one feature");
  detail::require(x.all_finite(), "random forest input contains non-finite values");
  detail::require(y.classes >= 2, "random forest needs a class count of at least 2");

  RandomForestModel model;
  model.classes = y.classes;
  model.features = x.cols();
  model.trees.resize(cfg.n_trees);
  const std::size_t workers = std::clamp<std::size_t>(cfg.threads, 1, cfg.n_trees);
  if (workers == 1) {
    for (std::size_t t = 0; t < cfg.n_trees; ++t) model.trees[t] = fit_forest_tree(x, y, cfg, t);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t t = w; t < cfg.n_trees; t += workers) model.trees[t] = fit_forest_tree(x, y, cfg, t);
      });
  }
  return model;
}

/// Leaf class frequencies of a single tree, one row per example.
inline Matrix tree_predict_proba(const DecisionTree& tree, std::size_t classes, const Matrix& x) {
  Matrix out(x.rows(), classes);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const TreeNode& leaf = tree.leaf_for(x.row(i));
    const double total = static_cast<double>(std::accumulate(leaf.counts.begin(), leaf.counts.end(), std::uint64_t{0}));
    for (std::size_t k = 0; k < classes; ++k) out(i, k) = static_cast<double>(leaf.counts[k]) / total;
  }
  return out;
}

/// Mean of the per-tree leaf class frequencies.
inline Matrix rf_predict_proba(const RandomForestModel& model, const Matrix& x) {
  detail::require(!model.trees.empty(), "forest has no trees");
  detail::require(x.cols() == model.features, "forest was fitted on " + std::to_string(model.features) +
                                                  " features, got " + std::to_string(x.cols()));
  Matrix out(x.rows(), model.classes);
  std::vector<double> freq(model.classes);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto row = out.row(i);
    for (const auto& tree : model.trees) {
      const TreeNode& leaf = tree.leaf_for(x.row(i));
      std::uint64_t total = 0;
      for (auto c : leaf.counts) total += c;
      for (std::size_t k = 0; k < model.classes; ++k)
        row[k] += static_cast<double>(leaf.counts[k]) / static_cast<double>(total);
    }
    const double trees = static_cast<double>(model.trees.size());
    for (double& v : row) v /= trees;
  }
  return out;
}

inline std::vector<std::uint32_t> rf_predict(const RandomForestModel& model, const Matrix& x) {
  return argmax_rows(rf_predict_proba(model, x));
}

// FRST container: "FRST", version u32, tree count u32, classes u32,
// features u32; per tree a node count u32 and nodes in index order. An
// internal node is {0 u32, feature u32, threshold f64, left u32, right u32},
// a leaf {1 u32, classes x u64 counts}.
inline constexpr std::uint32_t kForestVersion = 1;

inline void save_forest(const std::filesystem::path& path, const RandomForestModel& model) {
  auto out = io::open_out(path, true);
  io::put_magic(out, "FRST");
  io::put_u32(out, kForestVersion);
  io::put_u32(out, static_cast<std::uint32_t>(model.trees.size()));
  io::put_u32(out, static_cast<std::uint32_t>(model.classes));
  io::put_u32(out, static_cast<std::uint32_t>(model.features));
  for (const auto& tree : model.trees) {
    io::put_u32(out, static_cast<std::uint32_t>(tree.nodes.size()));
    for (const auto& node : tree.nodes) {
      if (node.leaf) {
        io::put_u32(out, 1);
        for (auto c : node.counts) io::put_u64(out, c);
      } else {
        io::put_u32(out, 0);
        io::put_u32(out, node.feature);
        io::put_f64(out, node.threshold);
        io::put_u32(out, node.left);
        io::put_u32(out, node.right);
      }
    }
  }
  if (!out) throw FormatError("failed writing '" + path.string() + "'");
}

inline RandomForestModel load_forest(const std::filesystem::path& path) {
  auto in = io::open_in(path, true);
  io::expect_magic(in, "FRST");
  const std::uint32_t version = io::get_u32(in);
  if (version != kForestVersion) throw FormatError("unsupported FRST version " + std::to_string(version));
  RandomForestModel model;
  const std::uint32_t trees = io::get_u32(in);
  model.classes = io::get_u32(in);
  model.features = io::get_u32(in);
  for (std::uint32_t t = 0; t < trees; ++t) {
    DecisionTree tree;
    const std::uint32_t count = io::get_u32(in);
    for (std::uint32_t i = 0; i < count; ++i) {
      TreeNode node;
      const std::uint32_t tag = io::get_u32(in);
      if (tag == 1) {
        node.counts.resize(model.classes);
        for (auto& c : node.counts) c = io::get_u64(in);
      } else if (tag == 0) {
        node.leaf = false;
        node.feature = io::get_u32(in);
        node.threshold = io::get_f64(in);
        node.left = io::get_u32(in);
        node.right = io::get_u32(in);
        if (node.left >= count || node.right >= count || node.feature >= model.features)
          throw FormatError("forest node references out of range");
      } else {
        throw FormatError("bad forest node tag " + std::to_string(tag));
      }
      tree.nodes.push_back(std::move(node));
    }
    if (tree.nodes.empty()) throw FormatError("empty tree in forest file");
    model.trees.push_back(std::move(tree));
  }
  return model;
}

}  // namespace snapvote

#endif  // SNAPVOTE_FOREST_HPP_
