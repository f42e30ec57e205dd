#ifndef SNAPVOTE_CONFIG_HPP_
#define SNAPVOTE_CONFIG_HPP_

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "snapvote/binary_io.hpp"
#include "snapvote/dataset.hpp"
#include "snapvote/ensemble.hpp"
#include "snapvote/errors.hpp"
#include "snapvote/forest.hpp"
#include "snapvote/network.hpp"
#include "snapvote/pretrain.hpp"
#include "snapvote/snapshot.hpp"
#include "snapvote/trainer.hpp"

namespace snapvote {

enum class DataSource { synthetic, csv };

struct DataConfig {
  DataSource source = DataSource::synthetic;
  SyntheticConfig synthetic;
  // csv source. `train` holds labels in its last column unless
  // `train_labels` names a separate file. `test_labels` is optional.
  std::filesystem::path train;
  std::filesystem::path train_labels;
  std::filesystem::path unlabeled;
  std::filesystem::path test;
  std::filesystem::path test_labels;
  double train_fraction = 0.9;
};

struct ArchitectureConfig {
  std::vector<std::size_t> dae;     // pretrained sigmoid layers, bottom first
  std::vector<std::size_t> maxout;  // supervised maxout layers
  std::size_t pool_size = 2;
};

struct ExperimentConfig {
  int model = 2;
  std::uint64_t seed = 1;
  std::size_t size_divisor = 50;
  std::size_t min_width = 8;
  DataConfig data;
  ArchitectureConfig architecture;
  TrainConfig train;
  std::optional<PretrainConfig> pretrain;  // absent for model 1
  EnsembleSpec ensemble;

  bool full_scale() const { return size_divisor == 1; }

  /// Names of the maxout layers, given the h0.. naming of hidden layers.
  std::vector<std::string> maxout_layer_names() const {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < architecture.maxout.size(); ++i)
      names.push_back("h" + std::to_string(architecture.dae.size() + i));
    return names;
  }

  /// Supervised part of the network for an input of width `input_dim`
  /// (the output width of the last pretrained layer, if any).
  std::vector<LayerSpec> supervised_specs(std::size_t input_dim, std::size_t classes) const {
    std::vector<LayerSpec> specs;
    std::size_t in = input_dim;
    for (std::size_t width : architecture.maxout) {
      specs.push_back({LayerKind::maxout, in, width, architecture.pool_size});
      in = width;
    }
    specs.push_back({LayerKind::softmax, in, classes, 2});
    return specs;
  }

  void validate() const;
};

/// Layer widths of the full-size network, input excluded.
inline constexpr std::size_t kFullInputWidth = 1875;
inline constexpr std::size_t kFullDaeWidths[] = {1500, 1000, 1500, 1200, 1500};
inline constexpr std::size_t kFullMaxoutWidths[] = {1500, 1500, 1500};
inline constexpr std::size_t kFullClasses = 9;

inline std::size_t scaled_width(std::size_t full, std::size_t divisor, std::size_t min_width) {
  return std::max(min_width, full / divisor);
}

inline std::size_t forest_threads(std::size_t requested) {
  if (requested > 0) return requested;
  return std::max<unsigned>(1, std::thread::hardware_concurrency());
}

/// Resolved configuration for model 1..6. divisor 1 selects the full-size
/// network and schedule; anything else the desk-scale one.
inline ExperimentConfig preset(int model, std::size_t divisor = 50, std::size_t min_width = 8) {
  detail::require(model >= 1 && model <= 6, "model id must be 1..6, got " + std::to_string(model));
  detail::require(divisor >= 1, "size divisor must be at least 1");
  ExperimentConfig cfg;
  cfg.model = model;
  cfg.size_divisor = divisor;
  cfg.min_width = min_width;
  const bool full = divisor == 1;

  if (full) cfg.data.synthetic.dim = kFullInputWidth;
  if (full) {
    cfg.data.synthetic.labeled = 1000;
    cfg.data.synthetic.test = 10000;
  }
  for (std::size_t w : kFullMaxoutWidths) cfg.architecture.maxout.push_back(scaled_width(w, divisor, min_width));
  if (model >= 2) {
    for (std::size_t w : kFullDaeWidths) cfg.architecture.dae.push_back(scaled_width(w, divisor, min_width));
    PretrainConfig p;
    p.learning_rate = 1.0;
    p.epochs_per_layer = 20;
    cfg.pretrain = p;
  }

  cfg.train.learning_rate = 0.025;
  cfg.train.momentum = 0.5;
  cfg.train.dropout_rate = 0.5;
  cfg.train.max_epoch = full ? 1000 : 200;
  cfg.train.batch_size = 10;

  EnsembleSpec& e = cfg.ensemble;
  e.window = full ? EpochWindow::strict(650, 851) : EpochWindow::strict(150, 201);
  e.objective_epoch = cfg.train.max_epoch;
  e.layers = cfg.maxout_layer_names();
  e.classifier.n_trees = full ? 500 : 100;
  e.classifier.threads = 0;
  e.meta_classifier = e.classifier;
  switch (model) {
    case 3: e.kind = EnsembleKind::vertical; break;
    case 4: e.kind = EnsembleKind::horizontal; break;
    case 5: e.kind = EnsembleKind::combined; break;
    case 6: e.kind = EnsembleKind::stacked; break;
    default: e.kind = EnsembleKind::none; break;
  }
  return cfg;
}

inline void ExperimentConfig::validate() const {
  detail::require(model >= 1 && model <= 6, "model id must be 1..6");
  detail::require(!architecture.maxout.empty(), "architecture needs at least one maxout layer");
  detail::require(architecture.pool_size >= 1, "maxout pool size must be at least 1");
  for (auto w : architecture.dae) detail::require(w >= 1, "layer widths must be positive");
  for (auto w : architecture.maxout) detail::require(w >= 1, "layer widths must be positive");
  if (model == 1) {
    detail::require(!pretrain.has_value(), "model 1 has no pretraining stage");
    detail::require(architecture.dae.empty(), "model 1 has no pretrained layers");
  } else {
    detail::require(pretrain.has_value() && !architecture.dae.empty(),
                    "model " + std::to_string(model) + " needs pretrained layers");
  }
  const EnsembleKind expected[] = {EnsembleKind::none,       EnsembleKind::none,     EnsembleKind::vertical,
                                   EnsembleKind::horizontal, EnsembleKind::combined, EnsembleKind::stacked};
  detail::require(ensemble.kind == expected[model - 1],
                  "model " + std::to_string(model) + " uses ensemble kind '" +
                      std::string(to_string(expected[model - 1])) + "'");
  train.validate();
  ensemble.validate();
  if (ensemble.kind != EnsembleKind::none) {
    ensemble.classifier.validate();
    ensemble.meta_classifier.validate();
  }
  if (ensemble.needs_layer_reps()) {
    const std::size_t hidden = architecture.dae.size() + architecture.maxout.size();
    for (const auto& l : ensemble.layers) {
      bool known = l == "softmax";
      for (std::size_t i = 0; i < hidden && !known; ++i) known = l == "h" + std::to_string(i);
      detail::require(known, "unknown layer '" + l + "' in ensemble layers");
    }
  }
  if (ensemble.kind == EnsembleKind::vertical)
    detail::require(ensemble.objective_epoch <= train.max_epoch, "objective epoch is past max_epoch");
  if (ensemble.kind == EnsembleKind::horizontal || ensemble.kind == EnsembleKind::stacked ||
      ensemble.kind == EnsembleKind::combined) {
    bool any = false;
    for (std::size_t e = 1; e <= train.max_epoch && !any; ++e) any = ensemble.window.contains(e);
    detail::require(any, "epoch window " + ensemble.window.describe() + " selects no epoch in 1.." +
                             std::to_string(train.max_epoch));
  }
  detail::require(data.train_fraction > 0.0 && data.train_fraction < 1.0, "train_fraction must lie in (0, 1)");
  if (data.source == DataSource::csv) {
    detail::require(!data.train.empty(), "csv data source needs a 'train' file");
    detail::require(!data.test.empty(), "csv data source needs a 'test' file");
    detail::require(model == 1 || !data.unlabeled.empty(), "pretraining needs an 'unlabeled' file");
  }
}

/// `base` turned into model `model`: pretraining, pretrained widths and
/// ensemble kind follow the target preset, everything else is kept.
inline ExperimentConfig with_model(const ExperimentConfig& base, int model) {
  const ExperimentConfig target = preset(model, base.size_divisor, base.min_width);
  ExperimentConfig cfg = base;
  cfg.model = model;
  if (model == 1) {
    cfg.pretrain.reset();
    cfg.architecture.dae.clear();
  } else if (!cfg.pretrain) {
    cfg.pretrain = target.pretrain;
    cfg.architecture.dae = target.architecture.dae;
  }
  cfg.ensemble.kind = target.ensemble.kind;
  cfg.ensemble.layers = cfg.maxout_layer_names();
  return cfg;
}

namespace detail {

struct IniEntry {
  std::string value;
  std::size_t line = 0;
};
using IniSections = std::map<std::string, std::map<std::string, IniEntry>>;

inline IniSections parse_ini(std::istream& in, const std::string& source) {
  IniSections sections;
  std::string section;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find_first_of("#;");
    const std::string text = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (text.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    if (text.front() == '[') {
      if (text.back() != ']') throw FormatError(where + ": unterminated section header");
      section = trim(std::string_view(text).substr(1, text.size() - 2));
      if (sections.count(section)) throw FormatError(where + ": section [" + section + "] repeated");
      sections[section];
      continue;
    }
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw FormatError(where + ": expected 'key = value'");
    if (section.empty()) throw FormatError(where + ": key outside of any section");
    const std::string key = trim(std::string_view(text).substr(0, eq));
    if (sections[section].count(key)) throw FormatError(where + ": key '" + key + "' repeated");
    sections[section][key] = {trim(std::string_view(text).substr(eq + 1)), line_no};
  }
  return sections;
}

/// Pops typed values out of one section; whatever is left over at the end
/// is an unknown key.
class SectionReader {
 public:
  SectionReader(std::map<std::string, IniEntry> entries, std::string name, std::string source)
      : entries_(std::move(entries)), name_(std::move(name)), source_(std::move(source)) {}

  std::optional<std::string> take(const std::string& key) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    line_ = it->second.line;
    std::string v = it->second.value;
    entries_.erase(it);
    return v;
  }

  template <class T>
  void read(const std::string& key, T& target) {
    auto v = take(key);
    if (!v) return;
    try {
      target = convert<T>(*v);
    } catch (const FormatError& e) {
      throw FormatError(where(key) + ": " + e.what());
    } catch (const InvalidInput& e) {
      throw FormatError(where(key) + ": " + e.what());
    }
  }

  void finish() const {
    if (!entries_.empty()) {
      const auto& [key, entry] = *entries_.begin();
      throw FormatError(source_ + ":" + std::to_string(entry.line) + ": unknown key '" + key + "' in [" + name_ +
                        "]");
    }
  }

  std::string where(const std::string& key) const {
    return source_ + ":" + std::to_string(line_) + ": [" + name_ + "] " + key;
  }

 private:
  template <class T>
  static T convert(const std::string& v) {
    if constexpr (std::is_same_v<T, std::string>) {
      return v;
    } else if constexpr (std::is_same_v<T, std::filesystem::path>) {
      return std::filesystem::path(v);
    } else if constexpr (std::is_same_v<T, bool>) {
      if (v == "true" || v == "yes" || v == "1") return true;
      if (v == "false" || v == "no" || v == "0") return false;
      throw FormatError("expected true or false, got '" + v + "'");
    } else if constexpr (std::is_same_v<T, double>) {
      return parse_real(v, "number");
    } else if constexpr (std::is_same_v<T, int>) {
      return static_cast<int>(parse_count(v, "integer"));
    } else if constexpr (std::is_same_v<T, std::vector<std::size_t>>) {
      std::vector<std::size_t> out;
      for (const auto& tok : split_ws(v)) out.push_back(parse_count(tok, "width"));
      return out;
    } else if constexpr (std::is_same_v<T, std::vector<std::string>>) {
      return split_ws(v);
    } else if constexpr (std::is_same_v<T, std::vector<double>>) {
      std::vector<double> out;
      for (const auto& tok : split_ws(v)) out.push_back(parse_real(tok, "weight"));
      return out;
    } else {
      static_assert(std::is_unsigned_v<T>);
      return static_cast<T>(parse_count(v, "count"));
    }
  }

  std::map<std::string, IniEntry> entries_;
  std::string name_;
  std::string source_;
  std::size_t line_ = 0;
};

inline std::string bool_text(bool b) { return b ? "true" : "false"; }

inline std::string join(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? " " : "") + std::to_string(v[i]);
  return out;
}

inline std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? " " : "") + v[i];
  return out;
}

inline void read_forest(SectionReader& r, ForestConfig& f) {
  r.read("trees", f.n_trees);
  if (auto mf = r.take("max_features")) {
    if (*mf == "sqrt") {
      f.max_features = MaxFeatures::sqrt;
    } else {
      f.max_features = MaxFeatures::fraction;
      f.max_features_fraction = parse_real(*mf, "max_features");
    }
  }
  if (auto md = r.take("max_depth")) {
    if (*md == "none") f.max_depth.reset();
    else f.max_depth = parse_count(*md, "max_depth");
  }
  r.read("min_samples_leaf", f.min_samples_leaf);
  r.read("bootstrap", f.bootstrap);
  r.read("threads", f.threads);
  r.finish();
}

inline void write_forest(std::ostream& out, const char* section, const ForestConfig& f) {
  out << "\n[" << section << "]\n";
  out << "trees = " << f.n_trees << "\n";
  out << "max_features = "
      << (f.max_features == MaxFeatures::sqrt ? std::string("sqrt") : io::format_double(f.max_features_fraction))
      << "\n";
  out << "max_depth = " << (f.max_depth ? std::to_string(*f.max_depth) : std::string("none")) << "\n";
  out << "min_samples_leaf = " << f.min_samples_leaf << "\n";
  out << "bootstrap = " << bool_text(f.bootstrap) << "\n";
  out << "threads = " << f.threads << "\n";
}

}  // namespace detail

/// Parses a config: [experiment] picks the preset, the remaining sections
/// override it key by key. Unknown sections and keys are errors.
inline ExperimentConfig parse_config(std::istream& in, const std::string& source = "config") {
  auto sections = detail::parse_ini(in, source);
  auto section = [&](const std::string& name) {
    auto it = sections.find(name);
    std::map<std::string, detail::IniEntry> entries;
    if (it != sections.end()) {
      entries = std::move(it->second);
      sections.erase(it);
    }
    return detail::SectionReader(std::move(entries), name, source);
  };
  const bool has_pretrain = sections.count("pretrain") > 0;

  auto exp = section("experiment");
  int model = 2;
  std::size_t divisor = 50, min_width = 8;
  std::uint64_t seed = 1;
  exp.read("model", model);
  exp.read("size_divisor", divisor);
  exp.read("min_width", min_width);
  exp.read("seed", seed);
  exp.finish();
  ExperimentConfig cfg = preset(model, divisor, min_width);
  cfg.seed = seed;
  if (model == 1 && has_pretrain) throw FormatError(source + ": model 1 has no pretraining stage; drop [pretrain]");

  auto data = section("data");
  if (auto src = data.take("source")) {
    if (*src == "synthetic") cfg.data.source = DataSource::synthetic;
    else if (*src == "csv") cfg.data.source = DataSource::csv;
    else throw FormatError(data.where("source") + ": expected synthetic or csv, got '" + *src + "'");
  }
  data.read("train", cfg.data.train);
  data.read("train_labels", cfg.data.train_labels);
  data.read("unlabeled", cfg.data.unlabeled);
  data.read("test", cfg.data.test);
  data.read("test_labels", cfg.data.test_labels);
  data.read("train_fraction", cfg.data.train_fraction);
  data.finish();

  auto syn = section("synthetic");
  SyntheticConfig& s = cfg.data.synthetic;
  syn.read("classes", s.classes);
  syn.read("dim", s.dim);
  syn.read("latent_dim", s.latent_dim);
  syn.read("labeled", s.labeled);
  syn.read("unlabeled", s.unlabeled);
  syn.read("test", s.test);
  syn.read("separation", s.separation);
  syn.read("noise", s.noise);
  syn.read("seed", s.seed);
  syn.finish();

  auto arch = section("architecture");
  arch.read("dae", cfg.architecture.dae);
  arch.read("maxout", cfg.architecture.maxout);
  arch.read("pool_size", cfg.architecture.pool_size);
  arch.finish();

  if (cfg.pretrain) {
    auto pre = section("pretrain");
    PretrainConfig& p = *cfg.pretrain;
    pre.read("corruption", p.corruption_level);
    pre.read("epochs", p.epochs_per_layer);
    pre.read("learning_rate", p.learning_rate);
    pre.read("momentum", p.momentum);
    pre.read("batch_size", p.batch_size);
    pre.read("tied", p.tied);
    pre.finish();
  }

  auto tr = section("train");
  tr.read("learning_rate", cfg.train.learning_rate);
  tr.read("momentum", cfg.train.momentum);
  tr.read("dropout", cfg.train.dropout_rate);
  tr.read("max_epoch", cfg.train.max_epoch);
  tr.read("batch_size", cfg.train.batch_size);
  tr.finish();

  auto ens = section("ensemble");
  EnsembleSpec& e = cfg.ensemble;
  // Unless given, these follow the (possibly overridden) schedule and shape.
  e.objective_epoch = cfg.train.max_epoch;
  e.layers = cfg.maxout_layer_names();
  if (auto w = ens.take("window")) {
    const auto parts = detail::split_ws(*w);
    if (parts.size() != 2) throw FormatError(ens.where("window") + ": expected 'L H'");
    e.window.low = detail::parse_count(parts[0], "window bound");
    e.window.high = detail::parse_count(parts[1], "window bound");
  }
  if (auto c = ens.take("convention")) {
    try {
      e.window.convention = parse_window_convention(*c);
    } catch (const std::exception& err) {
      throw FormatError(ens.where("convention") + ": " + err.what());
    }
  }
  ens.read("objective_epoch", e.objective_epoch);
  ens.read("layers", e.layers);
  ens.read("layer_weights", e.layer_weights);
  ens.finish();

  auto forest = section("forest");
  detail::read_forest(forest, e.classifier);
  auto meta = section("meta_forest");
  detail::read_forest(meta, e.meta_classifier);

  if (!sections.empty()) throw FormatError(source + ": unknown section [" + sections.begin()->first + "]");
  cfg.validate();
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  auto in = io::open_in(path, false);
  return parse_config(in, path.string());
}

/// Complete, explicit serialization; parse_config(to_ini(c)) reproduces c.
inline std::string to_ini(const ExperimentConfig& cfg) {
  std::ostringstream out;
  out << "[experiment]\n";
  out << "model = " << cfg.model << "\n";
  out << "seed = " << cfg.seed << "\n";
  out << "size_divisor = " << cfg.size_divisor << "\n";
  out << "min_width = " << cfg.min_width << "\n";

  out << "\n[data]\n";
  out << "source = " << (cfg.data.source == DataSource::synthetic ? "synthetic" : "csv") << "\n";
  if (cfg.data.source == DataSource::csv) {
    out << "train = " << cfg.data.train.string() << "\n";
    if (!cfg.data.train_labels.empty()) out << "train_labels = " << cfg.data.train_labels.string() << "\n";
    if (!cfg.data.unlabeled.empty()) out << "unlabeled = " << cfg.data.unlabeled.string() << "\n";
    out << "test = " << cfg.data.test.string() << "\n";
    if (!cfg.data.test_labels.empty()) out << "test_labels = " << cfg.data.test_labels.string() << "\n";
  }
  out << "train_fraction = " << io::format_double(cfg.data.train_fraction) << "\n";

  if (cfg.data.source == DataSource::synthetic) {
    const SyntheticConfig& s = cfg.data.synthetic;
    out << "\n[synthetic]\n";
    out << "classes = " << s.classes << "\n";
    out << "dim = " << s.dim << "\n";
    out << "latent_dim = " << s.latent_dim << "\n";
    out << "labeled = " << s.labeled << "\n";
    out << "unlabeled = " << s.unlabeled << "\n";
    out << "test = " << s.test << "\n";
    out << "separation = " << io::format_double(s.separation) << "\n";
    out << "noise = " << io::format_double(s.noise) << "\n";
    out << "seed = " << s.seed << "\n";
  }

  out << "\n[architecture]\n";
  out << "dae = " << detail::join(cfg.architecture.dae) << "\n";
  out << "maxout = " << detail::join(cfg.architecture.maxout) << "\n";
  out << "pool_size = " << cfg.architecture.pool_size << "\n";

  if (cfg.pretrain) {
    const PretrainConfig& p = *cfg.pretrain;
    out << "\n[pretrain]\n";
    out << "corruption = " << io::format_double(p.corruption_level) << "\n";
    out << "epochs = " << p.epochs_per_layer << "\n";
    out << "learning_rate = " << io::format_double(p.learning_rate) << "\n";
    out << "momentum = " << io::format_double(p.momentum) << "\n";
    out << "batch_size = " << p.batch_size << "\n";
    out << "tied = " << detail::bool_text(p.tied) << "\n";
  }

  out << "\n[train]\n";
  out << "learning_rate = " << io::format_double(cfg.train.learning_rate) << "\n";
  out << "momentum = " << io::format_double(cfg.train.momentum) << "\n";
  out << "dropout = " << io::format_double(cfg.train.dropout_rate) << "\n";
  out << "max_epoch = " << cfg.train.max_epoch << "\n";
  out << "batch_size = " << cfg.train.batch_size << "\n";

  const EnsembleSpec& e = cfg.ensemble;
  out << "\n[ensemble]\n";
  out << "window = " << e.window.low << " " << e.window.high << "\n";
  out << "convention = " << to_string(e.window.convention) << "\n";
  out << "objective_epoch = " << e.objective_epoch << "\n";
  out << "layers = " << detail::join(e.layers) << "\n";
  if (!e.layer_weights.empty()) {
    out << "layer_weights =";
    for (double w : e.layer_weights) out << " " << io::format_double(w);
    out << "\n";
  }
  detail::write_forest(out, "forest", e.classifier);
  detail::write_forest(out, "meta_forest", e.meta_classifier);
  return out.str();
}

inline std::string fingerprint(const ExperimentConfig& cfg) { return io::hex64(io::fnv1a(to_ini(cfg))); }

}  // namespace snapvote

#endif  // SNAPVOTE_CONFIG_HPP_
