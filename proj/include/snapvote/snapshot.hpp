#ifndef SNAPVOTE_SNAPSHOT_HPP_
#define SNAPVOTE_SNAPSHOT_HPP_

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "snapvote/binary_io.hpp"
#include "snapvote/errors.hpp"
#include "snapvote/matrix.hpp"

namespace snapvote {

/// A layer's representation of the training and test inputs.
struct LayerRep {
  std::string name;
  Matrix train;
  Matrix test;

  bool operator==(const LayerRep&) const = default;
};

/// Network outputs captured after one training epoch.
struct Snapshot {
  std::size_t epoch = 0;
  Matrix softmax_train;
  Matrix softmax_valid;
  Matrix softmax_test;
  std::vector<LayerRep> layer_reps;
  double valid_error = 0.0;

  const LayerRep* rep(std::string_view name) const {
    for (const auto& r : layer_reps)
      if (r.name == name) return &r;
    return nullptr;
  }

  bool operator==(const Snapshot&) const = default;
};

enum class WindowConvention { strict, inclusive };

/// Epoch range (L, H). Strict keeps L < e < H (H - L - 1 epochs);
/// inclusive keeps L <= e <= H (H - L + 1 epochs).
struct EpochWindow {
  std::size_t low = 0;
  std::size_t high = 0;
  WindowConvention convention = WindowConvention::inclusive;

  static EpochWindow strict(std::size_t low, std::size_t high) {
    return {low, high, WindowConvention::strict};
  }
  static EpochWindow inclusive(std::size_t low, std::size_t high) {
    return {low, high, WindowConvention::inclusive};
  }

  bool contains(std::size_t epoch) const {
    return convention == WindowConvention::strict ? (epoch > low && epoch < high)
                                                  : (epoch >= low && epoch <= high);
  }

  /// Number of integer epochs the window admits.
  std::size_t span() const {
    if (convention == WindowConvention::strict) return high > low + 1 ? high - low - 1 : 0;
    return high >= low ? high - low + 1 : 0;
  }

  std::string describe() const {
    return convention == WindowConvention::strict
               ? "(" + std::to_string(low) + ", " + std::to_string(high) + ") strict"
               : "[" + std::to_string(low) + ", " + std::to_string(high) + "] inclusive";
  }

  bool operator==(const EpochWindow&) const = default;
};

inline std::string_view to_string(WindowConvention c) {
  return c == WindowConvention::strict ? "strict" : "inclusive";
}

inline WindowConvention parse_window_convention(std::string_view text) {
  if (text == "strict") return WindowConvention::strict;
  if (text == "inclusive") return WindowConvention::inclusive;
  throw InvalidInput("unknown window convention '" + std::string(text) + "'");
}

/// Ordered snapshots of one training run.
class SnapshotStore {
 public:
  std::string run_id;
  std::string fingerprint;
  std::size_t classes = 0;
  std::vector<std::string> rep_layers;  // layers whose reps each snapshot carries

  void add(Snapshot snapshot) {
    if (!snapshots_.empty())
      detail::require(snapshot.epoch > snapshots_.back().epoch,
                      "snapshot epoch " + std::to_string(snapshot.epoch) +
                          " does not follow epoch " + std::to_string(snapshots_.back().epoch));
    snapshots_.push_back(std::move(snapshot));
  }

  const std::vector<Snapshot>& snapshots() const noexcept { return snapshots_; }
  std::size_t size() const noexcept { return snapshots_.size(); }
  bool empty() const noexcept { return snapshots_.empty(); }

  const Snapshot* at_epoch(std::size_t epoch) const {
    auto it = std::lower_bound(snapshots_.begin(), snapshots_.end(), epoch,
                               [](const Snapshot& s, std::size_t e) { return s.epoch < e; });
    return it != snapshots_.end() && it->epoch == epoch ? &*it : nullptr;
  }

  std::vector<std::size_t> epochs() const {
    std::vector<std::size_t> out;
    out.reserve(snapshots_.size());
    for (const auto& s : snapshots_) out.push_back(s.epoch);
    return out;
  }

  /// Snapshots inside the window, ascending epoch.
  std::vector<const Snapshot*> select(const EpochWindow& window) const {
    std::vector<const Snapshot*> out;
    for (const auto& s : snapshots_)
      if (window.contains(s.epoch)) out.push_back(&s);
    return out;
  }

  bool operator==(const SnapshotStore&) const = default;

 private:
  std::vector<Snapshot> snapshots_;
};

inline std::string describe_epochs(const std::vector<std::size_t>& epochs) {
  if (epochs.empty()) return "none";
  std::string out;
  // Collapse consecutive runs so long stores stay readable.
  for (std::size_t i = 0; i < epochs.size();) {
    std::size_t j = i;
    while (j + 1 < epochs.size() && epochs[j + 1] == epochs[j] + 1) ++j;
    if (!out.empty()) out += ",";
    out += std::to_string(epochs[i]);
    if (j > i) out += "-" + std::to_string(epochs[j]);
    i = j + 1;
  }
  return out;
}

// On-disk layout of a store directory:
//   manifest                    key = value text
//   snapshots/epoch_NNNNNN.snap binary, one per snapshot
// Snapshot file: "SNAP", version u32, epoch u32, matrix count u32, then
// matrices softmax_train, softmax_valid, softmax_test, and for each rep
// layer (manifest order) its train and test matrices.
inline constexpr std::uint32_t kSnapshotVersion = 1;

inline std::string snapshot_filename(std::size_t epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%06zu.snap", epoch);
  return buf;
}

inline void write_snapshot(const std::filesystem::path& path, const Snapshot& s) {
  auto out = io::open_out(path, true);
  io::put_magic(out, "SNAP");
  io::put_u32(out, kSnapshotVersion);
  io::put_u32(out, static_cast<std::uint32_t>(s.epoch));
  io::put_u32(out, static_cast<std::uint32_t>(3 + 2 * s.layer_reps.size()));
  io::put_matrix(out, s.softmax_train);
  io::put_matrix(out, s.softmax_valid);
  io::put_matrix(out, s.softmax_test);
  for (const auto& r : s.layer_reps) {
    io::put_matrix(out, r.train);
    io::put_matrix(out, r.test);
  }
  if (!out) throw FormatError("failed writing '" + path.string() + "'");
}

inline Snapshot read_snapshot(const std::filesystem::path& path,
                              const std::vector<std::string>& rep_layers) {
  auto in = io::open_in(path, true);
  io::expect_magic(in, "SNAP");
  const std::uint32_t version = io::get_u32(in);
  if (version != kSnapshotVersion)
    throw FormatError("unsupported snapshot version " + std::to_string(version));
  Snapshot s;
  s.epoch = io::get_u32(in);
  const std::uint32_t count = io::get_u32(in);
  if (count != 3 + 2 * rep_layers.size())
    throw FormatError("'" + path.string() + "' holds " + std::to_string(count) +
                      " matrices, manifest implies " + std::to_string(3 + 2 * rep_layers.size()));
  s.softmax_train = io::get_matrix(in);
  s.softmax_valid = io::get_matrix(in);
  s.softmax_test = io::get_matrix(in);
  for (const auto& name : rep_layers) {
    LayerRep r{name, io::get_matrix(in), {}};
    r.test = io::get_matrix(in);
    s.layer_reps.push_back(std::move(r));
  }
  return s;
}

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_ws(std::string_view s) {
  std::vector<std::string> out;
  std::istringstream in{std::string(s)};
  for (std::string tok; in >> tok;) out.push_back(tok);
  return out;
}

inline std::size_t parse_count(const std::string& text, std::string_view what) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(text, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != text.size() || text.empty() || text.front() == '-')
    throw FormatError("bad " + std::string(what) + " '" + text + "'");
  return static_cast<std::size_t>(v);
}

inline double parse_real(const std::string& text, std::string_view what) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != text.size() || text.empty()) throw FormatError("bad " + std::string(what) + " '" + text + "'");
  return v;
}

}  // namespace detail

inline void save_store(const std::filesystem::path& dir, const SnapshotStore& store) {
  std::filesystem::create_directories(dir / "snapshots");
  std::ostringstream manifest;
  manifest << "run_id = " << store.run_id << "\n";
  manifest << "fingerprint = " << store.fingerprint << "\n";
  manifest << "classes = " << store.classes << "\n";
  manifest << "layers =";
  for (const auto& l : store.rep_layers) manifest << " " << l;
  manifest << "\n";
  manifest << "epochs =";
  for (const auto& s : store.snapshots()) manifest << " " << s.epoch;
  manifest << "\n";
  for (const auto& s : store.snapshots()) {
    const std::string file = snapshot_filename(s.epoch);
    write_snapshot(dir / "snapshots" / file, s);
    manifest << "snapshot = " << s.epoch << " " << io::format_double(s.valid_error) << " snapshots/"
             << file << "\n";
  }
  auto out = io::open_out(dir / "manifest", false);
  out << manifest.str();
}

inline SnapshotStore load_store(const std::filesystem::path& dir) {
  auto in = io::open_in(dir / "manifest", false);
  SnapshotStore store;
  std::vector<std::size_t> listed_epochs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string text = detail::trim(line);
    if (text.empty() || text.front() == '#') continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos)
      throw FormatError("manifest line " + std::to_string(line_no) + ": expected 'key = value'");
    const std::string key = detail::trim(std::string_view(text).substr(0, eq));
    const std::string value = detail::trim(std::string_view(text).substr(eq + 1));
    if (key == "run_id") {
      store.run_id = value;
    } else if (key == "fingerprint") {
      store.fingerprint = value;
    } else if (key == "classes") {
      store.classes = detail::parse_count(value, "class count");
    } else if (key == "layers") {
      store.rep_layers = detail::split_ws(value);
    } else if (key == "epochs") {
      for (const auto& tok : detail::split_ws(value)) listed_epochs.push_back(detail::parse_count(tok, "epoch"));
    } else if (key == "snapshot") {
      const auto parts = detail::split_ws(value);
      if (parts.size() != 3) throw FormatError("manifest line " + std::to_string(line_no) + ": bad snapshot record");
      Snapshot s = read_snapshot(dir / parts[2], store.rep_layers);
      if (s.epoch != detail::parse_count(parts[0], "epoch"))
        throw FormatError("snapshot file '" + parts[2] + "' holds epoch " + std::to_string(s.epoch));
      s.valid_error = detail::parse_real(parts[1], "valid error");
      store.add(std::move(s));
    } else {
      throw FormatError("manifest line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
  }
  if (listed_epochs != store.epochs())
    throw FormatError("manifest epoch list does not match its snapshot records");
  return store;
}

}  // namespace snapvote

#endif  // SNAPVOTE_SNAPSHOT_HPP_
