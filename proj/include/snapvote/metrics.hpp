#ifndef SNAPVOTE_METRICS_HPP_
#define SNAPVOTE_METRICS_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <span>
#include <string>
#include <vector>

#include "snapvote/ensemble.hpp"
#include "snapvote/errors.hpp"
#include "snapvote/snapshot.hpp"

namespace snapvote {

/// Fraction of positions where the two label sequences agree.
inline double accuracy(std::span<const std::uint32_t> predicted, std::span<const std::uint32_t> truth) {
  detail::require(predicted.size() == truth.size(), "accuracy: " + std::to_string(predicted.size()) +
                                                        " predictions for " + std::to_string(truth.size()) +
                                                        " labels");
  detail::require(!truth.empty(), "accuracy of an empty label set is undefined");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

/// Summary of per-snapshot error rates; `std` divides by the count.
struct ErrorStats {
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;
  double std = 0.0;
  std::size_t count = 0;
  std::string window;
};

inline ErrorStats error_stats(std::span<const double> errors, std::string window = {}) {
  detail::require(!errors.empty(), "error statistics need at least one value");
  ErrorStats s;
  s.window = std::move(window);
  s.count = errors.size();
  s.min = *std::min_element(errors.begin(), errors.end());
  s.max = *std::max_element(errors.begin(), errors.end());
  double sum = 0.0;
  for (double e : errors) sum += e;
  s.mean = sum / static_cast<double>(errors.size());
  double sq = 0.0;
  for (double e : errors) sq += (e - s.mean) * (e - s.mean);
  s.std = std::sqrt(sq / static_cast<double>(errors.size()));
  // Keep the ordering exact even when rounding nudges the mean.
  s.mean = std::clamp(s.mean, s.min, s.max);
  return s;
}

/// Stats over the valid_error of every snapshot inside the window.
inline ErrorStats error_stats(const SnapshotStore& store, const EpochWindow& window) {
  std::vector<double> errors;
  for (const Snapshot* s : store.select(window)) errors.push_back(s->valid_error);
  if (errors.empty()) throw InvalidInput(window_error(window, store));
  return error_stats(errors, window.describe());
}

inline constexpr const char* kErrorStatsHeader = "Min Max Mean Standard Error";

/// "min max mean std" at six decimals, single-space separated.
inline std::string format_error_stats_row(const ErrorStats& s) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%.6f %.6f %.6f %.6f", s.min, s.max, s.mean, s.std);
  return buf;
}

}  // namespace snapvote

#endif  // SNAPVOTE_METRICS_HPP_
