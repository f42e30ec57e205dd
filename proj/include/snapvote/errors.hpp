#ifndef SNAPVOTE_ERRORS_HPP_
#define SNAPVOTE_ERRORS_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace snapvote {

/// Thrown when a caller hands an operation arguments that violate its
/// preconditions (shape mismatch, out-of-range rate, empty data, ...).
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown when the loss of a training run becomes non-finite.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, std::size_t epoch, std::size_t last_good_epoch)
      : std::runtime_error(what + " (epoch " + std::to_string(epoch) + ", last good epoch " +
                           std::to_string(last_good_epoch) + ")"),
        epoch_(epoch),
        last_good_epoch_(last_good_epoch) {}

  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t last_good_epoch() const noexcept { return last_good_epoch_; }

 private:
  std::size_t epoch_;
  std::size_t last_good_epoch_;
};

/// Malformed files: bad magic, truncated payloads, unparsable text.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void require(bool condition, const std::string& message) {
  if (!condition) throw InvalidInput(message);
}

}  // namespace detail
}  // namespace snapvote

#endif  // SNAPVOTE_ERRORS_HPP_
