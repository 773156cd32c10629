#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>

namespace weakgame {

/// Precondition violated by the caller (bad sizes, non-positive horizon, ...).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A numerical step produced something unusable. Carries the grid node when known.
class NumericalFailure : public std::runtime_error {
 public:
  NumericalFailure(const std::string& module, const std::string& what,
                   std::optional<std::size_t> node = std::nullopt);

  const std::string& module() const { return module_; }
  std::optional<std::size_t> node() const { return node_; }

 private:
  std::string module_;
  std::optional<std::size_t> node_;
};

/// Monte Carlo estimate with its standard error.
struct Estimate {
  double mean = 0.0;
  double se = 0.0;
};

/// Sample mean and standard error of the mean (unbiased variance).
Estimate estimate_from_samples(std::span<const double> samples);

/// Paired difference a - b, same length, as an estimate.
Estimate paired_difference(std::span<const double> a, std::span<const double> b);

/// Independent child seed; stable across platforms.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag);

}  // namespace weakgame
