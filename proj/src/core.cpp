#include "weakgame/core.hpp"

#include <cmath>
#include <vector>

#include "weakgame/parallel.hpp"

namespace weakgame {

namespace {

std::string format_failure(const std::string& module, const std::string& what,
                           std::optional<std::size_t> node) {
  std::string msg = module + ": " + what;
  if (node) msg += " (node " + std::to_string(*node) + ")";
  return msg;
}

}  // namespace

NumericalFailure::NumericalFailure(const std::string& module, const std::string& what,
                                   std::optional<std::size_t> node)
    : std::runtime_error(format_failure(module, what, node)), module_(module), node_(node) {}

Estimate estimate_from_samples(std::span<const double> samples) {
  const std::size_t n = samples.size();
  if (n == 0) throw InvalidArgument("estimate_from_samples: empty sample");
  const double mean = ordered_sum(samples) / static_cast<double>(n);
  if (n == 1) return {mean, 0.0};
  std::vector<double> sq(n);
  for (std::size_t p = 0; p < n; ++p) {
    const double d = samples[p] - mean;
    sq[p] = d * d;
  }
  const double var = ordered_sum(sq) / static_cast<double>(n - 1);
  return {mean, std::sqrt(var / static_cast<double>(n))};
}

Estimate paired_difference(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InvalidArgument("paired_difference: length mismatch");
  std::vector<double> d(a.size());
  for (std::size_t p = 0; p < a.size(); ++p) d[p] = a[p] - b[p];
  return estimate_from_samples(d);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  // splitmix64 finalizer over the pair
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (tag + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace weakgame
