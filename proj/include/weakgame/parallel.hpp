#pragma once

#include <cstddef>
#include <functional>
#include <span>

namespace weakgame {

/// Path blocks are this long regardless of the worker count, so every
/// reduction sees the same partial sums in the same order.
inline constexpr std::size_t kPathBlock = 4096;

/// Worker threads used by block-parallel loops. Affects speed only.
void set_thread_count(std::size_t threads);
std::size_t thread_count();

struct BlockRange {
  std::size_t index;
  std::size_t begin;
  std::size_t end;
  std::size_t size() const { return end - begin; }
};

std::size_t block_count(std::size_t n, std::size_t block = kPathBlock);

/// Runs body once per block of [0, n). Blocks may run concurrently; the body
/// must only write to block-owned storage.
void for_each_block(std::size_t n, const std::function<void(const BlockRange&)>& body,
                    std::size_t block = kPathBlock);

/// Pairwise summation; result depends only on the values, not on threading.
double ordered_sum(std::span<const double> values);

}  // namespace weakgame
