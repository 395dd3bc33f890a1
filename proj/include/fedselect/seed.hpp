#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace fedselect {

using Rng = std::mt19937_64;

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives an independent stream seed from a master seed and a tag path,
// e.g. derive_seed(master, {kBatchStream, client, round, epoch}). Streams
// are addressed by coordinates rather than consumed sequentially, so the
// batch order of (client, round, epoch) never depends on what ran before.
inline std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path) noexcept {
  std::uint64_t h = mix64(master);
  for (std::uint64_t tag : path) h = mix64(h ^ mix64(tag + 0x632be59bd9b4e019ULL));
  return h;
}

inline Rng make_rng(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
  return Rng(derive_seed(master, path));
}

// Stream tags.
enum StreamTag : std::uint64_t {
  kInitStream = 1,
  kBatchStream = 2,
  kBlobStream = 3,
  kPartitionStream = 4,
  kShiftStream = 5,
  kRandomMaskStream = 6,
  kFineTuneStream = 7,
};

}  // namespace fedselect
