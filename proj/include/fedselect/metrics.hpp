#pragma once

#include <cstddef>
#include <cstdint>
#include <cstring>
#include <numeric>
#include <vector>

#include "fedselect/architecture.hpp"
#include "fedselect/data.hpp"
#include "fedselect/errors.hpp"
#include "fedselect/mask.hpp"
#include "fedselect/model.hpp"

namespace fedselect {

// Top-1 accuracy with argmax ties going to the lowest class index.
inline double evaluate_client(const Architecture& arch, const ParamVector& theta, const Dataset& test) {
  if (test.size() == 0) throw InputError("cannot evaluate on an empty test set");
  std::size_t correct = 0;
  for (std::size_t s = 0; s < test.size(); ++s)
    if (predict(arch, theta, test.row(s)) == test.labels[s]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

inline double mean(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

// FNV-1a over the IEEE-754 bit patterns.
inline std::uint64_t checksum(const ParamVector& v) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double x : v.values) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, &x, sizeof bits);
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xffu;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

using Matrix = std::vector<std::vector<double>>;

inline Matrix iou_matrix(const std::vector<BinaryMask>& masks) {
  const std::size_t n = masks.size();
  Matrix out(n, std::vector<double>(n, 1.0));
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b) out[a][b] = out[b][a] = iou(masks[a], masks[b]);
  return out;
}

// Same, restricted to one layer's span (the output layer by default).
inline Matrix iou_matrix(const std::vector<BinaryMask>& masks, const Architecture& arch, std::size_t layer_id) {
  std::vector<BinaryMask> restricted;
  restricted.reserve(masks.size());
  for (const auto& m : masks) restricted.push_back(restrict_to_layer(m, arch, layer_id));
  return iou_matrix(restricted);
}

// A matrix built only from empty masks carries no structure.
inline bool iou_degenerate(const std::vector<BinaryMask>& masks) {
  for (const auto& m : masks)
    if (!m.none()) return false;
  return true;
}

}  // namespace fedselect
