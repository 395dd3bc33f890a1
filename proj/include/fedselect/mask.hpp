#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "fedselect/architecture.hpp"
#include "fedselect/errors.hpp"

namespace fedselect {

// Per-parameter partition bits aligned to a flat parameter vector.
// 1 marks a personalized parameter (kept on the client), 0 a global one
// (uploaded and averaged).
class BinaryMask {
 public:
  BinaryMask() = default;
  explicit BinaryMask(std::size_t size, bool value = false) : bits_(size, value ? 1 : 0) {}

  static BinaryMask from_bits(std::initializer_list<int> bits) {
    BinaryMask m(bits.size());
    std::size_t i = 0;
    for (int b : bits) m.bits_[i++] = b ? 1 : 0;
    return m;
  }

  static BinaryMask from_indices(std::size_t size, std::initializer_list<std::size_t> indices) {
    return from_indices(size, std::span<const std::size_t>(indices.begin(), indices.size()));
  }

  static BinaryMask from_indices(std::size_t size, std::span<const std::size_t> indices) {
    BinaryMask m(size);
    for (std::size_t i : indices) {
      if (i >= size) throw InternalError("mask index out of range");
      m.bits_[i] = 1;
    }
    return m;
  }

  std::size_t size() const noexcept { return bits_.size(); }
  bool test(std::size_t i) const noexcept { return bits_[i] != 0; }
  bool operator[](std::size_t i) const noexcept { return bits_[i] != 0; }
  void set(std::size_t i, bool value = true) noexcept { bits_[i] = value ? 1 : 0; }

  std::size_t popcount() const noexcept {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
  }
  bool none() const noexcept { return popcount() == 0; }
  bool all() const noexcept { return popcount() == size(); }

  std::vector<std::size_t> indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < bits_.size(); ++i)
      if (bits_[i]) out.push_back(i);
    return out;
  }

  std::span<const std::uint8_t> bits() const noexcept { return bits_; }

  bool operator==(const BinaryMask&) const = default;

 private:
  std::vector<std::uint8_t> bits_;
};

namespace detail {
inline void require_same_size(const BinaryMask& a, const BinaryMask& b, const char* op) {
  if (a.size() != b.size())
    throw InternalError(std::string(op) + ": mask length mismatch (" + std::to_string(a.size()) + " vs " +
                        std::to_string(b.size()) + ")");
}
}  // namespace detail

inline BinaryMask invert(const BinaryMask& m) {
  BinaryMask out(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) out.set(i, !m[i]);
  return out;
}

inline BinaryMask operator|(const BinaryMask& a, const BinaryMask& b) {
  detail::require_same_size(a, b, "or");
  BinaryMask out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out.set(i, a[i] || b[i]);
  return out;
}

inline BinaryMask operator&(const BinaryMask& a, const BinaryMask& b) {
  detail::require_same_size(a, b, "and");
  BinaryMask out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out.set(i, a[i] && b[i]);
  return out;
}

// a ⊆ b
inline bool is_subset(const BinaryMask& a, const BinaryMask& b) {
  detail::require_same_size(a, b, "is_subset");
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] && !b[i]) return false;
  return true;
}

// Fraction of personalized positions, popcount(m)/d. An empty mask has
// fraction 0.
inline double personalized_fraction(const BinaryMask& m) noexcept {
  if (m.size() == 0) return 0.0;
  return static_cast<double>(m.popcount()) / static_cast<double>(m.size());
}

// ceil(rate * n) with products like 0.05 * 100 = 5.000000000000001 treated
// as the integer they represent.
inline std::size_t ceil_count(double rate, std::size_t n) {
  const double x = rate * static_cast<double>(n);
  const double r = std::round(x);
  if (std::abs(x - r) <= 1e-9 * std::max(1.0, x)) return static_cast<std::size_t>(r);
  return static_cast<std::size_t>(std::ceil(x));
}

enum class SelectOrder { largest, smallest };

struct Selection {
  BinaryMask mask;
  // Set when no position was eligible; the selection is then empty.
  bool no_eligible = false;
};

// Picks c = max(1, ceil(rate * |eligible|)) eligible positions ordered by
// magnitude, ties going to the lower index. Ineligible positions are never
// selected.
inline Selection select_by_magnitude(std::span<const double> magnitude, const BinaryMask& eligible, double rate,
                                     SelectOrder order) {
  if (magnitude.size() != eligible.size()) throw InternalError("select: magnitude/mask length mismatch");
  if (!(rate > 0.0 && rate <= 1.0)) throw ConfigError("selection rate must lie in (0, 1]");
  Selection result{BinaryMask(eligible.size()), false};
  std::vector<std::size_t> candidates = eligible.indices();
  if (candidates.empty()) {
    result.no_eligible = true;
    return result;
  }
  for (std::size_t i : candidates)
    if (!(magnitude[i] >= 0.0)) throw InputError("select: magnitudes must be nonnegative and finite");

  const std::size_t count = std::clamp<std::size_t>(ceil_count(rate, candidates.size()), 1, candidates.size());
  auto before = [&](std::size_t a, std::size_t b) {
    if (magnitude[a] != magnitude[b])
      return order == SelectOrder::largest ? magnitude[a] > magnitude[b] : magnitude[a] < magnitude[b];
    return a < b;
  };
  std::nth_element(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(count - 1),
                   candidates.end(), before);
  for (std::size_t k = 0; k < count; ++k) result.mask.set(candidates[k]);
  return result;
}

inline Selection select_top_p(std::span<const double> delta, const BinaryMask& eligible, double p) {
  return select_by_magnitude(delta, eligible, p, SelectOrder::largest);
}

// Intersection over union; two empty masks count as identical (1).
inline double iou(const BinaryMask& a, const BinaryMask& b) {
  detail::require_same_size(a, b, "iou");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    inter += (a[i] && b[i]) ? 1 : 0;
    uni += (a[i] || b[i]) ? 1 : 0;
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

inline BinaryMask layer_mask(const Architecture& arch, std::size_t layer_id) {
  const LayerSpan& span = arch.span(layer_id);
  BinaryMask m(arch.dimension());
  for (std::size_t i = span.begin(); i < span.end(); ++i) m.set(i);
  return m;
}

inline BinaryMask restrict_to_layer(const BinaryMask& m, const Architecture& arch, std::size_t layer_id) {
  const LayerSpan& span = arch.span(layer_id);
  BinaryMask out(span.size());
  for (std::size_t i = span.begin(); i < span.end(); ++i) out.set(i - span.begin(), m[i]);
  return out;
}

// Run-length text form "<length>:<first bit>:<run>,<run>,...",
// e.g. [1,1,0,0,0] -> "5:1:2,3". The empty mask is "0:0:".
inline std::string to_rle(const BinaryMask& m) {
  std::ostringstream os;
  os << m.size() << ':' << (m.size() > 0 && m[0] ? 1 : 0) << ':';
  std::size_t i = 0;
  bool first = true;
  while (i < m.size()) {
    std::size_t j = i;
    while (j < m.size() && m[j] == m[i]) ++j;
    if (!first) os << ',';
    os << (j - i);
    first = false;
    i = j;
  }
  return os.str();
}

inline BinaryMask from_rle(std::string_view text) {
  auto fail = [&](const std::string& why) -> BinaryMask {
    throw InputError("bad mask encoding '" + std::string(text.substr(0, 40)) + "': " + why);
  };
  const auto c1 = text.find(':');
  const auto c2 = c1 == std::string_view::npos ? c1 : text.find(':', c1 + 1);
  if (c2 == std::string_view::npos) return fail("expected <length>:<bit>:<runs>");
  std::size_t length = 0;
  try {
    length = std::stoull(std::string(text.substr(0, c1)));
  } catch (const std::exception&) {
    return fail("length is not an integer");
  }
  const std::string_view bit = text.substr(c1 + 1, c2 - c1 - 1);
  if (bit != "0" && bit != "1") return fail("first bit must be 0 or 1");
  bool value = bit == "1";
  BinaryMask m(length);
  std::size_t pos = 0;
  std::string_view runs = text.substr(c2 + 1);
  while (!runs.empty()) {
    const auto comma = runs.find(',');
    const std::string_view tok = runs.substr(0, comma);
    std::size_t run = 0;
    try {
      std::size_t used = 0;
      run = std::stoull(std::string(tok), &used);
      if (used != tok.size()) return fail("run is not an integer");
    } catch (const std::exception&) {
      return fail("run is not an integer");
    }
    if (run == 0 || pos + run > length) return fail("runs do not fit the length");
    for (std::size_t k = 0; k < run; ++k) m.set(pos++, value);
    value = !value;
    if (comma == std::string_view::npos) break;
    runs.remove_prefix(comma + 1);
    if (runs.empty()) return fail("trailing comma");
  }
  if (pos != length) return fail("runs cover " + std::to_string(pos) + " of " + std::to_string(length));
  return m;
}

}  // namespace fedselect
