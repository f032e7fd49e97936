#pragma once

#include <cmath>
#include <optional>

namespace movseq {

/// A feature value that may be NA. NA is the empty state; it is never encoded
/// as 0 or NaN so absent peaks and components stay distinguishable downstream.
using Feature = std::optional<double>;

inline constexpr std::nullopt_t NA = std::nullopt;

inline bool is_na(const Feature& f) { return !f.has_value(); }

/// Wraps a computed value, mapping non-finite results to NA.
inline Feature finite_or_na(double v) {
  if (std::isfinite(v)) return v;
  return NA;
}

}  // namespace movseq
