#pragma once

#include <optional>

#include "core/fields.hpp"

namespace fibm {

// Discrete derivative at one node from values supplied by a getter
// (std::optional<Matrix>, empty outside the validity set). Prefers the
// centered stencil and falls back to one-sided second order reaching
// inward, so values stay O(h^2) accurate up to the edge of the valid set.
template <typename Getter>
std::optional<Matrix> local_derivative(const Grid& grid, std::int64_t node, int axis,
                                       DiffScheme scheme, Getter&& get) {
  const double inv_h = 1.0 / grid.spacing(axis);
  auto at = [&](int off) -> std::optional<Matrix> {
    std::int64_t cur = node;
    const int step = off > 0 ? 1 : -1;
    for (int i = 0; i < (off > 0 ? off : -off); ++i) {
      const auto nb = grid.neighbor(cur, axis, step);
      if (!nb) return std::nullopt;
      cur = *nb;
    }
    return get(cur);
  };
  const auto m1 = at(-1);
  const auto p1 = at(+1);
  if (scheme == DiffScheme::Central4) {
    const auto m2 = at(-2);
    const auto p2 = at(+2);
    if (m2 && m1 && p1 && p2)
      return ((*m2 - *p2) / 12.0 + (*p1 - *m1) * (8.0 / 12.0)) * inv_h;
  }
  if (m1 && p1) return (0.5 * (*p1 - *m1)) * inv_h;
  const auto c0 = get(node);
  if (c0) {
    const auto p2 = at(+2);
    if (p1 && p2) return (-1.5 * *c0 + 2.0 * *p1 - 0.5 * *p2) * inv_h;
    const auto m2 = at(-2);
    if (m1 && m2) return (1.5 * *c0 - 2.0 * *m1 + 0.5 * *m2) * inv_h;
  }
  return std::nullopt;
}

}  // namespace fibm
