#pragma once

#include "currentfit/common.hpp"

namespace currentfit::rkhs {

/// Regular evaluation grid over an axis-aligned box. Points sit at cell
/// centers: per axis, min + (m + 1/2) * gap for m = 0 .. ceil(L/gap)-1. The
/// stored domain is the gap-aligned cover of the requested box (the last cell
/// of an axis may extend past the requested maximum; it is never trimmed and
/// every point lies inside the cover). Point order is lexicographic by
/// (x, y, z). Quadrature weight is gap^3 per point.
struct Grid {
  Vec3 requested_min;
  Vec3 requested_max;
  Vec3 domain_min;
  Vec3 domain_max;  // cover box: requested_min + shape * gap
  Scalar gap = 0.0;
  Eigen::Vector3i shape;
  FieldMatrix points;
  Scalar weight = 0.0;

  Index size() const { return points.rows(); }

  /// Identity of the evaluation geometry: equal hashes mean interchangeable
  /// grids for serialized artifacts.
  std::uint64_t hash() const;
};

Grid build_grid(const Vec3& box_min, const Vec3& box_max, Scalar gap);

}  // namespace currentfit::rkhs
