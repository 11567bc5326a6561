#include "currentfit/grid.hpp"

#include <cmath>

namespace currentfit::rkhs {

std::uint64_t Grid::hash() const {
  std::string canon;
  for (int d = 0; d < 3; ++d) canon += format_full(requested_min[d]) + ",";
  for (int d = 0; d < 3; ++d) canon += format_full(requested_max[d]) + ",";
  canon += format_full(gap) + ",";
  canon += std::to_string(size());
  return fnv1a(canon);
}

Grid build_grid(const Vec3& box_min, const Vec3& box_max, Scalar gap) {
  if (!(gap > 0.0)) throw ConfigError("grid gap must be positive");
  Grid grid;
  grid.requested_min = box_min;
  grid.requested_max = box_max;
  grid.gap = gap;
  for (int d = 0; d < 3; ++d) {
    const Scalar length = box_max[d] - box_min[d];
    if (!(length > 0.0)) throw ConfigError("grid domain axis " + std::to_string(d) + " is empty or inverted");
    grid.shape[d] = static_cast<int>(std::ceil(length / gap));
    grid.domain_min[d] = box_min[d];
    grid.domain_max[d] = box_min[d] + grid.shape[d] * gap;
  }
  const Index n = static_cast<Index>(grid.shape[0]) * grid.shape[1] * grid.shape[2];
  grid.points.resize(n, 3);
  Index row = 0;
  for (int ix = 0; ix < grid.shape[0]; ++ix)
    for (int iy = 0; iy < grid.shape[1]; ++iy)
      for (int iz = 0; iz < grid.shape[2]; ++iz) {
        grid.points(row, 0) = box_min[0] + (ix + 0.5) * gap;
        grid.points(row, 1) = box_min[1] + (iy + 0.5) * gap;
        grid.points(row, 2) = box_min[2] + (iz + 0.5) * gap;
        ++row;
      }
  grid.weight = gap * gap * gap;
  return grid;
}

}  // namespace currentfit::rkhs
