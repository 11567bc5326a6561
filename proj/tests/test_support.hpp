#pragma once

#include "currentfit/current.hpp"
#include "currentfit/rng.hpp"
#include "currentfit/spectral.hpp"

#include <memory>

namespace currentfit::testing {

inline std::shared_ptr<const rkhs::Grid> unit_grid(int per_axis) {
  return std::make_shared<const rkhs::Grid>(
      rkhs::build_grid(Vec3(0, 0, 0), Vec3(1, 1, 1), 1.0 / per_axis));
}

inline FieldMatrix random_field(Rng& rng, Index rows, Scalar scale = 1.0) {
  FieldMatrix f(rows, 3);
  for (Index i = 0; i < rows; ++i)
    for (int d = 0; d < 3; ++d) f(i, d) = scale * rng.normal();
  return f;
}

inline FieldMatrix random_points(Rng& rng, Index rows, Scalar lo = 0.0, Scalar hi = 1.0) {
  FieldMatrix p(rows, 3);
  for (Index i = 0; i < rows; ++i)
    for (int d = 0; d < 3; ++d) p(i, d) = rng.uniform(lo, hi);
  return p;
}

inline rkhs::RawCurrent random_current(Rng& rng, Index atoms, const rkhs::KernelSpec& kernel,
                                       const std::string& label = "rand") {
  rkhs::RawCurrent current;
  current.points = random_points(rng, atoms);
  current.vectors = random_field(rng, atoms);
  current.kernel = kernel;
  current.label = label;
  return current;
}

inline rkhs::CurrentRepr random_repr(Rng& rng, std::shared_ptr<const rkhs::Grid> grid,
                                     const rkhs::KernelSpec& kernel, const std::string& label = "rand") {
  rkhs::CurrentRepr repr;
  repr.beta = random_field(rng, grid->size());
  repr.grid = std::move(grid);
  repr.kernel = kernel;
  repr.label = label;
  return repr;
}

}  // namespace currentfit::testing
