#pragma once

#include "currentfit/common.hpp"

#include <string>
#include <vector>

namespace currentfit::geom {

/// Oriented triangulated surface. Triangle vertex triples are ordered data:
/// orientation carries sign information downstream, so faces are kept exactly
/// as stored in the file.
struct TriMesh {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 3> vertices;
  Eigen::Matrix<int, Eigen::Dynamic, 3> triangles;
  std::string label;

  Index vertex_count() const { return vertices.rows(); }
  Index triangle_count() const { return triangles.rows(); }

  /// Throws DataError if an index is out of range or the mesh has no faces.
  void validate() const;
};

/// Per-triangle current descriptor: center x_j = (a+b+c)/3 and area vector
/// tau_j = (b-a) x (c-a). Note tau has magnitude equal to TWICE the triangle
/// area; this cross-product convention is used consistently everywhere, so
/// the factor cancels in all normalized quantities.
struct TriangleDescriptor {
  Vec3 center;
  Vec3 area_vector;
};

/// Struct-of-arrays descriptor list, one row per face, in face order.
/// Degenerate faces are kept with a zero area vector and counted.
struct DescriptorSet {
  FieldMatrix centers;
  FieldMatrix area_vectors;
  int degenerate_count = 0;
  std::string label;

  Index size() const { return centers.rows(); }
  TriangleDescriptor descriptor(Index j) const {
    return {centers.row(j).transpose(), area_vectors.row(j).transpose()};
  }
};

enum class MeshFormat { Off, Obj };

/// Parses an ASCII OFF or OBJ file. Errors carry the offending line number.
/// OBJ support is read-only: "v" and "f" records, 1-based indices; any other
/// directive is skipped (counted in *ignored_directives when given).
TriMesh load_mesh(const std::string& path, MeshFormat format,
                  int* ignored_directives = nullptr);

/// Guesses the format from the file extension (.off / .obj).
MeshFormat format_from_path(const std::string& path);

void save_off(const TriMesh& mesh, const std::string& path);

DescriptorSet triangle_descriptors(const TriMesh& mesh);

}  // namespace currentfit::geom
