#include "currentfit/mesh.hpp"
#include "currentfit/synthetic.hpp"

#include <Eigen/Geometry>

#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

using namespace currentfit;
using doctest::Approx;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
  const std::string path = (std::filesystem::temp_directory_path() / name).string();
  std::ofstream out(path);
  out << content;
  return path;
}

}  // namespace

TEST_CASE("descriptors of an axis-aligned right triangle") {
  geom::TriMesh mesh;
  mesh.vertices.resize(3, 3);
  mesh.vertices << 0, 0, 0, 3, 0, 0, 0, 3, 0;
  mesh.triangles.resize(1, 3);
  mesh.triangles << 0, 1, 2;
  const auto set = geom::triangle_descriptors(mesh);
  REQUIRE(set.size() == 1);
  CHECK(set.centers.row(0).isApprox(Eigen::RowVector3d(1, 1, 0)));
  CHECK(set.area_vectors.row(0).isApprox(Eigen::RowVector3d(0, 0, 9)));
  CHECK(set.degenerate_count == 0);
}

TEST_CASE("degenerate collinear triangle keeps its slot with a zero area vector") {
  geom::TriMesh mesh;
  mesh.vertices.resize(3, 3);
  mesh.vertices << 0, 0, 0, 1, 0, 0, 2, 0, 0;
  mesh.triangles.resize(1, 3);
  mesh.triangles << 0, 1, 2;
  const auto set = geom::triangle_descriptors(mesh);
  CHECK(set.area_vectors.row(0).norm() == 0.0);
  CHECK(set.degenerate_count == 1);
}

TEST_CASE("OFF loader handles the minimal valid mesh") {
  const auto path = write_temp("cf_min.off", "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n");
  const auto mesh = geom::load_mesh(path, geom::MeshFormat::Off);
  CHECK(mesh.vertex_count() == 3);
  CHECK(mesh.triangle_count() == 1);
  CHECK(mesh.triangles(0, 1) == 1);
}

TEST_CASE("OFF loader reports malformed files with line numbers") {
  SUBCASE("missing vertex") {
    const auto path = write_temp("cf_bad1.off", "OFF\n4 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n");
    CHECK_THROWS_WITH_AS(geom::load_mesh(path, geom::MeshFormat::Off),
                         doctest::Contains(":6"), DataError);
  }
  SUBCASE("quad face") {
    const auto path = write_temp("cf_bad2.off", "OFF\n4 1 0\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n4 0 1 2 3\n");
    CHECK_THROWS_WITH_AS(geom::load_mesh(path, geom::MeshFormat::Off),
                         doctest::Contains("non-triangular"), DataError);
  }
  SUBCASE("index out of range") {
    const auto path = write_temp("cf_bad3.off", "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 9\n");
    CHECK_THROWS_WITH_AS(geom::load_mesh(path, geom::MeshFormat::Off),
                         doctest::Contains("out of range"), DataError);
  }
  SUBCASE("no header") {
    const auto path = write_temp("cf_bad4.off", "3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n");
    CHECK_THROWS_AS(geom::load_mesh(path, geom::MeshFormat::Off), DataError);
  }
}

TEST_CASE("OBJ loader reads v/f records and counts ignored directives") {
  const auto path = write_temp("cf_tri.obj",
                               "# comment\nvn 0 0 1\nv 0 0 0\nv 1 0 0\nv 0 1 0\nusemtl x\nf 1 2 3\n");
  int ignored = 0;
  const auto mesh = geom::load_mesh(path, geom::MeshFormat::Obj, &ignored);
  CHECK(mesh.triangle_count() == 1);
  CHECK(mesh.triangles(0, 0) == 0);  // 1-based converted
  CHECK(ignored == 2);

  const auto slash = write_temp("cf_tri2.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1/1 2/2 3/3\n");
  CHECK(geom::load_mesh(slash, geom::MeshFormat::Obj).triangle_count() == 1);

  const auto bad = write_temp("cf_tri3.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 4\n");
  CHECK_THROWS_AS(geom::load_mesh(bad, geom::MeshFormat::Obj), DataError);
}

TEST_CASE("closed oriented meshes have vanishing total area vector") {
  const auto mesh = synth::icosphere(2);
  CHECK(mesh.triangle_count() == 320);
  const auto set = geom::triangle_descriptors(mesh);
  const Vec3 total = set.area_vectors.colwise().sum().transpose();
  const Scalar mass = set.area_vectors.rowwise().norm().sum();
  CHECK(total.norm() <= 1e-9 * mass);

  // outward orientation: positive enclosed volume via the divergence theorem
  Scalar volume = 0.0;
  for (Index f = 0; f < mesh.triangle_count(); ++f) {
    const Vec3 a = mesh.vertices.row(mesh.triangles(f, 0)).transpose();
    const Vec3 b = mesh.vertices.row(mesh.triangles(f, 1)).transpose();
    const Vec3 c = mesh.vertices.row(mesh.triangles(f, 2)).transpose();
    volume += a.dot(b.cross(c)) / 6.0;
  }
  CHECK(volume > 0.0);
}

TEST_CASE("icosphere round-trips through OFF exactly") {
  const auto mesh = synth::icosphere(3);
  const auto path = (std::filesystem::temp_directory_path() / "cf_ico.off").string();
  geom::save_off(mesh, path);
  const auto back = geom::load_mesh(path, geom::MeshFormat::Off);
  REQUIRE(back.vertex_count() == mesh.vertex_count());
  REQUIRE(back.triangle_count() == mesh.triangle_count());
  CHECK(back.vertices == mesh.vertices);
  CHECK(back.triangles == mesh.triangles);
  const auto set = geom::triangle_descriptors(back);
  CHECK(set.degenerate_count == 0);
}

TEST_CASE("reversing every face negates area vectors and keeps centers") {
  const auto mesh = synth::icosphere(1);
  geom::TriMesh flipped = mesh;
  flipped.triangles.col(1).swap(flipped.triangles.col(2));
  const auto fwd = geom::triangle_descriptors(mesh);
  const auto rev = geom::triangle_descriptors(flipped);
  // centers only reassociate the vertex sum, area vectors flip exactly
  CHECK((fwd.centers - rev.centers).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK((fwd.area_vectors + rev.area_vectors).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("descriptors are invariant under consistent vertex relabeling") {
  const auto mesh = synth::icosphere(1);
  const Index nv = mesh.vertex_count();
  // reverse the vertex list and remap faces accordingly
  geom::TriMesh permuted;
  permuted.vertices.resize(nv, 3);
  for (Index i = 0; i < nv; ++i) permuted.vertices.row(i) = mesh.vertices.row(nv - 1 - i);
  permuted.triangles = mesh.triangles;
  for (Index f = 0; f < permuted.triangle_count(); ++f)
    for (int k = 0; k < 3; ++k)
      permuted.triangles(f, k) = static_cast<int>(nv) - 1 - permuted.triangles(f, k);
  const auto a = geom::triangle_descriptors(mesh);
  const auto b = geom::triangle_descriptors(permuted);
  CHECK((a.centers - b.centers).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.area_vectors - b.area_vectors).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("empty and invalid meshes are rejected") {
  geom::TriMesh mesh;
  mesh.vertices.resize(3, 3);
  mesh.vertices.setZero();
  mesh.triangles.resize(0, 3);
  CHECK_THROWS_AS(geom::triangle_descriptors(mesh), DataError);
}
