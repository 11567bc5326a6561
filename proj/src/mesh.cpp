#include "currentfit/mesh.hpp"

#include <Eigen/Geometry>

#include <cctype>
#include <fstream>
#include <sstream>

namespace currentfit::geom {

namespace {

[[noreturn]] void parse_fail(const std::string& path, int line, const std::string& what) {
  throw DataError(path + ":" + std::to_string(line) + ": " + what);
}

struct LineReader {
  std::istream& in;
  int line_no = 0;

  // Returns the next non-empty, non-comment line, or false at EOF.
  bool next(std::string& out) {
    while (std::getline(in, out)) {
      ++line_no;
      const auto pos = out.find_first_not_of(" \t\r");
      if (pos == std::string::npos) continue;
      if (out[pos] == '#') continue;
      return true;
    }
    return false;
  }
};

TriMesh load_off(const std::string& path, std::istream& in) {
  LineReader reader{in};
  std::string line;
  if (!reader.next(line)) parse_fail(path, reader.line_no, "empty file");
  {
    std::istringstream ls(line);
    std::string magic;
    ls >> magic;
    if (magic != "OFF") parse_fail(path, reader.line_no, "missing OFF header");
  }
  if (!reader.next(line)) parse_fail(path, reader.line_no, "missing counts line");
  long nv = -1, nf = -1, ne = 0;
  {
    std::istringstream ls(line);
    if (!(ls >> nv >> nf >> ne) || nv < 0 || nf < 0)
      parse_fail(path, reader.line_no, "malformed counts line");
  }
  TriMesh mesh;
  mesh.vertices.resize(nv, 3);
  for (long i = 0; i < nv; ++i) {
    if (!reader.next(line)) parse_fail(path, reader.line_no, "unexpected end of file in vertex list");
    std::istringstream ls(line);
    double x, y, z;
    if (!(ls >> x >> y >> z)) parse_fail(path, reader.line_no, "malformed vertex line");
    std::string extra;
    if (ls >> extra) parse_fail(path, reader.line_no, "trailing tokens on vertex line");
    mesh.vertices.row(i) << x, y, z;
  }
  mesh.triangles.resize(nf, 3);
  for (long f = 0; f < nf; ++f) {
    if (!reader.next(line)) parse_fail(path, reader.line_no, "unexpected end of file in face list");
    std::istringstream ls(line);
    long count;
    if (!(ls >> count)) parse_fail(path, reader.line_no, "malformed face line");
    if (count != 3) parse_fail(path, reader.line_no, "non-triangular face (vertex count " + std::to_string(count) + ")");
    long a, b, c;
    if (!(ls >> a >> b >> c)) parse_fail(path, reader.line_no, "malformed face line");
    for (long idx : {a, b, c})
      if (idx < 0 || idx >= nv)
        parse_fail(path, reader.line_no, "vertex index " + std::to_string(idx) + " out of range [0, " + std::to_string(nv) + ")");
    mesh.triangles.row(f) << static_cast<int>(a), static_cast<int>(b), static_cast<int>(c);
  }
  return mesh;
}

// Face tokens may carry texture/normal references ("i/t/n"); only the vertex
// index before the first '/' is used.
long obj_vertex_index(const std::string& token, const std::string& path, int line_no) {
  const std::string head = token.substr(0, token.find('/'));
  try {
    size_t used = 0;
    const long v = std::stol(head, &used);
    if (used != head.size()) throw std::invalid_argument(head);
    return v;
  } catch (const std::exception&) {
    parse_fail(path, line_no, "malformed face index '" + token + "'");
  }
}

TriMesh load_obj(const std::string& path, std::istream& in, int* ignored_directives) {
  LineReader reader{in};
  std::string line;
  std::vector<Vec3> verts;
  std::vector<Eigen::Vector3i> faces;
  int ignored = 0;
  while (reader.next(line)) {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "v") {
      double x, y, z;
      if (!(ls >> x >> y >> z)) parse_fail(path, reader.line_no, "malformed vertex line");
      verts.emplace_back(x, y, z);
    } else if (tag == "f") {
      std::vector<long> idx;
      std::string token;
      while (ls >> token) idx.push_back(obj_vertex_index(token, path, reader.line_no));
      if (idx.size() != 3)
        parse_fail(path, reader.line_no, "non-triangular face (vertex count " + std::to_string(idx.size()) + ")");
      Eigen::Vector3i tri;
      for (int k = 0; k < 3; ++k) {
        const long v = idx[k];  // 1-based
        if (v < 1 || v > static_cast<long>(verts.size()))
          parse_fail(path, reader.line_no, "vertex index " + std::to_string(v) + " out of range [1, " + std::to_string(verts.size()) + "]");
        tri[k] = static_cast<int>(v - 1);
      }
      faces.push_back(tri);
    } else {
      ++ignored;
    }
  }
  if (ignored_directives) *ignored_directives = ignored;
  TriMesh mesh;
  mesh.vertices.resize(static_cast<Index>(verts.size()), 3);
  for (size_t i = 0; i < verts.size(); ++i) mesh.vertices.row(static_cast<Index>(i)) = verts[i].transpose();
  mesh.triangles.resize(static_cast<Index>(faces.size()), 3);
  for (size_t f = 0; f < faces.size(); ++f) mesh.triangles.row(static_cast<Index>(f)) = faces[f].transpose();
  return mesh;
}

}  // namespace

void TriMesh::validate() const {
  if (triangle_count() < 1) throw DataError("mesh '" + label + "': at least one triangle required");
  const int nv = static_cast<int>(vertex_count());
  for (Index f = 0; f < triangle_count(); ++f)
    for (int k = 0; k < 3; ++k) {
      const int idx = triangles(f, k);
      if (idx < 0 || idx >= nv)
        throw DataError("mesh '" + label + "': face " + std::to_string(f) + " references vertex " + std::to_string(idx) + " out of range");
    }
}

TriMesh load_mesh(const std::string& path, MeshFormat format, int* ignored_directives) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open mesh file: " + path);
  TriMesh mesh = format == MeshFormat::Off ? load_off(path, in) : load_obj(path, in, ignored_directives);
  mesh.label = path;
  mesh.validate();
  return mesh;
}

MeshFormat format_from_path(const std::string& path) {
  const auto dot = path.find_last_of('.');
  std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
  for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (ext == "off") return MeshFormat::Off;
  if (ext == "obj") return MeshFormat::Obj;
  throw DataError("cannot infer mesh format from path: " + path);
}

void save_off(const TriMesh& mesh, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write mesh file: " + path);
  out << "OFF\n" << mesh.vertex_count() << " " << mesh.triangle_count() << " 0\n";
  for (Index i = 0; i < mesh.vertex_count(); ++i)
    out << format_full(mesh.vertices(i, 0)) << " " << format_full(mesh.vertices(i, 1)) << " "
        << format_full(mesh.vertices(i, 2)) << "\n";
  for (Index f = 0; f < mesh.triangle_count(); ++f)
    out << "3 " << mesh.triangles(f, 0) << " " << mesh.triangles(f, 1) << " " << mesh.triangles(f, 2) << "\n";
  if (!out) throw DataError("write failed: " + path);
}

DescriptorSet triangle_descriptors(const TriMesh& mesh) {
  mesh.validate();
  DescriptorSet set;
  set.label = mesh.label;
  const Index nf = mesh.triangle_count();
  set.centers.resize(nf, 3);
  set.area_vectors.resize(nf, 3);
  for (Index f = 0; f < nf; ++f) {
    const Vec3 a = mesh.vertices.row(mesh.triangles(f, 0)).transpose();
    const Vec3 b = mesh.vertices.row(mesh.triangles(f, 1)).transpose();
    const Vec3 c = mesh.vertices.row(mesh.triangles(f, 2)).transpose();
    set.centers.row(f) = ((a + b + c) / 3.0).transpose();
    const Vec3 tau = (b - a).cross(c - a);
    set.area_vectors.row(f) = tau.transpose();
    if (tau.squaredNorm() == 0.0) ++set.degenerate_count;
  }
  return set;
}

}  // namespace currentfit::geom
