#include "nocspose/mesh_io.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace nocspose {

namespace {

std::ifstream open_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open mesh file: " + path);
  return in;
}

int resolve_obj_index(const std::string& token, int vertex_count) {
  // "3", "3/1", "3/1/2", "3//2" all refer to vertex 3.
  const size_t slash = token.find('/');
  const int raw = std::stoi(slash == std::string::npos ? token : token.substr(0, slash));
  const int idx = raw > 0 ? raw - 1 : vertex_count + raw;
  if (idx < 0 || idx >= vertex_count) throw std::runtime_error("OBJ face index out of range");
  return idx;
}

}  // namespace

Mesh load_obj(const std::string& path) {
  std::ifstream in = open_text(path);
  Mesh mesh;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;
    if (tag == "v") {
      Vec3 v;
      if (!(ls >> v.x() >> v.y() >> v.z())) throw std::runtime_error("malformed OBJ vertex: " + line);
      mesh.vertices.push_back(v);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string token;
      while (ls >> token) idx.push_back(resolve_obj_index(token, static_cast<int>(mesh.vertices.size())));
      if (idx.size() < 3) throw std::runtime_error("OBJ face with fewer than 3 vertices");
      for (size_t i = 2; i < idx.size(); ++i) {
        mesh.faces.push_back({idx[0], idx[i - 1], idx[i]});
      }
    }
  }
  mesh.finalize();
  return mesh;
}

Mesh load_ply(const std::string& path) {
  std::ifstream in = open_text(path);
  std::string line;
  if (!std::getline(in, line) || line.substr(0, 3) != "ply") throw std::runtime_error("not a PLY file: " + path);

  size_t n_vertices = 0;
  size_t n_faces = 0;
  int x_prop = -1, y_prop = -1, z_prop = -1;
  int vertex_prop_count = 0;
  bool in_vertex_element = false;
  bool ascii = false;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "format") {
      std::string fmt;
      ls >> fmt;
      ascii = (fmt == "ascii");
    } else if (tag == "element") {
      std::string name;
      size_t count = 0;
      ls >> name >> count;
      in_vertex_element = (name == "vertex");
      if (in_vertex_element) n_vertices = count;
      if (name == "face") n_faces = count;
    } else if (tag == "property" && in_vertex_element) {
      std::string type, name;
      ls >> type >> name;
      if (name == "x") x_prop = vertex_prop_count;
      if (name == "y") y_prop = vertex_prop_count;
      if (name == "z") z_prop = vertex_prop_count;
      ++vertex_prop_count;
    } else if (tag == "end_header") {
      break;
    }
  }
  if (!ascii) throw std::runtime_error("only ASCII PLY is supported: " + path);
  if (x_prop < 0 || y_prop < 0 || z_prop < 0) throw std::runtime_error("PLY vertex element lacks x/y/z");

  Mesh mesh;
  mesh.vertices.reserve(n_vertices);
  for (size_t i = 0; i < n_vertices; ++i) {
    if (!std::getline(in, line)) throw std::runtime_error("truncated PLY vertex list");
    std::istringstream ls(line);
    std::vector<double> props(vertex_prop_count, 0.0);
    for (int p = 0; p < vertex_prop_count; ++p) ls >> props[p];
    mesh.vertices.emplace_back(props[x_prop], props[y_prop], props[z_prop]);
  }
  for (size_t i = 0; i < n_faces; ++i) {
    if (!std::getline(in, line)) throw std::runtime_error("truncated PLY face list");
    std::istringstream ls(line);
    int count = 0;
    ls >> count;
    std::vector<int> idx(count);
    for (int p = 0; p < count; ++p) ls >> idx[p];
    if (count < 3) throw std::runtime_error("PLY face with fewer than 3 vertices");
    for (int p = 2; p < count; ++p) mesh.faces.push_back({idx[0], idx[p - 1], idx[p]});
  }
  mesh.finalize();
  return mesh;
}

Mesh load_mesh(const std::string& path) {
  const size_t dot = path.rfind('.');
  std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == "obj") return load_obj(path);
  if (ext == "ply") return load_ply(path);
  throw std::runtime_error("unsupported mesh extension: " + path);
}

void save_obj(const Mesh& mesh, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write mesh file: " + path);
  char buf[128];
  for (const Vec3& v : mesh.vertices) {
    std::snprintf(buf, sizeof(buf), "v %.17g %.17g %.17g\n", v.x(), v.y(), v.z());
    out << buf;
  }
  for (const auto& f : mesh.faces) {
    out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
  }
}

}  // namespace nocspose
