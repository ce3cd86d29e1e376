// Copyright Contributors to the inv3d Project
// SPDX-License-Identifier: Apache-2.0
#include "inv3d/marching_cubes.hpp"

#include <array>
#include <fstream>
#include <unordered_map>
#include <vector>

#include "inv3d/common.hpp"

namespace inv3d {
namespace {

// Six-tetrahedra decomposition of the unit cube (corner ids 0..7, corner c
// sits at bit pattern (x=c&1, y=(c>>1)&1, z=(c>>2)&1)).
constexpr std::array<std::array<int, 4>, 6> kTets = {{
    {0, 1, 3, 7},
    {0, 3, 2, 7},
    {0, 2, 6, 7},
    {0, 6, 4, 7},
    {0, 4, 5, 7},
    {0, 5, 1, 7},
}};

struct MeshBuilder {
  std::vector<std::array<double, 3>> vertices;
  std::vector<std::array<std::int64_t, 3>> faces;
  std::unordered_map<std::uint64_t, std::int64_t> edge_vertices;

  std::int64_t edge_vertex(std::uint64_t a, std::uint64_t b, std::array<double, 3> pa,
                           std::array<double, 3> pb, double da, double db) {
    if (a > b) {
      std::swap(a, b);
      std::swap(da, db);
      std::swap(pa, pb);
    }
    const std::uint64_t key = (a << 32) | b;
    auto it = edge_vertices.find(key);
    if (it != edge_vertices.end()) {
      return it->second;
    }
    const double t = da / (da - db);  // zero crossing on the edge
    std::array<double, 3> p{pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1]),
                            pa[2] + t * (pb[2] - pa[2])};
    const auto idx = static_cast<std::int64_t>(vertices.size());
    vertices.push_back(p);
    edge_vertices.emplace(key, idx);
    return idx;
  }
};

}  // namespace

Mesh extract_isosurface(const torch::Tensor& grid, double iso, double extent) {
  if (grid.dim() != 3 || grid.size(0) < 2 || grid.size(0) != grid.size(1) ||
      grid.size(1) != grid.size(2)) {
    throw std::invalid_argument("extract_isosurface: grid must be cubic with side >= 2");
  }
  const std::int64_t n = grid.size(0);  // lattice points per axis
  auto g = grid.to(torch::kFloat64).contiguous();
  const double* data = g.data_ptr<double>();
  const double step = 2.0 * extent / static_cast<double>(n - 1);

  auto value_at = [&](std::int64_t i, std::int64_t j, std::int64_t k) {
    return data[(i * n + j) * n + k] - iso;
  };
  auto point_at = [&](std::int64_t i, std::int64_t j, std::int64_t k) {
    return std::array<double, 3>{-extent + step * i, -extent + step * j, -extent + step * k};
  };
  auto id_at = [&](std::int64_t i, std::int64_t j, std::int64_t k) {
    return static_cast<std::uint64_t>((i * n + j) * n + k);
  };

  MeshBuilder builder;
  std::array<std::uint64_t, 8> cid;
  std::array<std::array<double, 3>, 8> cpos;
  std::array<double, 8> cval;

  for (std::int64_t i = 0; i + 1 < n; ++i) {
    for (std::int64_t j = 0; j + 1 < n; ++j) {
      for (std::int64_t k = 0; k + 1 < n; ++k) {
        for (int c = 0; c < 8; ++c) {
          const std::int64_t ci = i + (c & 1);
          const std::int64_t cj = j + ((c >> 1) & 1);
          const std::int64_t ck = k + ((c >> 2) & 1);
          cid[c] = id_at(ci, cj, ck);
          cpos[c] = point_at(ci, cj, ck);
          cval[c] = value_at(ci, cj, ck);
        }
        for (const auto& tet : kTets) {
          int inside_count = 0;
          std::array<bool, 4> inside{};
          for (int t = 0; t < 4; ++t) {
            inside[t] = cval[tet[t]] < 0.0;
            inside_count += inside[t] ? 1 : 0;
          }
          if (inside_count == 0 || inside_count == 4) {
            continue;
          }
          auto ev = [&](int a, int b) {
            return builder.edge_vertex(cid[tet[a]], cid[tet[b]], cpos[tet[a]], cpos[tet[b]],
                                       cval[tet[a]], cval[tet[b]]);
          };
          if (inside_count == 1 || inside_count == 3) {
            // One vertex isolated: a single triangle on its three edges.
            int lone = -1;
            for (int t = 0; t < 4; ++t) {
              if (inside[t] == (inside_count == 1)) lone = t;
            }
            const int o0 = (lone + 1) % 4, o1 = (lone + 2) % 4, o2 = (lone + 3) % 4;
            builder.faces.push_back({ev(lone, o0), ev(lone, o1), ev(lone, o2)});
          } else {
            // Two-two split: quad across four edges, emitted as two triangles.
            std::array<int, 2> a{}, b{};
            int na = 0, nb = 0;
            for (int t = 0; t < 4; ++t) {
              if (inside[t]) {
                a[na++] = t;
              } else {
                b[nb++] = t;
              }
            }
            const auto v00 = ev(a[0], b[0]);
            const auto v01 = ev(a[0], b[1]);
            const auto v10 = ev(a[1], b[0]);
            const auto v11 = ev(a[1], b[1]);
            builder.faces.push_back({v00, v01, v11});
            builder.faces.push_back({v00, v11, v10});
          }
        }
      }
    }
  }

  Mesh mesh;
  if (builder.vertices.empty()) {
    mesh.vertices = torch::zeros({0, 3}, f64());
    mesh.faces = torch::zeros({0, 3}, torch::kInt64);
    return mesh;
  }
  mesh.vertices = torch::from_blob(builder.vertices.data(),
                                   {static_cast<std::int64_t>(builder.vertices.size()), 3},
                                   f64())
                      .clone();
  mesh.faces = torch::from_blob(builder.faces.data(),
                                {static_cast<std::int64_t>(builder.faces.size()), 3},
                                torch::kInt64)
                   .clone();
  return mesh;
}

void write_obj(const std::filesystem::path& path, const Mesh& mesh) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("write_obj: cannot open " + path.string());
  }
  const auto v = mesh.vertices.accessor<double, 2>();
  for (std::int64_t i = 0; i < mesh.vertices.size(0); ++i) {
    char line[128];
    std::snprintf(line, sizeof(line), "v %.9g %.9g %.9g\n", v[i][0], v[i][1], v[i][2]);
    out << line;
  }
  const auto f = mesh.faces.accessor<std::int64_t, 2>();
  for (std::int64_t i = 0; i < mesh.faces.size(0); ++i) {
    out << "f " << f[i][0] + 1 << " " << f[i][1] + 1 << " " << f[i][2] + 1 << "\n";
  }
}

Mesh read_obj(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("read_obj: cannot open " + path.string());
  }
  std::vector<std::array<double, 3>> vertices;
  std::vector<std::array<std::int64_t, 3>> faces;
  std::string tag;
  while (in >> tag) {
    if (tag == "v") {
      std::array<double, 3> p{};
      in >> p[0] >> p[1] >> p[2];
      vertices.push_back(p);
    } else if (tag == "f") {
      std::array<std::int64_t, 3> f{};
      in >> f[0] >> f[1] >> f[2];
      faces.push_back({f[0] - 1, f[1] - 1, f[2] - 1});
    } else {
      std::string rest;
      std::getline(in, rest);
    }
  }
  Mesh mesh;
  mesh.vertices =
      vertices.empty()
          ? torch::zeros({0, 3}, f64())
          : torch::from_blob(vertices.data(), {static_cast<std::int64_t>(vertices.size()), 3},
                             f64())
                .clone();
  mesh.faces = faces.empty()
                   ? torch::zeros({0, 3}, torch::kInt64)
                   : torch::from_blob(faces.data(), {static_cast<std::int64_t>(faces.size()), 3},
                                      torch::kInt64)
                         .clone();
  return mesh;
}

}  // namespace inv3d
