#include "stockopt/geometry.hpp"

#include "stockopt/error.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <unordered_map>

namespace stockopt::geometry {

namespace {

std::uint64_t edge_key(int a, int b) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
         static_cast<std::uint32_t>(b);
}

// Outward faces of the unit cell, counterclockwise seen from outside.
// Order: -x, +x, -y, +y, -z, +z.
constexpr std::array<std::array<std::array<int, 3>, 4>, 6> kCellFaces{{
    {{{0, 0, 0}, {0, 0, 1}, {0, 1, 1}, {0, 1, 0}}},
    {{{1, 0, 0}, {1, 1, 0}, {1, 1, 1}, {1, 0, 1}}},
    {{{0, 0, 0}, {1, 0, 0}, {1, 0, 1}, {0, 0, 1}}},
    {{{0, 1, 0}, {0, 1, 1}, {1, 1, 1}, {1, 1, 0}}},
    {{{0, 0, 0}, {0, 1, 0}, {1, 1, 0}, {1, 0, 0}}},
    {{{0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}}},
}};
constexpr std::array<std::array<int, 3>, 6> kFaceNeighbor{{
    {-1, 0, 0}, {1, 0, 0}, {0, -1, 0}, {0, 1, 0}, {0, 0, -1}, {0, 0, 1}}};

}  // namespace

double signed_volume(std::span<const Vec3> vertices, std::span<const Triangle> triangles) {
  if (vertices.empty()) return 0.0;
  // Closed-surface sum is translation invariant; shifting to a vertex reduces cancellation.
  const Vec3 ref = vertices.front();
  double six_v = 0.0;
  for (const auto& t : triangles) {
    const Vec3 a = vertices[t[0]] - ref;
    const Vec3 b = vertices[t[1]] - ref;
    const Vec3 c = vertices[t[2]] - ref;
    six_v += a.dot(b.cross(c));
  }
  return six_v / 6.0;
}

void validate(const TriangleMesh& m) {
  const int nv = static_cast<int>(m.vertices.size());
  if (m.triangles.empty()) throw WatertightnessViolation("mesh has no triangles");
  std::unordered_map<std::uint64_t, int> directed;
  directed.reserve(m.triangles.size() * 3);
  for (std::size_t t = 0; t < m.triangles.size(); ++t) {
    const auto& tri = m.triangles[t];
    for (int c = 0; c < 3; ++c) {
      if (tri[c] < 0 || tri[c] >= nv) {
        throw WatertightnessViolation("triangle " + std::to_string(t) + " references a missing vertex");
      }
    }
    if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2]) {
      throw DegenerateTriangle("triangle " + std::to_string(t) + " repeats a vertex");
    }
    const Vec3& a = m.vertices[tri[0]];
    const double area = 0.5 * (m.vertices[tri[1]] - a).cross(m.vertices[tri[2]] - a).norm();
    if (!(area > kMinTriangleArea)) {
      throw DegenerateTriangle("triangle " + std::to_string(t) + " has area " + std::to_string(area));
    }
    for (int c = 0; c < 3; ++c) ++directed[edge_key(tri[c], tri[(c + 1) % 3])];
  }
  for (const auto& [key, count] : directed) {
    const int a = static_cast<int>(key >> 32);
    const int b = static_cast<int>(key & 0xffffffffu);
    if (count != 1) {
      throw WatertightnessViolation("edge (" + std::to_string(a) + ", " + std::to_string(b) +
                                    ") is used " + std::to_string(count) +
                                    " times in the same direction");
    }
    const auto rev = directed.find(edge_key(b, a));
    if (rev == directed.end() || rev->second != 1) {
      throw WatertightnessViolation("open edge (" + std::to_string(a) + ", " + std::to_string(b) + ")");
    }
  }
  const double v = signed_volume(m.vertices, m.triangles);
  if (!(v > 0.0)) {
    throw NegativeVolume("enclosed volume " + std::to_string(v) + " is not positive (inverted orientation?)");
  }
}

TriangleMesh make_mesh(std::vector<Vec3> vertices, std::vector<Triangle> triangles) {
  TriangleMesh m{std::move(vertices), std::move(triangles)};
  validate(m);
  return m;
}

double mesh_volume(const TriangleMesh& m) { return signed_volume(m.vertices, m.triangles); }

Aabb bounding_box(const TriangleMesh& m) {
  Aabb b;
  for (const auto& v : m.vertices) b.extend(v);
  return b;
}

TriangleMesh make_box_mesh(const Vec3& lo, const Vec3& size) {
  std::vector<Vec3> verts;
  verts.reserve(8);
  for (int k = 0; k < 2; ++k)
    for (int j = 0; j < 2; ++j)
      for (int i = 0; i < 2; ++i) verts.push_back(lo + Vec3(i * size.x(), j * size.y(), k * size.z()));
  std::vector<Triangle> tris;
  for (const auto& face : kCellFaces) {
    std::array<int, 4> q{};
    for (int c = 0; c < 4; ++c) q[c] = face[c][0] + 2 * face[c][1] + 4 * face[c][2];
    tris.push_back({q[0], q[1], q[2]});
    tris.push_back({q[0], q[2], q[3]});
  }
  return make_mesh(std::move(verts), std::move(tris));
}

// --------------------------------------------------------------------------

bool VoxelGrid::lattice_compatible(const VoxelGrid& other) const {
  if (std::abs(h - other.h) > 1e-12 * h) return false;
  const Vec3 d = (origin - other.origin) / h;
  for (int a = 0; a < 3; ++a) {
    if (std::abs(d[a] - std::round(d[a])) > 1e-6) return false;
  }
  return true;
}

std::array<int, 3> VoxelGrid::offset_from(const VoxelGrid& other) const {
  const Vec3 d = (origin - other.origin) / h;
  return {static_cast<int>(std::lround(d[0])), static_cast<int>(std::lround(d[1])),
          static_cast<int>(std::lround(d[2]))};
}

bool VoxelGrid::operator==(const VoxelGrid& o) const {
  return dims == o.dims && h == o.h && origin == o.origin;
}

std::size_t VoxelModel::count() const {
  return static_cast<std::size_t>(std::count(occupancy.begin(), occupancy.end(), std::uint8_t{1}));
}

int VoxelModel::margin() const {
  int m = std::max({grid.dims[0], grid.dims[1], grid.dims[2]});
  for (int k = 0; k < grid.dims[2]; ++k)
    for (int j = 0; j < grid.dims[1]; ++j)
      for (int i = 0; i < grid.dims[0]; ++i) {
        if (!occupancy[grid.index(i, j, k)]) continue;
        m = std::min({m, i, j, k, grid.dims[0] - 1 - i, grid.dims[1] - 1 - j, grid.dims[2] - 1 - k});
      }
  return m;
}

std::array<int, 6> VoxelModel::occupied_bounds() const {
  std::array<int, 6> b{grid.dims[0], grid.dims[1], grid.dims[2], -1, -1, -1};
  for (int k = 0; k < grid.dims[2]; ++k)
    for (int j = 0; j < grid.dims[1]; ++j)
      for (int i = 0; i < grid.dims[0]; ++i) {
        if (!occupancy[grid.index(i, j, k)]) continue;
        b[0] = std::min(b[0], i);
        b[1] = std::min(b[1], j);
        b[2] = std::min(b[2], k);
        b[3] = std::max(b[3], i);
        b[4] = std::max(b[4], j);
        b[5] = std::max(b[5], k);
      }
  return b;
}

VoxelModel pad(const VoxelModel& v, int cells) {
  if (cells < 0) throw std::invalid_argument("pad: negative cell count");
  if (cells == 0) return v;
  VoxelGrid g = v.grid;
  g.origin -= Vec3::Constant(cells * g.h);
  for (int a = 0; a < 3; ++a) g.dims[a] += 2 * cells;
  return align_to(v, g);
}

VoxelModel align_to(const VoxelModel& v, const VoxelGrid& target) {
  if (!v.grid.lattice_compatible(target)) {
    throw std::invalid_argument("align_to: grids are not lattice compatible");
  }
  const auto off = v.grid.offset_from(target);
  VoxelModel out(target);
  for (int k = 0; k < v.grid.dims[2]; ++k)
    for (int j = 0; j < v.grid.dims[1]; ++j)
      for (int i = 0; i < v.grid.dims[0]; ++i) {
        if (!v.occupancy[v.grid.index(i, j, k)]) continue;
        const int ti = i + off[0], tj = j + off[1], tk = k + off[2];
        if (!target.contains(ti, tj, tk)) {
          throw std::invalid_argument("align_to: occupied cell outside target grid");
        }
        out.set(ti, tj, tk, true);
      }
  return out;
}

// --------------------------------------------------------------------------

namespace {

struct RowHits {
  std::vector<double> xs;
  bool ambiguous{false};
};

// +x ray through (y, z): x coordinates of proper crossings. Flags hits on a projected
// edge or vertex so the caller can nudge the ray.
RowHits cast_row(const TriangleMesh& m, std::span<const int> candidates, double y, double z,
                 double eps) {
  RowHits r;
  for (int t : candidates) {
    const auto& tri = m.triangles[t];
    const Vec3& a = m.vertices[tri[0]];
    const Vec3& b = m.vertices[tri[1]];
    const Vec3& c = m.vertices[tri[2]];
    const double area2 = (b.y() - a.y()) * (c.z() - a.z()) - (b.z() - a.z()) * (c.y() - a.y());
    if (std::abs(area2) <= eps) continue;  // parallel to the ray
    auto edge = [&](const Vec3& p, const Vec3& q) {
      return (q.y() - p.y()) * (z - p.z()) - (q.z() - p.z()) * (y - p.y());
    };
    double w0 = edge(b, c);
    double w1 = edge(c, a);
    double w2 = edge(a, b);
    if (area2 < 0) {
      w0 = -w0;
      w1 = -w1;
      w2 = -w2;
    }
    if (w0 < -eps || w1 < -eps || w2 < -eps) continue;
    if (w0 <= eps || w1 <= eps || w2 <= eps) {
      r.ambiguous = true;
      return r;
    }
    const double s = std::abs(area2);
    r.xs.push_back((w0 * a.x() + w1 * b.x() + w2 * c.x()) / s);
  }
  std::sort(r.xs.begin(), r.xs.end());
  return r;
}

}  // namespace

VoxelModel voxelize(const TriangleMesh& m, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("voxelize: spacing must be positive");
  const Aabb box = bounding_box(m);
  VoxelGrid g;
  g.h = h;
  g.origin = box.lo - Vec3::Constant(h);
  for (int a = 0; a < 3; ++a) {
    const double cells = std::ceil(box.extent()[a] / h - 1e-9);
    g.dims[a] = static_cast<int>(std::max(1.0, cells)) + 2;
  }
  VoxelModel out(g);

  // Bucket triangles by the z rows they can touch.
  std::vector<std::vector<int>> by_row(g.dims[2]);
  for (int t = 0; t < static_cast<int>(m.triangles.size()); ++t) {
    double zlo = std::numeric_limits<double>::infinity(), zhi = -zlo;
    for (int c = 0; c < 3; ++c) {
      zlo = std::min(zlo, m.vertices[m.triangles[t][c]].z());
      zhi = std::max(zhi, m.vertices[m.triangles[t][c]].z());
    }
    // Generous range: nudged rays move by at most a few 1e-3 h.
    const int k0 = std::max(0, static_cast<int>(std::floor((zlo - g.origin.z()) / h - 0.5)) - 1);
    const int k1 = std::min(g.dims[2] - 1, static_cast<int>(std::ceil((zhi - g.origin.z()) / h - 0.5)) + 1);
    for (int k = k0; k <= k1; ++k) by_row[k].push_back(t);
  }

  const double eps = 1e-12 * h * h;
  for (int k = 0; k < g.dims[2]; ++k) {
    for (int j = 0; j < g.dims[1]; ++j) {
      const Vec3 c0 = g.cell_center(0, j, k);
      RowHits hits;
      for (int attempt = 0; attempt < 16; ++attempt) {
        const double nudge = attempt * h * 1e-3;
        hits = cast_row(m, by_row[k], c0.y() + nudge, c0.z() + nudge * 0.7548776662466927, eps);
        if (!hits.ambiguous) break;
      }
      if (hits.ambiguous) throw ParseError("voxelize: could not find an unambiguous ray");
      for (int i = 0; i < g.dims[0]; ++i) {
        const double x = g.origin.x() + (i + 0.5) * h;
        const auto above = hits.xs.end() - std::upper_bound(hits.xs.begin(), hits.xs.end(), x);
        if (above % 2 == 1) out.set(i, j, k, true);
      }
    }
  }
  if (out.empty()) {
    throw EmptyResult("voxelize: no cell center inside the mesh at h = " + std::to_string(h));
  }
  return out;
}

double voxel_volume(const VoxelModel& v) {
  return static_cast<double>(v.count()) * v.grid.h * v.grid.h * v.grid.h;
}

// --------------------------------------------------------------------------

TriangleMesh extract_surface(const VoxelModel& v, const CornerShift& shift) {
  const VoxelGrid& g = v.grid;
  const std::int64_t cx = g.dims[0] + 1, cy = g.dims[1] + 1;
  auto corner_id = [&](int i, int j, int k) -> std::int64_t { return i + cx * (j + cy * std::int64_t{k}); };

  TriangleMesh out;
  std::unordered_map<std::int64_t, int> corner_vertex;
  std::map<std::pair<std::int64_t, std::int64_t>, int> midpoint_vertex;

  auto corner_pos = [&](int i, int j, int k) {
    Vec3 p = g.corner(i, j, k);
    if (shift) p += shift(i, j, k);
    return p;
  };
  auto corner_index = [&](const std::array<int, 3>& c) {
    const auto id = corner_id(c[0], c[1], c[2]);
    auto it = corner_vertex.find(id);
    if (it != corner_vertex.end()) return it->second;
    const int idx = static_cast<int>(out.vertices.size());
    out.vertices.push_back(corner_pos(c[0], c[1], c[2]));
    corner_vertex.emplace(id, idx);
    return idx;
  };
  // An edge is "pinched" when its four surrounding cells form a checkerboard.
  auto pinched = [&](const std::array<int, 3>& a, const std::array<int, 3>& b) {
    int axis = 0;
    while (a[axis] == b[axis]) ++axis;
    const int u = (axis + 1) % 3, w = (axis + 2) % 3;
    std::array<int, 3> lo = a[axis] < b[axis] ? a : b;
    bool occ[2][2];
    for (int du = 0; du < 2; ++du)
      for (int dw = 0; dw < 2; ++dw) {
        std::array<int, 3> c = lo;
        c[u] += du - 1;
        c[w] += dw - 1;
        occ[du][dw] = v.at(c[0], c[1], c[2]);
      }
    return occ[0][0] == occ[1][1] && occ[0][1] == occ[1][0] && occ[0][0] != occ[0][1];
  };

  for (int k = 0; k < g.dims[2]; ++k)
    for (int j = 0; j < g.dims[1]; ++j)
      for (int i = 0; i < g.dims[0]; ++i) {
        if (!v.at(i, j, k)) continue;
        const std::int64_t owner = static_cast<std::int64_t>(g.index(i, j, k));
        for (int f = 0; f < 6; ++f) {
          const auto& n = kFaceNeighbor[f];
          if (v.at(i + n[0], j + n[1], k + n[2])) continue;
          std::array<std::array<int, 3>, 4> cs{};
          std::array<int, 4> q{};
          for (int c = 0; c < 4; ++c) {
            cs[c] = {i + kCellFaces[f][c][0], j + kCellFaces[f][c][1], k + kCellFaces[f][c][2]};
            q[c] = corner_index(cs[c]);
          }
          std::array<int, 4> mid{-1, -1, -1, -1};
          bool any_split = false;
          for (int e = 0; e < 4; ++e) {
            const auto& a = cs[e];
            const auto& b = cs[(e + 1) % 4];
            if (!pinched(a, b)) continue;
            any_split = true;
            const auto ia = corner_id(a[0], a[1], a[2]);
            const auto ib = corner_id(b[0], b[1], b[2]);
            // Edge identity: lower corner id plus axis; one midpoint per owning cell.
            int axis = 0;
            while (a[axis] == b[axis]) ++axis;
            const std::pair<std::int64_t, std::int64_t> ekey{std::min(ia, ib) * 3 + axis, owner};
            auto it = midpoint_vertex.find(ekey);
            if (it == midpoint_vertex.end()) {
              const int idx = static_cast<int>(out.vertices.size());
              out.vertices.push_back(0.5 * (out.vertices[q[e]] + out.vertices[q[(e + 1) % 4]]));
              it = midpoint_vertex.emplace(ekey, idx).first;
            }
            mid[e] = it->second;
          }
          if (!any_split) {
            out.triangles.push_back({q[0], q[1], q[2]});
            out.triangles.push_back({q[0], q[2], q[3]});
            continue;
          }
          std::vector<int> ring;
          for (int e = 0; e < 4; ++e) {
            ring.push_back(q[e]);
            if (mid[e] >= 0) ring.push_back(mid[e]);
          }
          const int center = static_cast<int>(out.vertices.size());
          out.vertices.push_back(0.25 * (out.vertices[q[0]] + out.vertices[q[1]] + out.vertices[q[2]] +
                                         out.vertices[q[3]]));
          for (std::size_t r = 0; r < ring.size(); ++r) {
            out.triangles.push_back({center, ring[r], ring[(r + 1) % ring.size()]});
          }
        }
      }
  return out;
}

}  // namespace stockopt::geometry
