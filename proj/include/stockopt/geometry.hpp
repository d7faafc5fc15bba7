#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace stockopt::geometry {

using Vec3 = Eigen::Vector3d;
using Triangle = std::array<int, 3>;

/// Watertight, outward-oriented triangle surface in mm.
///
/// Instances built through make_mesh(), load_mesh() or extract_surface() satisfy the
/// invariants checked by validate(): every undirected edge is used by exactly two
/// triangles with opposite orientation, no triangle has area <= 1e-12 mm^2, and the
/// enclosed signed volume is strictly positive.
struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<Triangle> triangles;
};

inline constexpr double kWeldTolerance = 1e-6;
inline constexpr double kMinTriangleArea = 1e-12;

/// Sum of det(v0, v1, v2) / 6 over the triangles, with no validity checks.
double signed_volume(std::span<const Vec3> vertices, std::span<const Triangle> triangles);

/// Throws WatertightnessViolation, DegenerateTriangle or NegativeVolume.
void validate(const TriangleMesh& m);

/// Validates and returns the mesh.
TriangleMesh make_mesh(std::vector<Vec3> vertices, std::vector<Triangle> triangles);

double mesh_volume(const TriangleMesh& m);

struct Aabb {
  Vec3 lo{Vec3::Constant(std::numeric_limits<double>::infinity())};
  Vec3 hi{Vec3::Constant(-std::numeric_limits<double>::infinity())};

  void extend(const Vec3& p) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  void extend(const Aabb& b) {
    lo = lo.cwiseMin(b.lo);
    hi = hi.cwiseMax(b.hi);
  }
  Vec3 extent() const { return hi - lo; }
};

Aabb bounding_box(const TriangleMesh& m);

/// Parses binary or ASCII STL bytes, welds vertices closer than kWeldTolerance and
/// validates the result.
TriangleMesh load_mesh(std::span<const std::byte> bytes);
TriangleMesh load_mesh_file(const std::filesystem::path& path);

std::vector<std::byte> to_binary_stl(const TriangleMesh& m, const std::string& header = "stockopt");
void write_binary_stl(const std::filesystem::path& path, const TriangleMesh& m);
std::string to_ascii_stl(const TriangleMesh& m, const std::string& name = "stockopt");

/// Axis-aligned box [lo, lo + size] as 12 triangles.
TriangleMesh make_box_mesh(const Vec3& lo, const Vec3& size);

// --------------------------------------------------------------------------

/// Regular lattice of cubic cells. Cell (i, j, k) spans
/// [origin + (i, j, k) * h, origin + (i + 1, j + 1, k + 1) * h]; x varies fastest.
struct VoxelGrid {
  Vec3 origin{Vec3::Zero()};
  double h{1.0};
  std::array<int, 3> dims{0, 0, 0};

  std::size_t cell_count() const {
    return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  }
  std::size_t index(int i, int j, int k) const {
    return static_cast<std::size_t>(i) +
           static_cast<std::size_t>(dims[0]) * (static_cast<std::size_t>(j) +
                                                static_cast<std::size_t>(dims[1]) * k);
  }
  bool contains(int i, int j, int k) const {
    return i >= 0 && j >= 0 && k >= 0 && i < dims[0] && j < dims[1] && k < dims[2];
  }
  Vec3 cell_center(int i, int j, int k) const {
    return origin + h * Vec3(i + 0.5, j + 0.5, k + 0.5);
  }
  Vec3 corner(int i, int j, int k) const { return origin + h * Vec3(i, j, k); }

  /// Same spacing and origins an integer number of cells apart.
  bool lattice_compatible(const VoxelGrid& other) const;
  /// Integer cell offset of this grid's origin relative to other's origin.
  std::array<int, 3> offset_from(const VoxelGrid& other) const;
  bool operator==(const VoxelGrid& o) const;
};

/// Occupancy on a VoxelGrid, one byte (0/1) per cell.
///
/// Constructors in this library keep a one-cell empty margin: no occupied cell touches
/// the grid border.
struct VoxelModel {
  VoxelGrid grid;
  std::vector<std::uint8_t> occupancy;

  VoxelModel() = default;
  explicit VoxelModel(VoxelGrid g) : grid(g), occupancy(g.cell_count(), 0) {}

  bool at(int i, int j, int k) const {
    return grid.contains(i, j, k) && occupancy[grid.index(i, j, k)] != 0;
  }
  void set(int i, int j, int k, bool v) { occupancy[grid.index(i, j, k)] = v ? 1 : 0; }
  std::size_t count() const;
  bool empty() const { return count() == 0; }
  /// Smallest distance (in cells) between an occupied cell and the grid border;
  /// grid size when empty.
  int margin() const;
  /// Index-space bounding box of occupied cells, {imin, jmin, kmin, imax, jmax, kmax}.
  std::array<int, 6> occupied_bounds() const;
};

/// Grows the grid by `cells` on every side, keeping world positions of cells fixed.
VoxelModel pad(const VoxelModel& v, int cells);

/// Re-expresses v on a lattice-compatible target grid; cells outside v's grid are empty.
/// Throws std::invalid_argument if an occupied cell would fall outside the target.
VoxelModel align_to(const VoxelModel& v, const VoxelGrid& target);

/// Cells whose centers are inside m by +x ray parity. Grid = mesh bounding box plus a
/// one-cell margin, origin at bbox.lo - h. Throws EmptyResult if nothing is inside.
VoxelModel voxelize(const TriangleMesh& m, double h);

double voxel_volume(const VoxelModel& v);

/// Per-lattice-corner vertex displacement used when extracting a surface.
using CornerShift = std::function<Vec3(int i, int j, int k)>;

/// Boundary faces between occupied and empty cells, two triangles per face.
/// Edges where two occupied cells meet only diagonally are split per owning cell so
/// the result stays edge-manifold. The optional shift moves lattice corners; inserted
/// vertices follow by linear interpolation.
TriangleMesh extract_surface(const VoxelModel& v, const CornerShift& shift = {});

}  // namespace stockopt::geometry
