#pragma once

#include "stockopt/geometry.hpp"

#include <filesystem>

namespace stockopt::stock {

using geometry::Vec3;
using geometry::VoxelModel;

/// The three design parameters of a stock part.
struct StockParams {
  double offset_mm{0.0};        ///< uniform allowance added around the nominal part
  double grid_resolution{1.0};  ///< cavity cells along the longest bounding-box axis
  double wall_thickness_mm{0.0};///< minimum material between cavities and the nominal surface

  bool operator==(const StockParams&) const = default;
};

inline constexpr double kDefaultVoidFraction = 0.8;

/// Nominal, stock and cavity occupancy on one common grid.
///
/// The stock lattice is dilate(nominal, offset_cells) minus the cavities. When the
/// offset is not a whole number of cells, skin_mm = offset - offset_cells * h is the
/// residual by which exterior stock nodes are pushed along their corner direction
/// (see skin_direction); it is zero in lattice-only mode.
struct StockModel {
  VoxelModel stock;
  VoxelModel cavities;
  VoxelModel nominal;
  StockParams params;
  double beta{kDefaultVoidFraction};
  int offset_cells{0};
  double skin_mm{0.0};

  double h() const { return stock.grid.h; }
};

/// Nearest-cell count for a length: round(length / h).
int cells_for(double length_mm, double h);

/// Chebyshev dilation by k cells (Minkowski sum with a cube of half-side k*h).
/// The grid grows by k on every side, so the margin invariant is preserved.
VoxelModel dilate_cells(const VoxelModel& v, int k);
VoxelModel dilate(const VoxelModel& v, double r_mm);

/// Complement of the dilated complement, same grid; cells outside the grid count as empty.
VoxelModel erode_cells(const VoxelModel& v, int k);
VoxelModel erode(const VoxelModel& v, double t_mm);

/// Grid-pattern cavities: the nominal bounding box is tiled with cubic cells of side
/// L_max / resolution; each cell's centered cube of side beta * cell is voided when all
/// of its voxels lie inside erode(nominal, wall_mm).
VoxelModel generate_cavities(const VoxelModel& nominal, double resolution, double wall_mm, double beta);

/// Throws EmptyStock when the parameters leave no material. With subvoxel_offset off
/// the offset is quantized to round(offset / h) cells and skin_mm is 0.
StockModel assemble_stock(const VoxelModel& nominal, const StockParams& p, double beta,
                          bool subvoxel_offset = true);

/// 1 - |cavities| / |nominal| in voxel counts.
double remaining_material_fraction(const StockModel& s);

/// Outward direction in {-1, 0, 1}^3 of lattice corner (i, j, k) of `solid`: per axis,
/// the sign of (empty cells on the + side) - (empty cells on the - side) among the
/// eight cells sharing the corner. Zero for interior corners.
std::array<int, 3> skin_direction(const VoxelModel& solid, int i, int j, int k);

/// stock ∪ cavities, the region bounded by the exterior stock surface.
VoxelModel solid_region(const StockModel& s);

/// Exterior stock surface including the sub-voxel skin, cavity walls included.
geometry::TriangleMesh stock_surface(const StockModel& s);

/// Writes stock.stl, cavities.stl (when non-empty) and nominal.stl into dir.
void export_stl(const StockModel& s, const std::filesystem::path& dir);

}  // namespace stockopt::stock
