#include "stockopt/stock.hpp"

#include "stockopt/error.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace stockopt::stock {

using geometry::VoxelGrid;

namespace {

// In-place 1-D window filter along `axis`: a cell becomes occupied if any (dilate) or
// all (erode) cells within distance k along the axis are occupied. Cells beyond the
// grid are empty.
void filter_axis(VoxelModel& v, int axis, int k, bool dilate) {
  const auto& d = v.grid.dims;
  const int n = d[axis];
  const int u = (axis + 1) % 3, w = (axis + 2) % 3;
  std::vector<int> prefix(n + 1);
  std::vector<std::uint8_t> line(n);
  std::array<int, 3> c{};
  for (c[w] = 0; c[w] < d[w]; ++c[w]) {
    for (c[u] = 0; c[u] < d[u]; ++c[u]) {
      for (c[axis] = 0; c[axis] < n; ++c[axis]) line[c[axis]] = v.at(c[0], c[1], c[2]);
      prefix[0] = 0;
      for (int i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + line[i];
      for (c[axis] = 0; c[axis] < n; ++c[axis]) {
        const int i = c[axis];
        const int lo = i - k, hi = i + k;
        const int count = prefix[std::min(n, hi + 1)] - prefix[std::max(0, lo)];
        const bool val = dilate ? count > 0 : (lo >= 0 && hi < n && count == 2 * k + 1);
        v.set(c[0], c[1], c[2], val);
      }
    }
  }
}

}  // namespace

int cells_for(double length_mm, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("cells_for: spacing must be positive");
  if (length_mm < 0.0) throw std::invalid_argument("cells_for: negative length");
  return static_cast<int>(std::lround(length_mm / h));
}

VoxelModel dilate_cells(const VoxelModel& v, int k) {
  if (k < 0) throw std::invalid_argument("dilate: negative radius");
  if (k == 0) return v;
  VoxelModel out = geometry::pad(v, k);
  for (int axis = 0; axis < 3; ++axis) filter_axis(out, axis, k, true);
  return out;
}

VoxelModel dilate(const VoxelModel& v, double r_mm) { return dilate_cells(v, cells_for(r_mm, v.grid.h)); }

VoxelModel erode_cells(const VoxelModel& v, int k) {
  if (k < 0) throw std::invalid_argument("erode: negative radius");
  if (k == 0) return v;
  VoxelModel out = v;
  for (int axis = 0; axis < 3; ++axis) filter_axis(out, axis, k, false);
  return out;
}

VoxelModel erode(const VoxelModel& v, double t_mm) { return erode_cells(v, cells_for(t_mm, v.grid.h)); }

VoxelModel generate_cavities(const VoxelModel& nominal, double resolution, double wall_mm, double beta) {
  if (!(resolution > 0.0)) throw std::invalid_argument("generate_cavities: resolution must be positive");
  if (!(beta > 0.0 && beta < 1.0)) throw std::invalid_argument("generate_cavities: beta must lie in (0, 1)");
  if (wall_mm < 0.0) throw std::invalid_argument("generate_cavities: negative wall thickness");

  const VoxelGrid& g = nominal.grid;
  VoxelModel out(g);
  if (nominal.empty()) return out;
  const VoxelModel allowed = erode(nominal, wall_mm);
  if (allowed.empty()) return out;

  const auto b = nominal.occupied_bounds();
  const Vec3 lo = g.corner(b[0], b[1], b[2]);
  const Vec3 hi = g.corner(b[3] + 1, b[4] + 1, b[5] + 1);
  const Vec3 ext = hi - lo;
  const double cell = ext.maxCoeff() / resolution;
  const double side = beta * cell;

  std::array<int, 3> ncell{};
  for (int a = 0; a < 3; ++a) ncell[a] = std::max(1, static_cast<int>(std::ceil(ext[a] / cell - 1e-9)));

  // Voxel index range [first, last) whose centers fall in [a, b).
  auto voxel_range = [&](int axis, double a, double bnd) {
    const double o = g.origin[axis];
    const int first = static_cast<int>(std::ceil((a - o) / g.h - 0.5));
    const int last = static_cast<int>(std::ceil((bnd - o) / g.h - 0.5));
    return std::pair<int, int>{std::max(first, 0), std::min(last, g.dims[axis])};
  };

  std::array<int, 3> c{};
  for (c[2] = 0; c[2] < ncell[2]; ++c[2])
    for (c[1] = 0; c[1] < ncell[1]; ++c[1])
      for (c[0] = 0; c[0] < ncell[0]; ++c[0]) {
        std::array<std::pair<int, int>, 3> r{};
        bool nonempty = true;
        for (int a = 0; a < 3; ++a) {
          const double center = lo[a] + (c[a] + 0.5) * cell;
          r[a] = voxel_range(a, center - 0.5 * side, center + 0.5 * side);
          nonempty = nonempty && r[a].first < r[a].second;
        }
        if (!nonempty) continue;
        bool inside = true;
        for (int k = r[2].first; k < r[2].second && inside; ++k)
          for (int j = r[1].first; j < r[1].second && inside; ++j)
            for (int i = r[0].first; i < r[0].second && inside; ++i) inside = allowed.at(i, j, k);
        if (!inside) continue;
        for (int k = r[2].first; k < r[2].second; ++k)
          for (int j = r[1].first; j < r[1].second; ++j)
            for (int i = r[0].first; i < r[0].second; ++i) out.set(i, j, k, true);
      }
  return out;
}

StockModel assemble_stock(const VoxelModel& nominal, const StockParams& p, double beta, bool subvoxel_offset) {
  if (p.offset_mm < 0.0) throw std::invalid_argument("assemble_stock: negative offset");
  if (nominal.empty()) throw EmptyStock("nominal geometry has no voxels");
  const double h = nominal.grid.h;

  StockModel s;
  s.params = p;
  s.beta = beta;
  s.offset_cells = cells_for(p.offset_mm, h);
  s.skin_mm = subvoxel_offset ? p.offset_mm - s.offset_cells * h : 0.0;

  VoxelModel dilated = dilate_cells(nominal, s.offset_cells);
  s.nominal = geometry::align_to(nominal, dilated.grid);
  s.cavities = generate_cavities(s.nominal, p.grid_resolution, p.wall_thickness_mm, beta);
  s.stock = std::move(dilated);
  for (std::size_t i = 0; i < s.stock.occupancy.size(); ++i) {
    if (s.cavities.occupancy[i]) s.stock.occupancy[i] = 0;
  }
  if (s.stock.empty()) throw EmptyStock("stock is empty for the given parameters");
  return s;
}

double remaining_material_fraction(const StockModel& s) {
  const auto n = s.nominal.count();
  if (n == 0) throw std::invalid_argument("remaining_material_fraction: empty nominal");
  return 1.0 - static_cast<double>(s.cavities.count()) / static_cast<double>(n);
}

std::array<int, 3> skin_direction(const VoxelModel& solid, int i, int j, int k) {
  std::array<int, 3> plus{}, minus{};
  for (int c = 0; c < 2; ++c)
    for (int b = 0; b < 2; ++b)
      for (int a = 0; a < 2; ++a) {
        if (solid.at(i - 1 + a, j - 1 + b, k - 1 + c)) continue;
        (a ? plus : minus)[0]++;
        (b ? plus : minus)[1]++;
        (c ? plus : minus)[2]++;
      }
  std::array<int, 3> n{};
  for (int d = 0; d < 3; ++d) n[d] = (plus[d] > minus[d]) - (plus[d] < minus[d]);
  return n;
}

VoxelModel solid_region(const StockModel& s) {
  VoxelModel out = s.stock;
  for (std::size_t i = 0; i < out.occupancy.size(); ++i) out.occupancy[i] |= s.cavities.occupancy[i];
  return out;
}

geometry::TriangleMesh stock_surface(const StockModel& s) {
  if (s.skin_mm == 0.0) return geometry::extract_surface(s.stock);
  const VoxelModel solid = solid_region(s);
  const double skin = s.skin_mm;
  return geometry::extract_surface(s.stock, [&](int i, int j, int k) {
    const auto n = skin_direction(solid, i, j, k);
    return Vec3(skin * n[0], skin * n[1], skin * n[2]);
  });
}

void export_stl(const StockModel& s, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  geometry::write_binary_stl(dir / "stock.stl", stock_surface(s));
  geometry::write_binary_stl(dir / "nominal.stl", geometry::extract_surface(s.nominal));
  if (!s.cavities.empty()) geometry::write_binary_stl(dir / "cavities.stl", geometry::extract_surface(s.cavities));
}

}  // namespace stockopt::stock
