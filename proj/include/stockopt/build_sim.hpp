#pragma once

#include "stockopt/geometry.hpp"
#include "stockopt/stock.hpp"

#include <Eigen/Core>

#include <array>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

namespace stockopt::sim {

using geometry::Vec3;
using Matrix24 = Eigen::Matrix<double, 24, 24>;
using Vector24 = Eigen::Matrix<double, 24, 1>;
using Matrix6 = Eigen::Matrix<double, 6, 6>;

/// Isotropic material in mm / MPa units. Defaults are Ti-6Al-4V.
struct MaterialParams {
  double young_modulus{1.18e5};  // MPa
  double poisson_ratio{0.33};
  double thermal_expansion{9e-6};  // 1/K
  double deposition_temperature{700.0};  // degC
  double reference_temperature{20.0};  // degC
  double density{4420.0};  // kg/m^3
  double elastic_limit{954.0};  // MPa
  double ultimate_stress{1110.0};  // MPa

  /// alpha * (T_dep - T_ref)
  double default_inherent_strain() const {
    return thermal_expansion * (deposition_temperature - reference_temperature);
  }
  /// Throws std::invalid_argument when E <= 0, nu outside (0, 0.5) or alpha <= 0.
  void validate() const;
};

struct BuildConfig {
  int layers_per_activation{10};
  std::optional<double> inherent_strain;  ///< defaults to the material's alpha * dT
  double support_spring{0.0};  ///< MPa*mm per supported node and direction; 0 disables
  double cg_rel_tol{1e-8};
  int cg_max_iter{0};  ///< 0 means 10 * (number of unknowns)

  double strain(const MaterialParams& m) const {
    return inherent_strain.value_or(m.default_inherent_strain());
  }
  void validate() const;
};

/// Hexahedron corners in the order (0,0,0) (1,0,0) (1,1,0) (0,1,0) (0,0,1) (1,0,1)
/// (1,1,1) (0,1,1), which is also the VTK_HEXAHEDRON order.
using HexNodes = std::array<Vec3, 8>;

Matrix6 elasticity_matrix(const MaterialParams& mat);

/// Trilinear hexahedron stiffness, 2x2x2 Gauss. Throws InvertedElement for a
/// non-positive Jacobian.
Matrix24 element_stiffness(const MaterialParams& mat, const HexNodes& x);
/// Axis-aligned cube of side h.
Matrix24 element_stiffness(const MaterialParams& mat, double h);

/// Equivalent nodal forces of the isotropic inherent strain -s * I.
Vector24 eigenstrain_load(const MaterialParams& mat, const HexNodes& x, double s);
Vector24 eigenstrain_load(const MaterialParams& mat, double h, double s);

HexNodes cube_nodes(const Vec3& lo, double h);

/// Hexahedral model of a voxel set: one element per occupied cell, one node per
/// touched lattice corner, layers are the occupied z slabs counted from the bottom.
struct FemModel {
  geometry::VoxelGrid grid;
  std::vector<Vec3> nodes;                     ///< reference positions (mm)
  std::vector<std::array<int, 3>> node_corner; ///< lattice corner of each node
  std::vector<std::array<int, 8>> elements;
  std::vector<std::array<int, 3>> element_cell;
  std::vector<int> element_layer;
  std::vector<std::uint8_t> element_regular;   ///< undistorted cube of side h
  std::vector<int> clamped;                    ///< nodes on the build plate, sorted
  std::vector<int> supported;                  ///< nodes that receive support springs
  int layer_count{0};
  int base_k{0};                               ///< lattice z index of the build plate

  std::size_t node_count() const { return nodes.size(); }
  std::size_t element_count() const { return elements.size(); }
};

/// Throws EmptyStock for an empty voxel set.
FemModel build_fem_model(const geometry::VoxelModel& cells);
/// Stock elements; exterior nodes are moved by the sub-voxel skin.
FemModel build_fem_model(const stock::StockModel& s);

struct WarpResult {
  std::vector<Vec3> displacement;  ///< per node, mm
  int steps{0};
  std::vector<double> residuals;   ///< ||K du - f|| / ||f|| per step (0 when f = 0)
  std::vector<int> iterations;     ///< CG iterations per step

  double max_displacement() const;
};

/// Called after each activation step with the active-element mask and the
/// accumulated displacement so far.
using StepObserver =
    std::function<void(int step, const FemModel&, const std::vector<std::uint8_t>& active, const WarpResult&)>;

/// Layer-by-layer inherent-strain build: packs of K layers are activated bottom-up,
/// each step solves K_active du = f_new with Jacobi-preconditioned CG and accumulates
/// du. Nodes appearing for the first time start at the nominal footprint, lowered by
/// the mean settlement of the surface the new pack is deposited on.
/// Throws SingularSystem or SolverDiverged.
WarpResult simulate_build(const FemModel& model, const MaterialParams& mat, const BuildConfig& cfg,
                          const StepObserver& observer = {});

/// Deformed volume, six tetrahedra per element. Throws InvertedElement.
double warped_volume(const FemModel& model, const WarpResult& w);

/// Deformed positions of exterior stock nodes. Nodes on cavity walls are never
/// returned; build-plate nodes are skipped when exclude_base is set.
std::vector<Vec3> warped_surface(const stock::StockModel& s, const FemModel& model, const WarpResult& w,
                                 bool exclude_base = true);

/// Legacy ASCII VTK unstructured grid of the active elements with a displacement field.
void write_vtk(const std::filesystem::path& path, const FemModel& model, const std::vector<std::uint8_t>& active,
               const std::vector<Vec3>& displacement);

}  // namespace stockopt::sim
