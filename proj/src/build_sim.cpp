#include "stockopt/build_sim.hpp"

#include "stockopt/error.hpp"

#include <Eigen/Dense>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace stockopt::sim {

namespace {

constexpr std::array<std::array<int, 3>, 8> kCorner{{
    {0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}, {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}}};

using Matrix6x24 = Eigen::Matrix<double, 6, 24>;


Eigen::Matrix<double, 8, 3> shape_derivatives(double xi, double eta, double zeta) {
  Eigen::Matrix<double, 8, 3> d;
  for (int a = 0; a < 8; ++a) {
    const double sa = 2.0 * kCorner[a][0] - 1.0;
    const double ta = 2.0 * kCorner[a][1] - 1.0;
    const double ua = 2.0 * kCorner[a][2] - 1.0;
    d(a, 0) = 0.125 * sa * (1 + ta * eta) * (1 + ua * zeta);
    d(a, 1) = 0.125 * ta * (1 + sa * xi) * (1 + ua * zeta);
    d(a, 2) = 0.125 * ua * (1 + sa * xi) * (1 + ta * eta);
  }
  return d;
}

// Strain-displacement matrix and Jacobian determinant at one natural point.
std::pair<Matrix6x24, double> strain_matrix(const HexNodes& x, double xi, double eta, double zeta) {
  const auto dN = shape_derivatives(xi, eta, zeta);
  Eigen::Matrix3d J = Eigen::Matrix3d::Zero();
  for (int a = 0; a < 8; ++a) J += x[a] * dN.row(a);
  const double det = J.determinant();
  if (!(det > 0.0)) throw InvertedElement("hexahedron with non-positive Jacobian");
  const Eigen::Matrix<double, 8, 3> dNdx = dN * J.inverse();
  Matrix6x24 B = Matrix6x24::Zero();
  for (int a = 0; a < 8; ++a) {
    const double nx = dNdx(a, 0), ny = dNdx(a, 1), nz = dNdx(a, 2);
    const int c = 3 * a;
    B(0, c) = nx;
    B(1, c + 1) = ny;
    B(2, c + 2) = nz;
    B(3, c + 1) = nz;
    B(3, c + 2) = ny;
    B(4, c) = nz;
    B(4, c + 2) = nx;
    B(5, c) = ny;
    B(5, c + 1) = nx;
  }
  return {B, det};
}

const std::array<double, 2>& gauss2() {
  static const std::array<double, 2> g{-1.0 / std::sqrt(3.0), 1.0 / std::sqrt(3.0)};
  return g;
}

// Six positively oriented tetrahedra sharing the 0-6 diagonal.
constexpr std::array<std::array<int, 4>, 6> kTets{{
    {0, 1, 2, 6}, {0, 2, 3, 6}, {0, 3, 7, 6}, {0, 7, 4, 6}, {0, 4, 5, 6}, {0, 5, 1, 6}}};

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

}  // namespace

void MaterialParams::validate() const {
  if (!(young_modulus > 0.0)) throw std::invalid_argument("young_modulus must be positive");
  if (!(poisson_ratio > 0.0 && poisson_ratio < 0.5)) throw std::invalid_argument("poisson_ratio must lie in (0, 0.5)");
  if (!(thermal_expansion > 0.0)) throw std::invalid_argument("thermal_expansion must be positive");
}

void BuildConfig::validate() const {
  if (layers_per_activation < 1) throw std::invalid_argument("layers_per_activation must be >= 1");
  if (inherent_strain && *inherent_strain < 0.0) throw std::invalid_argument("inherent_strain must be >= 0");
  if (support_spring < 0.0) throw std::invalid_argument("support_spring must be >= 0");
  if (!(cg_rel_tol > 0.0)) throw std::invalid_argument("cg_rel_tol must be positive");
  if (cg_max_iter < 0) throw std::invalid_argument("cg_max_iter must be >= 0");
}

Matrix6 elasticity_matrix(const MaterialParams& mat) {
  const double E = mat.young_modulus, nu = mat.poisson_ratio;
  const double lambda = E * nu / ((1 + nu) * (1 - 2 * nu));
  const double mu = E / (2 * (1 + nu));
  Matrix6 D = Matrix6::Zero();
  D.topLeftCorner<3, 3>().setConstant(lambda);
  for (int i = 0; i < 3; ++i) D(i, i) = lambda + 2 * mu;
  for (int i = 3; i < 6; ++i) D(i, i) = mu;
  return D;
}

HexNodes cube_nodes(const Vec3& lo, double h) {
  HexNodes x;
  for (int a = 0; a < 8; ++a) x[a] = lo + h * Vec3(kCorner[a][0], kCorner[a][1], kCorner[a][2]);
  return x;
}

Matrix24 element_stiffness(const MaterialParams& mat, const HexNodes& x) {
  const Matrix6 D = elasticity_matrix(mat);
  Matrix24 K = Matrix24::Zero();
  for (double xi : gauss2())
    for (double eta : gauss2())
      for (double zeta : gauss2()) {
        const auto [B, det] = strain_matrix(x, xi, eta, zeta);
        K.noalias() += B.transpose() * D * B * det;
      }
  return 0.5 * (K + K.transpose());
}

Matrix24 element_stiffness(const MaterialParams& mat, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("element_stiffness: h must be positive");
  return element_stiffness(mat, cube_nodes(Vec3::Zero(), h));
}

Vector24 eigenstrain_load(const MaterialParams& mat, const HexNodes& x, double s) {
  if (s < 0.0) throw std::invalid_argument("eigenstrain_load: negative strain");
  Eigen::Matrix<double, 6, 1> eps;
  eps << -s, -s, -s, 0, 0, 0;
  const Eigen::Matrix<double, 6, 1> sigma = elasticity_matrix(mat) * eps;
  Vector24 f = Vector24::Zero();
  if (s == 0.0) return f;
  for (double xi : gauss2())
    for (double eta : gauss2())
      for (double zeta : gauss2()) {
        const auto [B, det] = strain_matrix(x, xi, eta, zeta);
        f.noalias() += B.transpose() * sigma * det;
      }
  return f;
}

Vector24 eigenstrain_load(const MaterialParams& mat, double h, double s) {
  if (!(h > 0.0)) throw std::invalid_argument("eigenstrain_load: h must be positive");
  return eigenstrain_load(mat, cube_nodes(Vec3::Zero(), h), s);
}

// --------------------------------------------------------------------------

namespace {

FemModel build_model(const geometry::VoxelModel& cells, const geometry::VoxelModel* solid, double skin) {
  if (cells.empty()) throw EmptyStock("no elements to simulate");
  const auto& g = cells.grid;
  const geometry::VoxelModel& outer = solid ? *solid : cells;

  FemModel m;
  m.grid = g;
  const std::int64_t cx = g.dims[0] + 1, cy = g.dims[1] + 1, cz = g.dims[2] + 1;
  std::vector<int> corner_node(static_cast<std::size_t>(cx * cy * cz), -1);

  std::vector<int> slab_used(g.dims[2], 0);
  for (int k = 0; k < g.dims[2]; ++k)
    for (int j = 0; j < g.dims[1]; ++j)
      for (int i = 0; i < g.dims[0]; ++i)
        if (cells.at(i, j, k)) slab_used[k] = 1;
  std::vector<int> layer_of_slab(g.dims[2], -1);
  int layers = 0;
  for (int k = 0; k < g.dims[2]; ++k)
    if (slab_used[k]) layer_of_slab[k] = layers++;
  m.layer_count = layers;
  m.base_k = static_cast<int>(std::find(slab_used.begin(), slab_used.end(), 1) - slab_used.begin());

  auto node_at = [&](int i, int j, int k) {
    const auto id = static_cast<std::size_t>(i + cx * (j + cy * std::int64_t{k}));
    if (corner_node[id] >= 0) return corner_node[id];
    const int n = static_cast<int>(m.nodes.size());
    corner_node[id] = n;
    Vec3 p = g.corner(i, j, k);
    if (skin != 0.0) {
      const auto d = stock::skin_direction(outer, i, j, k);
      p += skin * Vec3(d[0], d[1], d[2]);
    }
    m.nodes.push_back(p);
    m.node_corner.push_back({i, j, k});
    return n;
  };

  for (int k = 0; k < g.dims[2]; ++k)
    for (int j = 0; j < g.dims[1]; ++j)
      for (int i = 0; i < g.dims[0]; ++i) {
        if (!cells.at(i, j, k)) continue;
        std::array<int, 8> e{};
        bool regular = true;
        for (int a = 0; a < 8; ++a) {
          const int ci = i + kCorner[a][0], cj = j + kCorner[a][1], ck = k + kCorner[a][2];
          e[a] = node_at(ci, cj, ck);
          regular = regular && m.nodes[e[a]] == g.corner(ci, cj, ck);
        }
        m.elements.push_back(e);
        m.element_cell.push_back({i, j, k});
        m.element_layer.push_back(layer_of_slab[k]);
        m.element_regular.push_back(regular ? 1 : 0);
      }

  std::vector<std::uint8_t> supported(m.nodes.size(), 0);
  for (std::size_t e = 0; e < m.elements.size(); ++e) {
    const auto [i, j, k] = m.element_cell[e];
    if (k > m.base_k && !outer.at(i, j, k - 1)) {
      for (int a = 0; a < 4; ++a) supported[m.elements[e][a]] = 1;
    }
  }
  for (int n = 0; n < static_cast<int>(m.nodes.size()); ++n) {
    if (m.node_corner[n][2] == m.base_k) m.clamped.push_back(n);
    if (supported[n]) m.supported.push_back(n);
  }
  return m;
}

}  // namespace

FemModel build_fem_model(const geometry::VoxelModel& cells) { return build_model(cells, nullptr, 0.0); }

FemModel build_fem_model(const stock::StockModel& s) {
  if (s.skin_mm == 0.0) return build_model(s.stock, nullptr, 0.0);
  const auto solid = stock::solid_region(s);
  return build_model(s.stock, &solid, s.skin_mm);
}

double WarpResult::max_displacement() const {
  double m = 0.0;
  for (const auto& u : displacement) m = std::max(m, u.cwiseAbs().maxCoeff());
  return m;
}

// --------------------------------------------------------------------------

WarpResult simulate_build(const FemModel& model, const MaterialParams& mat, const BuildConfig& cfg,
                          const StepObserver& observer) {
  mat.validate();
  cfg.validate();
  if (model.elements.empty() || model.layer_count < 1) throw EmptyStock("model has no layers");
  const double s = cfg.strain(mat);
  const double h = model.grid.h;
  const std::size_t ne = model.elements.size();
  const std::size_t nn = model.nodes.size();

  auto element_nodes = [&](std::size_t e) {
    HexNodes x;
    for (int a = 0; a < 8; ++a) x[a] = model.nodes[model.elements[e][a]];
    return x;
  };
  const Matrix24 k_cube = element_stiffness(mat, h);
  const Vector24 f_cube = eigenstrain_load(mat, h, s);
  std::vector<Matrix24> k_irregular;
  std::vector<Vector24> f_irregular;
  std::vector<int> irregular_slot(ne, -1);
  for (std::size_t e = 0; e < ne; ++e) {
    if (model.element_regular[e]) continue;
    irregular_slot[e] = static_cast<int>(k_irregular.size());
    const auto x = element_nodes(e);
    k_irregular.push_back(element_stiffness(mat, x));
    f_irregular.push_back(eigenstrain_load(mat, x, s));
  }
  auto ke = [&](std::size_t e) -> const Matrix24& {
    return irregular_slot[e] < 0 ? k_cube : k_irregular[irregular_slot[e]];
  };
  auto fe = [&](std::size_t e) -> const Vector24& {
    return irregular_slot[e] < 0 ? f_cube : f_irregular[irregular_slot[e]];
  };

  std::vector<std::uint8_t> is_clamped(nn, 0);
  for (int n : model.clamped) is_clamped[n] = 1;
  const bool springs = cfg.support_spring > 0.0;
  std::vector<std::uint8_t> is_supported(nn, 0);
  if (springs)
    for (int n : model.supported) is_supported[n] = 1;

  // Face neighbours for the rigid-connection check.
  const auto& g = model.grid;
  std::vector<int> element_at(g.cell_count(), -1);
  for (std::size_t e = 0; e < ne; ++e) {
    const auto& c = model.element_cell[e];
    element_at[g.index(c[0], c[1], c[2])] = static_cast<int>(e);
  }
  std::vector<std::uint8_t> grounded_element(ne, 0);
  for (std::size_t e = 0; e < ne; ++e) {
    if (model.element_layer[e] == 0) grounded_element[e] = 1;
    if (springs) {
      bool all = true;
      for (int a = 0; a < 4; ++a) all = all && is_supported[model.elements[e][a]];
      if (all) grounded_element[e] = 1;
    }
  }

  WarpResult result;
  result.displacement.assign(nn, Vec3::Zero());
  std::vector<std::uint8_t> active(ne, 0), node_active(nn, 0);
  const int K = cfg.layers_per_activation;

  for (int first = 0, step = 0; first < model.layer_count; first += K, ++step) {
    const int last = std::min(model.layer_count, first + K);  // exclusive
    std::vector<std::size_t> fresh;
    for (int layer = first; layer < last; ++layer)
      for (std::size_t e = 0; e < ne; ++e)
        if (model.element_layer[e] == layer) fresh.push_back(e);

    // New material is laid level on the settled surface it is deposited on.
    double level = 0.0;
    int touching = 0;
    for (std::size_t e : fresh)
      for (int n : model.elements[e])
        if (node_active[n]) {
          level += result.displacement[n].z();
          ++touching;
        }
    if (touching > 0) level /= touching;
    for (std::size_t e : fresh) {
      active[e] = 1;
      for (int n : model.elements[e]) {
        if (node_active[n]) continue;
        result.displacement[n] = is_clamped[n] ? Vec3::Zero() : Vec3(0.0, 0.0, level);
        node_active[n] = 1;
      }
    }

    // Every face-connected component of the active part must be held.
    UnionFind uf(ne);
    for (std::size_t e = 0; e < ne; ++e) {
      if (!active[e]) continue;
      const auto& c = model.element_cell[e];
      const std::array<std::array<int, 3>, 3> nb{{{c[0] + 1, c[1], c[2]}, {c[0], c[1] + 1, c[2]}, {c[0], c[1], c[2] + 1}}};
      for (const auto& q : nb) {
        if (!g.contains(q[0], q[1], q[2])) continue;
        const int o = element_at[g.index(q[0], q[1], q[2])];
        if (o >= 0 && active[o]) uf.unite(static_cast<int>(e), o);
      }
    }
    std::vector<std::uint8_t> root_grounded(ne, 0);
    for (std::size_t e = 0; e < ne; ++e)
      if (active[e] && grounded_element[e]) root_grounded[uf.find(static_cast<int>(e))] = 1;
    for (std::size_t e = 0; e < ne; ++e) {
      if (active[e] && !root_grounded[uf.find(static_cast<int>(e))]) {
        const auto& c = model.element_cell[e];
        throw SingularSystem("activation step " + std::to_string(step) + ": element at cell (" +
                             std::to_string(c[0]) + ", " + std::to_string(c[1]) + ", " + std::to_string(c[2]) +
                             ") is not connected to the build plate");
      }
    }

    std::vector<int> dof_of(nn, -1);
    int ndof = 0;
    for (std::size_t n = 0; n < nn; ++n)
      if (node_active[n] && !is_clamped[n]) dof_of[n] = 3 * (ndof++);
    ndof *= 3;

    Eigen::VectorXd f = Eigen::VectorXd::Zero(ndof);
    for (std::size_t e : fresh) {
      const auto& fv = fe(e);
      for (int a = 0; a < 8; ++a) {
        const int d = dof_of[model.elements[e][a]];
        if (d < 0) continue;
        for (int c = 0; c < 3; ++c) f[d + c] += fv[3 * a + c];
      }
    }

    Eigen::VectorXd du = Eigen::VectorXd::Zero(ndof);
    double residual = 0.0;
    int iterations = 0;
    const double fnorm = f.norm();
    if (ndof > 0 && fnorm > 0.0) {
      std::vector<Eigen::Triplet<double>> trip;
      trip.reserve(576 * ne);
      for (std::size_t e = 0; e < ne; ++e) {
        if (!active[e]) continue;
        const auto& km = ke(e);
        const auto& en = model.elements[e];
        for (int a = 0; a < 8; ++a) {
          const int da = dof_of[en[a]];
          if (da < 0) continue;
          for (int b = 0; b < 8; ++b) {
            const int db = dof_of[en[b]];
            if (db < 0) continue;
            for (int r = 0; r < 3; ++r)
              for (int c = 0; c < 3; ++c) trip.emplace_back(da + r, db + c, km(3 * a + r, 3 * b + c));
          }
        }
      }
      if (springs) {
        for (std::size_t n = 0; n < nn; ++n)
          if (dof_of[n] >= 0 && is_supported[n])
            for (int c = 0; c < 3; ++c) trip.emplace_back(dof_of[n] + c, dof_of[n] + c, cfg.support_spring);
      }
      Eigen::SparseMatrix<double> A(ndof, ndof);
      A.setFromTriplets(trip.begin(), trip.end());

      Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper,
                               Eigen::DiagonalPreconditioner<double>>
          cg;
      const int max_iter = cfg.cg_max_iter > 0 ? cfg.cg_max_iter : 10 * ndof;
      cg.setTolerance(cfg.cg_rel_tol);
      cg.setMaxIterations(max_iter);
      cg.compute(A);
      du = cg.solve(f);
      iterations = static_cast<int>(cg.iterations());
      residual = (A * du - f).norm() / fnorm;
      // The recurrence residual can drift slightly from the true one; polish if needed.
      for (int polish = 0; polish < 3 && residual > cfg.cg_rel_tol && cg.info() == Eigen::Success; ++polish) {
        du = cg.solveWithGuess(f, du);
        iterations += static_cast<int>(cg.iterations());
        residual = (A * du - f).norm() / fnorm;
      }
      if (cg.info() != Eigen::Success || residual > cfg.cg_rel_tol) {
        throw SolverDiverged(step, "activation step " + std::to_string(step) + ": CG did not reach relative residual " +
                                       std::to_string(cfg.cg_rel_tol) + " within " + std::to_string(max_iter) +
                                       " iterations (residual " + std::to_string(residual) + ")");
      }
    }

    for (std::size_t n = 0; n < nn; ++n) {
      const int d = dof_of[n];
      if (d >= 0) result.displacement[n] += Vec3(du[d], du[d + 1], du[d + 2]);
    }
    result.residuals.push_back(residual);
    result.iterations.push_back(iterations);
    result.steps = step + 1;
    if (observer) observer(step, model, active, result);
  }
  return result;
}

double warped_volume(const FemModel& model, const WarpResult& w) {
  if (w.displacement.size() != model.nodes.size()) throw std::invalid_argument("warped_volume: size mismatch");
  double total = 0.0;
  for (std::size_t e = 0; e < model.elements.size(); ++e) {
    std::array<Vec3, 8> x;
    for (int a = 0; a < 8; ++a) {
      const int n = model.elements[e][a];
      x[a] = model.nodes[n] + w.displacement[n];
    }
    for (const auto& t : kTets) {
      const Vec3 o = x[t[0]];
      const double v = (x[t[1]] - o).dot((x[t[2]] - o).cross(x[t[3]] - o)) / 6.0;
      if (!(v > 0.0)) {
        const auto& c = model.element_cell[e];
        throw InvertedElement("warped element at cell (" + std::to_string(c[0]) + ", " + std::to_string(c[1]) + ", " +
                              std::to_string(c[2]) + ") has an inverted tetrahedron");
      }
      total += v;
    }
  }
  return total;
}

std::vector<Vec3> warped_surface(const stock::StockModel& s, const FemModel& model, const WarpResult& w,
                                 bool exclude_base) {
  if (w.displacement.size() != model.nodes.size()) throw std::invalid_argument("warped_surface: size mismatch");
  static constexpr std::array<std::array<int, 3>, 6> kNeighbor{{
      {-1, 0, 0}, {1, 0, 0}, {0, -1, 0}, {0, 1, 0}, {0, 0, -1}, {0, 0, 1}}};
  // Local corners of each face, same order as kNeighbor.
  static constexpr std::array<std::array<int, 4>, 6> kFaceCorners{{
      {0, 3, 7, 4}, {1, 2, 6, 5}, {0, 1, 5, 4}, {3, 2, 6, 7}, {0, 1, 2, 3}, {4, 5, 6, 7}}};

  std::vector<std::uint8_t> exterior(model.nodes.size(), 0), cavity_wall(model.nodes.size(), 0);
  for (std::size_t e = 0; e < model.elements.size(); ++e) {
    const auto& c = model.element_cell[e];
    for (int f = 0; f < 6; ++f) {
      const int i = c[0] + kNeighbor[f][0], j = c[1] + kNeighbor[f][1], k = c[2] + kNeighbor[f][2];
      if (s.stock.at(i, j, k)) continue;
      auto& mark = s.cavities.at(i, j, k) ? cavity_wall : exterior;
      for (int a : kFaceCorners[f]) mark[model.elements[e][a]] = 1;
    }
  }
  std::vector<Vec3> cloud;
  for (std::size_t n = 0; n < model.nodes.size(); ++n) {
    if (!exterior[n] || cavity_wall[n]) continue;
    if (exclude_base && model.node_corner[n][2] == model.base_k) continue;
    cloud.push_back(model.nodes[n] + w.displacement[n]);
  }
  return cloud;
}

}  // namespace stockopt::sim
