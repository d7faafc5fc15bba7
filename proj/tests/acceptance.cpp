// Acceptance suite: `acceptance` runs every criterion, `acceptance N` runs one.
// Prints one line per criterion and exits non-zero if any of them fails.
#include "oracles.hpp"

#include "stockopt/build_sim.hpp"
#include "stockopt/error.hpp"
#include "stockopt/optimizer.hpp"
#include "stockopt/pipeline.hpp"
#include "stockopt/sparse_grid.hpp"
#include "stockopt/stock.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace stockopt;
using geometry::Vec3;
using geometry::VoxelGrid;
using geometry::VoxelModel;

namespace {

struct Verdict {
  bool pass{true};
  std::vector<std::string> notes;

  void check(bool ok, const std::string& what) {
    if (!ok) pass = false;
    notes.push_back(std::string(ok ? "" : "!") + what);
  }
};

std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(4);
  ss << v;
  return ss.str();
}

double linf(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double rel(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]).squaredNorm();
    den += b[i].squaredNorm();
  }
  return den == 0.0 ? std::sqrt(num) : std::sqrt(num / den);
}

VoxelModel block(int nx, int ny, int nz, double h) {
  VoxelGrid g;
  g.h = h;
  g.dims = {nx + 2, ny + 2, nz + 2};
  VoxelModel v(g);
  for (int k = 1; k <= nz; ++k)
    for (int j = 1; j <= ny; ++j)
      for (int i = 1; i <= nx; ++i) v.set(i, j, k, true);
  return v;
}

// ---------------------------------------------------------------- 1

void sample_counts(Verdict& v) {
  const std::uint64_t table[3][5] = {{1, 3, 7, 15, 31}, {1, 5, 17, 49, 129}, {1, 7, 31, 111, 351}};
  int matched = 0;
  for (int N = 1; N <= 3; ++N)
    for (int w = 1; w <= 5; ++w) matched += sg::count_points(N, w) == table[N - 1][w - 1];
  v.check(matched == 15, std::to_string(matched) + "/15 counts");
}

// ---------------------------------------------------------------- 2

void surrogate(Verdict& v) {
  const double pi = std::acos(-1.0);
  auto f = [&](double x, double y) { return std::sin(pi * x) * std::sin(pi * y); };
  const Box unit({0.0, 0.0}, {1.0, 1.0});

  double node_err = 0.0;
  for (int w = 2; w <= 6; ++w) {
    std::vector<double> vals;
    const auto pts = sg::enumerate_points(2, w);
    for (const auto& p : pts) vals.push_back(f(p.coordinate(0), p.coordinate(1)) + 2.0);
    const sg::SparseGridSurrogate s(unit, w, vals, vals);
    for (std::size_t i = 0; i < pts.size(); ++i)
      node_err = std::max(node_err, std::abs(s.evaluate(pts[i].coordinates(), sg::Target::Objective) - vals[i]) /
                                        std::abs(vals[i]));
  }
  v.check(node_err <= 1e-12, "node error " + fmt(node_err));

  std::mt19937 rng(2);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  double const_err = 0.0;
  const Box box({-1.0, 0.0, 3.0}, {1.0, 0.5, 9.0});
  const std::vector<double> c(sg::count_points(3, 4), 7.125);
  const sg::SparseGridSurrogate cs(box, 4, c, c);
  for (int t = 0; t < 1000; ++t) {
    const std::vector<double> u{U(rng), U(rng), U(rng)};
    const_err = std::max(const_err, std::abs(cs.evaluate(box.from_unit(u), sg::Target::Objective) - 7.125));
  }
  v.check(const_err <= 1e-12, "constant error " + fmt(const_err));

  std::vector<std::array<double, 2>> probe(1000);
  std::mt19937 prng(99);
  for (auto& p : probe) p = {U(prng), U(prng)};
  std::string seq;
  double prev = std::numeric_limits<double>::infinity();
  bool decreasing = true;
  for (int w = 2; w <= 6; ++w) {
    std::vector<double> vals;
    for (const auto& p : sg::enumerate_points(2, w)) vals.push_back(f(p.coordinate(0), p.coordinate(1)));
    const sg::SparseGridSurrogate s(unit, w, vals, vals);
    double e = 0.0;
    for (const auto& p : probe) e = std::max(e, std::abs(s.evaluate(p, sg::Target::Objective) - f(p[0], p[1])));
    decreasing = decreasing && e < prev;
    prev = e;
    seq += (seq.empty() ? "" : ",") + fmt(e);
  }
  v.check(decreasing, "sin*sin max error w=2..6: " + seq);
}

// ---------------------------------------------------------------- 3

void optimizer_oracle(Verdict& v) {
  opt::ConstrainedProblem p;
  p.F = [](std::span<const double> x) { return x[0] * x[0] + x[1] * x[1] + x[2] * x[2]; };
  p.G = [](std::span<const double> x) { return 0.5 - x[0]; };
  p.box = Box({0, 0, 0}, {1, 1, 1});

  // brute force: p1 at 1e-3, the others at 1e-2
  std::vector<double> ref;
  double fb = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= 1000; ++i)
    for (int j = 0; j <= 100; ++j)
      for (int k = 0; k <= 100; ++k) {
        const std::vector<double> x{i * 1e-3, j * 1e-2, k * 1e-2};
        if (p.G(x) > 0.0) continue;
        if (const double fx = p.F(x); fx < fb) {
          fb = fx;
          ref = x;
        }
      }

  opt::SolverOptions o;
  o.seed = 1;
  const auto out = opt::solve_constrained(p, o);
  std::map<std::string, double> best;
  for (const auto& r : out.per_run) {
    if (r.skipped) continue;
    const double e = linf(r.x, ref);
    auto it = best.find(r.name());
    if (it == best.end() || e < it->second) best[r.name()] = e;
  }
  v.check(best.size() == 6, std::to_string(best.size()) + " variants ran");
  double worst = 0.0;
  for (const auto& [name, e] : best) {
    worst = std::max(worst, e);
    if (e > 1e-3) v.check(false, name + " off by " + fmt(e));
  }
  v.check(worst <= 1e-3, "worst variant error " + fmt(worst));
  v.check(out.feasible && p.G(out.best) <= 0.0, "winner " + out.method + " feasible");
  v.check(linf(out.best, ref) <= 1e-3, "winner error " + fmt(linf(out.best, ref)));
}

// ---------------------------------------------------------------- 4

void fem(Verdict& v) {
  sim::MaterialParams mat;

  {
    const auto m = sim::build_fem_model(block(3, 3, 4, 0.5));
    sim::BuildConfig c;
    c.inherent_strain = 0.0;
    c.layers_per_activation = 1;
    const double u = sim::simulate_build(m, mat, c).max_displacement();
    v.check(u <= 1e-12, "null test |u| " + fmt(u));
  }
  {
    const auto m = sim::build_fem_model(block(2, 2, 2, 0.5));
    sim::BuildConfig c;
    c.inherent_strain = 1e-3;
    const auto w = sim::simulate_build(m, mat, c);
    const double e = rel(w.displacement, oracle::dense_solve(m, mat, 1e-3));
    v.check(e <= 1e-8, "dense solve " + fmt(e));
  }
  {
    std::mt19937 rng(4);
    std::uniform_real_distribution<double> U(-1e-3, 1e-3);
    const auto x = sim::cube_nodes(Vec3::Zero(), 0.5);
    const auto K = sim::element_stiffness(mat, x);
    Eigen::VectorXd u(24);
    for (int i = 0; i < 24; ++i) u[i] = U(rng);
    const double step = 1e-4;
    Eigen::MatrixXd H(24, 24);
    for (int i = 0; i < 24; ++i)
      for (int j = 0; j < 24; ++j) {
        auto e = [&](double a, double b) {
          Eigen::VectorXd w = u;
          w[i] += a * step;
          w[j] += b * step;
          return oracle::strain_energy(mat, x, w);
        };
        H(i, j) = (e(1, 1) - e(1, -1) - e(-1, 1) + e(-1, -1)) / (4 * step * step);
      }
    const double e = (H - K).norm() / K.norm();
    v.check(e <= 1e-5, "stiffness vs energy FD " + fmt(e));
  }
  const auto column = sim::build_fem_model(block(2, 2, 8, 0.5));
  {
    sim::BuildConfig a, b;
    a.layers_per_activation = b.layers_per_activation = 2;
    a.inherent_strain = 1e-3;
    b.inherent_strain = 4e-3;
    a.cg_rel_tol = b.cg_rel_tol = 1e-13;
    const auto wa = sim::simulate_build(column, mat, a), wb = sim::simulate_build(column, mat, b);
    std::vector<Vec3> scaled;
    for (const auto& u : wa.displacement) scaled.push_back(4.0 * u);
    const double e = rel(scaled, wb.displacement);
    v.check(e <= 1e-10, "linearity " + fmt(e));
  }
  {
    sim::BuildConfig k1, k10;
    k1.layers_per_activation = 1;
    k10.layers_per_activation = 10;
    const auto w1 = sim::simulate_build(column, mat, k1), w10 = sim::simulate_build(column, mat, k10);
    std::vector<Vec3> t1, t10;
    for (std::size_t n = 0; n < column.node_count(); ++n)
      if (column.node_corner[n][2] == column.base_k + column.layer_count) {
        t1.push_back(w1.displacement[n]);
        t10.push_back(w10.displacement[n]);
      }
    const double e = rel(t1, t10);
    v.check(e <= 0.2, "K=1 vs K=10 top surface " + fmt(e));
  }
}

// ---------------------------------------------------------------- 5

void geometry_props(Verdict& v) {
  std::mt19937 rng(17);
  int grids = 0, bad = 0;
  for (int nx = 1; nx <= 10; ++nx)
    for (int ny = 1; ny <= 10; ny += 3)
      for (int nz = 1; nz <= 10; nz += 3)
        for (int r = 0; r <= 2; ++r) {
          const auto vox = oracle::random_voxels(rng, nx, ny, nz, 0.2, 1);
          const auto d = stock::dilate_cells(vox, r);
          const auto off = vox.grid.offset_from(d.grid);
          for (int k = 0; k < d.grid.dims[2]; ++k)
            for (int j = 0; j < d.grid.dims[1]; ++j)
              for (int i = 0; i < d.grid.dims[0]; ++i)
                bad += d.at(i, j, k) != oracle::chebyshev_ball_hit(vox, i - off[0], j - off[1], k - off[2], r);
          ++grids;
        }
  v.check(bad == 0, "dilation mismatches " + std::to_string(bad) + " over " + std::to_string(grids) + " grids");

  int cavity_voxels = 0, thin = 0;
  for (int t = 0; t < 20; ++t) {
    const auto vox = oracle::random_voxels(rng, 10, 10, 10, 0.95, 1);
    for (double wall : {0.0, 1.0, 2.0}) {
      const auto c = stock::generate_cavities(vox, 3.0 + t % 3, wall, 0.8);
      const int k = stock::cells_for(wall, vox.grid.h);
      for (int z = 0; z < c.grid.dims[2]; ++z)
        for (int y = 0; y < c.grid.dims[1]; ++y)
          for (int x = 0; x < c.grid.dims[0]; ++x)
            if (c.at(x, y, z)) {
              ++cavity_voxels;
              thin += oracle::chebyshev_depth(vox, x, y, z) <= k;
            }
    }
  }
  v.check(thin == 0 && cavity_voxels > 0,
          "wall violations " + std::to_string(thin) + " of " + std::to_string(cavity_voxels) + " cavity voxels");

  const auto part = geometry::voxelize(geometry::make_box_mesh(Vec3::Zero(), Vec3(10, 6, 4)), 0.25);
  double prev = -1.0;
  bool mono = true;
  std::string seq;
  for (double wall = 0.4; wall <= 0.9 + 1e-9; wall += 0.1) {
    const double f = stock::remaining_material_fraction(stock::assemble_stock(part, {0.0, 20.0, wall}, 0.8));
    mono = mono && f >= prev;
    prev = f;
    seq += (seq.empty() ? "" : ",") + fmt(f);
  }
  v.check(mono, "remaining material vs wall 0.4..0.9: " + seq);
}

// ---------------------------------------------------------------- 6, 7, 8

pipeline::PipelineConfig desk_config(const std::string& box, bool zero_strain) {
  std::string text = "[geometry]\nbox = " + box +
                     "\nvoxel_size = 0.5\n[parameters]\noffset = [0.0, 0.1]\ngrid_resolution = [17.0, 24.0]\n"
                     "wall_thickness = [0.4, 0.9]\n[sparse_grid]\nw_min = 2\nw_max = 4\n[optimizer]\nseed = 1\n";
  if (zero_strain) text += "[build]\ninherent_strain = 0.0\n";
  return pipeline::parse_config(text);
}

void zero_distortion(Verdict& v) {
  pipeline::Pipeline pl(desk_config("[4.0, 4.0, 4.0]", true));
  const auto rep = pl.run();
  const double off = rep.optimum[0];
  const double tol = pl.config().voxel_size + 1e-4;
  v.check(rep.feasible, "feasible");
  v.check(std::abs(off - pl.config().tolerance) <= tol, "optimal offset " + fmt(off) + " vs tau 0.04");
}

void desk_run(Verdict& v) {
  const auto t0 = std::chrono::steady_clock::now();
  pipeline::Pipeline pl(desk_config("[10.0, 6.0, 4.0]", false));
  const auto rep = pl.run();
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  v.check(secs < 600.0, "runtime " + fmt(secs) + " s");
  const auto& last = rep.levels.back();
  v.check(last.w == 4 || rep.stopped_early, "levels up to w=" + std::to_string(last.w));
  v.check(last.change.has_value(), "|p*_w - p*_(w-1)|inf = " + (last.change ? fmt(*last.change) : std::string("n/a")));
  const double dt = *rep.truth->delta_thickness;
  v.check(dt >= pl.config().tolerance - 0.01, "truth thickness at p* " + fmt(dt));
  v.check(rep.optimum[0] > pl.config().tolerance, "optimal offset " + fmt(rep.optimum[0]));
}

void determinism(Verdict& v) {
  const auto cfg = desk_config("[4.0, 3.0, 2.0]", false);
  std::string first;
  {
    pipeline::Pipeline a(cfg), b(cfg);
    first = pipeline::emit_report(a.run(), pipeline::ReportFormat::Json);
    v.check(first == pipeline::emit_report(b.run(), pipeline::ReportFormat::Json), "byte-identical reports");
  }
  const auto dir = std::filesystem::temp_directory_path() / "stockopt_acceptance_cache";
  std::filesystem::remove_all(dir);
  auto cached = cfg;
  cached.cache_dir = dir;
  for (int w = 3; w <= 4; ++w) {
    pipeline::Pipeline warm(cached);
    warm.run_level(w - 1);
    pipeline::Pipeline rerun(cached);
    const auto [lr, s] = rerun.run_level(w);
    const auto need = sg::count_points(3, w - 1);
    v.check(lr.cache_hits >= need,
            "w=" + std::to_string(w) + " cache hits " + std::to_string(lr.cache_hits) + " >= " + std::to_string(need));
  }
  std::filesystem::remove_all(dir);
}

struct Criterion {
  int id;
  const char* title;
  std::function<void(Verdict&)> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "sample counts", sample_counts},
      {2, "surrogate correctness", surrogate},
      {3, "optimizer oracle equivalence", optimizer_oracle},
      {4, "FEM verification", fem},
      {5, "geometry properties", geometry_props},
      {6, "zero-distortion sanity", zero_distortion},
      {7, "desk-scale full run", desk_run},
      {8, "determinism and caching", determinism},
  };
  int only = 0;
  if (argc > 1) only = std::atoi(argv[1]);
  if (argc > 2 || only < 0 || only > 8) {
    std::cerr << "usage: acceptance [1-8]\n";
    return 2;
  }
  int failed = 0;
  for (const auto& c : all) {
    if (only && c.id != only) continue;
    Verdict v;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      c.run(v);
    } catch (const std::exception& e) {
      v.check(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::string detail;
    for (const auto& n : v.notes) detail += (detail.empty() ? "" : "; ") + n;
    std::cout << "criterion " << c.id << ": " << (v.pass ? "PASS" : "FAIL") << " [" << c.title << ", " << fmt(secs)
              << " s] " << detail << std::endl;
    failed += !v.pass;
  }
  return failed ? 1 : 0;
}
