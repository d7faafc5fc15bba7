#include "stockopt/error.hpp"
#include "stockopt/optimizer.hpp"

#include <doctest.h>

#include <cmath>
#include <set>

using namespace stockopt;
using namespace stockopt::opt;

namespace {

double sq(double x) { return x * x; }

// Brute force over a grid: p1 at 1e-3, the others at 1e-2.
std::vector<double> grid_oracle(const ConstrainedProblem& p) {
  std::vector<double> best;
  double fbest = std::numeric_limits<double>::infinity();
  std::vector<double> x(3);
  for (int i = 0; i <= 1000; ++i)
    for (int j = 0; j <= 100; ++j)
      for (int k = 0; k <= 100; ++k) {
        x = {i * 1e-3, j * 1e-2, k * 1e-2};
        if (p.G(x) > 0) continue;
        const double f = p.F(x);
        if (f < fbest) {
          fbest = f;
          best = x;
        }
      }
  return best;
}

ConstrainedProblem quarter_problem() {
  ConstrainedProblem p;
  p.F = [](std::span<const double> x) { return sq(x[0]) + sq(x[1]) + sq(x[2]); };
  p.G = [](std::span<const double> x) { return 0.5 - x[0]; };
  p.box = Box({0, 0, 0}, {1, 1, 1});
  return p;
}

double linf(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("latin hypercube") {
  CHECK(latin_hypercube(1, 2, 7) == std::vector<std::vector<double>>{{0.5, 0.5}});
  const auto two = latin_hypercube(2, 1, 7);
  CHECK(std::set<double>{two[0][0], two[1][0]} == std::set<double>{0.25, 0.75});
  CHECK(latin_hypercube(13, 4, 5) == latin_hypercube(13, 4, 5));
  CHECK(latin_hypercube(13, 4, 5) != latin_hypercube(13, 4, 6));
  for (int n = 1; n <= 100; n += 11)
    for (int N = 1; N <= 5; ++N) {
      const auto pts = latin_hypercube(n, N, 1234);
      REQUIRE(pts.size() == static_cast<std::size_t>(n));
      for (int d = 0; d < N; ++d) {
        std::vector<int> hits(n, 0);
        for (const auto& p : pts) {
          const double s = p[d] * n - 0.5;
          CHECK(std::abs(s - std::round(s)) <= 1e-9);
          ++hits[static_cast<int>(std::lround(s))];
        }
        CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
      }
    }
}

TEST_CASE("merit values") {
  CHECK(merit_value(MeritKind::SquaredPenalty, 5, 2, 10) == 45.0);
  CHECK(merit_value(MeritKind::SquaredPenalty, 5, -2, 10) == 5.0);
  for (double F : {-1.0, 0.0, 3.5})
    for (double G : {-0.7, 0.0, 0.2, 4.0})
      for (double mu : {0.1, 1.0, 50.0})
        CHECK(merit_value(MeritKind::AugmentedLagrangian, F, G, mu, 0.0) ==
              doctest::Approx(merit_value(MeritKind::SquaredPenalty, F, G, mu / 2)));
  CHECK(merit_value(MeritKind::LogBarrier, 5, -1, 3) == 5.0);
  CHECK(merit_value(MeritKind::LogBarrier, 5, 0.1, 3) == kInfeasible);
  CHECK(merit_value(MeritKind::LogBarrier, 5, 0.0, 3) == kInfeasible);
  // multiplier shifts the penalty
  CHECK(merit_value(MeritKind::AugmentedLagrangian, 0, 0.5, 2, 1) == doctest::Approx(1.0 * (sq(1.0) - sq(0.5))));
  double prev = -1.0;
  for (double mu = 0.01; mu < 1e4; mu *= 3) {
    const double v = merit_value(MeritKind::SquaredPenalty, 1.0, 0.3, mu);
    CHECK(v >= prev);
    prev = v;
  }
  MeritSpec bad;
  bad.mu_growth = 1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("Nelder-Mead") {
  const Box unit({0, 0}, {1, 1});
  const Function bowl = [](std::span<const double> x) { return sq(x[0] - 0.3) + sq(x[1] - 0.7); };
  for (auto start : std::vector<std::vector<double>>{{0, 0}, {1, 1}, {0.9, 0.1}, {0.3, 0.7}}) {
    const auto r = nelder_mead(bowl, unit, start);
    CHECK(linf(r.x, std::vector<double>{0.3, 0.7}) <= 1e-6);
    CHECK(r.converged);
  }
  const Function rosen = [](std::span<const double> x) { return 100 * sq(x[1] - x[0] * x[0]) + sq(1 - x[0]); };
  const auto r = nelder_mead(rosen, Box({-2, -2}, {2, 2}), std::vector<double>{0, 0});
  CHECK(linf(r.x, std::vector<double>{1, 1}) <= 1e-4);

  const Function p1 = [](std::span<const double> x) { return x[0]; };
  const auto b = nelder_mead(p1, Box({0, 0, 0}, {1, 1, 1}), std::vector<double>{0.6, 0.2, 0.9});
  CHECK(std::abs(b.x[0]) <= 1e-6);
  for (double v : b.x) CHECK((v >= 0.0 && v <= 1.0));

  NelderMeadOptions tight;
  tight.max_iter = 3;
  const auto cut = nelder_mead(rosen, Box({-2, -2}, {2, 2}), std::vector<double>{0, 0}, tight);
  CHECK_FALSE(cut.converged);
  CHECK(cut.iterations == 3);
}

TEST_CASE("gradient descent") {
  const Box box({-1, 2}, {3, 4});
  const Function bowl = [](std::span<const double> x) { return sq(x[0] - 1) + 3 * sq(x[1] - 3); };
  const auto r = gradient_descent(bowl, box, std::vector<double>{-0.8, 3.9});
  CHECK(linf(r.x, std::vector<double>{1, 3}) <= 1e-6);

  const Function p1 = [](std::span<const double> x) { return x[0]; };
  const auto b = gradient_descent(p1, Box({0, 0, 0}, {1, 1, 1}), std::vector<double>{0.6, 0.2, 0.9});
  CHECK(std::abs(b.x[0]) <= 1e-6);
  CHECK(b.x[1] == 0.2);

  // barrier-like merit: +inf beyond x = 0.5, minimum approached from inside
  std::size_t infinite = 0;
  const Function wall = [&](std::span<const double> x) {
    const double v = x[0] >= 0.5 ? kInfeasible : -x[0] - 0.01 * std::log(0.5 - x[0]);
    infinite += std::isinf(v);
    return v;
  };
  GradientOptions fine;
  fine.fd_level = 20;
  const auto w = gradient_descent(wall, Box({0}, {1}), std::vector<double>{0.1}, fine);
  CHECK(std::isfinite(w.value));
  CHECK(w.x[0] < 0.5);
  CHECK(w.x[0] == doctest::Approx(0.49).epsilon(1e-3));
  CHECK(infinite > 0);
}

TEST_CASE("constrained solve matches the grid oracle") {
  const auto problem = quarter_problem();
  const auto ref = grid_oracle(problem);
  CHECK(linf(ref, std::vector<double>{0.5, 0, 0}) <= 1e-12);

  SolverOptions opts;
  opts.seed = 42;
  const auto out = solve_constrained(problem, opts);
  CHECK(out.feasible);
  CHECK(problem.G(out.best) <= 0.0);
  CHECK(linf(out.best, ref) <= 1e-3);
  CHECK(out.per_run.size() == 6u * opts.n_starts);

  std::set<std::string> variants;
  for (const auto& run : out.per_run) {
    if (run.skipped) {
      CHECK(run.merit == MeritKind::LogBarrier);
      CHECK(problem.G(run.start_point) >= 0.0);
      continue;
    }
    variants.insert(run.name());
  }
  CHECK(variants.size() == 6);
  // best non-skipped end point of each variant
  for (const auto& name : variants) {
    double err = 1.0;
    for (const auto& run : out.per_run)
      if (!run.skipped && run.name() == name) err = std::min(err, linf(run.x, ref));
    INFO(name);
    CHECK(err <= 1e-3);
  }

  std::size_t sum = 0;
  for (const auto& run : out.per_run) sum += run.evaluations;
  CHECK(sum == out.total_evaluations);
}

TEST_CASE("constrained solve edge cases") {
  ConstrainedProblem p;
  p.F = [](std::span<const double> x) { return sq(x[0] - 0.5); };
  p.G = [](std::span<const double>) { return -1.0; };
  p.box = Box({0}, {1});
  const auto a = solve_constrained(p, SolverOptions{});
  CHECK(a.feasible);
  CHECK(std::abs(a.best[0] - 0.5) <= 1e-6);

  p.G = [](std::span<const double>) { return 1.0; };
  const auto b = solve_constrained(p, SolverOptions{});
  CHECK_FALSE(b.feasible);
  CHECK(b.G_best == 1.0);
  for (const auto& run : b.per_run)
    if (run.merit == MeritKind::LogBarrier) CHECK(run.skipped);

  SolverOptions bad;
  bad.n_starts = 0;
  CHECK_THROWS_AS(solve_constrained(p, bad), std::invalid_argument);
}

TEST_CASE("determinism and evaluation counts") {
  const auto problem = quarter_problem();
  SolverOptions opts;
  opts.seed = 9;
  const auto a = solve_constrained(problem, opts);
  const auto b = solve_constrained(problem, opts);
  CHECK(to_json(a).dump() == to_json(b).dump());

  // 2-parameter surrogate: simplex runs spend far more evaluations than gradient runs
  std::vector<double> f, g;
  const Box box({0, 0}, {1, 1});
  for (const auto& pt : sg::enumerate_points(2, 4)) {
    const auto x = box.from_unit(pt.coordinates());
    f.push_back(sq(x[0]) + sq(x[1] - 0.2));
    g.push_back(0.4 - x[0]);
  }
  const sg::SparseGridSurrogate s(box, 4, f, g);
  const auto out = solve_constrained(s, opts);
  std::size_t nm = 0, gd = 0;
  int nm_runs = 0, gd_runs = 0;
  for (const auto& run : out.per_run) {
    if (run.skipped) continue;
    (run.method == Method::NelderMead ? nm : gd) += run.evaluations;
    ++(run.method == Method::NelderMead ? nm_runs : gd_runs);
  }
  MESSAGE("mean evaluations per run: simplex " << nm / nm_runs << ", gradient " << gd / gd_runs);
  CHECK(nm / nm_runs >= 100);
  CHECK(nm / nm_runs > gd / gd_runs);
  CHECK(out.feasible);
  CHECK(s.evaluate(out.best, sg::Target::Constraint) <= 0.0);
}
