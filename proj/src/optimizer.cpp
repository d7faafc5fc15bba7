#include "stockopt/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace stockopt::opt {

std::vector<std::vector<double>> latin_hypercube(int n, int N, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("latin_hypercube: n must be >= 1");
  if (N < 1) throw std::invalid_argument("latin_hypercube: dimension must be >= 1");
  std::mt19937_64 rng(seed);
  std::vector<std::vector<double>> pts(n, std::vector<double>(N));
  std::vector<int> perm(n);
  for (int d = 0; d < N; ++d) {
    std::iota(perm.begin(), perm.end(), 0);
    // Fisher-Yates with a plain modulus: identical on every standard library.
    for (int i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng() % static_cast<std::uint64_t>(i + 1)]);
    for (int i = 0; i < n; ++i) pts[i][d] = (perm[i] + 0.5) / n;
  }
  return pts;
}

std::string to_string(MeritKind k) {
  switch (k) {
    case MeritKind::SquaredPenalty: return "squared_penalty";
    case MeritKind::AugmentedLagrangian: return "augmented_lagrangian";
    case MeritKind::LogBarrier: return "log_barrier";
  }
  return "?";
}

std::string to_string(Method m) { return m == Method::NelderMead ? "nelder_mead" : "gradient_descent"; }

void MeritSpec::validate() const {
  if (!(mu0 > 0.0)) throw std::invalid_argument("merit: mu0 must be positive");
  if (!(mu_growth > 1.0)) throw std::invalid_argument("merit: mu_growth must exceed 1");
  if (outer_iters < 1) throw std::invalid_argument("merit: outer_iters must be >= 1");
  if (lambda0 < 0.0) throw std::invalid_argument("merit: lambda0 must be >= 0");
}

double merit_value(MeritKind kind, double F, double G, double mu, double lambda) {
  switch (kind) {
    case MeritKind::SquaredPenalty: {
      const double v = std::max(0.0, G);
      return F + mu * v * v;
    }
    case MeritKind::AugmentedLagrangian: {
      const double r = lambda / mu;
      const double v = std::max(0.0, r + G);
      return F + 0.5 * mu * (v * v - r * r);
    }
    case MeritKind::LogBarrier:
      if (!(G < 0.0)) return kInfeasible;
      return F - mu * std::log(-G);
  }
  return kInfeasible;
}

namespace {

struct Counted {
  const Function& f;
  std::size_t count{0};
  double operator()(std::span<const double> x) {
    ++count;
    return f(x);
  }
};

double distance(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

void check_start(const Box& box, std::span<const double> start) {
  box.validate();
  if (!box.contains(start)) throw std::invalid_argument("optimizer: start point outside the box");
}

}  // namespace

LocalResult nelder_mead(const Function& f, const Box& box, std::span<const double> start,
                        const NelderMeadOptions& opts) {
  check_start(box, start);
  const int N = box.dim();
  Counted fc{f};
  std::vector<std::vector<double>> x(N + 1, std::vector<double>(start.begin(), start.end()));
  for (int d = 0; d < N; ++d) {
    const double step = opts.initial_edge * box.width(d);
    x[d + 1][d] = x[0][d] + step <= box.hi[d] ? x[0][d] + step : x[0][d] - step;
  }
  std::vector<double> fx(N + 1);
  for (int i = 0; i <= N; ++i) fx[i] = fc(x[i]);

  auto point = [&](const std::vector<double>& c, const std::vector<double>& from, double coef) {
    std::vector<double> p(N);
    for (int d = 0; d < N; ++d) p[d] = c[d] + coef * (c[d] - from[d]);
    box.clamp(p);
    return p;
  };

  const double tol = opts.diameter_tol * box.diagonal();
  std::vector<int> order(N + 1);
  LocalResult r;
  int it = 0;
  for (; it < opts.max_iter; ++it) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return fx[a] < fx[b]; });
    {
      std::vector<std::vector<double>> xs;
      std::vector<double> fs;
      for (int i : order) {
        xs.push_back(x[i]);
        fs.push_back(fx[i]);
      }
      x = std::move(xs);
      fx = std::move(fs);
    }
    double diam = 0.0;
    for (int i = 0; i <= N; ++i)
      for (int j = i + 1; j <= N; ++j) diam = std::max(diam, distance(x[i], x[j]));
    if (diam < tol) {
      r.converged = true;
      break;
    }

    std::vector<double> c(N, 0.0);
    for (int i = 0; i < N; ++i)
      for (int d = 0; d < N; ++d) c[d] += x[i][d] / N;

    const auto xr = point(c, x[N], 1.0);
    const double fr = fc(xr);
    if (fr < fx[0]) {
      const auto xe = point(c, x[N], 2.0);
      const double fe = fc(xe);
      if (fe < fr) {
        x[N] = xe;
        fx[N] = fe;
      } else {
        x[N] = xr;
        fx[N] = fr;
      }
      continue;
    }
    if (fr < fx[N - 1]) {
      x[N] = xr;
      fx[N] = fr;
      continue;
    }
    bool accepted = false;
    if (fr < fx[N]) {
      const auto xo = point(c, xr, -0.5);  // c + 0.5 (xr - c)
      const double fo = fc(xo);
      if (fo <= fr) {
        x[N] = xo;
        fx[N] = fo;
        accepted = true;
      }
    } else {
      const auto xi = point(c, x[N], -0.5);  // c + 0.5 (x_worst - c)
      const double fi = fc(xi);
      if (fi < fx[N]) {
        x[N] = xi;
        fx[N] = fi;
        accepted = true;
      }
    }
    if (!accepted) {
      for (int i = 1; i <= N; ++i) {
        for (int d = 0; d < N; ++d) x[i][d] = x[0][d] + 0.5 * (x[i][d] - x[0][d]);
        fx[i] = fc(x[i]);
      }
    }
  }
  const int best = static_cast<int>(std::min_element(fx.begin(), fx.end()) - fx.begin());
  r.x = x[best];
  r.value = fx[best];
  r.iterations = it;
  r.evaluations = fc.count;
  return r;
}

LocalResult gradient_descent(const Function& f, const Box& box, std::span<const double> start,
                             const GradientOptions& opts) {
  check_start(box, start);
  const int N = box.dim();
  Counted fc{f};
  std::vector<double> x(start.begin(), start.end());
  double fx = fc(x);
  std::vector<double> delta(N);
  for (int d = 0; d < N; ++d) delta[d] = std::ldexp(box.width(d), -(opts.fd_level + 2));

  LocalResult r;
  double t_prev = 0.0;
  int it = 0;
  std::vector<double> g(N), trial(N);
  for (; it < opts.max_iter; ++it) {
    for (int d = 0; d < N; ++d) {
      std::vector<double> xp = x, xm = x;
      xp[d] = std::min(box.hi[d], x[d] + delta[d]);
      xm[d] = std::max(box.lo[d], x[d] - delta[d]);
      const double fp = xp[d] > x[d] ? fc(xp) : kInfeasible;
      const double fm = xm[d] < x[d] ? fc(xm) : kInfeasible;
      if (std::isfinite(fp) && std::isfinite(fm)) g[d] = (fp - fm) / (xp[d] - xm[d]);
      else if (std::isfinite(fp)) g[d] = (fp - fx) / (xp[d] - x[d]);
      else if (std::isfinite(fm)) g[d] = (fx - fm) / (x[d] - xm[d]);
      else g[d] = 0.0;
    }
    double pg = 0.0, gn = 0.0;
    for (int d = 0; d < N; ++d) {
      gn += g[d] * g[d];
      const bool blocked = (x[d] <= box.lo[d] && g[d] > 0.0) || (x[d] >= box.hi[d] && g[d] < 0.0);
      if (!blocked) pg += g[d] * g[d];
    }
    if (std::sqrt(pg) < opts.grad_tol) {
      r.converged = true;
      break;
    }
    const double t_max = box.diagonal() / std::sqrt(gn);
    double t = t_prev > 0.0 ? std::min(2.0 * t_prev, t_max) : t_max;
    bool moved = false;
    for (int h = 0; h < opts.max_halvings; ++h, t *= 0.5) {
      double slope = 0.0;
      for (int d = 0; d < N; ++d) {
        trial[d] = std::min(box.hi[d], std::max(box.lo[d], x[d] - t * g[d]));
        slope += g[d] * (trial[d] - x[d]);
      }
      if (trial == x) break;
      const double ft = fc(trial);
      if (std::isfinite(ft) && ft <= fx + opts.armijo * slope) {
        x = trial;
        fx = ft;
        t_prev = t;
        moved = true;
        break;
      }
    }
    if (!moved) break;  // no descent at finite-difference resolution
  }
  r.x = x;
  r.value = fx;
  r.iterations = it;
  r.evaluations = fc.count;
  return r;
}

MeritSpec SolverOptions::spec(MeritKind k) const {
  if (k == MeritKind::LogBarrier) return {k, barrier_mu0, barrier_decay, outer_iters, 0.0};
  return {k, mu0, mu_growth, outer_iters, k == MeritKind::AugmentedLagrangian ? lambda0 : 0.0};
}

void SolverOptions::validate() const {
  if (n_starts < 1) throw std::invalid_argument("optimizer: n_starts must be >= 1");
  for (auto k : {MeritKind::SquaredPenalty, MeritKind::AugmentedLagrangian, MeritKind::LogBarrier}) spec(k).validate();
}

OptimizationOutcome solve_constrained(const ConstrainedProblem& problem, const SolverOptions& opts) {
  opts.validate();
  problem.box.validate();
  const Box& box = problem.box;
  const int N = box.dim();

  OptimizationOutcome out;
  const auto unit_starts = latin_hypercube(opts.n_starts, N, opts.seed);
  std::vector<std::vector<double>> starts;
  for (const auto& u : unit_starts) starts.push_back(box.from_unit(u));

  for (auto kind : {MeritKind::SquaredPenalty, MeritKind::AugmentedLagrangian, MeritKind::LogBarrier}) {
    const MeritSpec spec = opts.spec(kind);
    for (auto method : {Method::NelderMead, Method::GradientDescent}) {
      for (int s = 0; s < opts.n_starts; ++s) {
        RunRecord rec{kind, method, s, starts[s], starts[s]};
        std::size_t evals = 0;
        if (kind == MeritKind::LogBarrier) {
          ++evals;
          const double g0 = problem.G(starts[s]);
          if (!(g0 < 0.0)) {
            rec.skipped = true;
            rec.F = problem.F(starts[s]);
            rec.G = g0;
            rec.evaluations = evals;
            out.total_evaluations += evals;
            out.per_run.push_back(std::move(rec));
            continue;
          }
        }
        double mu = spec.mu0, lambda = spec.lambda0;
        std::vector<double> x = starts[s];
        bool converged = true;
        for (int k = 0; k < spec.outer_iters; ++k) {
          const Function merit = [&](std::span<const double> p) {
            return merit_value(kind, problem.F(p), problem.G(p), mu, lambda);
          };
          LocalResult lr;
          if (method == Method::NelderMead) {
            lr = nelder_mead(merit, box, x, opts.nelder_mead);
          } else {
            GradientOptions go = opts.gradient;
            go.fd_level = problem.fd_level;
            lr = gradient_descent(merit, box, x, go);
          }
          x = lr.x;
          evals += lr.evaluations;
          converged = lr.converged;
          if (kind == MeritKind::AugmentedLagrangian) {
            ++evals;
            lambda = std::max(0.0, lambda + mu * problem.G(x));
          }
          mu = kind == MeritKind::LogBarrier ? mu / spec.mu_growth : mu * spec.mu_growth;
        }
        ++evals;
        rec.x = x;
        rec.F = problem.F(x);
        rec.G = problem.G(x);
        rec.converged = converged;
        rec.evaluations = evals;
        out.total_evaluations += evals;
        out.per_run.push_back(std::move(rec));
      }
    }
  }

  const RunRecord* best = nullptr;
  for (const auto& r : out.per_run) {
    if (r.skipped || !(r.G <= 0.0)) continue;
    if (!best || r.F < best->F || (r.F == best->F && r.x < best->x)) best = &r;
  }
  out.feasible = best != nullptr;
  if (!best) {
    for (const auto& r : out.per_run) {
      if (!best || r.G < best->G || (r.G == best->G && (r.F < best->F || (r.F == best->F && r.x < best->x))))
        best = &r;
    }
  }
  out.best = best->x;
  out.F_best = best->F;
  out.G_best = best->G;
  out.method = best->name();
  return out;
}

OptimizationOutcome solve_constrained(const sg::SparseGridSurrogate& s, const SolverOptions& opts) {
  ConstrainedProblem p{[&s](std::span<const double> x) { return s.evaluate(x, sg::Target::Objective); },
                       [&s](std::span<const double> x) { return s.evaluate(x, sg::Target::Constraint); }, s.box(),
                       s.level()};
  return solve_constrained(p, opts);
}

nlohmann::json to_json(const OptimizationOutcome& o) {
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& r : o.per_run) {
    runs.push_back({{"merit", to_string(r.merit)},
                    {"optimizer", to_string(r.method)},
                    {"start", r.start},
                    {"start_point", r.start_point},
                    {"result", r.x},
                    {"F", r.F},
                    {"G", r.G},
                    {"skipped", r.skipped},
                    {"converged", r.converged},
                    {"evaluations", r.evaluations}});
  }
  return {{"best", o.best},   {"F_best", o.F_best},          {"G_best", o.G_best},
          {"feasible", o.feasible}, {"method", o.method}, {"total_evaluations", o.total_evaluations},
          {"per_run", runs}};
}

}  // namespace stockopt::opt
