#pragma once

#include "stockopt/box.hpp"
#include "stockopt/sparse_grid.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace stockopt::opt {

using Function = std::function<double(std::span<const double>)>;

inline constexpr double kInfeasible = std::numeric_limits<double>::infinity();

/// n stratum-center points in [0, 1]^N, one permutation per dimension.
std::vector<std::vector<double>> latin_hypercube(int n, int N, std::uint64_t seed);

enum class MeritKind { SquaredPenalty, AugmentedLagrangian, LogBarrier };
enum class Method { NelderMead, GradientDescent };

std::string to_string(MeritKind k);
std::string to_string(Method m);

struct MeritSpec {
  MeritKind kind{MeritKind::SquaredPenalty};
  double mu0{1.0};
  double mu_growth{10.0};  ///< multiplies mu; the barrier divides by it
  int outer_iters{8};
  double lambda0{0.0};

  void validate() const;
};

/// Penalized value; +infinity for the barrier outside the strict interior.
double merit_value(MeritKind kind, double F, double G, double mu, double lambda = 0.0);

struct LocalResult {
  std::vector<double> x;
  double value{kInfeasible};
  int iterations{0};
  bool converged{false};
  std::size_t evaluations{0};
};

struct NelderMeadOptions {
  double initial_edge{0.05};   ///< fraction of each box width
  double diameter_tol{1e-8};   ///< relative to the box diagonal
  int max_iter{1000};
};

struct GradientOptions {
  int fd_level{2};  ///< step 2^-(fd_level + 2) * width
  double armijo{1e-4};
  double grad_tol{1e-8};
  int max_iter{500};
  int max_halvings{60};
};

/// Bound-clamped simplex search. `start` must lie in the box.
LocalResult nelder_mead(const Function& f, const Box& box, std::span<const double> start,
                        const NelderMeadOptions& opts = {});

/// Projected steepest descent with finite-difference gradients and Armijo backtracking.
LocalResult gradient_descent(const Function& f, const Box& box, std::span<const double> start,
                             const GradientOptions& opts = {});

/// min F subject to G <= 0 inside box.
struct ConstrainedProblem {
  Function F;
  Function G;
  Box box;
  int fd_level{10};
};

struct SolverOptions {
  int n_starts{5};
  std::uint64_t seed{0};
  double mu0{1.0};
  double mu_growth{10.0};
  int outer_iters{8};
  double lambda0{0.0};
  double barrier_mu0{1.0};
  double barrier_decay{10.0};
  NelderMeadOptions nelder_mead;
  GradientOptions gradient;

  MeritSpec spec(MeritKind k) const;
  void validate() const;
};

struct RunRecord {
  MeritKind merit;
  Method method;
  int start;
  std::vector<double> start_point;
  std::vector<double> x;
  double F{0.0}, G{0.0};
  bool skipped{false};  ///< barrier run from an infeasible start
  bool converged{false};
  std::size_t evaluations{0};

  std::string name() const { return to_string(merit) + "+" + to_string(method); }
};

struct OptimizationOutcome {
  std::vector<double> best;
  double F_best{0.0}, G_best{0.0};
  bool feasible{false};
  std::string method;  ///< winning merit+optimizer
  std::vector<RunRecord> per_run;
  std::size_t total_evaluations{0};
};

/// Six merit/optimizer combinations from n_starts LHS starts. One evaluation is one
/// (F, G) pair at one point. The winner is the feasible run end with the least F,
/// ties by lexicographic point; otherwise the least violation, with feasible false.
OptimizationOutcome solve_constrained(const ConstrainedProblem& problem, const SolverOptions& opts);

/// Surrogate problem with the finite-difference step tied to the grid level.
OptimizationOutcome solve_constrained(const sg::SparseGridSurrogate& s, const SolverOptions& opts);

nlohmann::json to_json(const OptimizationOutcome& o);

}  // namespace stockopt::opt
