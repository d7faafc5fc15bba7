#pragma once

#include "stockopt/box.hpp"

#include <json.hpp>

#include <cstdint>
#include <span>
#include <vector>

namespace stockopt::sg {

/// Hierarchical node: x_d = index_d * 2^-level_d, index_d odd.
struct GridPoint {
  std::vector<int> level;
  std::vector<int> index;

  double coordinate(int d) const;
  std::vector<double> coordinates() const;
  int level_sum() const;
  bool operator==(const GridPoint&) const = default;
};

/// Points of the regular sparse grid of level w in N dimensions: sum(level) <= w + N - 1.
std::uint64_t count_points(int N, int w);

/// Ordered by level sum, then level vector, then index vector (both lexicographic).
std::vector<GridPoint> enumerate_points(int N, int w);

/// Modified piecewise-linear hierarchical basis on [0, 1].
double basis_1d(int level, int index, double x);

double basis(const GridPoint& p, std::span<const double> x);

/// Surpluses for values given in enumerate_points order.
std::vector<double> hierarchize(const std::vector<GridPoint>& points, std::span<const double> values);

/// Sum of surplus * basis at a unit-cube point.
double interpolate(const std::vector<GridPoint>& points, std::span<const double> surpluses, std::span<const double> x);

enum class Target { Objective, Constraint };

/// Objective and constraint interpolants sharing one grid over a parameter box.
class SparseGridSurrogate {
public:
  static constexpr int kSchemaVersion = 1;

  SparseGridSurrogate(Box box, int w, std::vector<double> objective_values, std::vector<double> constraint_values);

  int dim() const { return box_.dim(); }
  int level() const { return w_; }
  const Box& box() const { return box_; }
  const std::vector<GridPoint>& points() const { return points_; }
  const std::vector<double>& values(Target t) const { return t == Target::Objective ? f_values_ : g_values_; }
  const std::vector<double>& surpluses(Target t) const { return t == Target::Objective ? f_surplus_ : g_surplus_; }

  /// Throws OutOfBox outside the box (bounds inclusive).
  double evaluate(std::span<const double> p, Target which) const;

  nlohmann::json to_json() const;
  /// Throws ParseError on schema mismatch.
  static SparseGridSurrogate from_json(const nlohmann::json& j);

private:
  Box box_;
  int w_;
  std::vector<GridPoint> points_;
  std::vector<double> f_values_, g_values_, f_surplus_, g_surplus_;
};

}  // namespace stockopt::sg
