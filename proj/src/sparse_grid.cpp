#include "stockopt/sparse_grid.hpp"

#include "stockopt/error.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace stockopt::sg {

double GridPoint::coordinate(int d) const { return std::ldexp(static_cast<double>(index[d]), -level[d]); }

std::vector<double> GridPoint::coordinates() const {
  std::vector<double> x(level.size());
  for (std::size_t d = 0; d < level.size(); ++d) x[d] = coordinate(static_cast<int>(d));
  return x;
}

int GridPoint::level_sum() const { return std::accumulate(level.begin(), level.end(), 0); }

namespace {

void check_dims(int N, int w) {
  if (N < 1) throw std::invalid_argument("sparse grid: dimension must be >= 1");
  if (w < 1) throw std::invalid_argument("sparse grid: level must be >= 1");
  if (w + N > 60) throw std::invalid_argument("sparse grid: level too large");
}

// Level vectors with each entry >= 1 and the given sum, in lexicographic order.
void level_vectors(int N, int sum, std::vector<int>& cur, std::vector<std::vector<int>>& out) {
  const int d = static_cast<int>(cur.size());
  if (d == N - 1) {
    cur.push_back(sum);
    out.push_back(cur);
    cur.pop_back();
    return;
  }
  const int rest = N - d - 1;
  for (int l = 1; l <= sum - rest; ++l) {
    cur.push_back(l);
    level_vectors(N, sum - l, cur, out);
    cur.pop_back();
  }
}

std::uint64_t count_rec(int dims_left, int budget) {
  if (dims_left == 0) return 1;
  std::uint64_t total = 0;
  for (int l = 1; l <= budget - (dims_left - 1); ++l) total += (std::uint64_t{1} << (l - 1)) * count_rec(dims_left - 1, budget - l);
  return total;
}

}  // namespace

std::uint64_t count_points(int N, int w) {
  check_dims(N, w);
  return count_rec(N, w + N - 1);
}

std::vector<GridPoint> enumerate_points(int N, int w) {
  check_dims(N, w);
  std::vector<GridPoint> pts;
  for (int sum = N; sum <= w + N - 1; ++sum) {
    std::vector<std::vector<int>> levels;
    std::vector<int> cur;
    level_vectors(N, sum, cur, levels);
    for (const auto& l : levels) {
      std::vector<int> idx(N, 1);
      while (true) {
        pts.push_back({l, idx});
        int d = N - 1;
        while (d >= 0) {
          idx[d] += 2;
          if (idx[d] < (1 << l[d])) break;
          idx[d] = 1;
          --d;
        }
        if (d < 0) break;
      }
    }
  }
  return pts;
}

double basis_1d(int level, int index, double x) {
  if (level == 1) return 1.0;
  const double scale = std::ldexp(1.0, level);
  if (index == 1) return std::max(0.0, 2.0 - scale * x);
  if (index == (1 << level) - 1) return std::max(0.0, scale * x - index + 1.0);
  return std::max(0.0, 1.0 - std::abs(scale * x - index));
}

double basis(const GridPoint& p, std::span<const double> x) {
  double v = 1.0;
  for (std::size_t d = 0; d < p.level.size() && v != 0.0; ++d) v *= basis_1d(p.level[d], p.index[d], x[d]);
  return v;
}

std::vector<double> hierarchize(const std::vector<GridPoint>& points, std::span<const double> values) {
  if (points.size() != values.size()) throw std::invalid_argument("hierarchize: one value per point required");
  std::vector<double> surplus(points.size());
  // Points are sorted by level sum, so `coarser` ends where the current sum starts.
  std::size_t coarser = 0;
  for (std::size_t p = 0; p < points.size(); ++p) {
    if (p > 0 && points[p].level_sum() != points[p - 1].level_sum()) coarser = p;
    const auto x = points[p].coordinates();
    double acc = 0.0;
    for (std::size_t q = 0; q < coarser; ++q) acc += surplus[q] * basis(points[q], x);
    surplus[p] = values[p] - acc;
  }
  return surplus;
}

double interpolate(const std::vector<GridPoint>& points, std::span<const double> surpluses, std::span<const double> x) {
  double acc = 0.0;
  for (std::size_t p = 0; p < points.size(); ++p) {
    if (surpluses[p] == 0.0) continue;
    acc += surpluses[p] * basis(points[p], x);
  }
  return acc;
}

SparseGridSurrogate::SparseGridSurrogate(Box box, int w, std::vector<double> objective_values,
                                         std::vector<double> constraint_values)
    : box_(std::move(box)), w_(w), f_values_(std::move(objective_values)), g_values_(std::move(constraint_values)) {
  box_.validate();
  points_ = enumerate_points(box_.dim(), w_);
  if (f_values_.size() != points_.size() || g_values_.size() != points_.size())
    throw std::invalid_argument("surrogate: expected " + std::to_string(points_.size()) + " values per function");
  f_surplus_ = hierarchize(points_, f_values_);
  g_surplus_ = hierarchize(points_, g_values_);
}

double SparseGridSurrogate::evaluate(std::span<const double> p, Target which) const {
  if (!box_.contains(p)) throw OutOfBox("surrogate evaluated outside its parameter box");
  const auto x = box_.to_unit(p);
  return interpolate(points_, surpluses(which), x);
}

nlohmann::json SparseGridSurrogate::to_json() const {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : points_) pts.push_back({{"level", p.level}, {"index", p.index}});
  return {{"schema_version", kSchemaVersion},
          {"dimension", dim()},
          {"level", w_},
          {"box", {{"lo", box_.lo}, {"hi", box_.hi}}},
          {"points", pts},
          {"objective", {{"values", f_values_}, {"surpluses", f_surplus_}}},
          {"constraint", {{"values", g_values_}, {"surpluses", g_surplus_}}}};
}

SparseGridSurrogate SparseGridSurrogate::from_json(const nlohmann::json& j) {
  try {
    if (j.at("schema_version").get<int>() != kSchemaVersion) throw ParseError("surrogate: unsupported schema_version");
    Box box(j.at("box").at("lo").get<std::vector<double>>(), j.at("box").at("hi").get<std::vector<double>>());
    SparseGridSurrogate s(std::move(box), j.at("level").get<int>(),
                          j.at("objective").at("values").get<std::vector<double>>(),
                          j.at("constraint").at("values").get<std::vector<double>>());
    if (j.at("dimension").get<int>() != s.dim()) throw ParseError("surrogate: dimension does not match box");
    const auto& pts = j.at("points");
    if (pts.size() != s.points_.size()) throw ParseError("surrogate: point count mismatch");
    for (std::size_t p = 0; p < pts.size(); ++p) {
      if (pts[p].at("level").get<std::vector<int>>() != s.points_[p].level ||
          pts[p].at("index").get<std::vector<int>>() != s.points_[p].index)
        throw ParseError("surrogate: point order mismatch at " + std::to_string(p));
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("surrogate: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ParseError(std::string("surrogate: ") + e.what());
  }
}

}  // namespace stockopt::sg
