#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

namespace stockopt {

/// Axis-aligned parameter box, lo[d] < hi[d].
struct Box {
  std::vector<double> lo, hi;

  Box() = default;
  Box(std::vector<double> l, std::vector<double> h) : lo(std::move(l)), hi(std::move(h)) { validate(); }

  int dim() const { return static_cast<int>(lo.size()); }
  double width(int d) const { return hi[d] - lo[d]; }
  double diagonal() const {
    double s = 0.0;
    for (int d = 0; d < dim(); ++d) s += width(d) * width(d);
    return std::sqrt(s);
  }
  bool contains(std::span<const double> p) const {
    if (static_cast<int>(p.size()) != dim()) return false;
    for (int d = 0; d < dim(); ++d)
      if (!(p[d] >= lo[d] && p[d] <= hi[d])) return false;
    return true;
  }
  void clamp(std::span<double> p) const {
    for (int d = 0; d < dim(); ++d) p[d] = std::min(hi[d], std::max(lo[d], p[d]));
  }
  std::vector<double> from_unit(std::span<const double> u) const {
    std::vector<double> p(u.size());
    for (int d = 0; d < dim(); ++d) p[d] = lo[d] + u[d] * width(d);
    return p;
  }
  std::vector<double> to_unit(std::span<const double> p) const {
    std::vector<double> u(p.size());
    for (int d = 0; d < dim(); ++d) u[d] = (p[d] - lo[d]) / width(d);
    return u;
  }
  void validate() const {
    if (lo.empty() || lo.size() != hi.size()) throw std::invalid_argument("box: bound vectors must be non-empty and equal length");
    for (std::size_t d = 0; d < lo.size(); ++d)
      if (!(std::isfinite(lo[d]) && std::isfinite(hi[d]) && lo[d] < hi[d]))
        throw std::invalid_argument("box: need finite lo < hi in every dimension");
  }
  bool operator==(const Box&) const = default;
};

}  // namespace stockopt
