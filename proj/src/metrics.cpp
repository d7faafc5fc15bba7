#include "stockopt/metrics.hpp"

#include "stockopt/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>

namespace stockopt::metrics {

TriangleHit closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return {a, Feature::VertexA};

  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return {b, Feature::VertexB};

  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) {
    const double v = d1 / (d1 - d3);
    return {a + v * ab, Feature::EdgeAB};
  }

  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return {c, Feature::VertexC};

  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) {
    const double w = d2 / (d2 - d6);
    return {a + w * ac, Feature::EdgeCA};
  }

  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) {
    const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return {b + w * (c - b), Feature::EdgeBC};
  }

  const double denom = 1.0 / (va + vb + vc);
  const double v = vb * denom, w = vc * denom;
  return {a + ab * v + ac * w, Feature::Face};
}

namespace {

double box_distance_sq(const geometry::Aabb& b, const Vec3& p) {
  const Vec3 d = (b.lo - p).cwiseMax(p - b.hi).cwiseMax(0.0);
  return d.squaredNorm();
}

double corner_angle(const Vec3& at, const Vec3& u, const Vec3& v) {
  const Vec3 e1 = (u - at).normalized(), e2 = (v - at).normalized();
  return std::atan2(e1.cross(e2).norm(), e1.dot(e2));
}

}  // namespace

SignedDistanceQuery::SignedDistanceQuery(TriangleMesh target) : mesh_(std::move(target)) {
  geometry::validate(mesh_);
  const auto& V = mesh_.vertices;
  const auto& T = mesh_.triangles;
  const int nt = static_cast<int>(T.size());

  face_normal_.resize(nt);
  vertex_normal_.assign(V.size(), Vec3::Zero());
  tri_box_.resize(nt);
  std::map<std::pair<int, int>, Vec3> edge_sum;
  std::vector<Vec3> centroids(nt);
  for (int t = 0; t < nt; ++t) {
    const Vec3 &a = V[T[t][0]], &b = V[T[t][1]], &c = V[T[t][2]];
    face_normal_[t] = (b - a).cross(c - a).normalized();
    vertex_normal_[T[t][0]] += corner_angle(a, b, c) * face_normal_[t];
    vertex_normal_[T[t][1]] += corner_angle(b, c, a) * face_normal_[t];
    vertex_normal_[T[t][2]] += corner_angle(c, a, b) * face_normal_[t];
    for (int e = 0; e < 3; ++e) {
      const int u = T[t][e], w = T[t][(e + 1) % 3];
      auto [it, fresh] = edge_sum.try_emplace({std::min(u, w), std::max(u, w)}, Vec3::Zero());
      it->second += face_normal_[t];
    }
    tri_box_[t].extend(a);
    tri_box_[t].extend(b);
    tri_box_[t].extend(c);
    centroids[t] = (a + b + c) / 3.0;
  }
  edge_normal_.resize(nt);
  for (int t = 0; t < nt; ++t)
    for (int e = 0; e < 3; ++e) {
      const int u = T[t][e], w = T[t][(e + 1) % 3];
      edge_normal_[t][e] = edge_sum.at({std::min(u, w), std::max(u, w)});
    }

  order_.resize(nt);
  std::iota(order_.begin(), order_.end(), 0);
  nodes_.reserve(2 * static_cast<std::size_t>(nt) / kLeafSize + 2);
  build(0, nt, centroids);
}

int SignedDistanceQuery::build(int first, int count, std::vector<Vec3>& centroids) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.emplace_back();
  geometry::Aabb box, cbox;
  for (int i = first; i < first + count; ++i) {
    box.extend(tri_box_[order_[i]]);
    cbox.extend(centroids[order_[i]]);
  }
  nodes_[id].box = box;
  if (count <= kLeafSize) {
    nodes_[id].first = first;
    nodes_[id].count = count;
    return id;
  }
  int axis = 0;
  cbox.extent().maxCoeff(&axis);
  const int mid = first + count / 2;
  std::nth_element(order_.begin() + first, order_.begin() + mid, order_.begin() + first + count, [&](int a, int b) {
    if (centroids[a][axis] != centroids[b][axis]) return centroids[a][axis] < centroids[b][axis];
    return a < b;
  });
  const int l = build(first, mid - first, centroids);
  const int r = build(mid, first + count - mid, centroids);
  nodes_[id].left = l;
  nodes_[id].right = r;
  return id;
}

double SignedDistanceQuery::unsigned_sq(int t, const Vec3& x, TriangleHit& hit) const {
  const auto& tri = mesh_.triangles[t];
  hit = closest_point_on_triangle(x, mesh_.vertices[tri[0]], mesh_.vertices[tri[1]], mesh_.vertices[tri[2]]);
  return (x - hit.point).squaredNorm();
}

Vec3 SignedDistanceQuery::pseudonormal(int t, Feature f) const {
  const auto& tri = mesh_.triangles[t];
  switch (f) {
    case Feature::VertexA: return vertex_normal_[tri[0]];
    case Feature::VertexB: return vertex_normal_[tri[1]];
    case Feature::VertexC: return vertex_normal_[tri[2]];
    case Feature::EdgeAB: return edge_normal_[t][0];
    case Feature::EdgeBC: return edge_normal_[t][1];
    case Feature::EdgeCA: return edge_normal_[t][2];
    case Feature::Face: break;
  }
  return face_normal_[t];
}

DistanceHit SignedDistanceQuery::query(const Vec3& x, QueryCursor* cursor) const {
  double best = std::numeric_limits<double>::infinity();
  int best_t = -1;
  TriangleHit best_hit{Vec3::Zero(), Feature::Face};
  std::size_t visits = 0;

  // Ties go to the lower triangle index so the answer does not depend on visit order.
  auto consider = [&](int t) {
    TriangleHit h;
    const double d2 = unsigned_sq(t, x, h);
    ++visits;
    if (d2 < best || (d2 == best && t < best_t)) {
      best = d2;
      best_t = t;
      best_hit = h;
    }
  };
  if (cursor && cursor->last_hit >= 0 && cursor->last_hit < static_cast<int>(mesh_.triangles.size()))
    consider(cursor->last_hit);

  std::vector<int> stack{0};
  while (!stack.empty()) {
    const int n = stack.back();
    stack.pop_back();
    const Node& node = nodes_[n];
    if (box_distance_sq(node.box, x) > best) continue;
    if (node.left < 0) {
      for (int i = node.first; i < node.first + node.count; ++i) {
        const int t = order_[i];
        if (cursor && t == cursor->last_hit) continue;
        if (box_distance_sq(tri_box_[t], x) > best) continue;
        consider(t);
      }
      continue;
    }
    const double dl = box_distance_sq(nodes_[node.left].box, x);
    const double dr = box_distance_sq(nodes_[node.right].box, x);
    // push the farther child first so the nearer one is processed next
    if (dl <= dr) {
      stack.push_back(node.right);
      stack.push_back(node.left);
    } else {
      stack.push_back(node.left);
      stack.push_back(node.right);
    }
  }

  if (cursor) {
    cursor->last_hit = best_t;
    cursor->visits += visits;
  }
  const double d = std::sqrt(best);
  double sign = 0.0;
  if (d > 0.0) sign = (x - best_hit.point).dot(pseudonormal(best_t, best_hit.feature)) >= 0.0 ? 1.0 : -1.0;
  return {sign * d, best_t, best_hit.point, best_hit.feature};
}

double delta_thickness(std::span<const Vec3> cloud, const SignedDistanceQuery& q, QueryCursor* cursor) {
  if (cloud.empty()) throw EmptyCloud("delta_thickness: empty point cloud");
  QueryCursor local;
  QueryCursor* c = cursor ? cursor : &local;
  double m = std::numeric_limits<double>::infinity();
  for (const auto& p : cloud) m = std::min(m, q.signed_distance(p, c));
  return m;
}

double delta_volume(double warped_vol, double cavities_vol, double nominal_vol) {
  if (warped_vol < 0.0 || cavities_vol < 0.0 || nominal_vol < 0.0)
    throw std::invalid_argument("delta_volume: volumes must be non-negative");
  return warped_vol + cavities_vol - nominal_vol;
}

}  // namespace stockopt::metrics
