#pragma once

#include "stockopt/geometry.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace stockopt::metrics {

using geometry::TriangleMesh;
using geometry::Vec3;

/// Which part of a triangle holds the closest point.
enum class Feature { VertexA, VertexB, VertexC, EdgeAB, EdgeBC, EdgeCA, Face };

/// Closest point on triangle (a, b, c) to p.
struct TriangleHit {
  Vec3 point;
  Feature feature;
};
TriangleHit closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

/// Per-stream warm-start state. Not shared between threads.
struct QueryCursor {
  int last_hit{-1};
  std::size_t visits{0};  ///< triangles tested so far
};

struct DistanceHit {
  double distance;  ///< signed: positive outside, negative inside
  int triangle;
  Vec3 closest;
  Feature feature;
};

/// Exact signed distance to a closed triangle mesh through an AABB tree.
/// Signs come from angle-weighted pseudonormals.
class SignedDistanceQuery {
public:
  explicit SignedDistanceQuery(TriangleMesh target);

  DistanceHit query(const Vec3& x, QueryCursor* cursor = nullptr) const;
  double signed_distance(const Vec3& x, QueryCursor* cursor = nullptr) const { return query(x, cursor).distance; }

  const TriangleMesh& mesh() const { return mesh_; }

  struct Node {
    geometry::Aabb box;
    int left{-1}, right{-1};  ///< children, -1 for leaves
    int first{0}, count{0};   ///< leaf range in order()
  };
  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<int>& order() const { return order_; }

  static constexpr int kLeafSize = 4;

private:
  int build(int first, int count, std::vector<Vec3>& centroids);
  double unsigned_sq(int t, const Vec3& x, TriangleHit& hit) const;
  Vec3 pseudonormal(int t, Feature f) const;

  TriangleMesh mesh_;
  std::vector<Node> nodes_;
  std::vector<int> order_;
  std::vector<geometry::Aabb> tri_box_;
  std::vector<Vec3> face_normal_;
  std::vector<Vec3> vertex_normal_;
  std::vector<std::array<Vec3, 3>> edge_normal_;  ///< per triangle: ab, bc, ca
};

/// Minimum signed distance over the cloud. Throws EmptyCloud.
double delta_thickness(std::span<const Vec3> cloud, const SignedDistanceQuery& q, QueryCursor* cursor = nullptr);

/// warped + cavities - nominal. Throws std::invalid_argument for negative inputs.
double delta_volume(double warped_vol, double cavities_vol, double nominal_vol);

}  // namespace stockopt::metrics
