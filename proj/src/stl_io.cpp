#include "stockopt/error.hpp"
#include "stockopt/geometry.hpp"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <unordered_map>

namespace stockopt::geometry {

namespace {

struct CellKey {
  std::int64_t x, y, z;
  bool operator==(const CellKey&) const = default;
};
struct CellKeyHash {
  std::size_t operator()(const CellKey& k) const noexcept {
    std::uint64_t h = 1469598103934665603ull;
    for (std::int64_t v : {k.x, k.y, k.z}) {
      h ^= static_cast<std::uint64_t>(v);
      h *= 1099511628211ull;
    }
    return static_cast<std::size_t>(h);
  }
};

// Merges vertices within kWeldTolerance (Euclidean) and drops nothing else; the
// validator decides whether the result is acceptable.
TriangleMesh weld(const std::vector<std::array<Vec3, 3>>& facets) {
  TriangleMesh m;
  std::unordered_map<CellKey, std::vector<int>, CellKeyHash> buckets;
  auto key_of = [](const Vec3& p) {
    return CellKey{static_cast<std::int64_t>(std::floor(p.x() / kWeldTolerance)),
                   static_cast<std::int64_t>(std::floor(p.y() / kWeldTolerance)),
                   static_cast<std::int64_t>(std::floor(p.z() / kWeldTolerance))};
  };
  auto find_or_add = [&](const Vec3& p) {
    const CellKey k = key_of(p);
    for (std::int64_t dz = -1; dz <= 1; ++dz)
      for (std::int64_t dy = -1; dy <= 1; ++dy)
        for (std::int64_t dx = -1; dx <= 1; ++dx) {
          auto it = buckets.find({k.x + dx, k.y + dy, k.z + dz});
          if (it == buckets.end()) continue;
          for (int idx : it->second) {
            if ((m.vertices[idx] - p).norm() <= kWeldTolerance) return idx;
          }
        }
    const int idx = static_cast<int>(m.vertices.size());
    m.vertices.push_back(p);
    buckets[k].push_back(idx);
    return idx;
  };
  m.triangles.reserve(facets.size());
  for (const auto& f : facets) {
    m.triangles.push_back({find_or_add(f[0]), find_or_add(f[1]), find_or_add(f[2])});
  }
  return m;
}

float read_f32(const std::byte* p) {
  std::uint32_t u = 0;
  for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(std::to_integer<unsigned>(p[b])) << (8 * b);
  float f;
  std::memcpy(&f, &u, 4);
  return f;
}

void write_f32(std::vector<std::byte>& out, float f) {
  std::uint32_t u;
  std::memcpy(&u, &f, 4);
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::byte>((u >> (8 * b)) & 0xffu));
}

std::vector<std::array<Vec3, 3>> parse_binary(std::span<const std::byte> bytes, std::uint32_t n) {
  std::vector<std::array<Vec3, 3>> facets(n);
  const std::byte* p = bytes.data() + 84;
  for (std::uint32_t t = 0; t < n; ++t, p += 50) {
    for (int c = 0; c < 3; ++c) {
      const std::byte* v = p + 12 + 12 * c;
      facets[t][c] = Vec3(read_f32(v), read_f32(v + 4), read_f32(v + 8));
      if (!facets[t][c].allFinite()) throw ParseError("binary STL: non-finite coordinate in facet " + std::to_string(t));
    }
  }
  return facets;
}

std::vector<std::array<Vec3, 3>> parse_ascii(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string tok;
  in >> tok;
  if (tok != "solid") throw ParseError("ASCII STL: missing 'solid'");
  std::vector<std::array<Vec3, 3>> facets;
  std::array<Vec3, 3> cur{};
  int nv = -1;  // -1: outside a facet
  bool ended = false;
  while (in >> tok) {
    if (tok == "facet") {
      if (nv != -1) throw ParseError("ASCII STL: nested facet");
      nv = 0;
    } else if (tok == "vertex") {
      if (nv < 0 || nv >= 3) throw ParseError("ASCII STL: unexpected vertex");
      double xyz[3];
      for (double& c : xyz) {
        std::string num;
        if (!(in >> num)) throw ParseError("ASCII STL: truncated vertex");
        char* end = nullptr;
        c = std::strtod(num.c_str(), &end);
        if (end == num.c_str() || *end != '\0' || !std::isfinite(c)) {
          throw ParseError("ASCII STL: bad number '" + num + "'");
        }
      }
      cur[nv++] = Vec3(xyz[0], xyz[1], xyz[2]);
    } else if (tok == "endfacet") {
      if (nv != 3) throw ParseError("ASCII STL: facet without exactly three vertices");
      facets.push_back(cur);
      nv = -1;
    } else if (tok == "endsolid") {
      ended = true;
      break;
    }
    // normal components, "outer", "loop", "endloop" and the solid name are skipped
  }
  if (nv != -1) throw ParseError("ASCII STL: unterminated facet");
  if (!ended) throw ParseError("ASCII STL: missing 'endsolid'");
  return facets;
}

}  // namespace

TriangleMesh load_mesh(std::span<const std::byte> bytes) {
  std::vector<std::array<Vec3, 3>> facets;
  bool parsed = false;
  if (bytes.size() >= 84) {
    std::uint32_t n = 0;
    for (int b = 0; b < 4; ++b) n |= static_cast<std::uint32_t>(std::to_integer<unsigned>(bytes[80 + b])) << (8 * b);
    if (bytes.size() == 84 + 50ull * n) {
      facets = parse_binary(bytes, n);
      parsed = true;
    }
  }
  if (!parsed) {
    std::string_view text(reinterpret_cast<const char*>(bytes.data()), bytes.size());
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos || text.substr(first, 5) != "solid") {
      throw ParseError("not a binary STL (size mismatch) and not an ASCII STL");
    }
    facets = parse_ascii(text.substr(first));
  }
  if (facets.empty()) throw ParseError("STL contains no facets");
  TriangleMesh m = weld(facets);
  validate(m);
  return m;
}

TriangleMesh load_mesh_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open mesh file " + path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return load_mesh(std::as_bytes(std::span<const char>(raw)));
}

std::vector<std::byte> to_binary_stl(const TriangleMesh& m, const std::string& header) {
  std::vector<std::byte> out;
  out.reserve(84 + 50 * m.triangles.size());
  for (std::size_t i = 0; i < 80; ++i) {
    out.push_back(static_cast<std::byte>(i < header.size() ? header[i] : ' '));
  }
  const auto n = static_cast<std::uint32_t>(m.triangles.size());
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::byte>((n >> (8 * b)) & 0xffu));
  for (const auto& t : m.triangles) {
    const Vec3& a = m.vertices[t[0]];
    const Vec3& b = m.vertices[t[1]];
    const Vec3& c = m.vertices[t[2]];
    Vec3 nrm = (b - a).cross(c - a);
    if (nrm.norm() > 0) nrm.normalize();
    for (int k = 0; k < 3; ++k) write_f32(out, static_cast<float>(nrm[k]));
    for (const Vec3* v : {&a, &b, &c})
      for (int k = 0; k < 3; ++k) write_f32(out, static_cast<float>((*v)[k]));
    out.push_back(std::byte{0});
    out.push_back(std::byte{0});
  }
  return out;
}

void write_binary_stl(const std::filesystem::path& path, const TriangleMesh& m) {
  const auto bytes = to_binary_stl(m);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::string to_ascii_stl(const TriangleMesh& m, const std::string& name) {
  std::ostringstream os;
  os.precision(17);
  os << "solid " << name << "\n";
  for (const auto& t : m.triangles) {
    const Vec3& a = m.vertices[t[0]];
    const Vec3& b = m.vertices[t[1]];
    const Vec3& c = m.vertices[t[2]];
    Vec3 nrm = (b - a).cross(c - a);
    if (nrm.norm() > 0) nrm.normalize();
    os << "  facet normal " << nrm.x() << ' ' << nrm.y() << ' ' << nrm.z() << "\n    outer loop\n";
    for (const Vec3* v : {&a, &b, &c}) os << "      vertex " << v->x() << ' ' << v->y() << ' ' << v->z() << "\n";
    os << "    endloop\n  endfacet\n";
  }
  os << "endsolid " << name << "\n";
  return os.str();
}

}  // namespace stockopt::geometry
