#include "stockopt/build_sim.hpp"
#include "stockopt/error.hpp"

#include <fstream>
#include <stdexcept>

namespace stockopt::sim {

void write_vtk(const std::filesystem::path& path, const FemModel& model, const std::vector<std::uint8_t>& active,
               const std::vector<Vec3>& displacement) {
  if (active.size() != model.elements.size()) throw std::invalid_argument("write_vtk: active mask size mismatch");
  if (displacement.size() != model.nodes.size()) throw std::invalid_argument("write_vtk: displacement size mismatch");
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out.precision(12);

  std::size_t cells = 0;
  for (auto a : active) cells += a ? 1 : 0;

  out << "# vtk DataFile Version 3.0\nstockopt build step\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  out << "POINTS " << model.nodes.size() << " double\n";
  for (const auto& p : model.nodes) out << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
  out << "CELLS " << cells << ' ' << 9 * cells << '\n';
  for (std::size_t e = 0; e < model.elements.size(); ++e) {
    if (!active[e]) continue;
    out << 8;
    for (int n : model.elements[e]) out << ' ' << n;
    out << '\n';
  }
  out << "CELL_TYPES " << cells << '\n';
  for (std::size_t c = 0; c < cells; ++c) out << "12\n";
  out << "CELL_DATA " << cells << "\nSCALARS layer int 1\nLOOKUP_TABLE default\n";
  for (std::size_t e = 0; e < model.elements.size(); ++e)
    if (active[e]) out << model.element_layer[e] << '\n';
  out << "POINT_DATA " << model.nodes.size() << "\nVECTORS displacement double\n";
  for (const auto& u : displacement) out << u.x() << ' ' << u.y() << ' ' << u.z() << '\n';
  if (!out) throw Error("failed writing " + path.string());
}

}  // namespace stockopt::sim
