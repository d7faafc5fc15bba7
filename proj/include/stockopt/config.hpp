#pragma once

#include "stockopt/box.hpp"
#include "stockopt/build_sim.hpp"
#include "stockopt/optimizer.hpp"
#include "stockopt/stock.hpp"

#include <json.hpp>

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace stockopt::pipeline {

enum class Mode { Physical, Analytic };

/// One design parameter: a range [lo, hi] or a fixed value.
struct ParameterSpec {
  std::string name;
  bool fixed{false};
  double lo{0.0}, hi{0.0};
  double value{0.0};  ///< used when fixed
};

inline constexpr std::array<const char*, 3> kParameterNames{"offset", "grid_resolution", "wall_thickness"};

struct PipelineConfig {
  static constexpr int kSchemaVersion = 1;

  Mode mode{Mode::Physical};
  std::filesystem::path mesh_path;       ///< physical mode: nominal STL ...
  std::optional<geometry::Vec3> box_size;///< ... or a synthetic box at the origin
  double voxel_size{0.0};
  bool subvoxel_offset{true};
  double beta{stock::kDefaultVoidFraction};
  bool exclude_base{true};

  std::array<ParameterSpec, 3> parameters;  ///< offset, grid_resolution, wall_thickness
  double tolerance{0.04};                   ///< machining tolerance tau (mm)

  sim::MaterialParams material;
  sim::BuildConfig build;

  int w_min{2};
  int w_max{5};
  double stop_tolerance{1e-4};

  opt::SolverOptions optimizer;

  int jobs{1};
  std::filesystem::path cache_dir;  ///< empty: in-memory cache only
  bool include_timings{false};

  std::string objective_expr;   ///< analytic mode
  std::string constraint_expr;

  /// Indices of the non-fixed parameters, in order.
  std::vector<int> active() const;
  std::vector<std::string> active_names() const;
  /// Parameter box over the active parameters.
  Box gamma() const;
  /// Full parameter triple from a point of gamma().
  stock::StockParams params_at(std::span<const double> point) const;

  /// Everything that influences an evaluation, as canonical JSON.
  nlohmann::json evaluation_key() const;

  /// Throws ConfigError.
  void validate() const;
};

/// Parses a TOML document. Relative mesh and cache paths resolve against base_dir.
/// Throws ConfigError naming the key.
PipelineConfig parse_config(std::string_view toml_text, const std::filesystem::path& base_dir = {});
PipelineConfig load_config(const std::filesystem::path& path);

}  // namespace stockopt::pipeline
