#pragma once

#include "stockopt/config.hpp"
#include "stockopt/expression.hpp"
#include "stockopt/metrics.hpp"
#include "stockopt/sparse_grid.hpp"

#include <json.hpp>

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace stockopt::pipeline {

/// 64-bit FNV-1a, rendered as 16 hex digits.
std::string fnv1a_hex(std::string_view bytes);

/// Physical-mode quantities of one evaluation.
struct PhysicalStats {
  double h{0.0};
  int offset_cells{0};
  double skin_mm{0.0};
  std::size_t stock_voxels{0}, cavity_voxels{0}, nominal_voxels{0};
  double remaining_material{1.0};
  double warped_volume{0.0}, cavities_volume{0.0}, nominal_volume{0.0};
  std::size_t elements{0}, nodes{0}, surface_points{0};
  int steps{0};
  double max_residual{0.0};
  long cg_iterations{0};
  double max_displacement{0.0};
};

struct EvaluationRecord {
  std::vector<double> point;  ///< coordinates in the parameter box
  stock::StockParams params;
  double objective{0.0};      ///< delta volume (mm^3) in physical mode
  double constraint{0.0};     ///< tau - delta thickness (mm) in physical mode
  std::optional<double> delta_volume, delta_thickness;
  std::optional<PhysicalStats> stats;
  std::map<std::string, double> timings;  ///< seconds per stage, only with include_timings
  std::string config_hash;

  nlohmann::json to_json() const;
  static EvaluationRecord from_json(const nlohmann::json& j);
};

/// Nominal geometry prepared once per run.
struct PreparedNominal {
  geometry::TriangleMesh mesh;
  geometry::VoxelModel voxels;
  double volume{0.0};  ///< voxel volume, consistent with the stock volumes
  metrics::SignedDistanceQuery query;
  std::string content_hash;
};

std::shared_ptr<const PreparedNominal> prepare_nominal(const PipelineConfig& cfg);

/// Point-keyed record store: memory plus an optional directory
/// <dir>/<config-hash>/<point-hash>.json. Thread-safe.
class EvaluationCache {
public:
  EvaluationCache(std::filesystem::path dir, std::string config_hash);

  static std::string point_key(std::span<const double> point);

  std::optional<EvaluationRecord> find(std::span<const double> point);
  void insert(const EvaluationRecord& r);

  std::size_t hits() const { return hits_; }
  std::size_t misses() const { return misses_; }
  const std::string& config_hash() const { return hash_; }

private:
  std::filesystem::path dir_;
  std::string hash_;
  std::mutex mu_;
  std::map<std::string, EvaluationRecord> memory_;
  std::atomic<std::size_t> hits_{0}, misses_{0};
};

struct LevelResult {
  int w{0};
  std::size_t design_points{0};
  std::vector<double> p_star;
  double optimal_volume{0.0};  ///< surrogate objective at p*
  double constraint{0.0};      ///< surrogate constraint at p*
  bool feasible{false};
  std::string method;
  std::size_t interpolant_evaluations{0};
  double wall_time{0.0};
  std::size_t new_evaluations{0};
  std::size_t cache_hits{0};
  std::optional<double> change;  ///< |p*_w - p*_(w-1)|_inf

  nlohmann::json to_json() const;
  static LevelResult from_json(const nlohmann::json& j);
};

struct Report {
  int schema_version{1};
  std::string config_hash;
  std::vector<std::string> parameter_names;
  std::vector<LevelResult> levels;
  bool stopped_early{false};
  std::vector<double> optimum;
  stock::StockParams optimum_params;
  double surrogate_objective{0.0}, surrogate_constraint{0.0};
  bool feasible{false};
  std::optional<EvaluationRecord> truth;  ///< full model at the optimum
  double objective_gap{0.0}, constraint_gap{0.0};  ///< truth - surrogate

  nlohmann::json to_json() const;
  static Report from_json(const nlohmann::json& j);
};

enum class ReportFormat { Json, Csv };
std::string emit_report(const Report& r, ReportFormat format);
std::string csv_header(const std::vector<std::string>& parameter_names);

class Pipeline {
public:
  explicit Pipeline(PipelineConfig cfg);

  const PipelineConfig& config() const { return cfg_; }
  const std::string& config_hash() const { return hash_; }
  EvaluationCache& cache() { return *cache_; }

  /// Uncached full evaluation at a point of the parameter box.
  EvaluationRecord evaluate_uncached(std::span<const double> point) const;
  /// Cached evaluation.
  EvaluationRecord evaluate(std::span<const double> point);
  /// Concurrent evaluation of many points; results in input order. Throws LevelFailed
  /// for the first failing point (in input order), tagged with `level`.
  std::vector<EvaluationRecord> evaluate_all(const std::vector<std::vector<double>>& points, int level);

  stock::StockModel stock_at(std::span<const double> point) const;

  std::pair<LevelResult, sg::SparseGridSurrogate> run_level(int w);
  Report run();

private:
  PipelineConfig cfg_;
  std::shared_ptr<const PreparedNominal> nominal_;
  std::optional<Expression> objective_, constraint_;
  std::string hash_;
  std::unique_ptr<EvaluationCache> cache_;
};

/// One-shot physical or analytic evaluation with a fresh pipeline.
EvaluationRecord evaluate_design(const stock::StockParams& p, const PipelineConfig& cfg);

}  // namespace stockopt::pipeline
