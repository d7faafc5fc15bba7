#include "stockopt/pipeline.hpp"

#include "stockopt/error.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <sstream>
#include <thread>

namespace stockopt::pipeline {

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) out[i] = digits[h & 0xf];
  return out;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

nlohmann::json params_json(const stock::StockParams& p) {
  return {{"offset", p.offset_mm}, {"grid_resolution", p.grid_resolution}, {"wall_thickness", p.wall_thickness_mm}};
}

stock::StockParams params_from(const nlohmann::json& j) {
  return {j.at("offset").get<double>(), j.at("grid_resolution").get<double>(), j.at("wall_thickness").get<double>()};
}

template <class T>
nlohmann::json opt_json(const std::optional<T>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

template <class T>
std::optional<T> opt_from(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

std::string point_text(std::span<const double> p) {
  std::ostringstream os;
  os.precision(12);
  os << '(';
  for (std::size_t i = 0; i < p.size(); ++i) os << (i ? ", " : "") << p[i];
  os << ')';
  return os.str();
}

}  // namespace

// --------------------------------------------------------------------------

nlohmann::json EvaluationRecord::to_json() const {
  nlohmann::json j{{"point", point},
                   {"params", params_json(params)},
                   {"objective", objective},
                   {"constraint", constraint},
                   {"delta_volume", opt_json(delta_volume)},
                   {"delta_thickness", opt_json(delta_thickness)},
                   {"config_hash", config_hash}};
  if (stats) {
    const auto& s = *stats;
    j["stats"] = {{"h", s.h},
                  {"offset_cells", s.offset_cells},
                  {"skin_mm", s.skin_mm},
                  {"stock_voxels", s.stock_voxels},
                  {"cavity_voxels", s.cavity_voxels},
                  {"nominal_voxels", s.nominal_voxels},
                  {"remaining_material", s.remaining_material},
                  {"warped_volume", s.warped_volume},
                  {"cavities_volume", s.cavities_volume},
                  {"nominal_volume", s.nominal_volume},
                  {"elements", s.elements},
                  {"nodes", s.nodes},
                  {"surface_points", s.surface_points},
                  {"steps", s.steps},
                  {"max_residual", s.max_residual},
                  {"cg_iterations", s.cg_iterations},
                  {"max_displacement", s.max_displacement}};
  }
  if (!timings.empty()) j["timings"] = timings;
  return j;
}

EvaluationRecord EvaluationRecord::from_json(const nlohmann::json& j) {
  EvaluationRecord r;
  r.point = j.at("point").get<std::vector<double>>();
  r.params = params_from(j.at("params"));
  r.objective = j.at("objective").get<double>();
  r.constraint = j.at("constraint").get<double>();
  r.delta_volume = opt_from<double>(j, "delta_volume");
  r.delta_thickness = opt_from<double>(j, "delta_thickness");
  r.config_hash = j.at("config_hash").get<std::string>();
  if (j.contains("stats")) {
    const auto& s = j.at("stats");
    PhysicalStats p;
    p.h = s.at("h");
    p.offset_cells = s.at("offset_cells");
    p.skin_mm = s.at("skin_mm");
    p.stock_voxels = s.at("stock_voxels");
    p.cavity_voxels = s.at("cavity_voxels");
    p.nominal_voxels = s.at("nominal_voxels");
    p.remaining_material = s.at("remaining_material");
    p.warped_volume = s.at("warped_volume");
    p.cavities_volume = s.at("cavities_volume");
    p.nominal_volume = s.at("nominal_volume");
    p.elements = s.at("elements");
    p.nodes = s.at("nodes");
    p.surface_points = s.at("surface_points");
    p.steps = s.at("steps");
    p.max_residual = s.at("max_residual");
    p.cg_iterations = s.at("cg_iterations");
    p.max_displacement = s.at("max_displacement");
    r.stats = p;
  }
  if (j.contains("timings")) r.timings = j.at("timings").get<std::map<std::string, double>>();
  return r;
}

// --------------------------------------------------------------------------

std::shared_ptr<const PreparedNominal> prepare_nominal(const PipelineConfig& cfg) {
  geometry::TriangleMesh mesh;
  std::string hash;
  if (cfg.box_size) {
    mesh = geometry::make_box_mesh(geometry::Vec3::Zero(), *cfg.box_size);
    hash = "box";
  } else {
    std::ifstream in(cfg.mesh_path, std::ios::binary);
    if (!in) throw ConfigError("geometry.mesh", "cannot open " + cfg.mesh_path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    const std::string bytes = ss.str();
    mesh = geometry::load_mesh(std::as_bytes(std::span<const char>(bytes.data(), bytes.size())));
    hash = fnv1a_hex(bytes);
  }
  auto voxels = geometry::voxelize(mesh, cfg.voxel_size);
  const double volume = geometry::voxel_volume(voxels);
  geometry::TriangleMesh copy = mesh;
  return std::make_shared<const PreparedNominal>(
      PreparedNominal{std::move(mesh), std::move(voxels), volume, metrics::SignedDistanceQuery(std::move(copy)), hash});
}

// --------------------------------------------------------------------------

EvaluationCache::EvaluationCache(std::filesystem::path dir, std::string config_hash)
    : dir_(std::move(dir)), hash_(std::move(config_hash)) {}

std::string EvaluationCache::point_key(std::span<const double> point) {
  nlohmann::json q = nlohmann::json::array();
  for (double x : point) q.push_back(static_cast<std::int64_t>(std::llround(x * 1e9)));
  return fnv1a_hex(q.dump());
}

std::optional<EvaluationRecord> EvaluationCache::find(std::span<const double> point) {
  const std::string key = point_key(point);
  {
    std::lock_guard lock(mu_);
    if (auto it = memory_.find(key); it != memory_.end()) {
      ++hits_;
      return it->second;
    }
  }
  if (!dir_.empty()) {
    const auto file = dir_ / hash_ / (key + ".json");
    std::ifstream in(file);
    if (in) {
      try {
        auto r = EvaluationRecord::from_json(nlohmann::json::parse(in));
        if (r.config_hash == hash_) {
          std::lock_guard lock(mu_);
          memory_.emplace(key, r);
          ++hits_;
          return r;
        }
      } catch (const std::exception&) {
        // unreadable entry: recompute and overwrite
      }
    }
  }
  ++misses_;
  return std::nullopt;
}

void EvaluationCache::insert(const EvaluationRecord& r) {
  const std::string key = point_key(r.point);
  {
    std::lock_guard lock(mu_);
    memory_.insert_or_assign(key, r);
  }
  if (dir_.empty()) return;
  const auto folder = dir_ / hash_;
  std::filesystem::create_directories(folder);
  const auto tmp = folder / (key + ".json.tmp" + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id())));
  {
    std::ofstream out(tmp);
    if (!out) throw Error("cannot write cache entry " + tmp.string());
    out << r.to_json().dump(2) << '\n';
  }
  std::filesystem::rename(tmp, folder / (key + ".json"));
}

// --------------------------------------------------------------------------

nlohmann::json LevelResult::to_json() const {
  return {{"w", w},
          {"design_points", design_points},
          {"p_star", p_star},
          {"optimal_volume", optimal_volume},
          {"constraint", constraint},
          {"feasible", feasible},
          {"method", method},
          {"interpolant_evaluations", interpolant_evaluations},
          {"wall_time", wall_time},
          {"new_evaluations", new_evaluations},
          {"cache_hits", cache_hits},
          {"change", opt_json(change)}};
}

LevelResult LevelResult::from_json(const nlohmann::json& j) {
  LevelResult l;
  l.w = j.at("w");
  l.design_points = j.at("design_points");
  l.p_star = j.at("p_star").get<std::vector<double>>();
  l.optimal_volume = j.at("optimal_volume");
  l.constraint = j.at("constraint");
  l.feasible = j.at("feasible");
  l.method = j.at("method");
  l.interpolant_evaluations = j.at("interpolant_evaluations");
  l.wall_time = j.at("wall_time");
  l.new_evaluations = j.at("new_evaluations");
  l.cache_hits = j.at("cache_hits");
  l.change = opt_from<double>(j, "change");
  return l;
}

nlohmann::json Report::to_json() const {
  nlohmann::json lv = nlohmann::json::array();
  for (const auto& l : levels) lv.push_back(l.to_json());
  return {{"schema_version", schema_version},
          {"config_hash", config_hash},
          {"parameters", parameter_names},
          {"levels", lv},
          {"stopped_early", stopped_early},
          {"optimum",
           {{"point", optimum},
            {"params", params_json(optimum_params)},
            {"feasible", feasible},
            {"surrogate", {{"objective", surrogate_objective}, {"constraint", surrogate_constraint}}},
            {"truth", truth ? truth->to_json() : nlohmann::json(nullptr)},
            {"gap", {{"objective", objective_gap}, {"constraint", constraint_gap}}}}}};
}

Report Report::from_json(const nlohmann::json& j) {
  try {
    Report r;
    r.schema_version = j.at("schema_version");
    if (r.schema_version != 1) throw ParseError("report: unsupported schema_version");
    r.config_hash = j.at("config_hash");
    r.parameter_names = j.at("parameters").get<std::vector<std::string>>();
    for (const auto& l : j.at("levels")) r.levels.push_back(LevelResult::from_json(l));
    r.stopped_early = j.at("stopped_early");
    const auto& o = j.at("optimum");
    r.optimum = o.at("point").get<std::vector<double>>();
    r.optimum_params = params_from(o.at("params"));
    r.feasible = o.at("feasible");
    r.surrogate_objective = o.at("surrogate").at("objective");
    r.surrogate_constraint = o.at("surrogate").at("constraint");
    if (!o.at("truth").is_null()) r.truth = EvaluationRecord::from_json(o.at("truth"));
    r.objective_gap = o.at("gap").at("objective");
    r.constraint_gap = o.at("gap").at("constraint");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("report: ") + e.what());
  }
}

std::string csv_header(const std::vector<std::string>& parameter_names) {
  std::string h = "w,design_points";
  for (const auto& n : parameter_names) h += ",optimal_" + n;
  h += ",optimal_volume,method,interpolant_evaluations,wall_time";
  return h;
}

std::string emit_report(const Report& r, ReportFormat format) {
  if (format == ReportFormat::Json) return r.to_json().dump(2) + "\n";
  std::string out = csv_header(r.parameter_names) + "\n";
  auto num = [](double v) { return nlohmann::json(v).dump(); };
  for (const auto& l : r.levels) {
    out += std::to_string(l.w) + "," + std::to_string(l.design_points);
    for (double p : l.p_star) out += "," + num(p);
    out += "," + num(l.optimal_volume) + "," + l.method + "," + std::to_string(l.interpolant_evaluations) + "," +
           num(l.wall_time) + "\n";
  }
  return out;
}

// --------------------------------------------------------------------------

Pipeline::Pipeline(PipelineConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  std::string key = cfg_.evaluation_key().dump();
  if (cfg_.mode == Mode::Physical) {
    nominal_ = prepare_nominal(cfg_);
    key += nominal_->content_hash;
  } else {
    const int n = static_cast<int>(cfg_.active().size());
    objective_ = Expression::parse(cfg_.objective_expr, n);
    constraint_ = Expression::parse(cfg_.constraint_expr, n);
  }
  hash_ = fnv1a_hex(key);
  cache_ = std::make_unique<EvaluationCache>(cfg_.cache_dir, hash_);
}

stock::StockModel Pipeline::stock_at(std::span<const double> point) const {
  if (!nominal_) throw ConfigError("mode", "stock geometry needs physical mode");
  return stock::assemble_stock(nominal_->voxels, cfg_.params_at(point), cfg_.beta, cfg_.subvoxel_offset);
}

EvaluationRecord Pipeline::evaluate_uncached(std::span<const double> point) const {
  EvaluationRecord r;
  r.point.assign(point.begin(), point.end());
  r.params = cfg_.params_at(point);
  r.config_hash = hash_;
  if (cfg_.mode == Mode::Analytic) {
    r.objective = (*objective_)(point);
    r.constraint = (*constraint_)(point);
    return r;
  }

  auto t = Clock::now();
  auto lap = [&](const char* stage) {
    if (cfg_.include_timings) r.timings[stage] = seconds_since(t);
    t = Clock::now();
  };
  const auto s = stock::assemble_stock(nominal_->voxels, r.params, cfg_.beta, cfg_.subvoxel_offset);
  lap("stock");
  const auto model = sim::build_fem_model(s);
  lap("mesh");
  const auto warp = sim::simulate_build(model, cfg_.material, cfg_.build);
  lap("simulation");
  const auto cloud = sim::warped_surface(s, model, warp, cfg_.exclude_base);
  const double thickness = metrics::delta_thickness(cloud, nominal_->query);
  lap("distance");
  const double warped = sim::warped_volume(model, warp);
  const double cavities = geometry::voxel_volume(s.cavities);
  const double dv = metrics::delta_volume(warped, cavities, nominal_->volume);
  lap("volume");

  r.delta_volume = dv;
  r.delta_thickness = thickness;
  r.objective = dv;
  r.constraint = cfg_.tolerance - thickness;
  PhysicalStats st;
  st.h = s.h();
  st.offset_cells = s.offset_cells;
  st.skin_mm = s.skin_mm;
  st.stock_voxels = s.stock.count();
  st.cavity_voxels = s.cavities.count();
  st.nominal_voxels = s.nominal.count();
  st.remaining_material = stock::remaining_material_fraction(s);
  st.warped_volume = warped;
  st.cavities_volume = cavities;
  st.nominal_volume = nominal_->volume;
  st.elements = model.element_count();
  st.nodes = model.node_count();
  st.surface_points = cloud.size();
  st.steps = warp.steps;
  for (double res : warp.residuals) st.max_residual = std::max(st.max_residual, res);
  for (int it : warp.iterations) st.cg_iterations += it;
  st.max_displacement = warp.max_displacement();
  r.stats = st;
  return r;
}

EvaluationRecord Pipeline::evaluate(std::span<const double> point) {
  if (auto hit = cache_->find(point)) return *hit;
  auto r = evaluate_uncached(point);
  cache_->insert(r);
  return r;
}

std::vector<EvaluationRecord> Pipeline::evaluate_all(const std::vector<std::vector<double>>& points, int level) {
  const std::size_t n = points.size();
  std::vector<std::optional<EvaluationRecord>> out(n);
  std::vector<std::size_t> missing;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = cache_->find(points[i]);
    if (!out[i]) missing.push_back(i);
  }
  std::vector<std::string> errors(n);
  std::vector<std::uint8_t> failed(n, 0);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < missing.size(); k = next++) {
      const std::size_t i = missing[k];
      try {
        auto r = evaluate_uncached(points[i]);
        cache_->insert(r);
        out[i] = std::move(r);
      } catch (const std::exception& e) {
        errors[i] = e.what();
        failed[i] = 1;
      }
    }
  };
  const std::size_t threads = std::min<std::size_t>(static_cast<std::size_t>(cfg_.jobs), missing.size());
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  std::vector<EvaluationRecord> result;
  result.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (failed[i])
      throw LevelFailed(level, points[i],
                        "level " + std::to_string(level) + ": design point " + point_text(points[i]) +
                            " failed: " + errors[i]);
    result.push_back(std::move(*out[i]));
  }
  return result;
}

std::pair<LevelResult, sg::SparseGridSurrogate> Pipeline::run_level(int w) {
  const auto t0 = Clock::now();
  const Box box = cfg_.gamma();
  const auto nodes = sg::enumerate_points(box.dim(), w);
  std::vector<std::vector<double>> points;
  points.reserve(nodes.size());
  for (const auto& g : nodes) points.push_back(box.from_unit(g.coordinates()));

  const std::size_t hits0 = cache_->hits(), misses0 = cache_->misses();
  const auto records = evaluate_all(points, w);
  std::vector<double> F, G;
  for (const auto& r : records) {
    F.push_back(r.objective);
    G.push_back(r.constraint);
  }
  sg::SparseGridSurrogate sur(box, w, std::move(F), std::move(G));
  const auto outcome = opt::solve_constrained(sur, cfg_.optimizer);

  LevelResult lr;
  lr.w = w;
  lr.design_points = nodes.size();
  lr.p_star = outcome.best;
  lr.optimal_volume = outcome.F_best;
  lr.constraint = outcome.G_best;
  lr.feasible = outcome.feasible;
  lr.method = outcome.method;
  lr.interpolant_evaluations = outcome.total_evaluations;
  lr.cache_hits = cache_->hits() - hits0;
  lr.new_evaluations = cache_->misses() - misses0;
  lr.wall_time = cfg_.include_timings ? seconds_since(t0) : 0.0;
  return {lr, std::move(sur)};
}

Report Pipeline::run() {
  Report rep;
  rep.config_hash = hash_;
  rep.parameter_names = cfg_.active_names();
  std::optional<sg::SparseGridSurrogate> last;
  for (int w = cfg_.w_min; w <= cfg_.w_max; ++w) {
    auto [lr, sur] = run_level(w);
    if (!rep.levels.empty()) {
      const auto& prev = rep.levels.back().p_star;
      double change = 0.0;
      for (std::size_t d = 0; d < prev.size(); ++d) change = std::max(change, std::abs(lr.p_star[d] - prev[d]));
      lr.change = change;
    }
    rep.levels.push_back(lr);
    last.emplace(std::move(sur));
    if (lr.change && *lr.change < cfg_.stop_tolerance) {
      rep.stopped_early = w < cfg_.w_max;
      break;
    }
  }
  const auto& fin = rep.levels.back();
  rep.optimum = fin.p_star;
  rep.optimum_params = cfg_.params_at(fin.p_star);
  rep.surrogate_objective = fin.optimal_volume;
  rep.surrogate_constraint = fin.constraint;
  rep.feasible = fin.feasible;
  rep.truth = evaluate(fin.p_star);
  rep.objective_gap = rep.truth->objective - rep.surrogate_objective;
  rep.constraint_gap = rep.truth->constraint - rep.surrogate_constraint;
  return rep;
}

EvaluationRecord evaluate_design(const stock::StockParams& p, const PipelineConfig& cfg) {
  PipelineConfig c = cfg;
  const std::array<double, 3> v{p.offset_mm, p.grid_resolution, p.wall_thickness_mm};
  std::vector<double> point;
  for (int i = 0; i < 3; ++i) {
    if (c.parameters[i].fixed) c.parameters[i].value = v[i];
    else point.push_back(v[i]);
  }
  Pipeline pl(std::move(c));
  return pl.evaluate_uncached(point);
}

}  // namespace stockopt::pipeline
