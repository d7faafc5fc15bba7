#include "stockopt/config.hpp"

#include "stockopt/error.hpp"
#include "stockopt/expression.hpp"

#include <toml.hpp>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace stockopt::pipeline {

std::vector<int> PipelineConfig::active() const {
  std::vector<int> a;
  for (int i = 0; i < 3; ++i)
    if (!parameters[i].fixed) a.push_back(i);
  return a;
}

std::vector<std::string> PipelineConfig::active_names() const {
  std::vector<std::string> n;
  for (int i : active()) n.push_back(parameters[i].name);
  return n;
}

Box PipelineConfig::gamma() const {
  std::vector<double> lo, hi;
  for (int i : active()) {
    lo.push_back(parameters[i].lo);
    hi.push_back(parameters[i].hi);
  }
  return Box(lo, hi);
}

stock::StockParams PipelineConfig::params_at(std::span<const double> point) const {
  const auto a = active();
  if (point.size() != a.size())
    throw std::invalid_argument("expected " + std::to_string(a.size()) + " parameter values, got " +
                                std::to_string(point.size()));
  std::array<double, 3> v{};
  for (int i = 0; i < 3; ++i) v[i] = parameters[i].value;
  for (std::size_t k = 0; k < a.size(); ++k) v[a[k]] = point[k];
  return {v[0], v[1], v[2]};
}

nlohmann::json PipelineConfig::evaluation_key() const {
  nlohmann::json params = nlohmann::json::array();
  for (const auto& p : parameters) {
    if (p.fixed) params.push_back({{"name", p.name}, {"value", p.value}});
    else params.push_back({{"name", p.name}, {"range", {p.lo, p.hi}}});
  }
  nlohmann::json j{{"schema_version", kSchemaVersion},
                   {"mode", mode == Mode::Physical ? "physical" : "analytic"},
                   {"parameters", params},
                   {"tolerance", tolerance}};
  if (mode == Mode::Analytic) {
    j["analytic"] = {{"objective", objective_expr}, {"constraint", constraint_expr}};
    return j;
  }
  j["geometry"] = {{"voxel_size", voxel_size},
                   {"subvoxel_offset", subvoxel_offset},
                   {"cavity_void_fraction", beta},
                   {"exclude_base", exclude_base}};
  if (box_size) j["geometry"]["box"] = {box_size->x(), box_size->y(), box_size->z()};
  j["material"] = {{"young_modulus", material.young_modulus},
                   {"poisson_ratio", material.poisson_ratio},
                   {"thermal_expansion", material.thermal_expansion},
                   {"deposition_temperature", material.deposition_temperature},
                   {"reference_temperature", material.reference_temperature}};
  j["build"] = {{"layers_per_activation", build.layers_per_activation},
                {"inherent_strain", build.strain(material)},
                {"support_spring", build.support_spring},
                {"cg_rel_tol", build.cg_rel_tol},
                {"cg_max_iter", build.cg_max_iter}};
  return j;
}

void PipelineConfig::validate() const {
  if (mode == Mode::Physical) {
    if (mesh_path.empty() == !box_size) throw ConfigError("geometry", "exactly one of 'mesh' and 'box' is required");
    if (box_size && !(box_size->minCoeff() > 0.0)) throw ConfigError("geometry.box", "extents must be positive");
    if (!(voxel_size > 0.0)) throw ConfigError("geometry.voxel_size", "must be positive");
    if (!(beta > 0.0 && beta < 1.0)) throw ConfigError("geometry.cavity_void_fraction", "must lie in (0, 1)");
  } else {
    if (objective_expr.empty()) throw ConfigError("analytic.objective", "required in analytic mode");
    if (constraint_expr.empty()) throw ConfigError("analytic.constraint", "required in analytic mode");
  }
  int n_active = 0;
  for (const auto& p : parameters) {
    const std::string key = "parameters." + p.name;
    if (p.fixed) {
      if (!std::isfinite(p.value)) throw ConfigError(key, "must be finite");
    } else {
      ++n_active;
      if (!(std::isfinite(p.lo) && std::isfinite(p.hi))) throw ConfigError(key, "bounds must be finite");
      if (!(p.lo < p.hi)) throw ConfigError(key, "min must be smaller than max");
    }
    const double lo = p.fixed ? p.value : p.lo;
    if (mode == Mode::Physical) {
      if (p.name == "grid_resolution" && !(lo > 0.0)) throw ConfigError(key, "must be positive");
      if (p.name != "grid_resolution" && lo < 0.0) throw ConfigError(key, "must be non-negative");
    }
  }
  if (n_active == 0) throw ConfigError("parameters", "at least one parameter must be a range");
  if (!(tolerance > 0.0)) throw ConfigError("constraint.machining_tolerance", "must be positive");
  try {
    material.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("material", e.what());
  }
  try {
    build.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("build", e.what());
  }
  if (w_min < 1) throw ConfigError("sparse_grid.w_min", "must be >= 1");
  if (w_max < w_min) throw ConfigError("sparse_grid.w_max", "must be >= w_min");
  if (w_max > 12) throw ConfigError("sparse_grid.w_max", "must be <= 12");
  if (!(stop_tolerance > 0.0)) throw ConfigError("sparse_grid.stop_tolerance", "must be positive");
  try {
    optimizer.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("optimizer", e.what());
  }
  if (jobs < 1) throw ConfigError("run.jobs", "must be >= 1");
}

// --------------------------------------------------------------------------

namespace {

std::string join(const std::string& prefix, std::string_view key) {
  return prefix.empty() ? std::string(key) : prefix + "." + std::string(key);
}

void reject_unknown(const toml::table& t, const std::string& prefix, std::initializer_list<std::string_view> allowed) {
  const std::set<std::string_view> ok(allowed);
  for (auto&& [k, v] : t) {
    if (!ok.count(k.str())) throw ConfigError(join(prefix, k.str()), "unknown key");
  }
}

const toml::table* table_at(const toml::table& t, std::string_view key, const std::string& prefix) {
  const toml::node* n = t.get(key);
  if (!n) return nullptr;
  if (!n->is_table()) throw ConfigError(join(prefix, key), "expected a table");
  return n->as_table();
}

std::optional<double> number(const toml::table& t, std::string_view key, const std::string& prefix) {
  const toml::node* n = t.get(key);
  if (!n) return std::nullopt;
  if (!n->is_number()) throw ConfigError(join(prefix, key), "expected a number");
  return n->value<double>();
}

std::optional<std::int64_t> integer(const toml::table& t, std::string_view key, const std::string& prefix) {
  const toml::node* n = t.get(key);
  if (!n) return std::nullopt;
  if (!n->is_integer()) throw ConfigError(join(prefix, key), "expected an integer");
  return n->value<std::int64_t>();
}

std::optional<bool> boolean(const toml::table& t, std::string_view key, const std::string& prefix) {
  const toml::node* n = t.get(key);
  if (!n) return std::nullopt;
  if (!n->is_boolean()) throw ConfigError(join(prefix, key), "expected true or false");
  return n->value<bool>();
}

std::optional<std::string> string(const toml::table& t, std::string_view key, const std::string& prefix) {
  const toml::node* n = t.get(key);
  if (!n) return std::nullopt;
  if (!n->is_string()) throw ConfigError(join(prefix, key), "expected a string");
  return n->value<std::string>();
}

std::vector<double> numbers(const toml::node& n, const std::string& key, std::size_t count) {
  const toml::array* a = n.as_array();
  if (!a || a->size() != count) throw ConfigError(key, "expected an array of " + std::to_string(count) + " numbers");
  std::vector<double> out;
  for (const auto& e : *a) {
    if (!e.is_number()) throw ConfigError(key, "expected an array of " + std::to_string(count) + " numbers");
    out.push_back(*e.value<double>());
  }
  return out;
}

template <class T>
void assign(T& field, const std::optional<T>& v) {
  if (v) field = *v;
}

int to_int(std::optional<std::int64_t> v, const std::string& key, int fallback) {
  if (!v) return fallback;
  if (*v < std::numeric_limits<int>::min() || *v > std::numeric_limits<int>::max())
    throw ConfigError(key, "integer out of range");
  return static_cast<int>(*v);
}

}  // namespace

PipelineConfig parse_config(std::string_view toml_text, const std::filesystem::path& base_dir) {
  toml::table root;
  try {
    root = toml::parse(toml_text);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << e.description() << " (line " << e.source().begin.line << ", column " << e.source().begin.column << ")";
    throw ConfigError("", "malformed TOML: " + os.str());
  }
  reject_unknown(root, "",
                 {"schema_version", "mode", "geometry", "parameters", "constraint", "material", "build", "sparse_grid",
                  "optimizer", "run", "analytic"});

  PipelineConfig c;
  const auto version = integer(root, "schema_version", "");
  if (version && *version != PipelineConfig::kSchemaVersion)
    throw ConfigError("schema_version", "unsupported version " + std::to_string(*version));

  if (const auto m = string(root, "mode", "")) {
    if (*m == "physical") c.mode = Mode::Physical;
    else if (*m == "analytic") c.mode = Mode::Analytic;
    else throw ConfigError("mode", "expected \"physical\" or \"analytic\"");
  }

  if (const auto* g = table_at(root, "geometry", "")) {
    const std::string p = "geometry";
    reject_unknown(*g, p, {"mesh", "box", "voxel_size", "subvoxel_offset", "cavity_void_fraction", "exclude_base"});
    if (const auto mesh = string(*g, "mesh", p)) {
      std::filesystem::path mp(*mesh);
      c.mesh_path = mp.is_relative() && !base_dir.empty() ? base_dir / mp : mp;
    }
    if (const toml::node* b = g->get("box")) {
      const auto v = numbers(*b, "geometry.box", 3);
      c.box_size = geometry::Vec3(v[0], v[1], v[2]);
    }
    assign(c.voxel_size, number(*g, "voxel_size", p));
    assign(c.subvoxel_offset, boolean(*g, "subvoxel_offset", p));
    assign(c.beta, number(*g, "cavity_void_fraction", p));
    assign(c.exclude_base, boolean(*g, "exclude_base", p));
  } else if (c.mode == Mode::Physical) {
    throw ConfigError("geometry", "required");
  }
  if (c.mode == Mode::Physical && c.voxel_size == 0.0) throw ConfigError("geometry.voxel_size", "required");

  const auto* params = table_at(root, "parameters", "");
  if (!params) throw ConfigError("parameters", "required");
  reject_unknown(*params, "parameters", {"offset", "grid_resolution", "wall_thickness"});
  for (int i = 0; i < 3; ++i) {
    auto& ps = c.parameters[i];
    ps.name = kParameterNames[i];
    const std::string key = "parameters." + ps.name;
    const toml::node* n = params->get(ps.name);
    if (!n) throw ConfigError(key, "required (a [min, max] range or a fixed number)");
    if (n->is_number()) {
      ps.fixed = true;
      ps.value = *n->value<double>();
    } else {
      const auto v = numbers(*n, key, 2);
      ps.lo = v[0];
      ps.hi = v[1];
    }
  }

  if (const auto* t = table_at(root, "constraint", "")) {
    reject_unknown(*t, "constraint", {"machining_tolerance"});
    assign(c.tolerance, number(*t, "machining_tolerance", "constraint"));
  }

  if (const auto* t = table_at(root, "material", "")) {
    const std::string p = "material";
    reject_unknown(*t, p,
                   {"young_modulus", "poisson_ratio", "thermal_expansion", "deposition_temperature",
                    "reference_temperature", "density", "elastic_limit", "ultimate_stress"});
    auto& m = c.material;
    assign(m.young_modulus, number(*t, "young_modulus", p));
    assign(m.poisson_ratio, number(*t, "poisson_ratio", p));
    assign(m.thermal_expansion, number(*t, "thermal_expansion", p));
    assign(m.deposition_temperature, number(*t, "deposition_temperature", p));
    assign(m.reference_temperature, number(*t, "reference_temperature", p));
    assign(m.density, number(*t, "density", p));
    assign(m.elastic_limit, number(*t, "elastic_limit", p));
    assign(m.ultimate_stress, number(*t, "ultimate_stress", p));
  }

  if (const auto* t = table_at(root, "build", "")) {
    const std::string p = "build";
    reject_unknown(*t, p, {"layers_per_activation", "inherent_strain", "support_spring", "cg_rel_tol", "cg_max_iter"});
    auto& b = c.build;
    b.layers_per_activation = to_int(integer(*t, "layers_per_activation", p), "build.layers_per_activation",
                                     b.layers_per_activation);
    if (const auto s = number(*t, "inherent_strain", p)) b.inherent_strain = *s;
    assign(b.support_spring, number(*t, "support_spring", p));
    assign(b.cg_rel_tol, number(*t, "cg_rel_tol", p));
    b.cg_max_iter = to_int(integer(*t, "cg_max_iter", p), "build.cg_max_iter", b.cg_max_iter);
  }

  if (const auto* t = table_at(root, "sparse_grid", "")) {
    const std::string p = "sparse_grid";
    reject_unknown(*t, p, {"w_min", "w_max", "stop_tolerance"});
    c.w_min = to_int(integer(*t, "w_min", p), "sparse_grid.w_min", c.w_min);
    c.w_max = to_int(integer(*t, "w_max", p), "sparse_grid.w_max", std::max(c.w_max, c.w_min));
    assign(c.stop_tolerance, number(*t, "stop_tolerance", p));
  }

  if (const auto* t = table_at(root, "optimizer", "")) {
    const std::string p = "optimizer";
    reject_unknown(*t, p,
                   {"n_starts", "seed", "mu0", "mu_growth", "outer_iters", "lambda0", "barrier_mu0", "barrier_decay"});
    auto& o = c.optimizer;
    o.n_starts = to_int(integer(*t, "n_starts", p), "optimizer.n_starts", o.n_starts);
    if (const auto s = integer(*t, "seed", p)) {
      if (*s < 0) throw ConfigError("optimizer.seed", "must be >= 0");
      o.seed = static_cast<std::uint64_t>(*s);
    }
    assign(o.mu0, number(*t, "mu0", p));
    assign(o.mu_growth, number(*t, "mu_growth", p));
    o.outer_iters = to_int(integer(*t, "outer_iters", p), "optimizer.outer_iters", o.outer_iters);
    assign(o.lambda0, number(*t, "lambda0", p));
    assign(o.barrier_mu0, number(*t, "barrier_mu0", p));
    assign(o.barrier_decay, number(*t, "barrier_decay", p));
  }

  if (const auto* t = table_at(root, "run", "")) {
    const std::string p = "run";
    reject_unknown(*t, p, {"jobs", "cache_dir", "include_timings"});
    c.jobs = to_int(integer(*t, "jobs", p), "run.jobs", c.jobs);
    if (const auto d = string(*t, "cache_dir", p)) {
      std::filesystem::path dp(*d);
      c.cache_dir = dp.is_relative() && !base_dir.empty() && !d->empty() ? base_dir / dp : dp;
    }
    assign(c.include_timings, boolean(*t, "include_timings", p));
  }

  if (const auto* t = table_at(root, "analytic", "")) {
    reject_unknown(*t, "analytic", {"objective", "constraint"});
    assign(c.objective_expr, string(*t, "objective", "analytic"));
    assign(c.constraint_expr, string(*t, "constraint", "analytic"));
  }

  c.validate();
  if (c.mode == Mode::Analytic) {
    const int n = static_cast<int>(c.active().size());
    try {
      Expression::parse(c.objective_expr, n);
    } catch (const ParseError& e) {
      throw ConfigError("analytic.objective", e.what());
    }
    try {
      Expression::parse(c.constraint_expr, n);
    } catch (const ParseError& e) {
      throw ConfigError("analytic.constraint", e.what());
    }
  }
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("", "cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path());
}

}  // namespace stockopt::pipeline
