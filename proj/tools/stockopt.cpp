// stockopt command-line front end.
#include "stockopt/error.hpp"
#include "stockopt/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

using namespace stockopt;
using pipeline::PipelineConfig;

enum Exit { kOk = 0, kConfig = 2, kEvaluation = 3, kInfeasible = 4 };

std::vector<double> parse_point(const std::string& text) {
  std::vector<double> p;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    char* end = nullptr;
    const double v = std::strtod(item.c_str(), &end);
    if (item.empty() || *end != '\0' || !std::isfinite(v)) throw ConfigError("--point", "bad number '" + item + "'");
    p.push_back(v);
  }
  return p;
}

std::vector<double> inside(const PipelineConfig& cfg, std::vector<double> p) {
  if (!cfg.gamma().contains(p)) throw ConfigError("--point", "outside the parameter ranges of the config");
  return p;
}

// Accepts either the active coordinates or the full (offset, resolution, wall) triple.
std::vector<double> active_point(const PipelineConfig& cfg, const std::vector<double>& p) {
  const auto active = cfg.active();
  if (p.size() == active.size()) return inside(cfg, p);
  if (p.size() == 3) {
    std::vector<double> out;
    for (int i = 0; i < 3; ++i) {
      const auto& spec = cfg.parameters[i];
      if (!spec.fixed) out.push_back(p[i]);
      else if (p[i] != spec.value)
        throw ConfigError("--point", spec.name + " is fixed to " + std::to_string(spec.value) + " in the config");
    }
    return inside(cfg, out);
  }
  throw ConfigError("--point", "expected " + std::to_string(active.size()) + " or 3 comma-separated values");
}

PipelineConfig load(const std::string& path, const std::string& cache, int jobs) {
  PipelineConfig cfg = pipeline::load_config(path);
  if (const char* env = std::getenv("STOCKOPT_CACHE"); env && *env) cfg.cache_dir = env;
  if (!cache.empty()) cfg.cache_dir = cache;
  if (jobs > 0) cfg.jobs = jobs;
  cfg.validate();
  return cfg;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << content;
  if (!out) throw Error("failed writing " + path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stock-part design optimization with sparse-grid surrogates"};
  app.require_subcommand(1);

  std::string config, cache, out, csv, point, in, format = "csv";
  int jobs = 0;

  auto* optimize = app.add_subcommand("optimize", "Run the level loop and optimize the design");
  optimize->add_option("--config", config, "TOML configuration")->required()->check(CLI::ExistingFile);
  optimize->add_option("--cache", cache, "Cache directory (overrides STOCKOPT_CACHE and the config)");
  optimize->add_option("--jobs", jobs, "Concurrent evaluations")->check(CLI::PositiveNumber);
  optimize->add_option("--out", out, "Write the JSON report here");
  optimize->add_option("--csv", csv, "Write the CSV table here");

  auto* evaluate = app.add_subcommand("evaluate", "Evaluate the full model at one design point");
  evaluate->add_option("--config", config, "TOML configuration")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--point", point, "Comma-separated parameter values")->required();
  evaluate->add_option("--cache", cache, "Cache directory");

  auto* gen = app.add_subcommand("gen-stock", "Export stock, cavity and nominal STL surfaces");
  gen->add_option("--config", config, "TOML configuration")->required()->check(CLI::ExistingFile);
  gen->add_option("--point", point, "Comma-separated parameter values")->required();
  gen->add_option("--out", out, "Output directory")->required();

  auto* report = app.add_subcommand("report", "Re-render a stored JSON report");
  report->add_option("--in", in, "JSON report")->required()->check(CLI::ExistingFile);
  report->add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (optimize->parsed()) {
      pipeline::Pipeline pl(load(config, cache, jobs));
      const auto rep = pl.run();
      const std::string table = pipeline::emit_report(rep, pipeline::ReportFormat::Csv);
      if (!out.empty()) write_file(out, pipeline::emit_report(rep, pipeline::ReportFormat::Json));
      if (!csv.empty()) write_file(csv, table);
      std::cout << table;
      if (!rep.feasible) throw NoFeasiblePoint("no optimizer run ended at a feasible design");
      return kOk;
    }
    if (evaluate->parsed()) {
      pipeline::Pipeline pl(load(config, cache, 0));
      const auto p = active_point(pl.config(), parse_point(point));
      std::cout << pl.evaluate(p).to_json().dump(2) << '\n';
      return kOk;
    }
    if (gen->parsed()) {
      pipeline::Pipeline pl(load(config, "", 0));
      const auto p = active_point(pl.config(), parse_point(point));
      const auto s = pl.stock_at(p);
      stock::export_stl(s, out);
      nlohmann::json j{{"stock_voxels", s.stock.count()},
                       {"cavity_voxels", s.cavities.count()},
                       {"nominal_voxels", s.nominal.count()},
                       {"offset_cells", s.offset_cells},
                       {"skin_mm", s.skin_mm},
                       {"remaining_material", stock::remaining_material_fraction(s)}};
      std::cout << j.dump(2) << '\n';
      return kOk;
    }
    if (report->parsed()) {
      std::ifstream f(in);
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(f);
      } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("report: ") + e.what());
      }
      const auto rep = pipeline::Report::from_json(j);
      std::cout << pipeline::emit_report(rep, format == "json" ? pipeline::ReportFormat::Json
                                                               : pipeline::ReportFormat::Csv);
      return kOk;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const ParseError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kConfig;
  } catch (const NoFeasiblePoint& e) {
    std::cerr << "no feasible point: " << e.what() << '\n';
    return kInfeasible;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kEvaluation;
  }
  return kOk;
}
