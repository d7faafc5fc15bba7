#include "stockopt/error.hpp"
#include "stockopt/pipeline.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

using namespace stockopt;
using namespace stockopt::pipeline;
namespace fs = std::filesystem;

namespace {

// 2 mm cube at h = 0.5, all three parameters free.
const char* kCube = R"toml(
schema_version = 1
[geometry]
box = [2.0, 2.0, 2.0]
voxel_size = 0.5
[parameters]
offset = [0.0, 1.0]
grid_resolution = [1.0, 4.0]
wall_thickness = [0.0, 100.0]
[build]
inherent_strain = 0.0
)toml";

const char* kAnalytic = R"toml(
mode = "analytic"
[parameters]
offset = [0.0, 1.0]
grid_resolution = 20.0
wall_thickness = [0.0, 1.0]
[analytic]
objective = "p1 + abs(p2 - 0.5)"
constraint = "0.25 - p1"
[sparse_grid]
w_min = 2
w_max = 5
)toml";

fs::path fresh_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("stockopt_" + name);
  fs::remove_all(d);
  return d;
}

double linf(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("evaluate_design on the cube at zero strain") {
  const auto cfg = parse_config(kCube);
  SUBCASE("offset 0 is the nominal part") {
    const auto r = evaluate_design({0.0, 2.0, 100.0}, cfg);
    CHECK(std::abs(*r.delta_volume) <= 1e-12);
    CHECK(std::abs(*r.delta_thickness) <= 1e-12);
    CHECK(r.constraint == doctest::Approx(0.04));
    CHECK(r.stats->max_displacement == 0.0);
  }
  SUBCASE("offset h adds one cell everywhere") {
    const auto r = evaluate_design({0.5, 2.0, 100.0}, cfg);
    CHECK(*r.delta_thickness == doctest::Approx(0.5).epsilon(1e-12));
    // 6^3 dilated cells against 4^3 nominal cells
    CHECK(*r.delta_volume == doctest::Approx((216 - 64) * 0.125).epsilon(1e-12));
    CHECK(r.stats->offset_cells == 1);
  }
  SUBCASE("continuous offset through the skin") {
    const auto r = evaluate_design({0.1, 2.0, 100.0}, cfg);
    CHECK(*r.delta_thickness == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(*r.delta_volume == doctest::Approx(std::pow(2.2, 3) - 8.0).epsilon(1e-12));
  }
}

TEST_CASE("evaluate_design with cavities follows the voxel counts") {
  auto cfg = parse_config(R"toml(
[geometry]
box = [4.0, 4.0, 4.0]
voxel_size = 0.5
[parameters]
offset = [0.0, 1.0]
grid_resolution = [1.0, 4.0]
wall_thickness = [0.0, 1.0]
[build]
inherent_strain = 0.0
)toml");
  for (double off : {0.0, 0.5, 1.0}) {
    const stock::StockParams p{off, 1.0, 0.5};
    const auto r = evaluate_design(p, cfg);
    const auto& st = *r.stats;
    CHECK(st.cavity_voxels > 0);
    // counts straight from the geometry module, no FEM involved
    const auto nominal = geometry::voxelize(geometry::make_box_mesh(geometry::Vec3::Zero(), geometry::Vec3(4, 4, 4)), 0.5);
    const auto s = stock::assemble_stock(nominal, p, cfg.beta, true);
    CHECK(st.stock_voxels == s.stock.count());
    CHECK(st.cavity_voxels == s.cavities.count());
    const double expected = (double(s.stock.count()) + double(s.cavities.count()) - double(nominal.count())) * 0.125;
    CHECK(*r.delta_volume == doctest::Approx(expected).epsilon(1e-12).scale(1.0));
    CHECK(st.remaining_material < 1.0);
  }
}

TEST_CASE("config parsing") {
  const auto c = parse_config(R"toml(
[geometry]
mesh = "part.stl"
voxel_size = 0.25
[parameters]
offset = [0.0, 0.1]
grid_resolution = [17, 24]
wall_thickness = [0.4, 0.9]
)toml",
                              "/data");
  CHECK(c.tolerance == 0.04);
  CHECK(c.w_min == 2);
  CHECK(c.w_max == 5);
  CHECK(c.optimizer.n_starts == 5);
  CHECK(c.mesh_path == fs::path("/data/part.stl"));
  CHECK(c.active().size() == 3);
  CHECK(c.build.layers_per_activation == 10);

  auto key_of = [](const std::string& text) {
    try {
      parse_config(text);
    } catch (const ConfigError& e) {
      return e.key();
    }
    return std::string("<accepted>");
  };
  const std::string base = "[geometry]\nbox = [1.0, 1.0, 1.0]\nvoxel_size = 0.25\n";
  CHECK(key_of(base + "[parameters]\noffset = [0.1, 0.1]\ngrid_resolution = 3.0\nwall_thickness = 0.5\n") ==
        "parameters.offset");
  CHECK(key_of(base + "[parameters]\noffsett = [0.0, 0.1]\noffset = [0.0, 0.1]\ngrid_resolution = 3.0\n"
                      "wall_thickness = 0.5\n") == "parameters.offsett");
  CHECK(key_of(base + "[parameters]\noffset = 0.1\ngrid_resolution = 3.0\nwall_thickness = 0.5\n") == "parameters");
  CHECK(key_of(base + "[parameters]\noffset = [0.0, 0.1]\ngrid_resolution = 3.0\n") == "parameters.wall_thickness");
  CHECK(key_of("[parameters]\noffset = [0.0, 0.1]\ngrid_resolution = 3.0\nwall_thickness = 0.5\n") == "geometry");
  CHECK(key_of(base + "[parameters]\noffset = [0.0, 0.1]\ngrid_resolution = 3.0\nwall_thickness = 0.5\n"
                      "[sparse_grid]\nw_min = 3\nw_max = 2\n") == "sparse_grid.w_max");
  CHECK(key_of(base + "[parameters]\noffset = [0.0, 0.1]\ngrid_resolution = 3.0\nwall_thickness = 0.5\n"
                      "[material]\npoisson_ratio = 0.6\n") == "material");
  CHECK(key_of("schema_version = 7\n" + base) == "schema_version");
  CHECK(key_of("this is = = not toml") == "");

  const auto fixed = parse_config(base + "[parameters]\noffset = [0.0, 0.1]\ngrid_resolution = 3.0\nwall_thickness = 0.5\n");
  CHECK(fixed.active() == std::vector<int>{0});
  CHECK(fixed.gamma() == Box({0.0}, {0.1}));
  const auto p = fixed.params_at(std::vector<double>{0.07});
  CHECK(p.offset_mm == 0.07);
  CHECK(p.grid_resolution == 3.0);
  CHECK(p.wall_thickness_mm == 0.5);
}

TEST_CASE("level loop in analytic mode") {
  Pipeline pl(parse_config(kAnalytic));
  const auto rep = pl.run();
  REQUIRE(rep.levels.size() >= 2);
  CHECK(rep.levels.size() < 4);
  CHECK(rep.stopped_early);
  CHECK(rep.levels[0].design_points == sg::count_points(2, 2));
  CHECK(rep.feasible);

  // brute force on a 1e-3 grid
  std::vector<double> best;
  double fb = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= 1000; ++i)
    for (int j = 0; j <= 1000; ++j) {
      const double x = i * 1e-3, y = j * 1e-3;
      if (0.25 - x > 0) continue;
      const double f = x + std::abs(y - 0.5);
      if (f < fb) {
        fb = f;
        best = {x, y};
      }
    }
  CHECK(linf(rep.optimum, best) <= 1e-3);
  CHECK(rep.truth.has_value());
  CHECK(std::abs(rep.objective_gap) <= 1e-9);
  CHECK(rep.optimum_params.grid_resolution == 20.0);

  Pipeline again(parse_config(kAnalytic));
  CHECK(emit_report(again.run(), ReportFormat::Json) == emit_report(rep, ReportFormat::Json));
}

TEST_CASE("nested levels are recycled from the cache") {
  Pipeline pl(parse_config(kAnalytic));
  const auto [l2, s2] = pl.run_level(2);
  CHECK(l2.new_evaluations == 5);
  CHECK(l2.cache_hits == 0);
  const auto [l3, s3] = pl.run_level(3);
  CHECK(l3.cache_hits >= sg::count_points(2, 2));
  CHECK(l3.new_evaluations == sg::count_points(2, 3) - sg::count_points(2, 2));

  auto cfg = parse_config(kAnalytic);
  cfg.parameters[1] = {"grid_resolution", false, 10.0, 30.0, 0.0};
  cfg.objective_expr = "p1 + p2 + p3";
  Pipeline three(cfg);
  const auto [l, s] = three.run_level(2);
  CHECK(l.design_points == 7);
  CHECK(l.new_evaluations == 7);
}

TEST_CASE("parallel and serial evaluation agree") {
  auto serial_cfg = parse_config(kCube);
  serial_cfg.build.inherent_strain.reset();  // real distortion
  auto par_cfg = serial_cfg;
  par_cfg.jobs = 3;
  Pipeline a(serial_cfg), b(par_cfg);
  std::vector<std::vector<double>> pts;
  for (const auto& gp : sg::enumerate_points(3, 2)) pts.push_back(a.config().gamma().from_unit(gp.coordinates()));
  const auto ra = a.evaluate_all(pts, 2), rb = b.evaluate_all(pts, 2);
  REQUIRE(ra.size() == rb.size());
  for (std::size_t i = 0; i < ra.size(); ++i) CHECK(ra[i].to_json().dump() == rb[i].to_json().dump());
  CHECK(a.cache().misses() == 7);
  CHECK(b.cache().misses() == 7);
}

TEST_CASE("failed points abort the level") {
  auto cfg = parse_config(kCube);
  cfg.build.cg_max_iter = 1;
  cfg.build.inherent_strain = 1e-3;
  Pipeline pl(cfg);
  try {
    pl.run_level(1);
    FAIL("expected LevelFailed");
  } catch (const LevelFailed& e) {
    CHECK(e.level() == 1);
    CHECK(e.point().size() == 3);
  }
}

TEST_CASE("disk cache returns bit-identical records") {
  const auto dir = fresh_dir("cache");
  auto cfg = parse_config(kCube);
  cfg.cache_dir = dir;
  cfg.build.inherent_strain.reset();
  const std::vector<double> p{0.1, 2.5, 0.5};
  std::string first;
  {
    Pipeline pl(cfg);
    first = pl.evaluate(p).to_json().dump();
    CHECK(pl.cache().misses() == 1);
  }
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir)) files += e.is_regular_file();
  CHECK(files == 1);
  Pipeline again(cfg);
  CHECK(again.evaluate(p).to_json().dump() == first);
  CHECK(again.cache().hits() == 1);
  CHECK(again.cache().misses() == 0);
  CHECK(again.evaluate_uncached(p).to_json().dump() == first);

  // a different config never sees these records
  auto other = cfg;
  other.tolerance = 0.05;
  Pipeline third(other);
  CHECK(third.config_hash() != again.config_hash());
  third.evaluate(p);
  CHECK(third.cache().hits() == 0);
  fs::remove_all(dir);
}

TEST_CASE("objective and constraint axes on the cube") {
  auto cfg = parse_config(R"toml(
[geometry]
box = [3.0, 2.0, 2.0]
voxel_size = 0.5
[parameters]
offset = [0.0, 1.0]
grid_resolution = 2.0
wall_thickness = 0.5
)toml");
  const auto pts = sg::enumerate_points(1, 4);
  std::vector<double> offsets;
  for (const auto& gp : pts) offsets.push_back(gp.coordinate(0));
  std::sort(offsets.begin(), offsets.end());

  Pipeline warped(cfg);
  double prev = -std::numeric_limits<double>::infinity();
  for (double off : offsets) {
    const double dv = warped.evaluate(std::vector<double>{off}).objective;
    CHECK(dv >= prev);
    prev = dv;
  }

  cfg.build.inherent_strain = 0.0;
  Pipeline flat(cfg);
  double prev_t = -std::numeric_limits<double>::infinity(), prev_g = std::numeric_limits<double>::infinity();
  for (double off : offsets) {
    const auto r = flat.evaluate(std::vector<double>{off});
    CHECK(*r.delta_thickness >= prev_t);
    CHECK(r.constraint < prev_g);
    prev_t = *r.delta_thickness;
    prev_g = r.constraint;
  }
}

TEST_CASE("report rendering") {
  CHECK(csv_header({"offset"}) == "w,design_points,optimal_offset,optimal_volume,method,interpolant_evaluations,wall_time");

  Report r;
  r.config_hash = "abc";
  r.parameter_names = {"offset", "wall_thickness"};
  CHECK(emit_report(r, ReportFormat::Csv) == csv_header(r.parameter_names) + "\n");

  LevelResult l;
  l.w = 2;
  l.design_points = 5;
  l.p_star = {0.0567, 0.5};
  l.optimal_volume = 12.5;
  l.method = "augmented_lagrangian+gradient_descent";
  l.interpolant_evaluations = 58;
  l.wall_time = 0.0;
  r.levels.push_back(l);
  r.optimum = l.p_star;
  const auto csv = emit_report(r, ReportFormat::Csv);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);
  CHECK(csv.substr(csv.find('\n') + 1) == "2,5,0.0567,0.5,12.5,augmented_lagrangian+gradient_descent,58,0.0\n");

  const auto back = Report::from_json(nlohmann::json::parse(emit_report(r, ReportFormat::Json)));
  CHECK(emit_report(back, ReportFormat::Json) == emit_report(r, ReportFormat::Json));
  CHECK(emit_report(back, ReportFormat::Csv) == csv);
  CHECK_THROWS_AS(Report::from_json(nlohmann::json{{"schema_version", 2}}), ParseError);
}

TEST_CASE("point keys and hashes") {
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
  CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
  CHECK(EvaluationCache::point_key(std::vector<double>{0.1, 0.2}) ==
        EvaluationCache::point_key(std::vector<double>{0.1 + 1e-12, 0.2}));
  CHECK(EvaluationCache::point_key(std::vector<double>{0.1, 0.2}) !=
        EvaluationCache::point_key(std::vector<double>{0.1 + 2e-9, 0.2}));
}
