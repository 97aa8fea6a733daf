#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "biotstokes/scenario.hpp"

using namespace bstok;
namespace fs = std::filesystem;

namespace {

ScenarioConfig parse_text(const std::string& ini,
                          const std::string& name = "test.ini") {
  std::istringstream in(ini);
  return parse_config(in, name);
}

std::string parse_error_of(const std::string& ini) {
  try {
    (void)parse_text(ini);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  REQUIRE(in.good());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

fs::path fresh_dir(const std::string& stem) {
  const fs::path dir = fs::temp_directory_path() / stem;
  fs::remove_all(dir);
  return dir;
}

// pressure-driven two-layer channel, small enough for quick runs
const char* channel_ini = R"(
[scenario]
name = channel
family = taylor_hood
porous_pressure = p1

[mesh]
nx = 4
ny = 4

[materials]
lambda = 10
mu_s = 5
mu_f = 1
alpha = 0.6
gamma = 0.1
c0 = 0.01
rho_f = 1
rho_s = 1.1

[kappa]
kind = constant
value = 0.02

[time]
dt = 0.1
t_final = 0.3

[bc]
1 = u : pressure_inlet : 2*sin(pi*t)*sin(pi*t)
2 = u : dirichlet : (0, 0)
3 = d : dirichlet_x : 0
4 = p_p : dirichlet : 0
)";

}  // namespace

// ============================================================================
// Parsing
// ============================================================================

TEST_CASE("a full config round trips into the struct") {
  const ScenarioConfig cfg = parse_text(R"(
# two layer channel with every knob turned
[scenario]
name = round_trip
mode = axisym
family = mini
transient = true
mesh_motion = trace

[mesh]
x = 0, 2
y_fluid = 0, 1
y_porous = -1, 0
nx = 6
ny = 3
axis_at_x_lo = true
outlet_x_hi = 0.5

[materials]
lambda = 10
mu_s = 5
mu_f = 0.5
alpha = 0.6
gamma = 0.1
c0 = 0.01
rho_f = 1
rho_s = 1.1
g = 0, -9.8

[kappa]
kind = log_uniform_random
min = 1e-14
max = 3.99e-11
seed = 77
target_mean = 2e-11

[time]
dt = 0.05
t_final = 2

[bc]
1 = u : pressure_inlet : 2*sin(pi*t)*sin(pi*t)
2 = u : dirichlet : (0, 0)
7 = u : axis : 0
3 = d : dirichlet_x : 0
6 = p_p : dirichlet : 0   ; outlet
6 = d : traction : (0, 0)

[initial]
p_p = cos(pi*x)

[output]
every = 5
fields = false
series = true
summary = true
matrix_market = true
prefix = chan
inlet_marker = 1
outlet_marker = 6
)");

  CHECK(cfg.name == "round_trip");
  CHECK(cfg.mode == GeomMode::axisym);
  CHECK(cfg.family == ElementFamily::mini);
  CHECK(!cfg.porous_pressure);
  CHECK(cfg.transient);
  CHECK(cfg.motion == MeshMotion::trace);

  CHECK(cfg.mesh.file.empty());
  CHECK(cfg.mesh.x.lo == 0.0);
  CHECK(cfg.mesh.x.hi == 2.0);
  CHECK(cfg.mesh.y_fluid.lo == 0.0);
  CHECK(cfg.mesh.y_fluid.hi == 1.0);
  CHECK(cfg.mesh.y_porous.lo == -1.0);
  CHECK(cfg.mesh.y_porous.hi == 0.0);
  CHECK(cfg.mesh.nx == 6);
  CHECK(cfg.mesh.ny == 3);
  CHECK(cfg.mesh.axis_at_x_lo);
  REQUIRE(cfg.mesh.outlet_x_hi.has_value());
  CHECK(*cfg.mesh.outlet_x_hi == 0.5);

  CHECK(cfg.materials.lambda == 10.0);
  CHECK(cfg.materials.mu_s == 5.0);
  CHECK(cfg.materials.mu_f == 0.5);
  CHECK(cfg.materials.alpha == 0.6);
  CHECK(cfg.materials.gamma == 0.1);
  CHECK(cfg.materials.c0 == 0.01);
  CHECK(cfg.materials.rho_f == 1.0);
  CHECK(cfg.materials.rho_s == 1.1);
  CHECK(cfg.materials.g.y == -9.8);

  CHECK(cfg.kappa_spec.kind == KappaKind::log_uniform_random);
  CHECK(cfg.kappa_spec.kappa_min == 1e-14);
  CHECK(cfg.kappa_spec.kappa_max == 3.99e-11);
  CHECK(cfg.kappa_spec.seed == 77);
  REQUIRE(cfg.kappa_spec.target_mean.has_value());
  CHECK(*cfg.kappa_spec.target_mean == 2e-11);

  CHECK(cfg.dt == 0.05);
  CHECK(cfg.t_final == 2.0);

  REQUIRE(cfg.bcs.size() == 6);
  CHECK(cfg.bcs[0].marker == 1);
  CHECK(cfg.bcs[0].field == "u");
  CHECK(cfg.bcs[0].style == "pressure_inlet");
  CHECK(cfg.bcs[0].value == "2*sin(pi*t)*sin(pi*t)");
  CHECK(cfg.bcs[2].style == "axis");
  CHECK(cfg.bcs[4].field == "p_p");
  CHECK(cfg.bcs[4].value == "0");
  CHECK(cfg.bcs[5].style == "traction");

  CHECK(cfg.initial_p_p == "cos(pi*x)");

  CHECK(cfg.output.every == 5);
  CHECK(!cfg.output.fields);
  CHECK(cfg.output.series);
  CHECK(cfg.output.summary);
  CHECK(cfg.output.matrix_market);
  CHECK(cfg.output.prefix == "chan");
  CHECK(cfg.output.inlet_marker == 1);
  REQUIRE(cfg.output.outlet_marker.has_value());
  CHECK(*cfg.output.outlet_marker == 6);
}

TEST_CASE("defaults survive an almost empty config") {
  const ScenarioConfig cfg = parse_text("[time]\ndt = 0.1\nt_final = 0.2\n");
  CHECK(cfg.name == "scenario");
  CHECK(cfg.mode == GeomMode::cartesian);
  CHECK(cfg.family == ElementFamily::taylor_hood);
  CHECK(!cfg.porous_pressure);
  CHECK(!cfg.transient);
  CHECK(cfg.motion == MeshMotion::off);
  CHECK(cfg.mesh.nx == 8);
  CHECK(cfg.mesh.ny == 8);
  CHECK(!cfg.mesh.outlet_x_hi);
  CHECK(cfg.kappa_spec.kind == KappaKind::constant);
  CHECK(cfg.kappa_spec.value == 1.0);
  CHECK(cfg.bcs.empty());
  CHECK(cfg.initial_p_p == "0");
  CHECK(cfg.output.every == 0);
  CHECK(cfg.output.fields);
  CHECK(cfg.output.prefix == "run");
  CHECK(!cfg.output.outlet_marker);
}

TEST_CASE("config errors name the offending line") {
  CHECK(parse_error_of("[bogus]\n").find("unknown section") != std::string::npos);
  CHECK(parse_error_of("[scenario]\nmode = spherical\n").find("mode must be") !=
        std::string::npos);
  CHECK(parse_error_of("[scenario]\nwiggle = 1\n").find("unknown key") !=
        std::string::npos);
  CHECK(parse_error_of("x = 1\n").find("before any") != std::string::npos);
  CHECK(parse_error_of("[mesh\n").find("unterminated") != std::string::npos);
  CHECK(parse_error_of("[mesh]\nnx = four\n").find("integer") !=
        std::string::npos);
  CHECK(parse_error_of("[time]\ndt = -0.1\nt_final = 1\n")
            .find("dt must be positive") != std::string::npos);
  CHECK(parse_error_of("[time]\ndt = 0.3\nt_final = 1\n")
            .find("integer multiple") != std::string::npos);
  CHECK(parse_error_of("[mesh]\nnx = 0\n[time]\ndt = 1\nt_final = 1\n")
            .find("at least 1") != std::string::npos);
  CHECK(parse_error_of("[scenario]\nfamily = mini\nporous_pressure = p2\n"
                       "[time]\ndt = 1\nt_final = 1\n")
            .find("mini") != std::string::npos);

  // bc grammar
  CHECK(parse_error_of("[bc]\nfoo = u : dirichlet : (0, 0)\n")
            .find("integer markers") != std::string::npos);
  CHECK(parse_error_of("[bc]\n1 = u : wiggle : 0\n").find("wiggle") !=
        std::string::npos);
  CHECK(parse_error_of("[bc]\n1 = u : dirichlet : 0\n").find("(ex, ey)") !=
        std::string::npos);
  CHECK(parse_error_of("[bc]\n1 = p_p : dirichlet : 2*\n").find("position") !=
        std::string::npos);
  CHECK(parse_error_of("[bc]\n1 = q : dirichlet : 0\n").find("unknown field") !=
        std::string::npos);
  CHECK(parse_error_of("[bc]\n1 = u : nitsche(-2) : (0, 0)\n")
            .find("penalty") != std::string::npos);
  CHECK(parse_error_of("[bc]\n4 = p_p : flux : 0\n4 = p_p : flux : 1\n")
            .find("already carries") != std::string::npos);

  // the source name and line number lead the message
  const std::string with_line = parse_error_of("[scenario]\nwiggle = 1\n");
  CHECK(with_line.find("test.ini:2:") != std::string::npos);
}

TEST_CASE("referencing a marker on the wrong side fails at run time") {
  std::string ini = channel_ini;
  ini += "\n[bc]\n4 = u : dirichlet : (0, 0)\n";  // marker 4 is porous-only
  const ScenarioConfig cfg = parse_text(ini);
  CHECK_THROWS_AS((void)run_scenario(cfg, ""), ConfigError);

  std::string missing = channel_ini;
  missing += "\n[bc]\n42 = p_p : dirichlet : 0\n";
  CHECK_THROWS_AS((void)run_scenario(parse_text(missing), ""), ConfigError);
}

// ============================================================================
// Running
// ============================================================================

TEST_CASE("a short pressure driven run writes its artifacts") {
  std::string ini = channel_ini;
  ini += "\n[output]\nmatrix_market = true\n";
  const ScenarioConfig cfg = parse_text(ini);
  const fs::path dir = fresh_dir("bstok_scenario_run");

  const ScenarioSummary s = run_scenario(cfg, dir.string());
  CHECK(s.name == "channel");
  CHECK(s.steps == 3);
  CHECK(s.t_final == doctest::Approx(0.3));
  CHECK(s.kappa_mean == doctest::Approx(0.02));
  MESSAGE("pressure drop ", s.interface_pressure_drop, " max d ",
          s.max_interface_displacement, " min q ", s.min_quality, " fluxes ",
          s.inlet_flux, " ", s.interface_flux, " ", s.outlet_flux);
  CHECK(s.interface_pressure_drop > 0.1);
  CHECK(s.max_interface_displacement > 0.0);
  CHECK(s.min_quality > 0.5);
  CHECK(s.newton_avg == 0.0);

  CHECK(fs::exists(dir / "run_0000.vtk"));
  CHECK(fs::exists(dir / "run_0003.vtk"));
  CHECK(!fs::exists(dir / "run_0001.vtk"));  // every = 0 keeps only the ends
  CHECK(fs::exists(dir / "run_matrix.mtx"));

  const std::string series = slurp(dir / "run_series.csv");
  int lines = 0;
  for (const char c : series)
    if (c == '\n') ++lines;
  CHECK(lines == 5);  // header + steps 0..3
  CHECK(series.rfind("step,t,energy", 0) == 0);

  const std::string mtx = slurp(dir / "run_matrix.mtx");
  CHECK(mtx.rfind("%%MatrixMarket", 0) == 0);

  const nlohmann::json j = nlohmann::json::parse(slurp(dir / "run_summary.json"));
  CHECK(j["name"] == "channel");
  CHECK(j["steps"] == 3);
  CHECK(j["kappa_mean"] == doctest::Approx(0.02));
  CHECK(j["interface_pressure_drop"] ==
        doctest::Approx(s.interface_pressure_drop));
  CHECK(j["final_energy"]["stored"] == doctest::Approx(s.final_energy.energy()));

  fs::remove_all(dir);
}

TEST_CASE("seeded runs reproduce byte for byte and differ across seeds") {
  const auto with_seed = [&](std::uint64_t seed) {
    std::string ini = channel_ini;
    ini += "\n[kappa]\nkind = log_uniform_random\nmin = 0.005\nmax = 0.08\n";
    ini += "seed = " + std::to_string(seed) + "\n";
    ini += "[time]\ndt = 0.1\nt_final = 0.2\n";
    ini += "[output]\nfields = false\nsummary = false\n";
    return parse_text(ini);
  };

  const fs::path a = fresh_dir("bstok_repro_a");
  const fs::path b = fresh_dir("bstok_repro_b");
  const fs::path c = fresh_dir("bstok_repro_c");
  (void)run_scenario(with_seed(7), a.string());
  (void)run_scenario(with_seed(7), b.string());
  (void)run_scenario(with_seed(8), c.string());

  const std::string sa = slurp(a / "run_series.csv");
  CHECK(sa == slurp(b / "run_series.csv"));
  CHECK(sa != slurp(c / "run_series.csv"));
  fs::remove_all(a);
  fs::remove_all(b);
  fs::remove_all(c);
}

TEST_CASE("steady filtration balances boundary fluxes") {
  const ScenarioConfig cfg = parse_text(R"(
[scenario]
name = steady
porous_pressure = p1

[mesh]
nx = 8
ny = 8

[materials]
lambda = 10
mu_s = 5
mu_f = 1
alpha = 1
gamma = 1
c0 = 0.001

[kappa]
kind = constant
value = 0.1

[time]
dt = 0.5
t_final = 3

[bc]
1 = u : pressure_inlet : 1
2 = u : dirichlet : (0, 0)
3 = d : dirichlet_x : 0
4 = p_p : dirichlet : 0
)");
  const ScenarioSummary s = run_scenario(cfg, "");
  MESSAGE("steady fluxes inlet ", s.inlet_flux, " interface ",
          s.interface_flux, " outlet ", s.outlet_flux);
  CHECK(s.inlet_flux > 0.0);
  CHECK(s.interface_flux > 0.0);
  CHECK(s.outlet_flux > 0.0);
  // the fluid box is incompressible, so what enters the top exits through
  // the interface; the porous storage has settled by t = 3
  CHECK(std::abs(s.interface_flux - s.inlet_flux) <= 0.05 * s.inlet_flux);
  CHECK(std::abs(s.outlet_flux - s.interface_flux) <= 0.05 * s.interface_flux);
}

TEST_CASE("harmonic mesh motion preserves quality that trace motion loses") {
  const auto with_motion = [](const char* motion) {
    std::string ini = channel_ini;
    ini += "\n[scenario]\nmesh_motion = ";
    ini += motion;
    ini += "\n[mesh]\nnx = 8\nny = 8\n[time]\ndt = 0.05\nt_final = 1\n";
    return parse_text(ini);
  };

  const ScenarioSummary smooth = run_scenario(with_motion("harmonic"), "");
  MESSAGE("harmonic: min q ", smooth.min_quality, " max d ",
          smooth.max_interface_displacement);
  CHECK(smooth.max_interface_displacement > 0.02);
  CHECK(smooth.min_quality > 0.0);

  double trace_quality = 0.0;  // an inverted-cell abort counts as zero
  try {
    const ScenarioSummary trace = run_scenario(with_motion("trace"), "");
    trace_quality = trace.min_quality;
    MESSAGE("trace: min q ", trace.min_quality);
  } catch (const ScenarioError& e) {
    MESSAGE("trace run aborted: ", e.what());
  }
  CHECK(smooth.min_quality > 1.2 * trace_quality);

  const ScenarioSummary still = run_scenario(with_motion("off"), "");
  CHECK(still.min_quality == doctest::Approx(std::sqrt(3.0) / 2.0));
}

TEST_CASE("axisym fluxes weight the integrand by radius") {
  const char* base = R"(
[scenario]
name = radial

[mesh]
x = 0, 1
y_fluid = 0, 1
y_porous = -1, 0
nx = 4
ny = 2

[materials]
lambda = 10
mu_s = 5
mu_f = 1
alpha = 1
gamma = 1
c0 = 0.01

[kappa]
kind = constant
value = 0.1

[time]
dt = 1
t_final = 1

[bc]
1 = u : dirichlet : (0, -1)
3 = d : dirichlet_x : 0
4 = p_p : dirichlet : 0
)";

  std::string axi = base;
  axi += "[scenario]\nmode = axisym\n[mesh]\naxis_at_x_lo = true\n";
  axi += "[bc]\n7 = u : axis : 0\n7 = d : axis : 0\n2 = u : dirichlet_x : 0\n";
  const ScenarioSummary s_axi = run_scenario(parse_text(axi), "");

  std::string cart = base;
  cart += "[bc]\n2 = u : dirichlet_x : 0\n";
  const ScenarioSummary s_cart = run_scenario(parse_text(cart), "");

  // the inlet data is u = (0, -1), so the measured influx is the exact
  // boundary integral: r dr gives 1/2, dr gives 1
  CHECK(s_axi.inlet_flux == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(s_cart.inlet_flux == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("a pulsating axisym inflow balances volumes over one period") {
  const ScenarioConfig cfg = parse_text(R"(
[scenario]
name = pulse
mode = axisym
transient = true
porous_pressure = p2

[mesh]
x = 0, 0.00057
y_fluid = 0, 0.0004
y_porous = -0.0002, 0
nx = 8
ny = 4
axis_at_x_lo = true
outlet_x_hi = 0.00034

[materials]
lambda = 14388
mu_s = 918.36
mu_f = 7.5e-4
alpha = 1
gamma = 0.1
c0 = 0
rho_f = 998.7
rho_s = 1102

[kappa]
kind = constant
value = 5e-12

[time]
dt = 0.1
t_final = 1

[bc]
1 = u : nitsche(1.0) : (0, -4.89e-7*sin(pi*t)*sin(pi*t)*(1 - (x/0.00057)*(x/0.00057)))
2 = u : dirichlet : (0, 0)
7 = u : axis : 0
3 = d : dirichlet : (0, 0)
7 = d : axis : 0
6 = p_p : dirichlet : 0
)");
  const ScenarioSummary s = run_scenario(cfg, "");
  MESSAGE("pulse volumes in ", s.inlet_volume, " out ", s.outlet_volume,
          " newton avg ", s.newton_avg);
  CHECK(s.inlet_volume > 0.0);
  CHECK(s.newton_avg >= 1.0);
  CHECK(s.newton_avg <= 6.0);
  CHECK(std::abs(s.outlet_volume - s.inlet_volume) <= 0.10 * s.inlet_volume);
}
