#pragma once

#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "biotstokes/fields.hpp"
#include "biotstokes/system.hpp"

namespace bstok {

// Bad configuration input; the CLI maps this family to exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Failure while executing a valid scenario (solve breakdown, folded mesh);
// the CLI maps this to exit code 3.  The message carries the failing step.
struct ScenarioError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ============================================================================
// Configuration
// ============================================================================

enum class MeshMotion {
  off,       // fixed reference grid
  trace,     // interface vertices follow the displacement, interior static
  harmonic,  // harmonic extension moves the whole fluid grid
};

// Mesh source: a mesh2d file when file is set, the two-layer generator
// otherwise.
struct MeshSpec {
  std::string file;
  Interval x{-1.0, 1.0};
  Interval y_fluid{0.0, 2.0};
  Interval y_porous{-2.0, 0.0};
  int nx = 8;
  int ny = 8;
  bool axis_at_x_lo = false;
  std::optional<double> outlet_x_hi;
};

// One [bc] line "marker = field : style : value".  Styles by field:
//   u:   dirichlet (vector), dirichlet_x, dirichlet_y, axis,
//        nitsche(penalty) (vector), pressure_inlet (scalar p, applies -p n),
//        stress (vector traction)
//   d:   dirichlet (vector), dirichlet_x, dirichlet_y, axis,
//        traction (vector)
//   p_p: dirichlet (scalar), flux (scalar outward Darcy flux datum)
struct BcLine {
  int marker = 0;
  std::string field;
  std::string style;
  std::string value;
};

struct OutputSpec {
  int every = 0;  // vtk snapshot cadence in steps; 0 writes only the end state
  bool fields = true;
  bool series = true;
  bool summary = true;
  bool matrix_market = false;
  std::string prefix = "run";
  int inlet_marker = marker::fluid_velocity;
  std::optional<int> outlet_marker;  // default: outflow if present, else bottom
};

struct ScenarioConfig {
  std::string name = "scenario";
  GeomMode mode = GeomMode::cartesian;
  ElementFamily family = ElementFamily::taylor_hood;
  std::optional<ElementKind> porous_pressure;
  bool transient = false;  // Navier-Stokes mode with Newton steps
  MeshMotion motion = MeshMotion::off;

  MeshSpec mesh;
  MaterialParams materials;        // kappa is filled from kappa_spec at run time
  std::string lambda_cells_csv;    // optional per-porous-cell lambda override
  KappaSpec kappa_spec{.kind = KappaKind::constant, .value = 1.0};
  double dt = 0.1;
  double t_final = 1.0;
  std::vector<BcLine> bcs;
  std::string initial_p_p = "0";
  OutputSpec output;
};

// INI-style parser: [section] headers, key = value lines, # or ; comments.
// Unknown sections or keys, malformed values and violated invariants
// (dt > 0, T >= dt, referenced markers checked later against the mesh) all
// raise ConfigError naming the offending line.
ScenarioConfig parse_config(std::istream& in, const std::string& source_name);
ScenarioConfig parse_config_file(const std::string& path);

// ============================================================================
// Scenario execution
// ============================================================================

struct ScenarioSummary {
  std::string name;
  int steps = 0;
  double t_final = 0.0;
  double kappa_mean = 0.0;
  EnergyReport final_energy;
  // mean fluid pressure on the interface minus mean porous pressure on the
  // outlet boundary, at the final time
  double interface_pressure_drop = 0.0;
  double max_interface_displacement = 0.0;  // peak |d| over the run
  double min_quality = 0.0;  // worst near-interface cell quality over the run
  // final-step boundary fluxes (axisym runs weight by r)
  double inlet_flux = 0.0;      // fluid volume entering per time at the inlet
  double interface_flux = 0.0;  // fluid volume crossing into the porous side
  double outlet_flux = 0.0;     // post-processed Darcy outflux at the outlet
  // time-integrated volumes for period-balance checks
  double inlet_volume = 0.0;
  double outlet_volume = 0.0;
  double newton_avg = 0.0;  // transient runs only
};

// Runs the configured scenario and writes the requested artifacts into
// out_dir (created if missing): <prefix>_NNNN.vtk snapshots, a
// <prefix>_series.csv per-step table, <prefix>_summary.json, and optionally
// <prefix>_matrix.mtx.  Passing an empty out_dir skips all file output.
ScenarioSummary run_scenario(const ScenarioConfig& config,
                             const std::string& out_dir);

void write_summary_json(const ScenarioSummary& summary, std::ostream& out);

}  // namespace bstok
