#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "biotstokes/mesh.hpp"

namespace bstok {

struct FieldError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ============================================================================
// Portable random stream
// ============================================================================

// Seedable 64-bit splitmix stream.  Chosen over std::mt19937 so generated
// fields are bit-identical across standard library implementations.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next();
  double uniform();  // [0, 1), 53 mantissa bits
  double uniform(double lo, double hi);

 private:
  std::uint64_t state_;
};

// ============================================================================
// Permeability fields
// ============================================================================

enum class KappaKind {
  constant,
  laplace_gradient,    // harmonic blend from the interface to a marked boundary
  log_uniform_random,  // log-uniform draw per cell inside [min, max]
  random_spots,        // uniform background with random low permeability spots
  cell_csv,            // one value per porous cell from a file
};

KappaKind kappa_kind_from(const std::string& name);
const char* kappa_kind_name(KappaKind kind);

struct KappaSpec {
  KappaKind kind = KappaKind::constant;
  double value = 0.0;      // constant kind
  double kappa_max = 0.0;  // gradient interface value, random upper bound, spot background
  double kappa_min = 0.0;  // gradient boundary value, random lower bound, spot value
  int min_marker = marker::outflow;  // boundary holding kappa_min (laplace_gradient)
  int spots = 0;
  double spot_radius = 0.0;
  std::string csv_path;
  std::uint64_t seed = 0;
  // area-weighted porous mean to hit within 0.1% by multiplicative rescaling
  // with clamping (at most 20 rounds)
  std::optional<double> target_mean;
};

struct PermeabilityField {
  // one value per mesh cell; fluid cells carry the porous mean so interface
  // terms reading the adjacent cell stay well defined
  std::vector<double> values;
  KappaKind kind = KappaKind::constant;
  std::uint64_t seed = 0;
  double mean = 0.0;  // area-weighted over the porous cells
};

PermeabilityField permeability_field(const Mesh& mesh, const KappaSpec& spec);

}  // namespace bstok
