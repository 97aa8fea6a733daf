#pragma once

#include <optional>
#include <vector>

#include "biotstokes/spaces.hpp"

namespace bstok {

struct MoveMeshError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ============================================================================
// Harmonic extension of the interface displacement
// ============================================================================

// Discrete displacement extension over a fluid-side vector space.  Its trace
// on the interface equals the porous displacement trace node by node, and the
// outer fluid boundary is clamped to zero.
struct ExtensionField {
  const Space* space = nullptr;
  std::vector<double> coeffs;  // interleaved, space->n_dofs() entries
  double diffusion = 1.0;
};

// Solves -D lap dhat = 0 componentwise over the extension space with
// dhat = d on the interface and dhat = 0 on the rest of the fluid boundary.
// Corner nodes shared by the interface and the outer boundary follow the
// interface so its endpoints are not pinned.  Both spaces must use the same
// element kind so the interface trace transfers node by node.
ExtensionField harmonic_extension(const std::vector<double>& d_coeffs,
                                  const Space& displacement_space,
                                  const Space& extension_space,
                                  double diffusion = 1.0);

// Zero extension carrying only the interface trace.  Moving a mesh with this
// field drags the interface line while every interior fluid vertex stays put;
// it is the comparison baseline that shows what the harmonic variant buys.
ExtensionField trace_only_extension(const std::vector<double>& d_coeffs,
                                    const Space& displacement_space,
                                    const Space& extension_space);

// ============================================================================
// Mesh coordinate update
// ============================================================================

// P1 sample of the extension at mesh vertices.  Vertices outside the
// extension space (the porous interior and its outer boundary) never move.
std::vector<Vec2> vertex_displacement(const ExtensionField& ext);

// Copy of the mesh with every vertex shifted by the given displacement.
// Throws MoveMeshError naming the first folded cell when the shift turns a
// triangle inside out, which signals a too-large displacement per step.
Mesh move_mesh(const Mesh& mesh, const std::vector<Vec2>& shift);

// Minimum cell quality over cells with at least one vertex on the interface,
// optionally restricted to one subdomain tag.
double min_quality_near_interface(const Mesh& mesh,
                                  std::optional<int> tag = std::nullopt);

}  // namespace bstok
