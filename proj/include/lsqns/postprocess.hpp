#pragma once

#include "lsqns/fem.hpp"

#include <string>
#include <vector>

namespace lsqns {

/// Stream function of a P2 velocity: -Lap psi = d2 u1 - d1 u2 with psi = 0 on
/// the boundary, in the scalar P2 space. Throws SolverError if the Poisson
/// solve fails.
DiscreteField stream_function(const SpaceLayout& layout, const DiscreteField& velocity);

/// Named nodal field for VTK output. Velocity fields are written as vectors,
/// scalar P2 fields as scalars on the same points. P1 pressure is
/// interpolated linearly to the midpoints.
struct NamedField {
  std::string name;
  DiscreteField field;
};

/// Legacy ASCII VTK unstructured grid on the P2 nodes. Each triangle is split
/// into 4 linear subtriangles (cell type 5), so nodal values are exact.
/// Throws std::runtime_error on I/O failure.
void write_vtk(const SpaceLayout& layout, const std::vector<NamedField>& fields, const std::string& path);

}  // namespace lsqns
