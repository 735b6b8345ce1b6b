#pragma once

#include <stdexcept>
#include <string>

namespace qmeas {

// A momentum/position grid too coarse (or too narrow) to resolve the
// requested couplings; raised when the POVM completeness defect exceeds
// its tolerance or a pointer state does not fit the grid.
struct GridResolutionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Division by a vanishing posterior mean in the relative deviations.
struct DegenerateStateError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Integrator produced a state outside the tolerated positivity band.
struct StepSizeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Steady-state denominator eta vanished.
struct SingularParametersError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Rate constants outside the regime a formula is valid in.
struct InvalidRegimeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Closed-form branch not available for the given field configuration.
struct UnsupportedBranchError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad or unknown key/value in an experiment configuration.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace qmeas
