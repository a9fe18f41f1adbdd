#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace vk {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent configuration (unknown catalog tag, bad shape, tau <= 0, ...).
class ConfigError : public Error {
public:
  using Error::Error;
};

/// Non-finite values or a numerical breakdown.
class NumericError : public Error {
public:
  using Error::Error;
};

/// A documented operation precondition does not hold.
class PreconditionError : public Error {
public:
  using Error::Error;
};

/// Two states live on different grids.
class GridMismatch : public Error {
public:
  using Error::Error;
};

/// Matrix square root requested for a (numerically) singular SPD matrix.
class SingularityError : public Error {
public:
  using Error::Error;
};

/// The e3-stretch minimizer of a reduced quadratic form is not a = 0.
class AssumptionViolation : public Error {
public:
  AssumptionViolation(const std::string& what, Eigen::Vector3d offending_a)
      : Error(what), offending_a_(offending_a) {}
  const Eigen::Vector3d& offending_a() const { return offending_a_; }

private:
  Eigen::Vector3d offending_a_;
};

/// Armijo backtracking exhausted its halvings.
class StepFailure : public Error {
public:
  using Error::Error;
};

/// Conjugate gradients did not reach the requested residual.
class SolverFailure : public Error {
public:
  using Error::Error;
};

/// The slope representation is only available for vanishing loads.
class UnsupportedWithLoad : public Error {
public:
  using Error::Error;
};

/// Rayleigh ratio requested along a direction with zero linearized strain.
class DegenerateDirection : public Error {
public:
  using Error::Error;
};

/// The scaled gradient left the neighbourhood of SO(3) where W is regular.
class ThicknessTooLarge : public Error {
public:
  using Error::Error;
};

/// Polar factor undefined (non-positive determinant).
class DegenerateRotation : public Error {
public:
  using Error::Error;
};

}  // namespace vk
