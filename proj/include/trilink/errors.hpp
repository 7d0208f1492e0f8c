#pragma once

#include <stdexcept>
#include <string>

namespace trilink {

/// Base class of all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Configuration file rejected; key_path identifies the offending entry.
struct ConfigError : Error {
  std::string key_path;
  ConfigError(std::string path, const std::string& what)
      : Error(path.empty() ? what : path + ": " + what),
        key_path(std::move(path)) {}
};

/// Quasi-static body-velocity solve failed to reach tolerance.
struct NonConvergenceError : Error {
  double alpha1, alpha2, residual;
  NonConvergenceError(double a1, double a2, double res)
      : Error("equilibrium solve did not converge at alpha=(" +
              std::to_string(a1) + ", " + std::to_string(a2) +
              "), residual=" + std::to_string(res)),
        alpha1(a1), alpha2(a2), residual(res) {}
};

/// A simulation time step failed to converge.
struct StepNonConvergenceError : Error {
  double t, residual;
  StepNonConvergenceError(double time, double res)
      : Error("time step at t=" + std::to_string(time) +
              " did not converge, residual=" + std::to_string(res)),
        t(time), residual(res) {}
};

/// Stiffness regime kept flipping within one step even after dt bisection.
struct StiffnessRegimeChatterError : Error {
  double t;
  explicit StiffnessRegimeChatterError(double time)
      : Error("stiffness regime chatter at t=" + std::to_string(time)),
        t(time) {}
};

/// Inverse-dynamics regime fixed point did not settle.
struct RegimeNonConvergenceError : Error {
  double t;
  explicit RegimeNonConvergenceError(double time)
      : Error("stiffness regime iteration did not settle at t=" +
              std::to_string(time)),
        t(time) {}
};

/// Required joint torque cannot be realized by any command within amplitude.
struct TorqueExceedsCapacityError : Error {
  double t;
  int joint;
  TorqueExceedsCapacityError(double time, int j)
      : Error("required torque at t=" + std::to_string(time) + " on joint " +
              std::to_string(j) + " exceeds command capacity"),
        t(time), joint(j) {}
};

/// Commanded angle outside the configured gait amplitude.
struct AmplitudeExceededError : Error {
  using Error::Error;
};

/// Gait path crosses itself; surface integrals need simple loops.
struct SelfIntersectingPathError : Error {
  using Error::Error;
};

/// Height function has no positive region to enclose.
struct NoPositiveRegionError : Error {
  using Error::Error;
};

/// Wraps a failure with the optimization pipeline stage it occurred in.
struct PipelineError : Error {
  std::string stage;
  PipelineError(std::string stage_name, const std::string& what)
      : Error("[" + stage_name + "] " + what), stage(std::move(stage_name)) {}
};

}  // namespace trilink
