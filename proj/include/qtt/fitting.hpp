#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "qtt/errors.hpp"

namespace qtt {

/// Outcome of a weighted nonlinear least-squares fit.
struct FitResult {
  enum class Status { converged, max_iterations, singular };

  std::vector<std::string> param_names;
  std::vector<double> params;
  std::vector<double> errors;      // 1-sigma, from covariance * reduced chi^2
  std::vector<double> covariance;  // row-major p x p, scaled by reduced chi^2
  double reduced_chi2 = 0.0;
  int iterations = 0;
  Status status = Status::max_iterations;
  bool converged = false;

  double param(const std::string& name) const;
  double error(const std::string& name) const;
  nlohmann::json to_json() const;
};

/// y = model(p, x); must be smooth in p for the numeric Jacobian.
using ModelFn = std::function<double(std::span<const double>, double)>;

struct LmOptions {
  int max_iterations = 500;
  double cost_tolerance = 1e-10;     // relative cost change
  double gradient_tolerance = 1e-8;  // infinity norm of the cost gradient
  double initial_lambda = 1e-3;
};

/// Levenberg-Marquardt with a central-difference Jacobian. Damping multiplies
/// the normal-equation diagonal; it is raised x10 on a rejected step and
/// lowered x10 on an accepted one. Non-convergence is reported through the
/// status flags, never thrown; the best point found is always returned.
FitResult lm_fit(const ModelFn& model, std::span<const double> x,
                 std::span<const double> y, std::span<const double> weights,
                 std::vector<double> initial,
                 std::vector<std::string> param_names = {},
                 const LmOptions& options = {});

/// Cross-correlation decay g(tau) = B + A*exp(-tau/tau0), tau >= 0.
/// Parameters: A, B, tau0_ns. Poisson-style weights 1/max(y,1).
/// baseline_seed overrides the starting value for B (e.g. a flat-region mean
/// measured outside the fit window).
FitResult fit_exp_decay(std::span<const double> lags_ns, std::span<const double> g2,
                        std::optional<double> baseline_seed = std::nullopt);

/// HBT autocorrelation g(tau) = C*(1 + D*exp(-|tau|/tau0)).
/// Parameters: C, D, tau0_ns; the zero-lag estimate is C*(1+D).
FitResult fit_hbt(std::span<const double> lags_ns, std::span<const double> g2);

/// One-parameter superradiant broadening law fwhm = gamma0*(1 + k*od) with
/// gamma0 fixed. Parameter: k.
FitResult fit_superradiance(std::span<const double> od, std::span<const double> fwhm_mhz,
                            double gamma0_mhz = 5.8);

}  // namespace qtt
