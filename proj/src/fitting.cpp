#include "qtt/fitting.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace qtt {

namespace {

// Dense solve of A x = b (p <= ~6 here) by Gaussian elimination with partial
// pivoting. Returns false when A is numerically singular.
bool solve_dense(std::vector<double> a, std::vector<double> b, std::size_t n,
                 std::vector<double>& x) {
  double scale = 0.0;
  for (double v : a) scale = std::max(scale, std::abs(v));
  const double tiny = std::max(scale, 1.0) * 1e-14;

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a[perm[r] * n + col]) > std::abs(a[perm[pivot] * n + col])) pivot = r;
    std::swap(perm[col], perm[pivot]);
    const double p = a[perm[col] * n + col];
    if (std::abs(p) < tiny) return false;
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = a[perm[r] * n + col] / p;
      if (f == 0.0) continue;
      for (std::size_t c = col; c < n; ++c) a[perm[r] * n + c] -= f * a[perm[col] * n + c];
      b[perm[r]] -= f * b[perm[col]];
    }
  }
  x.assign(n, 0.0);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[perm[i]];
    for (std::size_t c = i + 1; c < n; ++c) s -= a[perm[i] * n + c] * x[c];
    x[i] = s / a[perm[i] * n + i];
  }
  return true;
}

// Inverse via n solves against unit vectors; false if singular.
bool invert_dense(const std::vector<double>& a, std::size_t n, std::vector<double>& inv) {
  inv.assign(n * n, 0.0);
  std::vector<double> e(n), col;
  for (std::size_t j = 0; j < n; ++j) {
    std::fill(e.begin(), e.end(), 0.0);
    e[j] = 1.0;
    if (!solve_dense(a, e, n, col)) return false;
    for (std::size_t i = 0; i < n; ++i) inv[i * n + j] = col[i];
  }
  return true;
}

double cost_of(const ModelFn& model, std::span<const double> x, std::span<const double> y,
               std::span<const double> w, std::span<const double> p) {
  double c = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - model(p, x[i]);
    c += w[i] * r * r;
  }
  return c;
}

// Central-difference Jacobian of the model, row-major n x p.
void jacobian(const ModelFn& model, std::span<const double> x, std::span<const double> p,
              std::vector<double>& jac) {
  const std::size_t n = x.size(), np = p.size();
  jac.assign(n * np, 0.0);
  std::vector<double> plo(p.begin(), p.end()), phi(p.begin(), p.end());
  for (std::size_t j = 0; j < np; ++j) {
    const double h = std::max(1e-9, 1e-6 * std::abs(p[j]));
    plo[j] = p[j] - h;
    phi[j] = p[j] + h;
    for (std::size_t i = 0; i < n; ++i)
      jac[i * np + j] = (model(phi, x[i]) - model(plo, x[i])) / (2.0 * h);
    plo[j] = p[j];
    phi[j] = p[j];
  }
}

std::vector<double> poisson_weights(std::span<const double> y) {
  std::vector<double> w(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) w[i] = 1.0 / std::max(y[i], 1.0);
  return w;
}

}  // namespace

double FitResult::param(const std::string& name) const {
  for (std::size_t i = 0; i < param_names.size(); ++i)
    if (param_names[i] == name) return params[i];
  throw ArgumentError("no fit parameter named " + name);
}

double FitResult::error(const std::string& name) const {
  for (std::size_t i = 0; i < param_names.size(); ++i)
    if (param_names[i] == name) return errors[i];
  throw ArgumentError("no fit parameter named " + name);
}

nlohmann::json FitResult::to_json() const {
  nlohmann::json j;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string name =
        i < param_names.size() ? param_names[i] : "p" + std::to_string(i);
    j["params"][name] = params[i];
    if (i < errors.size()) j["errors"][name] = errors[i];
  }
  j["reduced_chi2"] = reduced_chi2;
  j["iterations"] = iterations;
  j["converged"] = converged;
  switch (status) {
    case Status::converged: j["status"] = "converged"; break;
    case Status::max_iterations: j["status"] = "max_iterations"; break;
    case Status::singular: j["status"] = "singular"; break;
  }
  return j;
}

FitResult lm_fit(const ModelFn& model, std::span<const double> x,
                 std::span<const double> y, std::span<const double> weights,
                 std::vector<double> initial, std::vector<std::string> param_names,
                 const LmOptions& options) {
  const std::size_t n = x.size(), np = initial.size();
  if (y.size() != n || weights.size() != n)
    throw ArgumentError("lm_fit: x, y, weights must have equal length");
  if (np == 0 || n <= np)
    throw ArgumentError("lm_fit: need more data points than parameters");
  for (double w : weights)
    if (w < 0.0) throw ArgumentError("lm_fit: weights must be >= 0");

  FitResult result;
  result.param_names = std::move(param_names);
  if (result.param_names.empty())
    for (std::size_t j = 0; j < np; ++j) result.param_names.push_back("p" + std::to_string(j));

  std::vector<double> p = std::move(initial);
  double cost = cost_of(model, x, y, weights, p);
  double lambda = options.initial_lambda;

  std::vector<double> jac, jtj(np * np), jtr(np), damped, step, trial(np);
  bool singular = false;
  int iter = 0;
  for (; iter < options.max_iterations; ++iter) {
    jacobian(model, x, p, jac);

    std::fill(jtj.begin(), jtj.end(), 0.0);
    std::fill(jtr.begin(), jtr.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double r = y[i] - model(p, x[i]);
      for (std::size_t a = 0; a < np; ++a) {
        jtr[a] += weights[i] * jac[i * np + a] * r;
        for (std::size_t b = a; b < np; ++b)
          jtj[a * np + b] += weights[i] * jac[i * np + a] * jac[i * np + b];
      }
    }
    for (std::size_t a = 0; a < np; ++a)
      for (std::size_t b = 0; b < a; ++b) jtj[a * np + b] = jtj[b * np + a];

    // gradient of the cost is -2 J^T W r
    double grad_inf = 0.0;
    for (std::size_t a = 0; a < np; ++a) grad_inf = std::max(grad_inf, 2.0 * std::abs(jtr[a]));
    if (grad_inf < options.gradient_tolerance) {
      result.status = FitResult::Status::converged;
      break;
    }

    bool accepted = false;
    bool solved_any = false;
    while (lambda <= 1e14) {
      damped = jtj;
      for (std::size_t a = 0; a < np; ++a) {
        const double d = jtj[a * np + a];
        damped[a * np + a] = d + lambda * (d != 0.0 ? d : 1.0);
      }
      if (!solve_dense(damped, jtr, np, step)) {
        lambda *= 10.0;
        continue;
      }
      solved_any = true;
      for (std::size_t a = 0; a < np; ++a) trial[a] = p[a] + step[a];
      const double trial_cost = cost_of(model, x, y, weights, trial);
      if (std::isfinite(trial_cost) && trial_cost < cost) {
        const double rel = (cost - trial_cost) / std::max(cost, 1e-300);
        p = trial;
        cost = trial_cost;
        lambda = std::max(lambda / 10.0, 1e-13);
        accepted = true;
        if (rel < options.cost_tolerance) result.status = FitResult::Status::converged;
        break;
      }
      lambda *= 10.0;
    }
    if (!accepted) {
      // Damping exhausted. If steps were solvable but none lowered the cost we
      // sit at a numerical minimum (realized cost change 0); otherwise the
      // normal equations are singular at every damping level.
      result.status = solved_any ? FitResult::Status::converged
                                 : FitResult::Status::singular;
      ++iter;
      break;
    }
    if (result.status == FitResult::Status::converged) {
      ++iter;
      break;
    }
  }

  result.iterations = iter;
  result.params = p;
  result.converged = result.status == FitResult::Status::converged;

  // Covariance (J^T W J)^-1 scaled by reduced chi-square at the final point.
  jacobian(model, x, p, jac);
  std::fill(jtj.begin(), jtj.end(), 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < np; ++a)
      for (std::size_t b = a; b < np; ++b)
        jtj[a * np + b] += weights[i] * jac[i * np + a] * jac[i * np + b];
  for (std::size_t a = 0; a < np; ++a)
    for (std::size_t b = 0; b < a; ++b) jtj[a * np + b] = jtj[b * np + a];

  result.reduced_chi2 = cost_of(model, x, y, weights, p) / static_cast<double>(n - np);
  std::vector<double> inv;
  if (invert_dense(jtj, np, inv)) {
    result.covariance.assign(np * np, 0.0);
    result.errors.assign(np, 0.0);
    for (std::size_t a = 0; a < np; ++a) {
      for (std::size_t b = 0; b < np; ++b)
        result.covariance[a * np + b] = inv[a * np + b] * result.reduced_chi2;
      result.errors[a] = std::sqrt(std::max(result.covariance[a * np + a], 0.0));
    }
  } else {
    singular = true;
    result.errors.assign(np, std::numeric_limits<double>::quiet_NaN());
  }
  if (singular) {
    // unidentifiable parameters (e.g. a flat data set leaving the decay time
    // unconstrained) are reported as non-convergence
    result.status = FitResult::Status::singular;
    result.converged = false;
  }
  return result;
}

namespace {

// indices ordered by ascending key, so the start-value heuristics do not
// depend on how callers ordered their points
std::vector<std::size_t> order_by(std::span<const double> key) {
  std::vector<std::size_t> idx(key.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t a, std::size_t b) { return key[a] < key[b]; });
  return idx;
}

}  // namespace

FitResult fit_exp_decay(std::span<const double> lags_ns, std::span<const double> g2,
                        std::optional<double> baseline_seed) {
  if (lags_ns.size() != g2.size()) throw ArgumentError("fit_exp_decay: size mismatch");
  if (lags_ns.size() < 4) throw ArgumentError("fit_exp_decay: need at least 4 points");
  for (double lag : lags_ns)
    if (lag < 0.0) throw ArgumentError("fit_exp_decay: lags must be >= 0");

  const std::size_t n = g2.size();
  const std::vector<std::size_t> idx = order_by(lags_ns);

  double tail = 0.0;
  const std::size_t q = std::max<std::size_t>(1, n / 4);
  for (std::size_t i = n - q; i < n; ++i) tail += g2[idx[i]];
  tail /= static_cast<double>(q);
  const double b0 = baseline_seed.value_or(tail);

  double peak = g2[idx[0]];
  std::size_t peak_pos = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (g2[idx[i]] > peak) peak = g2[idx[i]], peak_pos = i;
  const double a0 = peak - b0;

  // first lag where the excess has dropped below 1/e of the peak excess
  double tau0 = (lags_ns[idx[n - 1]] - lags_ns[idx[0]]) / 3.0;
  for (std::size_t i = peak_pos; i < n; ++i) {
    if (g2[idx[i]] - b0 <= a0 / std::exp(1.0)) {
      tau0 = std::max(lags_ns[idx[i]] - lags_ns[idx[peak_pos]], 1e-3);
      break;
    }
  }

  const ModelFn model = [](std::span<const double> p, double t) {
    return p[1] + p[0] * std::exp(-t / p[2]);
  };
  return lm_fit(model, lags_ns, g2, poisson_weights(g2), {a0, b0, tau0},
                {"A", "B", "tau0_ns"});
}

FitResult fit_hbt(std::span<const double> lags_ns, std::span<const double> g2) {
  if (lags_ns.size() != g2.size()) throw ArgumentError("fit_hbt: size mismatch");
  if (lags_ns.size() < 4) throw ArgumentError("fit_hbt: need at least 4 points");

  const std::size_t n = g2.size();
  std::vector<double> abs_lags(n);
  for (std::size_t i = 0; i < n; ++i) abs_lags[i] = std::abs(lags_ns[i]);
  const std::vector<std::size_t> idx = order_by(abs_lags);

  const std::size_t q = std::max<std::size_t>(1, n / 4);
  double tail = 0.0;
  for (std::size_t i = n - q; i < n; ++i) tail += g2[idx[i]];
  tail /= static_cast<double>(q);
  const double c0 = tail > 0.0 ? tail : 1.0;

  double peak = g2[idx[0]];
  for (std::size_t i = 0; i < n; ++i) peak = std::max(peak, g2[idx[i]]);
  const double d0 = std::max(peak / c0 - 1.0, 1e-3);

  double tau0 = (abs_lags[idx[n - 1]] + 1.0) / 3.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (g2[idx[i]] - c0 <= c0 * d0 / std::exp(1.0)) {
      tau0 = std::max(abs_lags[idx[i]], 1e-3);
      break;
    }
  }

  const ModelFn model = [](std::span<const double> p, double t) {
    return p[0] * (1.0 + p[1] * std::exp(-std::abs(t) / p[2]));
  };
  const std::vector<double> weights = poisson_weights(g2);

  // noisy autocorrelations can strand the fit in a runaway decay time; retry
  // from a few decay-time scales and keep the best converged minimum
  auto cost_of = [&](const FitResult& fit) {
    double cost = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = g2[i] - model(fit.params, lags_ns[i]);
      cost += weights[i] * r * r;
    }
    return cost;
  };
  const double span = std::max(abs_lags[idx[n - 1]], 1.0);
  FitResult best;
  double best_cost = std::numeric_limits<double>::infinity();
  for (const double tau_seed : {tau0, span / 20.0, span / 6.0, span / 2.0}) {
    FitResult fit = lm_fit(model, lags_ns, g2, weights, {c0, d0, tau_seed},
                           {"C", "D", "tau0_ns"});
    const double cost = cost_of(fit);
    const bool better = (fit.converged && !best.converged) ||
                        (fit.converged == best.converged && cost < best_cost);
    if (better) {
      best = std::move(fit);
      best_cost = cost;
    }
  }
  // crawling fits on strongly correlated (C, D) valleys can exhaust the
  // iteration budget; restarting at the found point lets the stall checks fire
  for (int restart = 0; restart < 3 && !best.converged; ++restart) {
    FitResult again =
        lm_fit(model, lags_ns, g2, weights, best.params, {"C", "D", "tau0_ns"});
    const double cost = cost_of(again);
    if (cost <= best_cost || again.converged) {
      best = std::move(again);
      best_cost = cost;
    } else {
      break;
    }
  }
  return best;
}

FitResult fit_superradiance(std::span<const double> od, std::span<const double> fwhm_mhz,
                            double gamma0_mhz) {
  if (od.size() != fwhm_mhz.size()) throw ArgumentError("fit_superradiance: size mismatch");
  if (od.size() < 2) throw ArgumentError("fit_superradiance: need at least 2 points");
  bool varied = false;
  for (double v : od) {
    if (v < 0.0) throw ArgumentError("fit_superradiance: od must be >= 0");
    if (v != od[0]) varied = true;
  }
  if (!varied) throw ArgumentError("fit_superradiance: degenerate sweep, all od equal");

  double k0 = 0.0;
  for (std::size_t i = 0; i < od.size(); ++i)
    if (od[i] > 0.0) k0 = std::max(k0, (fwhm_mhz[i] / gamma0_mhz - 1.0) / od[i]);

  const ModelFn model = [gamma0_mhz](std::span<const double> p, double x) {
    return gamma0_mhz * (1.0 + p[0] * x);
  };
  return lm_fit(model, od, fwhm_mhz, poisson_weights(fwhm_mhz), {k0}, {"k"});
}

}  // namespace qtt
