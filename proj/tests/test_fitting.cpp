#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "qtt/fitting.hpp"

using namespace qtt;

namespace {

const ModelFn kExpModel = [](std::span<const double> p, double t) {
  return p[1] + p[0] * std::exp(-t / p[2]);
};

std::vector<double> linspace(double a, double b, std::size_t n) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i)
    x[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
  return x;
}

}  // namespace

TEST_CASE("lm_fit recovers exact model parameters from noiseless data") {
  const std::vector<double> truth = {100.0, 1.0, 5.0};
  const std::vector<double> x = linspace(0.0, 40.0, 60);
  std::vector<double> y(x.size()), w(x.size(), 1.0);
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = kExpModel(truth, x[i]);

  const FitResult fit = lm_fit(kExpModel, x, y, w, {60.0, 2.0, 9.0});
  REQUIRE(fit.converged);
  for (std::size_t j = 0; j < truth.size(); ++j)
    CHECK(std::abs(fit.params[j] - truth[j]) / truth[j] < 1e-6);
}

TEST_CASE("lm_fit on a linear model matches closed-form least squares to 1e-10") {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> noise(0.0, 0.3);
  const std::vector<double> x = linspace(-5.0, 12.0, 40);
  std::vector<double> y(x.size()), w(x.size(), 1.0);
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = 2.5 + 0.7 * x[i] + noise(rng);

  // normal-equation oracle for y = a + b x
  const double n = static_cast<double>(x.size());
  const double sx = std::accumulate(x.begin(), x.end(), 0.0);
  const double sy = std::accumulate(y.begin(), y.end(), 0.0);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  const double b = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  const double a = (sy - b * sx) / n;

  const ModelFn line = [](std::span<const double> p, double t) { return p[0] + p[1] * t; };
  const FitResult fit = lm_fit(line, x, y, w, {0.0, 0.0});
  REQUIRE(fit.converged);
  CHECK(std::abs(fit.params[0] - a) < 1e-10);
  CHECK(std::abs(fit.params[1] - b) < 1e-10);
}

TEST_CASE("lm_fit errors are calibrated: 3-sigma covers truth for 95% of seeds") {
  // counts stay well above 1 so the 1/max(n,1) weights sit in their
  // asymptotic regime (at O(1) counts they bias baselines low by ~1 count)
  const std::vector<double> truth = {400.0, 50.0, 8.0};
  const std::vector<double> x = linspace(0.0, 60.0, 61);
  int covered = 0;
  const int trials = 100;
  for (int trial = 0; trial < trials; ++trial) {
    std::mt19937_64 rng(1000 + trial);
    std::vector<double> y(x.size()), w(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      std::poisson_distribution<long> pois(kExpModel(truth, x[i]));
      y[i] = static_cast<double>(pois(rng));
      w[i] = 1.0 / std::max(y[i], 1.0);
    }
    const FitResult fit = lm_fit(kExpModel, x, y, w, {300.0, 30.0, 10.0});
    if (!fit.converged) continue;
    bool ok = true;
    for (std::size_t j = 0; j < truth.size(); ++j)
      ok = ok && std::abs(fit.params[j] - truth[j]) <= 3.0 * fit.errors[j];
    covered += ok;
  }
  CHECK(covered >= 95);
}

TEST_CASE("model gradients are smooth enough for the central-difference Jacobian") {
  // two independent step sizes must agree to 1e-6 relative on the test model
  const std::vector<double> p = {7.0, 2.0, 3.5};
  for (double t : {0.0, 1.0, 4.0, 11.0}) {
    for (std::size_t j = 0; j < p.size(); ++j) {
      auto diff = [&](double h) {
        std::vector<double> lo(p), hi(p);
        lo[j] -= h;
        hi[j] += h;
        return (kExpModel(hi, t) - kExpModel(lo, t)) / (2.0 * h);
      };
      const double d1 = diff(std::max(1e-9, 1e-6 * std::abs(p[j])));
      const double d2 = diff(std::max(1e-8, 1e-5 * std::abs(p[j])));
      CHECK(std::abs(d1 - d2) <= 1e-6 * std::max({std::abs(d1), std::abs(d2), 1.0}));
    }
  }
}

TEST_CASE("fit results are invariant under data reordering") {
  std::mt19937_64 rng(5);
  const std::vector<double> truth = {50.0, 1.2, 6.0};
  std::vector<double> x = linspace(0.0, 50.0, 51), y(x.size());
  std::normal_distribution<double> noise(0.0, 0.5);
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = kExpModel(truth, x[i]) + noise(rng);

  const FitResult base = fit_exp_decay(x, y);
  REQUIRE(base.converged);

  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<double> xs(x.size()), ys(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xs[i] = x[order[i]];
    ys[i] = y[order[i]];
  }
  const FitResult shuffled = fit_exp_decay(xs, ys);
  REQUIRE(shuffled.converged);
  for (std::size_t j = 0; j < 3; ++j)
    CHECK(std::abs(base.params[j] - shuffled.params[j]) <
          1e-8 * std::max(1.0, std::abs(base.params[j])));
}

TEST_CASE("rescaling y scales A and B and leaves tau0 unchanged") {
  std::mt19937_64 rng(6);
  const std::vector<double> truth = {80.0, 1.5, 7.0};  // data stays >= 1
  std::vector<double> x = linspace(0.0, 60.0, 61), y(x.size());
  std::normal_distribution<double> noise(0.0, 0.2);
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = kExpModel(truth, x[i]) + noise(rng);

  const double c = 3.0;
  std::vector<double> yc(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) yc[i] = c * y[i];

  const FitResult base = fit_exp_decay(x, y);
  const FitResult scaled = fit_exp_decay(x, yc);
  REQUIRE(base.converged);
  REQUIRE(scaled.converged);
  CHECK(std::abs(scaled.param("A") - c * base.param("A")) < 1e-6 * c * base.param("A"));
  CHECK(std::abs(scaled.param("B") - c * base.param("B")) < 1e-6 * c * base.param("B"));
  CHECK(std::abs(scaled.param("tau0_ns") - base.param("tau0_ns")) <
        1e-8 * base.param("tau0_ns"));
}

TEST_CASE("fit_exp_decay recovers exact samples and validates preconditions") {
  const std::vector<double> x = linspace(0.0, 50.0, 40);
  const std::vector<double> truth = {100.0, 1.0, 5.0};
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = kExpModel(truth, x[i]);
  const FitResult fit = fit_exp_decay(x, y);
  REQUIRE(fit.converged);
  CHECK(fit.param("A") == doctest::Approx(100.0).epsilon(1e-6));
  CHECK(fit.param("B") == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(fit.param("tau0_ns") == doctest::Approx(5.0).epsilon(1e-6));

  CHECK_THROWS_AS(
      fit_exp_decay(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 3}),
      ArgumentError);
  CHECK_THROWS_AS(fit_exp_decay(std::vector<double>{-1, 0, 1, 2},
                                std::vector<double>{1, 1, 1, 1}),
                  ArgumentError);
}

TEST_CASE("fit_exp_decay reports non-convergence on all-flat data instead of crashing") {
  const std::vector<double> x = linspace(0.0, 50.0, 30);
  const std::vector<double> y(x.size(), 1.0);
  const FitResult fit = fit_exp_decay(x, y);
  CHECK_FALSE(fit.converged);
}

TEST_CASE("fit_hbt recovers exact samples on both reference parameter sets") {
  const ModelFn hbt = [](std::span<const double> p, double t) {
    return p[0] * (1.0 + p[1] * std::exp(-std::abs(t) / p[2]));
  };
  // signal arm: C=1.08, D=0.93, tau0=17.8 ns; idler arm: C=1.04, D=0.96, 9.9 ns
  for (const auto& truth : {std::vector<double>{1.08, 0.93, 17.8},
                           std::vector<double>{1.04, 0.96, 9.9}}) {
    const std::vector<double> x = linspace(-60.0, 60.0, 121);
    std::vector<double> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = hbt(truth, x[i]);
    const FitResult fit = fit_hbt(x, y);
    REQUIRE(fit.converged);
    CHECK(fit.param("C") == doctest::Approx(truth[0]).epsilon(1e-6));
    CHECK(fit.param("D") == doctest::Approx(truth[1]).epsilon(1e-6));
    CHECK(fit.param("tau0_ns") == doctest::Approx(truth[2]).epsilon(1e-6));
    CHECK(fit.param("C") * (1.0 + fit.param("D")) ==
          doctest::Approx(truth[0] * (1.0 + truth[1])).epsilon(1e-6));
  }
}

TEST_CASE("fit_superradiance pins the broadening slope") {
  SUBCASE("exact line through the two reference points") {
    const std::vector<double> od = {0.0, 32.0};
    const std::vector<double> fwhm = {5.8, 23.8};
    const FitResult fit = fit_superradiance(od, fwhm);
    REQUIRE(fit.converged);
    CHECK(fit.param("k") == doctest::Approx(0.0970).epsilon(2e-3));
  }
  SUBCASE("flat sweep gives k = 0") {
    const std::vector<double> od = {0.0, 8.0, 16.0};
    const std::vector<double> fwhm = {5.8, 5.8, 5.8};
    const FitResult fit = fit_superradiance(od, fwhm);
    REQUIRE(fit.converged);
    CHECK(std::abs(fit.param("k")) < 1e-9);
  }
  SUBCASE("noisy synthetic sweep recovers k within 3 sigma") {
    std::mt19937_64 rng(11);
    const double k_true = 0.097;
    std::vector<double> od(10), fwhm(10);
    std::normal_distribution<double> noise(0.0, 0.2);
    for (std::size_t i = 0; i < od.size(); ++i) {
      od[i] = 4.0 * static_cast<double>(i);
      fwhm[i] = 5.8 * (1.0 + k_true * od[i]) + noise(rng);
    }
    const FitResult fit = fit_superradiance(od, fwhm);
    REQUIRE(fit.converged);
    CHECK(std::abs(fit.param("k") - k_true) < 3.0 * fit.error("k"));
  }
  SUBCASE("degenerate sweep is rejected") {
    const std::vector<double> od = {8.0, 8.0};
    const std::vector<double> fwhm = {10.0, 11.0};
    CHECK_THROWS_AS(fit_superradiance(od, fwhm), ArgumentError);
  }
}

TEST_CASE("lm_fit never ends above its starting cost") {
  std::mt19937_64 rng(21);
  const std::vector<double> x = linspace(0.0, 30.0, 31);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> y(x.size()), w(x.size(), 1.0);
    const std::vector<double> truth = {30.0, 2.0, 4.0};
    std::normal_distribution<double> noise(0.0, 2.0);
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = kExpModel(truth, x[i]) + noise(rng);
    const std::vector<double> p0 = {10.0, 0.0, 8.0};
    double cost0 = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double r = y[i] - kExpModel(p0, x[i]);
      cost0 += r * r;
    }
    const FitResult fit = lm_fit(kExpModel, x, y, w, p0);
    double cost1 = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double r = y[i] - kExpModel(fit.params, x[i]);
      cost1 += r * r;
    }
    CHECK(cost1 <= cost0 + 1e-9);
  }
}
