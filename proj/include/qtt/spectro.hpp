#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <json.hpp>

#include "qtt/errors.hpp"
#include "qtt/fitting.hpp"

namespace qtt {

/// Unit-peak Lorentzian transmission, 1 / (1 + (2(nu-center)/fwhm)^2).
double lorentzian_peak1(double nu_mhz, double center_mhz, double fwhm_mhz);

/// Scanning-cavity spectrum: counts accumulated per cavity detuning.
struct SpectrumScan {
  std::vector<double> detunings_mhz;  // strictly increasing
  std::vector<std::uint64_t> counts;
  double dwell_s = 0.0;  // per point
  double cavity_fwhm_mhz = 2.8;
  bool heralded = false;

  void validate() const;  // throws ArgumentError
};

/// Per-element loss fractions of the idler detection chain. The combined
/// transmission (product of 1-loss) converts heralded counts back to the full
/// pair flux; the defaults multiply to 0.204.
struct LossBudget {
  double filter_loss = 0.11;
  double optics_loss = 0.07;
  double detector_loss = 0.60;
  double polarizer_loss = 0.12;
  double fiber_loss = 0.30;

  double transmission() const;
  void validate() const;
};

/// Fits baseline + amplitude * Lorentzian(center, photon_fwhm + cavity_fwhm).
/// The sum of widths is exact for a Lorentzian photon line convolved with a
/// Lorentzian cavity, so photon_fwhm comes out already deconvolved.
/// Parameters: amplitude, center_mhz, photon_fwhm_mhz, baseline.
FitResult fit_scan(const SpectrumScan& scan);

/// unheralded - heralded / transmission, per bin. Negative residuals clamp to
/// zero and are reported in clamped_bins.
struct IncoherentSpectrum {
  SpectrumScan scan;
  std::vector<std::size_t> clamped_bins;
};
IncoherentSpectrum incoherent_spectrum(const SpectrumScan& unheralded,
                                       const SpectrumScan& heralded,
                                       const LossBudget& budget);

/// rho = fwhm * 2*pi * tau0; exactly 1 for a transform-limited
/// exponential/Lorentzian pair.
struct TransformLimit {
  double product;    // rho
  double deviation;  // |rho - 1|
};
TransformLimit transform_limit_check(double photon_fwhm_mhz, double tau0_ns);

/// CSV (detuning_mhz, counts) plus a JSON sidecar <path>.json carrying dwell,
/// cavity width and the heralded flag.
void write_scan_csv(const SpectrumScan& scan, const std::filesystem::path& path);
SpectrumScan read_scan_csv(const std::filesystem::path& path);

}  // namespace qtt
