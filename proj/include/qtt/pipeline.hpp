#pragma once

#include <cstdint>
#include <filesystem>

#include <json.hpp>

#include "qtt/config.hpp"
#include "qtt/correlator.hpp"
#include "qtt/fitting.hpp"
#include "qtt/simulator.hpp"
#include "qtt/spectro.hpp"

namespace qtt {

// Detector channel conventions used throughout the front end.
inline const ChannelSet kSignalArm{0, 1};
inline const ChannelSet kIdlerArm{2, 3};

/// Deterministic sub-seed for an analysis stage.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stage);

/// Signal-idler cross-correlation with the exponential-decay fit and the
/// derived pair statistics.
struct G2Analysis {
  CorrelationHistogram hist;
  std::vector<double> g2;
  FitResult fit;            // A, B, tau0_ns over [0, fit_window]
  double g2_zero_bin = 0;   // measured g2 of the first bin [0, bin_width)
  double pair_rate_hz = 0;
  double eta_signal = 0;
  double eta_idler = 0;
};
G2Analysis analyze_g2(const TagStream& stream, const RunConfig& cfg);

/// Pooled HBT histograms of both arms, accumulated over `chunks` independent
/// acquisitions of chunk_wall_ps each (counts and gated time add exactly, so
/// pooling is equivalent to one long run split at chunk boundaries). Chunks
/// run on `threads` workers; the merge order is fixed, so the result is
/// deterministic.
struct HbtHistograms {
  CorrelationHistogram signal;  // D1 x D2
  CorrelationHistogram idler;   // D3 x D4
};
HbtHistograms accumulate_hbt(const SourceParams& params, std::uint64_t chunk_wall_ps,
                             unsigned chunks, std::int64_t bin_width_ps,
                             std::int64_t lag_range_ps, std::uint64_t seed,
                             unsigned threads);

/// normalize + fit_hbt on a pooled histogram.
struct HbtAnalysis {
  CorrelationHistogram hist;
  FitResult fit;  // C, D, tau0_ns
  double g2_zero = 0;  // C * (1 + D)
};
HbtAnalysis analyze_hbt(CorrelationHistogram hist);

/// Simulated cavity scan plus its deconvolving fit.
struct ScanAnalysis {
  SpectrumScan scan;
  FitResult fit;  // amplitude, center_mhz, photon_fwhm_mhz, baseline
};
ScanAnalysis run_scan(const RunConfig& cfg, std::uint64_t seed, bool heralded);

/// Heralded-bandwidth sweep over the configured optical densities, one scan
/// per OD on its own worker, then the one-parameter broadening-law fit.
struct SweepAnalysis {
  std::vector<double> od;
  std::vector<double> fwhm_mhz;
  std::vector<double> fwhm_err_mhz;
  FitResult fit;  // k
};
SweepAnalysis superradiance_sweep(const RunConfig& cfg, std::uint64_t seed,
                                  unsigned threads);

/// Full reproduction pipeline: simulate, correlate, fit, scan, sweep. Writes
/// report.json plus one CSV per figure into out_dir and returns the report.
nlohmann::json run_report(const RunConfig& cfg, std::uint64_t seed,
                          const std::filesystem::path& out_dir, unsigned threads);

}  // namespace qtt
