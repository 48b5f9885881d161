#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "qtt/simulator.hpp"
#include "qtt/spectro.hpp"

namespace qtt {

/// Everything a run needs: the source model plus analysis settings. Loaded
/// from a flat key = value file; unknown keys are rejected so typos cannot
/// silently fall back to defaults.
struct RunConfig {
  SourceParams source{};
  LossBudget losses{};

  // acquisition
  double wall_duration_s = 611.0;

  // correlation analysis
  double bin_width_ns = 1.0;
  double lag_min_ns = -100.0;
  double lag_max_ns = 1000.0;
  double coincidence_window_ns = 30.0;  // tau_c for the pair rate
  double fit_window_ns = 125.0;         // exp-decay fit upper lag
  double flat_region_min_ns = 125.0;    // baseline estimate region
  double flat_region_max_ns = 1000.0;
  double herald_window_ns = 30.0;

  // HBT analysis (long accumulation, split into independent chunks)
  double hbt_wall_duration_s = 1.3e6;
  double hbt_chunk_s = 13000.0;
  double hbt_lag_range_ns = 150.0;
  double hbt_bin_width_ns = 1.0;

  // cavity scan
  double cavity_fwhm_mhz = 2.8;
  double scan_min_mhz = -50.0;
  double scan_max_mhz = 50.0;
  std::uint32_t scan_points = 41;
  double scan_dwell_s = 52.0;

  // superradiance sweep
  std::vector<double> sweep_od = {4.0, 8.0, 16.0, 24.0, 32.0};
  double sweep_dwell_s = 52.0;

  void validate() const;  // throws ArgumentError

  std::vector<double> scan_detunings() const;
  std::uint64_t wall_duration_ps() const;
};

/// Parses the flat key = value format ('#' comments, quoted strings, numbers,
/// booleans, [a, b, c] number arrays). Throws ArgumentError naming the first
/// unknown or malformed key.
RunConfig load_run_config(const std::filesystem::path& path);

/// Applies `key = value` pairs from a string (file contents) to defaults.
RunConfig parse_run_config(const std::string& text);

}  // namespace qtt
