#include "qtt/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <functional>
#include <numbers>
#include <optional>
#include <thread>
#include <utility>

namespace qtt {

namespace {

constexpr std::uint64_t kStageG2 = 1;
constexpr std::uint64_t kStageHbt = 2;
constexpr std::uint64_t kStageScanHeralded = 3;
constexpr std::uint64_t kStageScanUnheralded = 4;
constexpr std::uint64_t kStageSweep = 5;

std::int64_t ps_from_ns(double ns) { return std::llround(ns * 1e3); }

void run_on_pool(unsigned threads, unsigned jobs, const std::function<void(unsigned)>& work) {
  threads = std::max(1u, std::min(threads, jobs));
  std::atomic<unsigned> next{0};
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (unsigned t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (unsigned job = next.fetch_add(1); job < jobs; job = next.fetch_add(1)) work(job);
    });
  for (auto& t : pool) t.join();
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stage) {
  std::uint64_t x = master ^ (0x9e3779b97f4a7c15ULL * (stage + 1));
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

G2Analysis analyze_g2(const TagStream& stream, const RunConfig& cfg) {
  // pump-off tags (dark counts) would otherwise add accidentals that the
  // gated-time normalization does not account for
  const TagStream gated = filter_gated(stream, stream.header.duty);
  G2Analysis out;
  out.hist = cross_correlation(gated, kSignalArm, kIdlerArm, ps_from_ns(cfg.bin_width_ns),
                               ps_from_ns(cfg.lag_min_ns), ps_from_ns(cfg.lag_max_ns));
  out.g2 = normalize_g2(out.hist);

  std::vector<double> fit_lags, fit_g2;
  double flat_sum = 0.0;
  std::size_t flat_n = 0;
  for (std::size_t k = 0; k < out.g2.size(); ++k) {
    const double lag = out.hist.lag_center_ns(k);
    if (lag >= 0.0 && lag <= cfg.fit_window_ns) {
      fit_lags.push_back(lag);
      fit_g2.push_back(out.g2[k]);
    }
    if (lag >= cfg.flat_region_min_ns && lag <= cfg.flat_region_max_ns) {
      flat_sum += out.g2[k];
      ++flat_n;
    }
  }
  std::optional<double> baseline;
  if (flat_n > 0) baseline = flat_sum / static_cast<double>(flat_n);
  out.fit = fit_exp_decay(fit_lags, fit_g2, baseline);

  const std::int64_t zero_bin = (0 - out.hist.lag_min_ps) / out.hist.bin_width_ps;
  if (zero_bin >= 0 && static_cast<std::size_t>(zero_bin) < out.g2.size())
    out.g2_zero_bin = out.g2[static_cast<std::size_t>(zero_bin)];

  out.pair_rate_hz = pair_rate(out.hist, ps_from_ns(cfg.coincidence_window_ns));
  const auto [eta_s, eta_i] = heralding(out.pair_rate_hz, out.hist.rate_a_hz,
                                        out.hist.rate_b_hz);
  out.eta_signal = eta_s;
  out.eta_idler = eta_i;
  return out;
}

HbtHistograms accumulate_hbt(const SourceParams& params, std::uint64_t chunk_wall_ps,
                             unsigned chunks, std::int64_t bin_width_ps,
                             std::int64_t lag_range_ps, std::uint64_t seed,
                             unsigned threads) {
  if (chunks == 0) throw ArgumentError("accumulate_hbt: chunks must be > 0");
  std::vector<HbtHistograms> partial(chunks);
  run_on_pool(threads, chunks, [&](unsigned chunk) {
    const TagStream stream = filter_gated(
        simulate_run(params, chunk_wall_ps, derive_seed(seed, 1000 + chunk)),
        params.duty);
    partial[chunk].signal = cross_correlation(stream, ChannelSet{0}, ChannelSet{1},
                                              bin_width_ps, -lag_range_ps, lag_range_ps);
    partial[chunk].idler = cross_correlation(stream, ChannelSet{2}, ChannelSet{3},
                                             bin_width_ps, -lag_range_ps, lag_range_ps);
  });
  HbtHistograms pooled = std::move(partial[0]);
  for (unsigned c = 1; c < chunks; ++c) {
    merge_histograms(pooled.signal, partial[c].signal);
    merge_histograms(pooled.idler, partial[c].idler);
  }
  return pooled;
}

HbtAnalysis analyze_hbt(CorrelationHistogram hist) {
  HbtAnalysis out;
  const std::vector<double> g2 = normalize_g2(hist);
  const std::vector<double> lags = hist.lag_centers_ns();
  out.hist = std::move(hist);
  out.fit = fit_hbt(lags, g2);
  out.g2_zero = out.fit.param("C") * (1.0 + out.fit.param("D"));
  return out;
}

ScanAnalysis run_scan(const RunConfig& cfg, std::uint64_t seed, bool heralded) {
  ScanAnalysis out;
  const std::vector<double> detunings = cfg.scan_detunings();
  out.scan = simulate_cavity_scan(
      cfg.source, cfg.cavity_fwhm_mhz, detunings,
      static_cast<std::uint64_t>(std::llround(cfg.scan_dwell_s * 1e12)),
      derive_seed(seed, heralded ? kStageScanHeralded : kStageScanUnheralded), heralded,
      static_cast<std::uint64_t>(ps_from_ns(cfg.herald_window_ns)));
  out.fit = fit_scan(out.scan);
  return out;
}

SweepAnalysis superradiance_sweep(const RunConfig& cfg, std::uint64_t seed,
                                  unsigned threads) {
  SweepAnalysis out;
  out.od = cfg.sweep_od;
  out.fwhm_mhz.resize(out.od.size());
  out.fwhm_err_mhz.resize(out.od.size());

  const std::vector<double> detunings = cfg.scan_detunings();
  const std::uint64_t dwell_ps =
      static_cast<std::uint64_t>(std::llround(cfg.sweep_dwell_s * 1e12));
  std::vector<FitResult> fits(out.od.size());
  run_on_pool(threads, static_cast<unsigned>(out.od.size()), [&](unsigned i) {
    SourceParams params = cfg.source;
    params.optical_density = out.od[i];
    const SpectrumScan scan = simulate_cavity_scan(
        params, cfg.cavity_fwhm_mhz, detunings, dwell_ps,
        derive_seed(seed, kStageSweep + i), true,
        static_cast<std::uint64_t>(ps_from_ns(cfg.herald_window_ns)));
    fits[i] = fit_scan(scan);
  });
  for (std::size_t i = 0; i < fits.size(); ++i) {
    out.fwhm_mhz[i] = fits[i].param("photon_fwhm_mhz");
    out.fwhm_err_mhz[i] = fits[i].error("photon_fwhm_mhz");
  }
  out.fit = fit_superradiance(out.od, out.fwhm_mhz, cfg.source.natural_linewidth_mhz);
  return out;
}

nlohmann::json run_report(const RunConfig& cfg, std::uint64_t seed,
                          const std::filesystem::path& out_dir, unsigned threads) {
  std::filesystem::create_directories(out_dir);
  nlohmann::json report;
  report["schema_version"] = 1;
  report["seed"] = seed;

  // cross-correlation figure
  const TagStream stream =
      simulate_run(cfg.source, cfg.wall_duration_ps(), derive_seed(seed, kStageG2));
  const G2Analysis g2 = analyze_g2(stream, cfg);
  write_histogram_csv(g2.hist, out_dir / "g2_si.csv");
  report["g2"]["fit"] = g2.fit.to_json();
  report["g2"]["tau0_ns"] = g2.fit.param("tau0_ns");
  report["g2"]["tau0_err_ns"] = g2.fit.error("tau0_ns");
  report["g2"]["A"] = g2.fit.param("A");
  report["g2"]["B"] = g2.fit.param("B");
  report["g2"]["g2_0_fit"] = g2.fit.param("A") + g2.fit.param("B");
  report["g2"]["g2_0_bin"] = g2.g2_zero_bin;
  report["pairs"]["pair_rate_hz"] = g2.pair_rate_hz;
  report["pairs"]["signal_rate_hz"] = g2.hist.rate_a_hz;
  report["pairs"]["idler_rate_hz"] = g2.hist.rate_b_hz;
  report["pairs"]["eta_signal"] = g2.eta_signal;
  report["pairs"]["eta_idler"] = g2.eta_idler;
  report["pairs"]["coincidence_window_ns"] = cfg.coincidence_window_ns;

  // thermal statistics of the arms
  const HbtHistograms pooled = accumulate_hbt(
      cfg.source, static_cast<std::uint64_t>(std::llround(cfg.hbt_chunk_s * 1e12)),
      static_cast<unsigned>(std::ceil(cfg.hbt_wall_duration_s / cfg.hbt_chunk_s)),
      ps_from_ns(cfg.hbt_bin_width_ns), ps_from_ns(cfg.hbt_lag_range_ns),
      derive_seed(seed, kStageHbt), threads);
  const HbtAnalysis hbt_signal = analyze_hbt(pooled.signal);
  const HbtAnalysis hbt_idler = analyze_hbt(pooled.idler);
  write_histogram_csv(hbt_signal.hist, out_dir / "hbt_signal.csv");
  write_histogram_csv(hbt_idler.hist, out_dir / "hbt_idler.csv");
  for (const auto& [name, hbt] :
       {std::pair<const char*, const HbtAnalysis&>{"hbt_signal", hbt_signal},
        std::pair<const char*, const HbtAnalysis&>{"hbt_idler", hbt_idler}}) {
    report[name]["fit"] = hbt.fit.to_json();
    report[name]["g2_0"] = hbt.g2_zero;
    report[name]["tau0_ns"] = hbt.fit.param("tau0_ns");
  }
  report["g2_ss_0"] = hbt_signal.g2_zero;
  report["g2_ii_0"] = hbt_idler.g2_zero;

  // Cauchy-Schwarz ratio from the fitted peak and the arm autocorrelations
  const double peak = g2.fit.param("A") + g2.fit.param("B");
  report["cauchy_schwarz"]["g2_si_peak"] = peak;
  report["cauchy_schwarz"]["R"] =
      cauchy_schwarz(peak, hbt_idler.g2_zero, hbt_signal.g2_zero);

  // spectral figures
  const ScanAnalysis heralded = run_scan(cfg, seed, true);
  const ScanAnalysis unheralded = run_scan(cfg, seed, false);
  write_scan_csv(heralded.scan, out_dir / "scan_heralded.csv");
  write_scan_csv(unheralded.scan, out_dir / "scan_unheralded.csv");
  report["scan_heralded"]["fit"] = heralded.fit.to_json();
  report["scan_heralded"]["photon_fwhm_mhz"] = heralded.fit.param("photon_fwhm_mhz");
  report["scan_unheralded"]["fit"] = unheralded.fit.to_json();
  report["scan_unheralded"]["photon_fwhm_mhz"] = unheralded.fit.param("photon_fwhm_mhz");

  const TransformLimit limit = transform_limit_check(
      heralded.fit.param("photon_fwhm_mhz"), g2.fit.param("tau0_ns"));
  report["transform_limit"]["product"] = limit.product;
  report["transform_limit"]["deviation"] = limit.deviation;
  report["transform_limit"]["expected_fwhm_mhz"] =
      1e3 / (2.0 * std::numbers::pi * g2.fit.param("tau0_ns"));

  // loss-corrected incoherent component
  const IncoherentSpectrum incoherent =
      incoherent_spectrum(unheralded.scan, heralded.scan, cfg.losses);
  write_scan_csv(incoherent.scan, out_dir / "incoherent.csv");
  report["incoherent"]["transmission"] = cfg.losses.transmission();
  report["incoherent"]["clamped_bins"] = incoherent.clamped_bins.size();
  std::uint64_t residual = 0;
  for (auto c : incoherent.scan.counts) residual += c;
  report["incoherent"]["total_counts"] = residual;
  if (residual >= 100) {
    const FitResult fit = fit_scan(incoherent.scan);
    report["incoherent"]["fit"] = fit.to_json();
    if (fit.converged)
      report["incoherent"]["photon_fwhm_mhz"] = fit.param("photon_fwhm_mhz");
  }

  // broadening-law sweep
  const SweepAnalysis sweep = superradiance_sweep(cfg, seed, threads);
  {
    std::ofstream csv(out_dir / "superradiance.csv", std::ios::trunc);
    csv << "od,fwhm_mhz,fwhm_err_mhz\n";
    for (std::size_t i = 0; i < sweep.od.size(); ++i)
      csv << sweep.od[i] << ',' << sweep.fwhm_mhz[i] << ',' << sweep.fwhm_err_mhz[i]
          << '\n';
  }
  report["superradiance"]["od"] = sweep.od;
  report["superradiance"]["fwhm_mhz"] = sweep.fwhm_mhz;
  report["superradiance"]["k"] = sweep.fit.param("k");
  report["superradiance"]["k_err"] = sweep.fit.error("k");
  report["superradiance"]["fit"] = sweep.fit.to_json();
  if (!sweep.od.empty()) {
    const double od_max = *std::max_element(sweep.od.begin(), sweep.od.end());
    report["superradiance"]["gamma_ratio_max_to_zero"] =
        1.0 + sweep.fit.param("k") * od_max;
  }

  std::ofstream out(out_dir / "report.json", std::ios::trunc);
  if (!out) throw ArgumentError("cannot write report.json in " + out_dir.string());
  out << report.dump(2) << '\n';
  return report;
}

}  // namespace qtt
