#include "qtt/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <thread>

#include "qtt/pipeline.hpp"
#include "qtt/timetag.hpp"

namespace qtt {

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitFitFailure = 3;

struct CommonOpts {
  std::string config_path;
  std::uint64_t seed = 1;
  std::string out_path;
  std::string in_path;
  unsigned threads = 0;  // 0: hardware concurrency
  std::optional<double> duration_s;
};

RunConfig config_of(const CommonOpts& opts) {
  if (opts.config_path.empty()) return RunConfig{};
  return load_run_config(opts.config_path);
}

unsigned threads_of(const CommonOpts& opts) {
  if (opts.threads > 0) return opts.threads;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? hw : 4;
}

TagStream load_input(const CommonOpts& opts) {
  if (opts.in_path.empty()) throw ArgumentError("missing --in <stream.qtt>");
  TagStream stream = read_stream(opts.in_path);
  if (opts.duration_s)
    stream.header.wall_duration_ps =
        static_cast<std::uint64_t>(std::llround(*opts.duration_s * 1e12));
  return stream;
}

void write_json(const nlohmann::json& j, const std::string& path, std::ostream& out) {
  if (path.empty()) {
    out << j.dump(2) << '\n';
    return;
  }
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw ArgumentError("cannot create file: " + path);
  f << j.dump(2) << '\n';
}

int verb_simulate(const CommonOpts& opts) {
  const RunConfig cfg = config_of(opts);
  const double duration_s = opts.duration_s.value_or(cfg.wall_duration_s);
  const TagStream stream = simulate_run(
      cfg.source, static_cast<std::uint64_t>(std::llround(duration_s * 1e12)), opts.seed);
  write_stream(stream, opts.out_path);
  return kExitOk;
}

int verb_g2(const CommonOpts& opts, std::ostream& out) {
  const RunConfig cfg = config_of(opts);
  const TagStream stream = load_input(opts);
  const G2Analysis analysis = analyze_g2(stream, cfg);
  write_histogram_csv(analysis.hist, opts.out_path + ".csv");

  nlohmann::json j = histogram_to_json(analysis.hist);
  j["fit"] = analysis.fit.to_json();
  j["g2_0_bin"] = analysis.g2_zero_bin;
  write_json(j, opts.out_path + ".json", out);
  return analysis.fit.converged ? kExitOk : kExitFitFailure;
}

int verb_hbt(const CommonOpts& opts, const std::string& arm, std::ostream& out) {
  const RunConfig cfg = config_of(opts);
  const TagStream stream = load_input(opts);
  ChannelSet a{0}, b{1};
  if (arm == "idler") {
    a = ChannelSet{2};
    b = ChannelSet{3};
  } else if (arm != "signal") {
    throw ArgumentError("--arm must be signal or idler");
  }
  const std::int64_t range_ps = std::llround(cfg.hbt_lag_range_ns * 1e3);
  const TagStream gated = filter_gated(stream, stream.header.duty);
  HbtAnalysis analysis = analyze_hbt(
      cross_correlation(gated, a, b, std::llround(cfg.hbt_bin_width_ns * 1e3),
                        -range_ps, range_ps));
  write_histogram_csv(analysis.hist, opts.out_path + ".csv");

  nlohmann::json j = histogram_to_json(analysis.hist);
  j["fit"] = analysis.fit.to_json();
  j["g2_0"] = analysis.g2_zero;
  write_json(j, opts.out_path + ".json", out);
  return analysis.fit.converged ? kExitOk : kExitFitFailure;
}

int verb_pairs(const CommonOpts& opts, std::ostream& out) {
  const RunConfig cfg = config_of(opts);
  const TagStream stream = load_input(opts);

  nlohmann::json j;
  j["coincidence_window_ns"] = cfg.coincidence_window_ns;
  if (stream.tags.empty()) {
    j["pair_rate_hz"] = 0.0;
    j["signal_rate_hz"] = 0.0;
    j["idler_rate_hz"] = 0.0;
  } else {
    const TagStream gated = filter_gated(stream, stream.header.duty);
    const CorrelationHistogram hist = cross_correlation(
        gated, kSignalArm, kIdlerArm, std::llround(cfg.bin_width_ns * 1e3),
        std::llround(cfg.lag_min_ns * 1e3), std::llround(cfg.lag_max_ns * 1e3));
    const double r_p = pair_rate(hist, std::llround(cfg.coincidence_window_ns * 1e3));
    j["pair_rate_hz"] = r_p;
    j["signal_rate_hz"] = hist.rate_a_hz;
    j["idler_rate_hz"] = hist.rate_b_hz;
    if (hist.rate_a_hz > 0.0 && hist.rate_b_hz > 0.0) {
      const auto [eta_s, eta_i] = heralding(r_p, hist.rate_a_hz, hist.rate_b_hz);
      j["eta_signal"] = eta_s;
      j["eta_idler"] = eta_i;
    }
  }
  write_json(j, opts.out_path, out);
  return kExitOk;
}

int verb_cs(const CommonOpts& opts, double si, double ii, double ss, std::ostream& out) {
  nlohmann::json j;
  j["g2_si_peak"] = si;
  j["g2_ii_0"] = ii;
  j["g2_ss_0"] = ss;
  j["R"] = cauchy_schwarz(si, ii, ss);
  write_json(j, opts.out_path, out);
  return kExitOk;
}

int verb_scan(const CommonOpts& opts, bool unheralded) {
  const RunConfig cfg = config_of(opts);
  const ScanAnalysis analysis = run_scan(cfg, opts.seed, !unheralded);
  write_scan_csv(analysis.scan, opts.out_path);
  return kExitOk;
}

int verb_scan_fit(const CommonOpts& opts, std::optional<double> cavity_fwhm,
                  std::ostream& out) {
  if (opts.in_path.empty()) throw ArgumentError("missing --in <scan.csv>");
  SpectrumScan scan = read_scan_csv(opts.in_path);
  if (cavity_fwhm) scan.cavity_fwhm_mhz = *cavity_fwhm;
  const FitResult fit = fit_scan(scan);
  nlohmann::json j = fit.to_json();
  j["photon_fwhm_mhz"] = fit.param("photon_fwhm_mhz");
  write_json(j, opts.out_path, out);
  return fit.converged ? kExitOk : kExitFitFailure;
}

int verb_superradiance(const CommonOpts& opts, std::ostream& out) {
  const RunConfig cfg = config_of(opts);
  const SweepAnalysis sweep = superradiance_sweep(cfg, opts.seed, threads_of(opts));

  std::ofstream csv(opts.out_path + ".csv", std::ios::trunc);
  if (!csv) throw ArgumentError("cannot create file: " + opts.out_path + ".csv");
  csv << "od,fwhm_mhz,fwhm_err_mhz\n";
  for (std::size_t i = 0; i < sweep.od.size(); ++i)
    csv << sweep.od[i] << ',' << sweep.fwhm_mhz[i] << ',' << sweep.fwhm_err_mhz[i] << '\n';

  nlohmann::json j;
  j["od"] = sweep.od;
  j["fwhm_mhz"] = sweep.fwhm_mhz;
  j["fwhm_err_mhz"] = sweep.fwhm_err_mhz;
  j["fit"] = sweep.fit.to_json();
  j["k"] = sweep.fit.param("k");
  write_json(j, opts.out_path + ".json", out);
  return sweep.fit.converged ? kExitOk : kExitFitFailure;
}

int verb_report(const CommonOpts& opts, std::ostream& out) {
  const RunConfig cfg = config_of(opts);
  const nlohmann::json report = run_report(cfg, opts.seed, opts.out_path, threads_of(opts));
  // non-convergence of any stage fit fails the reproduction
  for (const char* stage : {"g2", "hbt_signal", "hbt_idler", "scan_heralded",
                            "scan_unheralded", "superradiance"}) {
    if (!report.contains(stage)) continue;
    const auto& fit = report[stage]["fit"];
    if (fit.contains("converged") && !fit["converged"].get<bool>()) {
      out << "ERR:fit: stage " << stage << " did not converge\n";
      return kExitFitFailure;
    }
  }
  out << "report written to " << opts.out_path << "/report.json\n";
  return kExitOk;
}

int verb_sort(const CommonOpts& opts) {
  TagStream stream = read_stream_unsorted(opts.in_path);
  std::stable_sort(stream.tags.begin(), stream.tags.end());
  write_stream(stream, opts.out_path);
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"time-tag simulation and correlation toolkit for photon-pair sources"};
  app.require_subcommand(1);

  CommonOpts opts;
  std::string arm = "signal";
  bool unheralded = false;
  double cs_si = 0.0, cs_ii = 0.0, cs_ss = 0.0;
  std::optional<double> cavity_fwhm;

  auto add_common = [&](CLI::App* cmd, bool needs_out) {
    cmd->add_option("--config", opts.config_path, "run configuration file");
    cmd->add_option("--seed", opts.seed, "random seed");
    auto* o = cmd->add_option("--out", opts.out_path, "output path");
    if (needs_out) o->required();
    cmd->add_option("--threads", opts.threads, "worker threads (0 = auto)");
    cmd->add_option(
        "--duration-s",
        [&opts](const std::vector<std::string>& v) {
          opts.duration_s = std::stod(v.front());
          return true;
        },
        "wall duration override");
  };

  auto* simulate = app.add_subcommand("simulate", "generate a tag stream (QTT1)");
  add_common(simulate, true);

  auto* g2 = app.add_subcommand("g2", "signal-idler cross-correlation and decay fit");
  add_common(g2, true);
  g2->add_option("--in", opts.in_path, "input stream")->required();

  auto* hbt = app.add_subcommand("hbt", "arm autocorrelation and thermal fit");
  add_common(hbt, true);
  hbt->add_option("--in", opts.in_path, "input stream")->required();
  hbt->add_option("--arm", arm, "signal or idler");

  auto* pairs = app.add_subcommand("pairs", "pair rate and heralding efficiencies");
  add_common(pairs, false);
  pairs->add_option("--in", opts.in_path, "input stream")->required();

  auto* cs = app.add_subcommand("cs", "Cauchy-Schwarz ratio from scalar g2 inputs");
  add_common(cs, false);
  cs->add_option("--g2-si", cs_si, "cross-correlation peak")->required();
  cs->add_option("--g2-ii", cs_ii, "idler autocorrelation at zero lag")->required();
  cs->add_option("--g2-ss", cs_ss, "signal autocorrelation at zero lag")->required();

  auto* scan = app.add_subcommand("scan", "simulate a cavity transmission scan");
  add_common(scan, true);
  scan->add_flag("--unheralded", unheralded, "count all idler light, not only pairs");

  auto* scan_fit = app.add_subcommand("scan-fit", "deconvolving Lorentzian fit of a scan");
  add_common(scan_fit, false);
  scan_fit->add_option("--in", opts.in_path, "input scan CSV")->required();
  scan_fit->add_option("--cavity-fwhm-mhz", [&cavity_fwhm](const std::vector<std::string>& v) {
    cavity_fwhm = std::stod(v.front());
    return true;
  }, "override the sidecar cavity width");

  auto* superradiance =
      app.add_subcommand("superradiance", "bandwidth sweep over optical density");
  add_common(superradiance, true);

  auto* report = app.add_subcommand("report", "full reproduction pipeline");
  add_common(report, true);

  auto* sort = app.add_subcommand("sort", "sort an unordered stream");
  add_common(sort, true);
  sort->add_option("--in", opts.in_path, "input stream")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "ERR:usage: " << e.what() << '\n';
    return kExitValidation;
  }

  try {
    if (app.got_subcommand(simulate)) return verb_simulate(opts);
    if (app.got_subcommand(g2)) return verb_g2(opts, out);
    if (app.got_subcommand(hbt)) return verb_hbt(opts, arm, out);
    if (app.got_subcommand(pairs)) return verb_pairs(opts, out);
    if (app.got_subcommand(cs)) return verb_cs(opts, cs_si, cs_ii, cs_ss, out);
    if (app.got_subcommand(scan)) return verb_scan(opts, unheralded);
    if (app.got_subcommand(scan_fit)) return verb_scan_fit(opts, cavity_fwhm, out);
    if (app.got_subcommand(superradiance)) return verb_superradiance(opts, out);
    if (app.got_subcommand(report)) return verb_report(opts, out);
    if (app.got_subcommand(sort)) return verb_sort(opts);
    err << "ERR:usage: no verb\n";
    return kExitValidation;
  } catch (const FormatError& e) {
    err << "ERR:format:" << FormatError::kind_name(e.kind()) << ": " << e.what() << '\n';
    return kExitValidation;
  } catch (const ArgumentError& e) {
    err << "ERR:argument: " << e.what() << '\n';
    return kExitValidation;
  } catch (const nlohmann::json::exception& e) {
    err << "ERR:json: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "ERR:internal: " << e.what() << '\n';
    return kExitValidation;
  }
}

}  // namespace qtt
