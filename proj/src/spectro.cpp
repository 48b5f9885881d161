#include "qtt/spectro.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace qtt {

double lorentzian_peak1(double nu_mhz, double center_mhz, double fwhm_mhz) {
  const double u = 2.0 * (nu_mhz - center_mhz) / fwhm_mhz;
  return 1.0 / (1.0 + u * u);
}

void SpectrumScan::validate() const {
  if (detunings_mhz.size() != counts.size())
    throw ArgumentError("scan: detuning/count size mismatch");
  if (detunings_mhz.empty()) throw ArgumentError("scan: empty detuning list");
  for (std::size_t i = 1; i < detunings_mhz.size(); ++i)
    if (detunings_mhz[i] <= detunings_mhz[i - 1])
      throw ArgumentError("scan: detunings must be strictly increasing");
  if (cavity_fwhm_mhz <= 0.0) throw ArgumentError("scan: cavity fwhm must be > 0");
  if (dwell_s <= 0.0) throw ArgumentError("scan: dwell must be > 0");
}

double LossBudget::transmission() const {
  return (1.0 - filter_loss) * (1.0 - optics_loss) * (1.0 - detector_loss) *
         (1.0 - polarizer_loss) * (1.0 - fiber_loss);
}

void LossBudget::validate() const {
  for (double loss : {filter_loss, optics_loss, detector_loss, polarizer_loss, fiber_loss})
    if (loss < 0.0 || loss >= 1.0)
      throw ArgumentError("loss budget: each loss must be in [0, 1)");
}

FitResult fit_scan(const SpectrumScan& scan) {
  scan.validate();
  if (scan.counts.size() < 6) throw ArgumentError("fit_scan: need at least 6 points");

  const std::size_t n = scan.counts.size();
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<double>(scan.counts[i]);

  double ymin = y[0], ymax = y[0], center = scan.detunings_mhz[0];
  for (std::size_t i = 0; i < n; ++i) {
    ymin = std::min(ymin, y[i]);
    if (y[i] > ymax) {
      ymax = y[i];
      center = scan.detunings_mhz[i];
    }
  }

  // half-maximum crossing width as the observed-FWHM seed
  const double half = ymin + (ymax - ymin) / 2.0;
  double left = scan.detunings_mhz.front(), right = scan.detunings_mhz.back();
  for (std::size_t i = 0; i < n; ++i)
    if (y[i] >= half) {
      left = scan.detunings_mhz[i];
      break;
    }
  for (std::size_t i = n; i-- > 0;)
    if (y[i] >= half) {
      right = scan.detunings_mhz[i];
      break;
    }
  const double observed0 = std::max(right - left, scan.cavity_fwhm_mhz * 0.5);
  const double photon0 = std::max(observed0 - scan.cavity_fwhm_mhz, 0.1);

  const double cavity = scan.cavity_fwhm_mhz;
  const ModelFn model = [cavity](std::span<const double> p, double nu) {
    const double width = std::max(p[2] + cavity, 1e-6);
    return p[3] + p[0] * lorentzian_peak1(nu, p[1], width);
  };

  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = 1.0 / std::max(y[i], 1.0);
  return lm_fit(model, scan.detunings_mhz, y, w, {ymax - ymin, center, photon0, ymin},
                {"amplitude", "center_mhz", "photon_fwhm_mhz", "baseline"});
}

IncoherentSpectrum incoherent_spectrum(const SpectrumScan& unheralded,
                                       const SpectrumScan& heralded,
                                       const LossBudget& budget) {
  unheralded.validate();
  heralded.validate();
  budget.validate();
  if (unheralded.detunings_mhz != heralded.detunings_mhz)
    throw ArgumentError("incoherent_spectrum: detuning grids differ");
  if (unheralded.dwell_s != heralded.dwell_s)
    throw ArgumentError("incoherent_spectrum: dwell times differ");

  const double transmission = budget.transmission();
  IncoherentSpectrum out;
  out.scan = unheralded;
  out.scan.heralded = false;
  for (std::size_t i = 0; i < unheralded.counts.size(); ++i) {
    const double diff = static_cast<double>(unheralded.counts[i]) -
                        static_cast<double>(heralded.counts[i]) / transmission;
    if (diff < 0.0) {
      out.scan.counts[i] = 0;
      out.clamped_bins.push_back(i);
    } else {
      out.scan.counts[i] = static_cast<std::uint64_t>(std::llround(diff));
    }
  }
  return out;
}

TransformLimit transform_limit_check(double photon_fwhm_mhz, double tau0_ns) {
  if (photon_fwhm_mhz <= 0.0 || tau0_ns <= 0.0)
    throw ArgumentError("transform_limit_check: inputs must be > 0");
  const double rho = photon_fwhm_mhz * 1e6 * 2.0 * std::acos(-1.0) * tau0_ns * 1e-9;
  return {rho, std::abs(rho - 1.0)};
}

void write_scan_csv(const SpectrumScan& scan, const std::filesystem::path& path) {
  scan.validate();
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ArgumentError("cannot create file: " + path.string());
  out << "detuning_mhz,counts\n";
  out.precision(17);
  for (std::size_t i = 0; i < scan.counts.size(); ++i)
    out << scan.detunings_mhz[i] << ',' << scan.counts[i] << '\n';

  nlohmann::json meta;
  meta["dwell_s"] = scan.dwell_s;
  meta["cavity_fwhm_mhz"] = scan.cavity_fwhm_mhz;
  meta["heralded"] = scan.heralded;
  std::ofstream side(path.string() + ".json", std::ios::trunc);
  if (!side) throw ArgumentError("cannot create sidecar: " + path.string() + ".json");
  side << meta.dump(2) << '\n';
}

SpectrumScan read_scan_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot open file: " + path.string());
  SpectrumScan scan;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (first) {  // header row
      first = false;
      continue;
    }
    std::istringstream ss(line);
    std::string detuning, count;
    if (!std::getline(ss, detuning, ',') || !std::getline(ss, count))
      throw ArgumentError("malformed scan CSV row: " + line);
    scan.detunings_mhz.push_back(std::stod(detuning));
    scan.counts.push_back(std::stoull(count));
  }

  scan.dwell_s = 1.0;  // bare CSVs carry no dwell; the fit never uses it
  const std::filesystem::path sidecar = path.string() + ".json";
  if (std::filesystem::exists(sidecar)) {
    std::ifstream side(sidecar);
    nlohmann::json meta = nlohmann::json::parse(side);
    scan.dwell_s = meta.value("dwell_s", 1.0);
    scan.cavity_fwhm_mhz = meta.value("cavity_fwhm_mhz", 2.8);
    scan.heralded = meta.value("heralded", false);
  }
  scan.validate();
  return scan;
}

}  // namespace qtt
