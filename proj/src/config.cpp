#include "qtt/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace qtt {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

double parse_number(const std::string& value, const std::string& key) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ArgumentError("config: key '" + key + "' has a malformed number: " + value);
  }
}

std::vector<double> parse_array(const std::string& value, const std::string& key) {
  if (value.size() < 2 || value.front() != '[' || value.back() != ']')
    throw ArgumentError("config: key '" + key + "' expects an array [..]");
  std::vector<double> out;
  std::stringstream ss(value.substr(1, value.size() - 2));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    out.push_back(parse_number(item, key));
  }
  return out;
}

}  // namespace

std::vector<double> RunConfig::scan_detunings() const {
  std::vector<double> out;
  out.reserve(scan_points);
  if (scan_points == 1) {
    out.push_back(scan_min_mhz);
    return out;
  }
  const double step = (scan_max_mhz - scan_min_mhz) / (scan_points - 1);
  for (std::uint32_t i = 0; i < scan_points; ++i)
    out.push_back(scan_min_mhz + step * static_cast<double>(i));
  return out;
}

std::uint64_t RunConfig::wall_duration_ps() const {
  return static_cast<std::uint64_t>(std::llround(wall_duration_s * 1e12));
}

void RunConfig::validate() const {
  source.validate();
  losses.validate();
  if (wall_duration_s <= 0.0) throw ArgumentError("config: wall_duration_s must be > 0");
  if (bin_width_ns <= 0.0) throw ArgumentError("config: bin_width_ns must be > 0");
  if (lag_max_ns <= lag_min_ns) throw ArgumentError("config: empty lag range");
  if (coincidence_window_ns <= 0.0)
    throw ArgumentError("config: coincidence_window_ns must be > 0");
  if (herald_window_ns <= 0.0) throw ArgumentError("config: herald_window_ns must be > 0");
  if (fit_window_ns <= 0.0) throw ArgumentError("config: fit_window_ns must be > 0");
  if (hbt_wall_duration_s <= 0.0 || hbt_chunk_s <= 0.0 || hbt_lag_range_ns <= 0.0 ||
      hbt_bin_width_ns <= 0.0)
    throw ArgumentError("config: HBT durations must be > 0");
  if (cavity_fwhm_mhz <= 0.0) throw ArgumentError("config: cavity_fwhm_mhz must be > 0");
  if (scan_points < 6) throw ArgumentError("config: scan_points must be >= 6");
  if (scan_max_mhz <= scan_min_mhz) throw ArgumentError("config: empty scan range");
  if (scan_dwell_s <= 0.0 || sweep_dwell_s <= 0.0)
    throw ArgumentError("config: dwell times must be > 0");
  if (sweep_od.size() < 2) throw ArgumentError("config: sweep_od needs >= 2 points");
}

RunConfig parse_run_config(const std::string& text) {
  RunConfig cfg;

  using Setter = std::function<void(const std::string&, const std::string&)>;
  std::map<std::string, Setter> keys;
  auto number_key = [&](const std::string& name, double* target) {
    keys[name] = [target](const std::string& key, const std::string& value) {
      *target = parse_number(value, key);
    };
  };

  number_key("mean_pairs_per_mode", &cfg.source.mean_pairs_per_mode);
  number_key("mode_duration_ns", &cfg.source.mode_duration_ns);
  number_key("optical_density", &cfg.source.optical_density);
  number_key("superradiance_slope", &cfg.source.superradiance_slope);
  number_key("natural_linewidth_mhz", &cfg.source.natural_linewidth_mhz);
  number_key("signal_path_efficiency", &cfg.source.signal_path_efficiency);
  number_key("idler_path_efficiency", &cfg.source.idler_path_efficiency);
  number_key("beamsplitter_ratio", &cfg.source.beamsplitter_ratio);
  number_key("jitter_sigma_ns", &cfg.source.jitter_sigma_ns);
  number_key("singles_rate_signal_hz", &cfg.source.singles_rate_signal_hz);
  number_key("singles_rate_idler_hz", &cfg.source.singles_rate_idler_hz);
  number_key("background_fwhm_mhz", &cfg.source.background_fwhm_mhz);
  number_key("idler_center_offset_mhz", &cfg.source.idler_center_offset_mhz);
  keys["dark_count_rates_hz"] = [&cfg](const std::string& key, const std::string& value) {
    const auto rates = parse_array(value, key);
    if (rates.size() != 4)
      throw ArgumentError("config: dark_count_rates_hz needs exactly 4 entries");
    for (std::size_t i = 0; i < 4; ++i) cfg.source.dark_count_rates_hz[i] = rates[i];
  };
  keys["duty_on_ms"] = [&cfg](const std::string& key, const std::string& value) {
    cfg.source.duty.on_ps =
        static_cast<std::uint64_t>(std::llround(parse_number(value, key) * 1e9));
  };
  keys["duty_off_ms"] = [&cfg](const std::string& key, const std::string& value) {
    cfg.source.duty.off_ps =
        static_cast<std::uint64_t>(std::llround(parse_number(value, key) * 1e9));
  };

  number_key("loss_filter", &cfg.losses.filter_loss);
  number_key("loss_optics", &cfg.losses.optics_loss);
  number_key("loss_detector", &cfg.losses.detector_loss);
  number_key("loss_polarizer", &cfg.losses.polarizer_loss);
  number_key("loss_fiber", &cfg.losses.fiber_loss);

  number_key("wall_duration_s", &cfg.wall_duration_s);
  number_key("bin_width_ns", &cfg.bin_width_ns);
  number_key("lag_min_ns", &cfg.lag_min_ns);
  number_key("lag_max_ns", &cfg.lag_max_ns);
  number_key("coincidence_window_ns", &cfg.coincidence_window_ns);
  number_key("fit_window_ns", &cfg.fit_window_ns);
  number_key("flat_region_min_ns", &cfg.flat_region_min_ns);
  number_key("flat_region_max_ns", &cfg.flat_region_max_ns);
  number_key("herald_window_ns", &cfg.herald_window_ns);
  number_key("hbt_wall_duration_s", &cfg.hbt_wall_duration_s);
  number_key("hbt_chunk_s", &cfg.hbt_chunk_s);
  number_key("hbt_lag_range_ns", &cfg.hbt_lag_range_ns);
  number_key("hbt_bin_width_ns", &cfg.hbt_bin_width_ns);
  number_key("cavity_fwhm_mhz", &cfg.cavity_fwhm_mhz);
  number_key("scan_min_mhz", &cfg.scan_min_mhz);
  number_key("scan_max_mhz", &cfg.scan_max_mhz);
  number_key("scan_dwell_s", &cfg.scan_dwell_s);
  number_key("sweep_dwell_s", &cfg.sweep_dwell_s);
  keys["scan_points"] = [&cfg](const std::string& key, const std::string& value) {
    const double v = parse_number(value, key);
    if (v < 1 || v != std::floor(v))
      throw ArgumentError("config: scan_points must be a positive integer");
    cfg.scan_points = static_cast<std::uint32_t>(v);
  };
  keys["sweep_od"] = [&cfg](const std::string& key, const std::string& value) {
    cfg.sweep_od = parse_array(value, key);
  };

  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    // comments start at '#' outside quotes
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '#' && !quoted) {
        line.resize(i);
        break;
      }
    }
    line = trim(line);
    if (line.empty()) continue;

    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ArgumentError("config: line " + std::to_string(line_no) +
                          " is not a key = value pair");
    const std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
      value = value.substr(1, value.size() - 2);

    const auto it = keys.find(key);
    if (it == keys.end()) throw ArgumentError("config: unknown key '" + key + "'");
    it->second(key, value);
  }

  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot open config: " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_run_config(buffer.str());
}

}  // namespace qtt
