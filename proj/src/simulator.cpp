#include "qtt/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <unordered_set>

namespace qtt {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

using Rng = std::mt19937_64;

// Contiguous pump-on spans of the run. Ungated runs are cut into fixed blocks
// purely so per-block draw counts stay bounded; the joint law is unchanged.
struct BlockWalker {
  const DutyCycle duty;
  const std::uint64_t wall_ps;
  std::uint64_t cursor = 0;

  bool next(std::uint64_t& begin, std::uint64_t& end) {
    constexpr std::uint64_t kUngatedBlock = 10 * kPsPerMs;
    if (cursor >= wall_ps) return false;
    if (!duty.gated()) {
      begin = cursor;
      end = std::min(cursor + kUngatedBlock, wall_ps);
      cursor = end;
      return true;
    }
    const std::uint64_t period = duty.period_ps();
    // next on-window at or after cursor
    std::uint64_t start;
    if (cursor <= duty.phase_ps) {
      start = duty.phase_ps;
    } else {
      const std::uint64_t u = cursor - duty.phase_ps;
      const std::uint64_t k = u / period;
      start = duty.phase_ps + k * period;
      if (u % period >= duty.on_ps) start += period;
      else {
        begin = cursor;
        end = std::min(start + duty.on_ps, wall_ps);
        cursor = start + period;
        return begin < end ? true : next(begin, end);
      }
    }
    if (start >= wall_ps) return false;
    begin = start;
    end = std::min(start + duty.on_ps, wall_ps);
    cursor = start + period;
    return true;
  }
};

// k distinct slot indices out of n, uniformly.
void sample_distinct(Rng& rng, std::uint64_t n, std::uint64_t k,
                     std::vector<std::uint64_t>& out) {
  out.clear();
  if (k == 0) return;
  if (k * 2 <= n) {
    std::unordered_set<std::uint64_t> seen;
    std::uniform_int_distribution<std::uint64_t> pick(0, n - 1);
    while (seen.size() < k) seen.insert(pick(rng));
    out.assign(seen.begin(), seen.end());
  } else {
    // dense slot occupancy: partial Fisher-Yates
    std::vector<std::uint64_t> idx(n);
    for (std::uint64_t i = 0; i < n; ++i) idx[i] = i;
    for (std::uint64_t i = 0; i < k; ++i) {
      std::uniform_int_distribution<std::uint64_t> pick(i, n - 1);
      std::swap(idx[i], idx[pick(rng)]);
    }
    out.assign(idx.begin(), idx.begin() + k);
  }
  std::sort(out.begin(), out.end());
}

struct Detection {
  const SourceParams& p;
  std::uint64_t wall_ps;
  double jitter_sigma_ps;
  std::uniform_real_distribution<double> unit{0.0, 1.0};
  std::normal_distribution<double> jitter{0.0, 1.0};

  // Applies efficiency, beamsplitter routing and timing jitter; channel 0/1
  // for the signal arm, 2/3 for the idler arm.
  void emit(Rng& rng, std::vector<TimeTag>& tags, std::uint64_t t_ps, bool signal_arm) {
    const double eff = signal_arm ? p.signal_path_efficiency : p.idler_path_efficiency;
    if (unit(rng) >= eff) return;
    const std::uint32_t base = signal_arm ? 0 : 2;
    const std::uint32_t channel = base + (unit(rng) < p.beamsplitter_ratio ? 0 : 1);

    std::uint64_t t_det = t_ps;
    if (jitter_sigma_ps > 0.0) {
      const std::int64_t offset = std::llround(jitter(rng) * jitter_sigma_ps);
      if (offset < 0 && static_cast<std::uint64_t>(-offset) > t_det)
        t_det = 0;  // negative jittered time clamps to run start
      else
        t_det = t_det + offset;
    }
    if (t_det >= wall_ps) return;  // acquisition stops at the wall
    tags.push_back({t_det, channel});
  }
};

}  // namespace

double superradiant_tau_ns(double od, double slope, double gamma0_hz) {
  if (gamma0_hz <= 0.0) throw ArgumentError("superradiant_tau: gamma0 must be > 0");
  if (od < 0.0 || slope < 0.0)
    throw ArgumentError("superradiant_tau: od and slope must be >= 0");
  return 1e9 / (2.0 * std::numbers::pi * gamma0_hz * (1.0 + slope * od));
}

double SourceParams::tau0_ns() const {
  return superradiant_tau_ns(optical_density, superradiance_slope,
                             natural_linewidth_mhz * 1e6);
}

double SourceParams::idler_fwhm_mhz() const {
  return natural_linewidth_mhz * (1.0 + superradiance_slope * optical_density);
}

void SourceParams::validate() const {
  auto probability = [](double v, const char* name) {
    if (v < 0.0 || v > 1.0)
      throw ArgumentError(std::string("source params: ") + name + " must be in [0, 1]");
  };
  probability(signal_path_efficiency, "signal_path_efficiency");
  probability(idler_path_efficiency, "idler_path_efficiency");
  probability(beamsplitter_ratio, "beamsplitter_ratio");
  if (mean_pairs_per_mode < 0.0)
    throw ArgumentError("source params: mean_pairs_per_mode must be >= 0");
  if (mode_duration_ns <= 0.0)
    throw ArgumentError("source params: mode_duration must be > 0");
  if (optical_density < 0.0 || superradiance_slope < 0.0)
    throw ArgumentError("source params: optical_density and slope must be >= 0");
  if (natural_linewidth_mhz <= 0.0)
    throw ArgumentError("source params: natural linewidth must be > 0");
  for (double rate : dark_count_rates_hz)
    if (rate < 0.0) throw ArgumentError("source params: dark count rates must be >= 0");
  if (singles_rate_signal_hz < 0.0 || singles_rate_idler_hz < 0.0)
    throw ArgumentError("source params: singles rates must be >= 0");
  if (jitter_sigma_ns < 0.0) throw ArgumentError("source params: jitter must be >= 0");
  if (background_fwhm_mhz <= 0.0)
    throw ArgumentError("source params: background fwhm must be > 0");
  duty.validate();
}

TagStream simulate_run(const SourceParams& params, std::uint64_t wall_duration_ps,
                       std::uint64_t seed) {
  params.validate();
  if (wall_duration_ps == 0) throw ArgumentError("simulate_run: wall duration must be > 0");

  Rng rng(splitmix64(seed));
  std::vector<TimeTag> tags;

  const std::uint64_t mode_ps =
      std::max<std::uint64_t>(1, static_cast<std::uint64_t>(
                                     std::llround(params.mode_duration_ns * 1e3)));
  const double tau0_ps = params.tau0_ns() * 1e3;
  const double nbar = params.mean_pairs_per_mode;
  const double occupied_prob = nbar / (1.0 + nbar);

  Detection detect{params, wall_duration_ps, params.jitter_sigma_ns * 1e3};

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::exponential_distribution<double> exp1(1.0);
  std::vector<std::uint64_t> occupied_slots;

  BlockWalker walker{params.duty, wall_duration_ps};
  std::uint64_t block_begin = 0, block_end = 0;
  while (walker.next(block_begin, block_end)) {
    const std::uint64_t len = block_end - block_begin;
    const std::uint64_t n_slots = len / mode_ps;  // trailing remainder holds no modes

    if (n_slots > 0 && occupied_prob > 0.0) {
      std::binomial_distribution<std::uint64_t> occupancy(n_slots, occupied_prob);
      const std::uint64_t occupied = occupancy(rng);
      sample_distinct(rng, n_slots, occupied, occupied_slots);
      // pair count in an occupied slot: Bose-Einstein conditioned on >= 1
      std::geometric_distribution<std::uint64_t> extra_pairs(1.0 / (1.0 + nbar));
      std::uniform_int_distribution<std::uint64_t> in_slot(0, mode_ps - 1);
      for (std::uint64_t slot : occupied_slots) {
        const std::uint64_t pairs = 1 + extra_pairs(rng);
        const std::uint64_t slot_begin = block_begin + slot * mode_ps;
        // one collective decay delay per slot: pairs of the same burst share
        // it, which keeps same-slot idlers as bunched as their signals while
        // each pair's delay stays Exp(tau0)
        const std::uint64_t delay =
            static_cast<std::uint64_t>(std::llround(exp1(rng) * tau0_ps));
        for (std::uint64_t n = 0; n < pairs; ++n) {
          const std::uint64_t t_signal = slot_begin + in_slot(rng);
          detect.emit(rng, tags, t_signal, true);
          detect.emit(rng, tags, t_signal + delay, false);
        }
      }
    }

    const double len_s = seconds_from_ps(len);
    for (bool signal_arm : {true, false}) {
      const double rate =
          signal_arm ? params.singles_rate_signal_hz : params.singles_rate_idler_hz;
      if (rate <= 0.0) continue;
      std::poisson_distribution<std::uint64_t> count(rate * len_s);
      const std::uint64_t n = count(rng);
      std::uniform_int_distribution<std::uint64_t> in_block(0, len - 1);
      for (std::uint64_t i = 0; i < n; ++i)
        detect.emit(rng, tags, block_begin + in_block(rng), signal_arm);
    }
  }

  // dark counts: free-running Poisson processes per detector, not gated
  for (std::uint32_t det = 0; det < 4; ++det) {
    const double rate = params.dark_count_rates_hz[det];
    if (rate <= 0.0) continue;
    const double mean_gap_ps = 1e12 / rate;
    std::uint64_t t = 0;
    while (true) {
      const std::uint64_t gap = std::max<std::uint64_t>(
          1, static_cast<std::uint64_t>(std::llround(exp1(rng) * mean_gap_ps)));
      if (wall_duration_ps - t <= gap) break;
      t += gap;
      tags.push_back({t, det});
    }
  }

  std::sort(tags.begin(), tags.end());

  TagStream stream;
  stream.header.channel_count = 4;
  stream.header.duty = params.duty;
  stream.header.wall_duration_ps = wall_duration_ps;
  stream.tags = std::move(tags);
  return stream;
}

SpectrumScan simulate_cavity_scan(const SourceParams& params, double cavity_fwhm_mhz,
                                  std::span<const double> detunings_mhz,
                                  std::uint64_t dwell_ps, std::uint64_t seed,
                                  bool heralded, std::uint64_t herald_window_ps) {
  params.validate();
  if (detunings_mhz.empty()) throw ArgumentError("simulate_cavity_scan: empty detuning list");
  if (cavity_fwhm_mhz <= 0.0) throw ArgumentError("simulate_cavity_scan: cavity fwhm must be > 0");
  if (dwell_ps == 0) throw ArgumentError("simulate_cavity_scan: dwell must be > 0");

  const std::uint64_t mode_ps =
      std::max<std::uint64_t>(1, static_cast<std::uint64_t>(
                                     std::llround(params.mode_duration_ns * 1e3)));
  const double tau0_ps = params.tau0_ns() * 1e3;
  const double nbar = params.mean_pairs_per_mode;
  const double occupied_prob = nbar / (1.0 + nbar);
  const double pair_hwhm_mhz = params.idler_fwhm_mhz() / 2.0;
  const double jitter_ps = params.jitter_sigma_ns * 1e3;

  // slot total and gated dwell are the same for every scan point
  std::uint64_t total_slots = 0;
  std::uint64_t gated_dwell_ps = 0;
  {
    BlockWalker walker{params.duty, dwell_ps};
    std::uint64_t b = 0, e = 0;
    while (walker.next(b, e)) {
      total_slots += (e - b) / mode_ps;
      gated_dwell_ps += e - b;
    }
  }

  SpectrumScan scan;
  scan.detunings_mhz.assign(detunings_mhz.begin(), detunings_mhz.end());
  scan.counts.assign(detunings_mhz.size(), 0);
  scan.dwell_s = seconds_from_ps(dwell_ps);
  scan.cavity_fwhm_mhz = cavity_fwhm_mhz;
  scan.heralded = heralded;
  scan.validate();

  for (std::size_t point = 0; point < scan.detunings_mhz.size(); ++point) {
    Rng rng(splitmix64(seed ^ splitmix64(point + 1)));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::exponential_distribution<double> exp1(1.0);
    std::cauchy_distribution<double> pair_line(params.idler_center_offset_mhz,
                                               pair_hwhm_mhz);
    const double nu_c = scan.detunings_mhz[point];
    std::uint64_t hits = 0;

    if (total_slots > 0 && occupied_prob > 0.0) {
      std::binomial_distribution<std::uint64_t> occupancy(total_slots, occupied_prob);
      std::geometric_distribution<std::uint64_t> extra_pairs(1.0 / (1.0 + nbar));
      const std::uint64_t occupied = occupancy(rng);
      for (std::uint64_t s = 0; s < occupied; ++s) {
        const std::uint64_t pairs = 1 + extra_pairs(rng);
        const double slot_delay = exp1(rng) * tau0_ps;  // shared per burst
        for (std::uint64_t n = 0; n < pairs; ++n) {
          if (unit(rng) >= params.idler_path_efficiency) continue;
          const double nu = pair_line(rng);
          if (unit(rng) >= lorentzian_peak1(nu, nu_c, cavity_fwhm_mhz)) continue;
          if (heralded) {
            if (unit(rng) >= params.signal_path_efficiency) continue;
            // idler-signal detection time difference: decay delay plus the
            // two independent detector jitters
            double dt = slot_delay;
            if (jitter_ps > 0.0) {
              std::normal_distribution<double> jitter(0.0, jitter_ps);
              dt += jitter(rng) - jitter(rng);
            }
            if (std::abs(dt) > static_cast<double>(herald_window_ps)) continue;
          }
          ++hits;
        }
      }
    }

    if (!heralded) {
      if (params.singles_rate_idler_hz > 0.0 && gated_dwell_ps > 0) {
        std::cauchy_distribution<double> background_line(0.0,
                                                         params.background_fwhm_mhz / 2.0);
        std::poisson_distribution<std::uint64_t> count(params.singles_rate_idler_hz *
                                                       seconds_from_ps(gated_dwell_ps));
        const std::uint64_t n = count(rng);
        for (std::uint64_t i = 0; i < n; ++i) {
          if (unit(rng) >= params.idler_path_efficiency) continue;
          const double nu = background_line(rng);
          if (unit(rng) >= lorentzian_peak1(nu, nu_c, cavity_fwhm_mhz)) continue;
          ++hits;
        }
      }
      // the detector behind the cavity free-runs for the whole dwell
      const double dark_rate = params.dark_count_rates_hz[2];
      if (dark_rate > 0.0) {
        std::poisson_distribution<std::uint64_t> darks(dark_rate *
                                                       seconds_from_ps(dwell_ps));
        hits += darks(rng);
      }
    }
    scan.counts[point] = hits;
  }
  return scan;
}

}  // namespace qtt
