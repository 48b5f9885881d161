#pragma once

#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <optional>
#include <utility>
#include <vector>

#include <json.hpp>

#include "qtt/timetag.hpp"

namespace qtt {

/// Small set of detector channels, e.g. {0,1} for the signal arm.
struct ChannelSet {
  std::uint32_t mask = 0;

  ChannelSet() = default;
  ChannelSet(std::initializer_list<std::uint32_t> channels) {
    for (auto c : channels) mask |= 1u << c;
  }

  bool contains(std::uint32_t channel) const {
    return channel < 32 && (mask & (1u << channel)) != 0;
  }
  bool empty() const { return mask == 0; }
  std::vector<std::uint32_t> channels() const;
};

/// Raw coincidence histogram G2(tau) over [lag_min, lag_max) with the
/// normalization inputs of the measurement: gated singles rates of both
/// channel sets and the pump-on time T.
struct CorrelationHistogram {
  std::int64_t lag_min_ps = 0;
  std::int64_t lag_max_ps = 0;  // exclusive
  std::int64_t bin_width_ps = 1000;
  std::vector<std::uint64_t> counts;
  ChannelSet channels_a, channels_b;

  std::uint64_t gated_count_a = 0;  // A/B tags inside pump-on windows
  std::uint64_t gated_count_b = 0;
  double gated_time_s = 0.0;
  double rate_a_hz = 0.0;
  double rate_b_hz = 0.0;

  std::size_t bin_count() const { return counts.size(); }
  /// Center of bin k in nanoseconds.
  double lag_center_ns(std::size_t k) const {
    return ns_from_ps(lag_min_ps + static_cast<std::int64_t>(k) * bin_width_ps) +
           ns_from_ps(bin_width_ps) / 2.0;
  }
  std::vector<double> lag_centers_ns() const;
};

/// Histograms tau = t_b - t_a for every ordered pair (a in A, b in B) with tau
/// in [lag_min, lag_max) — all pairs in the window, not first-stop. One
/// two-pointer sweep over the sorted stream: O(N + P) time with P the number
/// of tag visits inside lag windows, O(bins) auxiliary memory. Also computes
/// the gated singles rates and pump-on time used by normalize_g2. `duty`
/// overrides the stream header's duty cycle when given.
CorrelationHistogram cross_correlation(const TagStream& stream, ChannelSet channels_a,
                                       ChannelSet channels_b, std::int64_t bin_width_ps,
                                       std::int64_t lag_min_ps, std::int64_t lag_max_ps,
                                       std::optional<DutyCycle> duty = std::nullopt);

/// Chunk-parallel variant. The timeline is split into `chunks` spans; each
/// worker owns the pairs whose A tag falls in its span and may read B tags
/// past the boundary (overlap >= the lag range), so every pair is counted by
/// exactly one worker and the merged histogram is bit-identical to the serial
/// result.
CorrelationHistogram cross_correlation_parallel(
    const TagStream& stream, ChannelSet channels_a, ChannelSet channels_b,
    std::int64_t bin_width_ps, std::int64_t lag_min_ps, std::int64_t lag_max_ps,
    unsigned chunks, std::optional<DutyCycle> duty = std::nullopt);

/// g2(tau_k) = counts[k] / (r_A * r_B * dtau * T).
std::vector<double> normalize_g2(const CorrelationHistogram& hist);

/// Pair detection rate r_P = (1/T) * sum of counts with lag in [0, window).
double pair_rate(const CorrelationHistogram& hist, std::int64_t window_ps);

/// Heralding efficiencies (eta_signal, eta_idler) = (r_P/r_S, r_P/r_I).
std::pair<double, double> heralding(double pair_rate_hz, double signal_rate_hz,
                                    double idler_rate_hz);

/// Cauchy-Schwarz ratio R = peak^2 / (g2_ii0 * g2_ss0). Classical fields obey
/// R <= 1; the value is reported, never clamped.
double cauchy_schwarz(double g2_si_peak, double g2_ii_0, double g2_ss_0);

/// Keeps target-channel tags that have at least one herald-channel tag in
/// [t - window, t].
TagStream herald_select(const TagStream& stream, ChannelSet heralds, ChannelSet targets,
                        std::uint64_t window_ps);

/// Merge histograms from independent acquisitions of the same configuration:
/// counts, gated counts and gated time add; rates are re-derived from the
/// pooled totals.
void merge_histograms(CorrelationHistogram& into, const CorrelationHistogram& other);

/// CSV with two columns: lag_ns, g2.
void write_histogram_csv(const CorrelationHistogram& hist,
                         const std::filesystem::path& path);
nlohmann::json histogram_to_json(const CorrelationHistogram& hist);

}  // namespace qtt
