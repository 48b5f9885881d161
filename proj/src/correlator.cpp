#include "qtt/correlator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <thread>

namespace qtt {

namespace {

struct HistogramSpec {
  std::int64_t lag_min_ps, lag_max_ps, bin_width_ps;
  std::size_t bins;
};

HistogramSpec check_args(const TagStream& stream, ChannelSet a, ChannelSet b,
                         std::int64_t bin_width_ps, std::int64_t lag_min_ps,
                         std::int64_t lag_max_ps) {
  if (a.empty() || b.empty()) throw ArgumentError("cross_correlation: empty channel set");
  if (bin_width_ps <= 0) throw ArgumentError("cross_correlation: bin width must be > 0");
  if (lag_max_ps <= lag_min_ps) throw ArgumentError("cross_correlation: empty lag range");
  if ((lag_max_ps - lag_min_ps) % bin_width_ps != 0)
    throw ArgumentError("cross_correlation: lag range must be divisible by bin width");
  for (std::uint32_t ch : a.channels())
    if (ch >= stream.header.channel_count)
      throw ArgumentError("cross_correlation: channel out of range");
  for (std::uint32_t ch : b.channels())
    if (ch >= stream.header.channel_count)
      throw ArgumentError("cross_correlation: channel out of range");
  return {lag_min_ps, lag_max_ps, bin_width_ps,
          static_cast<std::size_t>((lag_max_ps - lag_min_ps) / bin_width_ps)};
}

// Signed lag of (a, b) without overflowing; timestamps may exceed int64 range
// but lags of interest never do.
inline bool lag_of(std::uint64_t t_a, std::uint64_t t_b, std::int64_t lo, std::int64_t hi,
                   std::int64_t& lag) {
  constexpr std::uint64_t kInt64Min = std::uint64_t{1} << 63;
  if (t_b >= t_a) {
    const std::uint64_t d = t_b - t_a;
    if (d >= kInt64Min) return false;
    lag = static_cast<std::int64_t>(d);
  } else {
    const std::uint64_t d = t_a - t_b;
    if (d > kInt64Min) return false;
    lag = d == kInt64Min ? std::numeric_limits<std::int64_t>::min()
                         : -static_cast<std::int64_t>(d);
  }
  return lag >= lo && lag < hi;
}

// Counts pairs whose A tag index lies in [a_begin, a_end).
void sweep_range(const std::vector<TimeTag>& tags, ChannelSet a, ChannelSet b,
                 const HistogramSpec& spec, std::size_t a_begin, std::size_t a_end,
                 std::vector<std::uint64_t>& counts) {
  const std::size_t n = tags.size();
  std::size_t window_start = 0;
  for (std::size_t i = a_begin; i < a_end; ++i) {
    if (!a.contains(tags[i].channel)) continue;
    const std::uint64_t t_a = tags[i].timestamp_ps;

    // first index whose timestamp can reach lag_min
    std::uint64_t lo = 0;
    if (spec.lag_min_ps >= 0)
      lo = t_a + static_cast<std::uint64_t>(spec.lag_min_ps);
    else {
      const std::uint64_t back = static_cast<std::uint64_t>(-spec.lag_min_ps);
      lo = t_a >= back ? t_a - back : 0;
    }
    while (window_start < n && tags[window_start].timestamp_ps < lo) ++window_start;

    for (std::size_t k = window_start; k < n; ++k) {
      std::int64_t lag;
      if (tags[k].timestamp_ps >= t_a &&
          tags[k].timestamp_ps - t_a >= static_cast<std::uint64_t>(
                                             std::max<std::int64_t>(spec.lag_max_ps, 0)))
        break;  // sorted: nothing further can be inside the range
      if (k == i || !b.contains(tags[k].channel)) continue;
      if (!lag_of(t_a, tags[k].timestamp_ps, spec.lag_min_ps, spec.lag_max_ps, lag)) continue;
      ++counts[static_cast<std::size_t>((lag - spec.lag_min_ps) / spec.bin_width_ps)];
    }
  }
}

void fill_rates(const TagStream& stream, const DutyCycle& duty, CorrelationHistogram& hist) {
  for (const TimeTag& tag : stream.tags) {
    if (!duty.is_on(tag.timestamp_ps)) continue;
    if (hist.channels_a.contains(tag.channel)) ++hist.gated_count_a;
    if (hist.channels_b.contains(tag.channel)) ++hist.gated_count_b;
  }
  const std::uint64_t gated_ps = gated_time(duty, 0, stream.duration_ps());
  hist.gated_time_s = seconds_from_ps(gated_ps);
  if (hist.gated_time_s > 0.0) {
    hist.rate_a_hz = static_cast<double>(hist.gated_count_a) / hist.gated_time_s;
    hist.rate_b_hz = static_cast<double>(hist.gated_count_b) / hist.gated_time_s;
  }
}

}  // namespace

std::vector<std::uint32_t> ChannelSet::channels() const {
  std::vector<std::uint32_t> out;
  for (std::uint32_t c = 0; c < 32; ++c)
    if (mask & (1u << c)) out.push_back(c);
  return out;
}

std::vector<double> CorrelationHistogram::lag_centers_ns() const {
  std::vector<double> out(counts.size());
  for (std::size_t k = 0; k < counts.size(); ++k) out[k] = lag_center_ns(k);
  return out;
}

CorrelationHistogram cross_correlation(const TagStream& stream, ChannelSet channels_a,
                                       ChannelSet channels_b, std::int64_t bin_width_ps,
                                       std::int64_t lag_min_ps, std::int64_t lag_max_ps,
                                       std::optional<DutyCycle> duty) {
  const HistogramSpec spec =
      check_args(stream, channels_a, channels_b, bin_width_ps, lag_min_ps, lag_max_ps);

  CorrelationHistogram hist;
  hist.lag_min_ps = lag_min_ps;
  hist.lag_max_ps = lag_max_ps;
  hist.bin_width_ps = bin_width_ps;
  hist.channels_a = channels_a;
  hist.channels_b = channels_b;
  hist.counts.assign(spec.bins, 0);

  sweep_range(stream.tags, channels_a, channels_b, spec, 0, stream.tags.size(), hist.counts);
  fill_rates(stream, duty.value_or(stream.header.duty), hist);
  return hist;
}

CorrelationHistogram cross_correlation_parallel(
    const TagStream& stream, ChannelSet channels_a, ChannelSet channels_b,
    std::int64_t bin_width_ps, std::int64_t lag_min_ps, std::int64_t lag_max_ps,
    unsigned chunks, std::optional<DutyCycle> duty) {
  const HistogramSpec spec =
      check_args(stream, channels_a, channels_b, bin_width_ps, lag_min_ps, lag_max_ps);
  if (chunks == 0) throw ArgumentError("cross_correlation_parallel: chunks must be > 0");

  const std::size_t n = stream.tags.size();
  const unsigned workers = std::min<std::size_t>(chunks, std::max<std::size_t>(n, 1));

  // Equal index spans; pair ownership follows the A tag, so workers only read
  // across their right boundary and every pair is attributed exactly once.
  std::vector<std::vector<std::uint64_t>> partial(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    partial[w].assign(spec.bins, 0);
    const std::size_t begin = n * w / workers;
    const std::size_t end = n * (w + 1) / workers;
    pool.emplace_back([&, w, begin, end] {
      sweep_range(stream.tags, channels_a, channels_b, spec, begin, end, partial[w]);
    });
  }
  for (auto& t : pool) t.join();

  CorrelationHistogram hist;
  hist.lag_min_ps = lag_min_ps;
  hist.lag_max_ps = lag_max_ps;
  hist.bin_width_ps = bin_width_ps;
  hist.channels_a = channels_a;
  hist.channels_b = channels_b;
  hist.counts.assign(spec.bins, 0);
  for (const auto& part : partial)
    for (std::size_t k = 0; k < spec.bins; ++k) hist.counts[k] += part[k];

  fill_rates(stream, duty.value_or(stream.header.duty), hist);
  return hist;
}

std::vector<double> normalize_g2(const CorrelationHistogram& hist) {
  if (hist.rate_a_hz <= 0.0 || hist.rate_b_hz <= 0.0 || hist.gated_time_s <= 0.0)
    throw ArgumentError("normalize_g2: undefined normalization, zero rate or gated time");
  const double denom = hist.rate_a_hz * hist.rate_b_hz *
                       seconds_from_ps(static_cast<std::uint64_t>(hist.bin_width_ps)) *
                       hist.gated_time_s;
  std::vector<double> g2(hist.counts.size());
  for (std::size_t k = 0; k < hist.counts.size(); ++k)
    g2[k] = static_cast<double>(hist.counts[k]) / denom;
  return g2;
}

double pair_rate(const CorrelationHistogram& hist, std::int64_t window_ps) {
  if (window_ps <= 0 || window_ps > hist.lag_max_ps)
    throw ArgumentError("pair_rate: coincidence window outside histogram range");
  if (hist.gated_time_s <= 0.0) throw ArgumentError("pair_rate: zero gated time");
  std::uint64_t sum = 0;
  for (std::size_t k = 0; k < hist.counts.size(); ++k) {
    const std::int64_t start = hist.lag_min_ps + static_cast<std::int64_t>(k) * hist.bin_width_ps;
    if (start < 0) continue;
    if (start + hist.bin_width_ps > window_ps) break;
    sum += hist.counts[k];
  }
  return static_cast<double>(sum) / hist.gated_time_s;
}

std::pair<double, double> heralding(double pair_rate_hz, double signal_rate_hz,
                                    double idler_rate_hz) {
  if (signal_rate_hz <= 0.0 || idler_rate_hz <= 0.0)
    throw ArgumentError("heralding: singles rates must be > 0");
  return {pair_rate_hz / signal_rate_hz, pair_rate_hz / idler_rate_hz};
}

double cauchy_schwarz(double g2_si_peak, double g2_ii_0, double g2_ss_0) {
  if (g2_ii_0 <= 0.0 || g2_ss_0 <= 0.0)
    throw ArgumentError("cauchy_schwarz: autocorrelations must be > 0");
  return g2_si_peak * g2_si_peak / (g2_ii_0 * g2_ss_0);
}

TagStream herald_select(const TagStream& stream, ChannelSet heralds, ChannelSet targets,
                        std::uint64_t window_ps) {
  if (window_ps == 0) throw ArgumentError("herald_select: window must be > 0");
  TagStream out;
  out.header = stream.header;

  // most recent herald timestamp at or before the cursor
  bool have_herald = false;
  std::uint64_t last_herald = 0;
  for (const TimeTag& tag : stream.tags) {
    if (heralds.contains(tag.channel)) {
      last_herald = tag.timestamp_ps;
      have_herald = true;
    }
    if (!targets.contains(tag.channel)) continue;
    if (!have_herald) continue;
    if (tag.timestamp_ps - last_herald <= window_ps) out.tags.push_back(tag);
  }
  return out;
}

void merge_histograms(CorrelationHistogram& into, const CorrelationHistogram& other) {
  if (into.lag_min_ps != other.lag_min_ps || into.lag_max_ps != other.lag_max_ps ||
      into.bin_width_ps != other.bin_width_ps ||
      into.channels_a.mask != other.channels_a.mask ||
      into.channels_b.mask != other.channels_b.mask)
    throw ArgumentError("merge_histograms: incompatible histograms");
  for (std::size_t k = 0; k < into.counts.size(); ++k) into.counts[k] += other.counts[k];
  into.gated_count_a += other.gated_count_a;
  into.gated_count_b += other.gated_count_b;
  into.gated_time_s += other.gated_time_s;
  if (into.gated_time_s > 0.0) {
    into.rate_a_hz = static_cast<double>(into.gated_count_a) / into.gated_time_s;
    into.rate_b_hz = static_cast<double>(into.gated_count_b) / into.gated_time_s;
  }
}

void write_histogram_csv(const CorrelationHistogram& hist,
                         const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ArgumentError("cannot create file: " + path.string());
  const std::vector<double> g2 = normalize_g2(hist);
  out << "lag_ns,g2\n";
  out.precision(10);
  for (std::size_t k = 0; k < g2.size(); ++k)
    out << hist.lag_center_ns(k) << ',' << g2[k] << '\n';
}

nlohmann::json histogram_to_json(const CorrelationHistogram& hist) {
  nlohmann::json j;
  j["lag_min_ns"] = ns_from_ps(hist.lag_min_ps);
  j["lag_max_ns"] = ns_from_ps(hist.lag_max_ps);
  j["bin_width_ns"] = ns_from_ps(hist.bin_width_ps);
  j["channels_a"] = hist.channels_a.channels();
  j["channels_b"] = hist.channels_b.channels();
  j["counts"] = hist.counts;
  j["gated_time_s"] = hist.gated_time_s;
  j["rate_a_hz"] = hist.rate_a_hz;
  j["rate_b_hz"] = hist.rate_b_hz;
  return j;
}

}  // namespace qtt
