#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "qtt/errors.hpp"

namespace qtt {

// All timestamps are integer picosecond ticks since run start. Keeping the
// hot path integral avoids any floating-point timestamp arithmetic.
inline constexpr std::uint64_t kTickPicoseconds = 1;
inline constexpr std::uint64_t kPsPerNs = 1'000;
inline constexpr std::uint64_t kPsPerUs = 1'000'000;
inline constexpr std::uint64_t kPsPerMs = 1'000'000'000;
inline constexpr std::uint64_t kPsPerSecond = 1'000'000'000'000;

inline constexpr double seconds_from_ps(std::uint64_t ps) {
  return static_cast<double>(ps) * 1e-12;
}
inline constexpr double ns_from_ps(std::int64_t ps) {
  return static_cast<double>(ps) * 1e-3;
}

/// One detector click: channel 0=D1, 1=D2 (signal arm), 2=D3, 3=D4 (idler arm).
struct TimeTag {
  std::uint64_t timestamp_ps = 0;
  std::uint32_t channel = 0;

  // Stream order: timestamp ascending, ties broken by channel ascending.
  friend auto operator<=>(const TimeTag&, const TimeTag&) = default;
};

/// Pump on/off cycling. On-windows are the closed-open intervals
/// [phase + k*period, phase + k*period + on) so that consecutive cycles
/// partition the timeline without double counting. on == off == 0 means the
/// source runs ungated.
struct DutyCycle {
  std::uint64_t on_ps = 1 * kPsPerMs;
  std::uint64_t off_ps = 12 * kPsPerMs;
  std::uint64_t phase_ps = 0;  // start of the first on-window

  static constexpr DutyCycle none() { return DutyCycle{0, 0, 0}; }

  bool gated() const { return on_ps != 0 || off_ps != 0; }
  std::uint64_t period_ps() const { return on_ps + off_ps; }

  /// on/(on+off); 1 when ungated. Defaults give 1/13.
  double gated_fraction() const;

  bool is_on(std::uint64_t t_ps) const;

  void validate() const;  // throws ArgumentError
};

struct StreamHeader {
  std::uint8_t channel_count = 4;
  DutyCycle duty{};
  /// Wall-clock length of the acquisition. Not part of the binary format;
  /// read_stream leaves it 0 and duration_ps() falls back to the last tag.
  std::uint64_t wall_duration_ps = 0;
};

/// An ordered tag sequence plus acquisition metadata. Immutable by convention
/// once constructed; safe to share read-only across threads.
struct TagStream {
  StreamHeader header{};
  std::vector<TimeTag> tags;

  std::uint64_t duration_ps() const {
    if (header.wall_duration_ps != 0) return header.wall_duration_ps;
    return tags.empty() ? 0 : tags.back().timestamp_ps;
  }

  /// Checks ordering and channel bounds; throws ArgumentError on violation.
  void validate() const;
};

/// Total pump-on time intersecting [t_begin, t_end). 611 s of wall time at the
/// default 1 ms / 12 ms cycle gives 47 s.
std::uint64_t gated_time(const DutyCycle& duty, std::uint64_t t_begin_ps,
                         std::uint64_t t_end_ps);

/// Pump-on time over the whole stream, [0, duration).
std::uint64_t gated_time(const TagStream& stream);

/// Keeps only tags inside pump-on windows. Idempotent; preserves order.
TagStream filter_gated(const TagStream& stream, const DutyCycle& duty);

// ---------------------------------------------------------------------------
// QTT1 binary format, little-endian throughout.
//
//   header, 32 bytes:
//     offset 0   magic "QTT1" (4 bytes)
//     offset 4   version        u8  (= 1)
//     offset 5   channel_count  u8
//     offset 6   reserved       u16 (= 0)
//     offset 8   tick_picoseconds u64 (= 1)
//     offset 16  duty_on_ps     u64   } both zero = no gating
//     offset 24  duty_off_ps    u64   }
//   records, 16 bytes each:
//     offset +0  timestamp_ticks u64
//     offset +8  channel         u32
//     offset +12 reserved        u32 (= 0)
//
// Readers reject, with the byte offset of the defect: wrong magic, unknown
// version (or tick != 1), truncated header/record, timestamps that go
// backwards (ties must be channel-ascending), and channels >= channel_count.
// ---------------------------------------------------------------------------

inline constexpr std::size_t kHeaderBytes = 32;
inline constexpr std::size_t kRecordBytes = 16;

TagStream read_stream(const std::filesystem::path& path);
void write_stream(const TagStream& stream, const std::filesystem::path& path);

/// Lenient variant for the `sort` verb: parses without the ordering check.
TagStream read_stream_unsorted(const std::filesystem::path& path);

}  // namespace qtt
