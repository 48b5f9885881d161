#include "qtt/timetag.hpp"

#include <algorithm>
#include <array>
#include <cstring>
#include <fstream>

namespace qtt {

namespace {

void store_u16(unsigned char* p, std::uint16_t v) {
  p[0] = static_cast<unsigned char>(v & 0xff);
  p[1] = static_cast<unsigned char>(v >> 8);
}

void store_u32(unsigned char* p, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) p[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
}

void store_u64(unsigned char* p, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) p[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
}

std::uint32_t load_u32(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

std::uint64_t load_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

constexpr std::array<unsigned char, 4> kMagic = {'Q', 'T', 'T', '1'};
constexpr std::uint8_t kVersion = 1;

TagStream read_impl(const std::filesystem::path& path, bool check_order) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError("cannot open file: " + path.string());

  std::array<unsigned char, kHeaderBytes> hdr{};
  in.read(reinterpret_cast<char*>(hdr.data()), kHeaderBytes);
  const auto got = static_cast<std::uint64_t>(in.gcount());
  if (got < kHeaderBytes)
    throw FormatError(FormatError::Kind::truncated, got,
                      "truncated header at byte " + std::to_string(got) + " in " + path.string());

  if (!std::equal(kMagic.begin(), kMagic.end(), hdr.begin()))
    throw FormatError(FormatError::Kind::bad_magic, 0, "bad magic in " + path.string());
  if (hdr[4] != kVersion)
    throw FormatError(FormatError::Kind::unsupported_version, 4,
                      "unsupported version " + std::to_string(hdr[4]) + " at byte 4");
  const std::uint64_t tick = load_u64(hdr.data() + 8);
  if (tick != kTickPicoseconds)
    throw FormatError(FormatError::Kind::unsupported_version, 8,
                      "unsupported tick resolution " + std::to_string(tick) + " ps at byte 8");

  TagStream stream;
  stream.header.channel_count = hdr[5];
  stream.header.duty.on_ps = load_u64(hdr.data() + 16);
  stream.header.duty.off_ps = load_u64(hdr.data() + 24);
  stream.header.duty.phase_ps = 0;

  std::array<unsigned char, kRecordBytes> rec{};
  std::uint64_t offset = kHeaderBytes;
  TimeTag prev{0, 0};
  bool have_prev = false;
  while (true) {
    in.read(reinterpret_cast<char*>(rec.data()), kRecordBytes);
    const auto n = static_cast<std::uint64_t>(in.gcount());
    if (n == 0) break;
    if (n < kRecordBytes)
      throw FormatError(FormatError::Kind::truncated, offset,
                        "truncated record at byte " + std::to_string(offset));

    TimeTag tag;
    tag.timestamp_ps = load_u64(rec.data());
    tag.channel = load_u32(rec.data() + 8);
    if (tag.channel >= stream.header.channel_count)
      throw FormatError(FormatError::Kind::bad_channel, offset,
                        "channel " + std::to_string(tag.channel) + " out of range at byte " +
                            std::to_string(offset));
    if (check_order && have_prev && tag < prev)
      throw FormatError(FormatError::Kind::out_of_order, offset,
                        "out-of-order tag at byte " + std::to_string(offset));
    prev = tag;
    have_prev = true;
    stream.tags.push_back(tag);
    offset += kRecordBytes;
  }
  return stream;
}

}  // namespace

double DutyCycle::gated_fraction() const {
  if (!gated()) return 1.0;
  return static_cast<double>(on_ps) / static_cast<double>(period_ps());
}

bool DutyCycle::is_on(std::uint64_t t_ps) const {
  if (!gated()) return true;
  if (t_ps < phase_ps) return false;
  return (t_ps - phase_ps) % period_ps() < on_ps;
}

void DutyCycle::validate() const {
  if (!gated()) return;
  if (on_ps == 0) throw ArgumentError("duty cycle on-duration must be > 0 when gating");
}

void TagStream::validate() const {
  TimeTag prev{0, 0};
  bool have_prev = false;
  for (const TimeTag& tag : tags) {
    if (tag.channel >= header.channel_count)
      throw ArgumentError("tag channel " + std::to_string(tag.channel) + " out of range");
    if (have_prev && tag < prev) throw ArgumentError("tags out of order");
    prev = tag;
    have_prev = true;
  }
}

std::uint64_t gated_time(const DutyCycle& duty, std::uint64_t t_begin_ps,
                         std::uint64_t t_end_ps) {
  if (t_begin_ps > t_end_ps) throw ArgumentError("inverted window in gated_time");
  duty.validate();
  if (!duty.gated()) return t_end_ps - t_begin_ps;

  // Accumulated on-time in [phase, t). Full cycles contribute `on` each, the
  // trailing partial cycle contributes min(rem, on).
  const std::uint64_t period = duty.period_ps();
  auto on_before = [&](std::uint64_t t) -> std::uint64_t {
    if (t <= duty.phase_ps) return 0;
    const std::uint64_t u = t - duty.phase_ps;
    return (u / period) * duty.on_ps + std::min(u % period, duty.on_ps);
  };
  return on_before(t_end_ps) - on_before(t_begin_ps);
}

std::uint64_t gated_time(const TagStream& stream) {
  return gated_time(stream.header.duty, 0, stream.duration_ps());
}

TagStream filter_gated(const TagStream& stream, const DutyCycle& duty) {
  duty.validate();
  TagStream out;
  out.header = stream.header;
  out.tags.reserve(stream.tags.size());
  for (const TimeTag& tag : stream.tags)
    if (duty.is_on(tag.timestamp_ps)) out.tags.push_back(tag);
  return out;
}

TagStream read_stream(const std::filesystem::path& path) { return read_impl(path, true); }

TagStream read_stream_unsorted(const std::filesystem::path& path) {
  return read_impl(path, false);
}

void write_stream(const TagStream& stream, const std::filesystem::path& path) {
  stream.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ArgumentError("cannot create file: " + path.string());

  std::array<unsigned char, kHeaderBytes> hdr{};
  std::copy(kMagic.begin(), kMagic.end(), hdr.begin());
  hdr[4] = kVersion;
  hdr[5] = stream.header.channel_count;
  store_u16(hdr.data() + 6, 0);
  store_u64(hdr.data() + 8, kTickPicoseconds);
  store_u64(hdr.data() + 16, stream.header.duty.on_ps);
  store_u64(hdr.data() + 24, stream.header.duty.off_ps);
  out.write(reinterpret_cast<const char*>(hdr.data()), kHeaderBytes);

  std::array<unsigned char, kRecordBytes> rec{};
  for (const TimeTag& tag : stream.tags) {
    store_u64(rec.data(), tag.timestamp_ps);
    store_u32(rec.data() + 8, tag.channel);
    store_u32(rec.data() + 12, 0);
    out.write(reinterpret_cast<const char*>(rec.data()), kRecordBytes);
  }
  if (!out) throw ArgumentError("write failed: " + path.string());
}

}  // namespace qtt
