#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace qtt {

/// Precondition violation on an operation argument. CLI maps this to exit code 2.
class ArgumentError : public std::invalid_argument {
public:
  explicit ArgumentError(const std::string& what) : std::invalid_argument(what) {}
};

/// Malformed QTT1 file. Carries the kind of defect and the byte offset where
/// it was detected.
class FormatError : public std::runtime_error {
public:
  enum class Kind {
    bad_magic,
    unsupported_version,
    out_of_order,
    truncated,
    bad_channel,
  };

  FormatError(Kind kind, std::uint64_t byte_offset, const std::string& what)
      : std::runtime_error(what), kind_(kind), byte_offset_(byte_offset) {}

  Kind kind() const { return kind_; }
  std::uint64_t byte_offset() const { return byte_offset_; }

  static const char* kind_name(Kind k) {
    switch (k) {
      case Kind::bad_magic: return "bad_magic";
      case Kind::unsupported_version: return "unsupported_version";
      case Kind::out_of_order: return "out_of_order";
      case Kind::truncated: return "truncated";
      case Kind::bad_channel: return "bad_channel";
    }
    return "unknown";
  }

private:
  Kind kind_;
  std::uint64_t byte_offset_;
};

}  // namespace qtt
