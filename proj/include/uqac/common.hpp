#pragma once

#include <compare>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace uqac {

using DocId = std::uint32_t;

/// Input that violates a documented format or precondition (corrupt file,
/// impossible log entry, bad argument value).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Missing or invalid configuration key.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A pipeline stage needs an artifact that has not been produced yet.
class MissingArtifactError : public std::runtime_error {
 public:
  explicit MissingArtifactError(std::string artifact)
      : std::runtime_error("missing artifact: " + artifact), artifact_(std::move(artifact)) {}
  const std::string& artifact() const { return artifact_; }

 private:
  std::string artifact_;
};

/// 1-based position of a document in a ranking, or infinity when the
/// document is not ranked at all. Infinity compares greater than every
/// finite position.
class Rank {
 public:
  constexpr Rank() = default;
  constexpr explicit Rank(std::uint32_t position) : value_(position) {
    if (position == 0) throw std::invalid_argument("rank positions are 1-based");
  }

  static constexpr Rank infinite() { return Rank(); }

  constexpr bool is_finite() const { return value_ != kInfinite; }
  constexpr std::uint32_t position() const { return value_; }

  constexpr auto operator<=>(const Rank&) const = default;

  std::string to_string() const { return is_finite() ? std::to_string(value_) : "inf"; }

 private:
  static constexpr std::uint32_t kInfinite = std::numeric_limits<std::uint32_t>::max();
  std::uint32_t value_ = kInfinite;
};

}  // namespace uqac
