#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "cgm/error.hpp"

namespace cgm {

/// Binary selector over goal dimensions: 1 = must be achieved, 0 = masked
/// (treated as already satisfied).
class GoalMask {
 public:
  GoalMask() = default;
  explicit GoalMask(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {
    for (auto b : bits_) detail::require<ConfigError>(b <= 1, "mask elements must be 0 or 1");
  }

  static GoalMask ones(std::size_t n) { return GoalMask(std::vector<std::uint8_t>(n, 1)); }
  static GoalMask zeros(std::size_t n) { return GoalMask(std::vector<std::uint8_t>(n, 0)); }

  /// Parses "110" style strings; character i is dimension i.
  static GoalMask from_string(std::string_view s) {
    std::vector<std::uint8_t> bits;
    for (char c : s) {
      detail::require<ConfigError>(c == '0' || c == '1', "mask string must contain only 0/1");
      bits.push_back(static_cast<std::uint8_t>(c - '0'));
    }
    return GoalMask(std::move(bits));
  }

  std::size_t size() const { return bits_.size(); }
  bool operator[](std::size_t i) const { return bits_[i] != 0; }
  const std::vector<std::uint8_t>& bits() const { return bits_; }

  bool all_ones() const {
    for (auto b : bits_)
      if (!b) return false;
    return true;
  }
  bool all_zeros() const {
    for (auto b : bits_)
      if (b) return false;
    return true;
  }

  /// Dimension 0 first, e.g. (1,1,0) -> "110".
  std::string to_string() const {
    std::string s;
    for (auto b : bits_) s.push_back(static_cast<char>('0' + b));
    return s;
  }

  bool operator==(const GoalMask&) const = default;

 private:
  std::vector<std::uint8_t> bits_;
};

}  // namespace cgm
