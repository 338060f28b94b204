#pragma once

// Curriculum goal masking: the mask space, masked goals, per-dimension
// success tracking from evaluation rollouts, the product-form mask success
// estimate, and sampling masks whose estimated success is close to a target.

#include <cmath>
#include <cstdint>
#include <deque>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cgm/env.hpp"
#include "cgm/error.hpp"
#include "cgm/goal_mask.hpp"
#include "cgm/rng.hpp"

namespace cgm {

inline constexpr int kMaxMaskDims = 16;

/// All 2^n masks in binary counting order, where the most significant bit is
/// dimension 0 (so for n = 3 the order is 001, 010, 011, ..., 111).
inline std::vector<GoalMask> enumerate_masks(int n, bool include_zero) {
  detail::require<ConfigError>(n >= 1 && n <= kMaxMaskDims,
                               "mask dimension must lie in [1, 16], got " + std::to_string(n));
  std::vector<GoalMask> masks;
  const std::uint32_t count = 1u << n;
  masks.reserve(count);
  for (std::uint32_t code = include_zero ? 0u : 1u; code < count; ++code) {
    std::vector<std::uint8_t> bits(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) bits[static_cast<std::size_t>(i)] = (code >> (n - 1 - i)) & 1u;
    masks.emplace_back(std::move(bits));
  }
  return masks;
}

/// Masked goal: goal_i where mask_i = 1, otherwise the achieved value.
inline Goal apply_mask(std::span<const double> goal, std::span<const double> achieved, const GoalMask& mask) {
  detail::require<ShapeError>(goal.size() == achieved.size() && goal.size() == mask.size(),
                              "goal/achieved/mask length mismatch");
  Goal out(goal.size());
  for (std::size_t i = 0; i < goal.size(); ++i) out[i] = mask[i] ? goal[i] : achieved[i];
  return out;
}

/// Sliding window of the last `capacity` evaluation outcomes per dimension.
class SuccessTracker {
 public:
  SuccessTracker(int dims, int capacity) : capacity_(capacity), windows_(static_cast<std::size_t>(dims)) {
    detail::require<ConfigError>(dims >= 1, "tracker needs at least one dimension");
    detail::require<ConfigError>(capacity >= 1, "tracker window must be positive");
  }

  int dims() const { return static_cast<int>(windows_.size()); }
  int capacity() const { return capacity_; }
  std::size_t count(int dim) const { return windows_.at(static_cast<std::size_t>(dim)).size(); }

  void record(const std::vector<bool>& per_dim_success) {
    detail::require<ShapeError>(per_dim_success.size() == windows_.size(),
                                "success vector length does not match tracker dimension");
    for (std::size_t i = 0; i < windows_.size(); ++i) {
      auto& w = windows_[i];
      w.push_back(per_dim_success[i]);
      if (w.size() > static_cast<std::size_t>(capacity_)) w.pop_front();
    }
  }

  /// Mean of the window; 0 while empty.
  double rate(int dim) const {
    const auto& w = windows_.at(static_cast<std::size_t>(dim));
    if (w.empty()) return 0.0;
    std::size_t hits = 0;
    for (bool b : w) hits += b ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(w.size());
  }

  std::vector<double> rates() const {
    std::vector<double> r(windows_.size());
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = rate(static_cast<int>(i));
    return r;
  }

 private:
  int capacity_;
  std::vector<std::deque<bool>> windows_;
};

/// Product of per-dimension rates over the unmasked dimensions.
inline double estimate_mask_success(std::span<const double> rates, const GoalMask& mask) {
  detail::require<ShapeError>(rates.size() == mask.size(), "rates/mask length mismatch");
  double c = 1.0;
  for (std::size_t i = 0; i < rates.size(); ++i)
    if (mask[i]) c *= rates[i];
  return c;
}

inline double estimate_mask_success(const SuccessTracker& tracker, const GoalMask& mask) {
  return estimate_mask_success(tracker.rates(), mask);
}

enum class SamplingForm { proximity, literal };

inline std::string_view to_string(SamplingForm f) { return f == SamplingForm::proximity ? "proximity" : "literal"; }

inline SamplingForm parse_sampling_form(std::string_view s) {
  if (s == "proximity") return SamplingForm::proximity;
  if (s == "literal") return SamplingForm::literal;
  throw ConfigError("unknown sampling form '" + std::string(s) + "'");
}

struct CurriculumConfig {
  double target_success = 0.1;  // c_g
  double sharpness = 32.0;      // kappa
  SamplingForm form = SamplingForm::proximity;
  bool include_zero_mask = false;

  void validate() const {
    detail::require<ConfigError>(target_success >= 0.0 && target_success <= 1.0, "c_g must lie in [0, 1] (a fraction: 10% is 0.1)");
    detail::require<ConfigError>(sharpness >= 0.0, "kappa must be non-negative");
  }
};

/// Weight of a mask whose estimated success is `c`, before normalization.
///   proximity: (1 - |c - c_g|)^kappa   (peaks at c = c_g)
///   literal:   |c - c_g|^kappa         (peaks far from c_g)
inline double raw_mask_weight(double c, const CurriculumConfig& cfg) {
  const double gap = std::abs(c - cfg.target_success);
  const double base = cfg.form == SamplingForm::proximity ? 1.0 - gap : gap;
  return std::pow(base, cfg.sharpness);
}

/// Normalized sampling distribution over `masks` given per-dimension rates.
/// Falls back to uniform when every raw weight is below 1e-12.
inline std::vector<double> mask_weights(std::span<const double> rates, std::span<const GoalMask> masks,
                                        const CurriculumConfig& cfg) {
  detail::require<ConfigError>(!masks.empty(), "mask list must be non-empty");
  cfg.validate();
  std::vector<double> w(masks.size());
  bool any_significant = false;
  for (std::size_t i = 0; i < masks.size(); ++i) {
    w[i] = raw_mask_weight(estimate_mask_success(rates, masks[i]), cfg);
    if (w[i] >= 1e-12) any_significant = true;
  }
  if (!any_significant) return std::vector<double>(masks.size(), 1.0 / static_cast<double>(masks.size()));
  double total = 0.0;
  for (double x : w) total += x;
  for (double& x : w) x /= total;
  return w;
}

inline std::vector<double> mask_weights(const SuccessTracker& tracker, std::span<const GoalMask> masks,
                                        const CurriculumConfig& cfg) {
  return mask_weights(tracker.rates(), masks, cfg);
}

/// Categorical index draw; one uniform variate per call.
inline std::size_t sample_index(std::span<const double> weights, Rng& rng) {
  detail::require<ShapeError>(!weights.empty(), "cannot sample from an empty distribution");
  double total = 0.0;
  for (double w : weights) total += w;
  const double u = rng.uniform() * total;
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    acc += weights[i];
    last_positive = i;
    if (u < acc) return i;
  }
  return last_positive;
}

inline const GoalMask& sample_mask(std::span<const double> weights, std::span<const GoalMask> masks, Rng& rng) {
  detail::require<ShapeError>(weights.size() == masks.size(), "weight/mask length mismatch");
  return masks[sample_index(weights, rng)];
}

}  // namespace cgm
