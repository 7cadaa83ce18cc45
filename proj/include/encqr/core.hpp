#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "encqr/error.hpp"

namespace encqr {

/// Half-open index range [begin, end).
struct IndexRange {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end > begin ? end - begin : 0; }
  bool contains(std::size_t i) const { return i >= begin && i < end; }
  bool operator==(const IndexRange&) const = default;
};

struct Channel {
  std::string name;
  std::vector<double> values;
};

/// Regularly sampled target channel plus optional exogenous channels.
///
/// Timestamps are epoch seconds with a constant stride equal to
/// `resolution()`. All channels share the same length and are finite; the
/// constructor validates this and throws `Error` otherwise.
class TimeSeries {
 public:
  TimeSeries() = default;
  TimeSeries(std::vector<std::int64_t> timestamps, Channel target,
             std::vector<Channel> exogenous = {}, std::int64_t resolution = 3600);

  /// Series starting at `start` with stride `resolution`.
  static TimeSeries regular(std::int64_t start, std::int64_t resolution, std::vector<double> target,
                            std::vector<Channel> exogenous = {});

  std::size_t size() const { return target_.values.size(); }
  bool empty() const { return size() == 0; }
  std::int64_t resolution() const { return resolution_; }
  std::span<const std::int64_t> timestamps() const { return timestamps_; }
  std::span<const double> target() const { return target_.values; }
  const std::string& target_name() const { return target_.name; }
  const std::vector<Channel>& exogenous() const { return exogenous_; }

  /// 1 + number of exogenous channels.
  std::size_t feature_count() const { return 1 + exogenous_.size(); }
  /// Feature 0 is the target, feature c > 0 is exogenous channel c - 1.
  std::span<const double> channel(std::size_t feature) const;

  TimeSeries slice(IndexRange range) const;
  /// Replaces the values of every channel, keeping timestamps and names.
  TimeSeries with_values(std::vector<std::vector<double>> channels) const;

 private:
  std::vector<std::int64_t> timestamps_;
  Channel target_;
  std::vector<Channel> exogenous_;
  std::int64_t resolution_ = 3600;
};

/// Supervised (input window, target window) pairs carved from a series.
///
/// Inputs are stored row-major per pair: `input(k)[t * features + c]` is
/// feature c at step t of the window. Feature 0 is the target channel.
class WindowedDataset {
 public:
  WindowedDataset() = default;
  WindowedDataset(std::size_t n_x, std::size_t n_y, std::size_t features, std::vector<double> inputs,
                  std::vector<double> targets, std::vector<std::size_t> origins);

  std::size_t size() const { return origins_.size(); }
  bool empty() const { return origins_.empty(); }
  std::size_t n_x() const { return n_x_; }
  std::size_t n_y() const { return n_y_; }
  std::size_t features() const { return features_; }
  std::size_t input_size() const { return n_x_ * features_; }

  std::span<const double> input(std::size_t k) const {
    return {inputs_.data() + k * input_size(), input_size()};
  }
  std::span<const double> target(std::size_t k) const { return {targets_.data() + k * n_y_, n_y_}; }
  std::span<const std::size_t> origins() const { return origins_; }
  std::span<const double> all_targets() const { return targets_; }

  WindowedDataset select(std::span<const std::size_t> pairs) const;

 private:
  std::size_t n_x_ = 0;
  std::size_t n_y_ = 0;
  std::size_t features_ = 0;
  std::vector<double> inputs_;
  std::vector<double> targets_;
  std::vector<std::size_t> origins_;
};

/// Lower/mid/upper quantile levels of a quantile regressor.
struct QuantileLevels {
  double lo = 0.05;
  double mid = 0.5;
  double hi = 0.95;

  /// lo = alpha / 2, hi = 1 - alpha / 2.
  static QuantileLevels from_alpha(double alpha);
  static QuantileLevels nominal(double lo, double hi);

  void validate() const;
  bool operator==(const QuantileLevels&) const = default;
};

/// One interval per predicted step.
struct IntervalBatch {
  std::vector<double> lower;
  std::vector<double> center;
  std::vector<double> upper;
  double alpha = 0.1;

  std::size_t size() const { return lower.size(); }
  std::vector<double> widths() const;
};

/// Swaps any (lower, upper) pair with lower > upper. The midpoint is
/// unchanged. Returns the number of swapped steps.
std::size_t repair_crossed_bounds(IntervalBatch& batch);

// ---------------------------------------------------------------------------
// Sliding windows

/// All windows with origins N_x, N_x + stride, ... while origin + N_y <= T.
WindowedDataset make_sliding_windows(const TimeSeries& series, std::size_t n_x, std::size_t n_y,
                                     std::size_t stride = 1);

/// Windows at explicit origins. Each origin o must satisfy
/// N_x <= o <= T - N_y.
WindowedDataset make_windows_at(const TimeSeries& series, std::size_t n_x, std::size_t n_y,
                                std::span<const std::size_t> origins);

/// Flattened input window [origin - n_x, origin) of `series`.
std::vector<double> window_input(const TimeSeries& series, std::size_t n_x, std::size_t origin);

// ---------------------------------------------------------------------------
// Order statistics

enum class QuantileConvention {
  /// ceil(level * (n + 1))-th smallest, clamped to the maximum.
  conformal,
  /// ceil(level * n)-th smallest.
  plain,
};

/// Empirical quantile as an order statistic (never interpolated).
double empirical_quantile(std::span<const double> values, double level,
                          QuantileConvention convention = QuantileConvention::conformal);

/// 1-based rank selected by `empirical_quantile` for n values.
std::size_t quantile_rank(std::size_t n, double level, QuantileConvention convention);

// ---------------------------------------------------------------------------
// Min-max scaling

struct ChannelScale {
  double min = 0.0;
  double max = 1.0;
  bool constant = false;

  double normalize(double v) const { return constant ? 0.0 : (v - min) / (max - min); }
  double denormalize(double v) const { return constant ? min : min + v * (max - min); }
  bool operator==(const ChannelScale&) const = default;
};

/// Per-channel (min, max), index 0 is the target.
struct ScaleParams {
  std::vector<ChannelScale> channels;

  /// Statistics of every channel of `reference` (usually the training part).
  static ScaleParams fit(const TimeSeries& reference);

  TimeSeries apply(const TimeSeries& series) const;
  TimeSeries invert(const TimeSeries& series) const;
  double normalize_target(double v) const { return channels.at(0).normalize(v); }
  double denormalize_target(double v) const { return channels.at(0).denormalize(v); }
};

struct Normalized {
  TimeSeries series;
  ScaleParams params;
};

/// Scales every channel of `series` to [0, 1] using statistics of the steps
/// in `fit_range` only. Values outside that range may fall outside [0, 1].
Normalized minmax_normalize(const TimeSeries& series, IndexRange fit_range);
Normalized minmax_normalize(const TimeSeries& series);

}  // namespace encqr
