#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "encqr/core.hpp"

namespace encqr {

/// Fraction of steps with lower <= y <= upper.
double picp(std::span<const double> y, std::span<const double> lower, std::span<const double> upper);

/// Mean interval width divided by max(y_range) - min(y_range).
double pinaw(std::span<const double> y_range, std::span<const double> lower, std::span<const double> upper);

/// (1 - pinaw) * exp(-eta * (picp - (1 - alpha))^2).
double cwc(double picp, double pinaw, double alpha, double eta);

/// Sample (n - 1) standard deviation.
double sample_stddev(std::span<const double> values);

/// Sample StDev of the per-phase sample StDevs, phase = index mod period.
double heteroscedasticity_measure(std::span<const double> values, std::size_t period = 24);
double heteroscedasticity_measure(const TimeSeries& series, std::size_t period = 24);

/// Hour of day (UTC) of an epoch-seconds timestamp.
std::size_t hour_of_day(std::int64_t timestamp);

struct MetricReport {
  std::string method;
  double picp = 0.0;
  double pinaw = 0.0;
  double cwc = 0.0;
  double alpha = 0.1;
  double eta = 30.0;
  std::size_t n = 0;
  /// Indexed by hour of day; hours without steps report 0 with count 0.
  std::vector<double> per_hour_width;
  std::vector<double> per_hour_coverage;
  std::vector<std::size_t> per_hour_count;
  std::size_t interval_swaps = 0;

  /// Metrics of intervals against targets; PINAW range taken from `y`.
  static MetricReport compute(std::string method, std::span<const double> y, std::span<const double> lower,
                              std::span<const double> upper, std::span<const std::int64_t> timestamps, double alpha,
                              double eta);

  std::string to_json() const;
  static MetricReport from_json(const std::string& text);
  static std::string csv_header();
  std::string csv_row() const;

  bool operator==(const MetricReport&) const = default;
};

}  // namespace encqr
