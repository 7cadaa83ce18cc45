#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "encqr/core.hpp"

namespace encqr {

// ---------------------------------------------------------------------------
// CSV

struct CsvColumns {
  std::string timestamp = "timestamp";
  std::string target = "target";
  std::vector<std::string> exogenous;
};

/// Integer epoch seconds, or ISO-8601 `YYYY-MM-DD[T ]hh:mm[:ss][Z|+hh:mm]`.
std::int64_t parse_timestamp(std::string_view text);
std::string format_iso8601(std::int64_t epoch_seconds);

/// Reads a headed CSV. Rows are sorted by timestamp; the stride must be
/// constant (NonUniformResolution lists the gaps otherwise).
TimeSeries read_csv_series(std::istream& in, const CsvColumns& columns);
TimeSeries load_csv_series(const std::filesystem::path& path, const CsvColumns& columns);

/// Writes `timestamp,<target>,<exogenous...>` with epoch-second timestamps
/// and round-trip precision values.
void write_csv_series(std::ostream& out, const TimeSeries& series);

// ---------------------------------------------------------------------------
// Chronological split

struct SplitSpec {
  double train_fraction = 1.0 / 3.0;
  double val_fraction = 1.0 / 3.0;
  double test_fraction = 1.0 / 3.0;
  /// Explicit boundaries override the fractions when both are set.
  std::optional<std::int64_t> val_start;
  std::optional<std::int64_t> test_start;
  /// Everything after the training part goes to validation (odd calendar
  /// months) or test (even calendar months).
  bool interleave_months = false;

  void validate() const;
};

/// A set of disjoint index ranges over a source series.
struct Partition {
  std::vector<IndexRange> ranges;

  std::size_t size() const;
  bool empty() const { return size() == 0; }
  bool contiguous() const { return ranges.size() <= 1; }
  /// Indices of all steps, ascending.
  std::vector<std::size_t> indices() const;
};

struct SplitResult {
  Partition train;
  Partition val;
  Partition test;
};

/// Train, validation and test partitions in chronological order. Every
/// non-empty partition must hold at least `min_steps` steps; validation
/// may be empty only when its fraction is zero.
SplitResult chronological_split(const TimeSeries& series, const SplitSpec& spec, std::size_t min_steps = 1);

// ---------------------------------------------------------------------------
// Synthetic series

enum class SyntheticKind { heteroscedastic_daily, homoscedastic_ar };

std::string_view to_string(SyntheticKind kind);
SyntheticKind parse_synthetic_kind(std::string_view name);

struct SyntheticParams {
  std::int64_t start = 1483228800;  // 2017-01-01T00:00:00Z
  std::int64_t resolution = 3600;
  QuantileLevels truth_levels{};
  // heteroscedastic_daily
  double night_sigma = 0.02;
  double peak_sigma = 0.3;
  double base_level = 0.05;
  double peak_level = 1.0;
  // homoscedastic_ar
  double ar_coefficient = 0.8;
  double ar_sigma = 0.1;
  double ar_mean = 0.5;
};

/// A generated series together with its true conditional quantiles at
/// every step (given the past).
struct SyntheticSeries {
  TimeSeries series;
  QuantileLevels levels;
  std::vector<double> true_lo;
  std::vector<double> true_mid;
  std::vector<double> true_hi;
};

/// heteroscedastic_daily: y = m(h) + sigma(h) * eps with a daylight-shaped
/// period-24 mean and noise scale. homoscedastic_ar: AR(1) with constant noise.
SyntheticSeries gen_synthetic(SyntheticKind kind, std::size_t length, std::uint64_t seed,
                              const SyntheticParams& params = {});

/// Daylight profile in [0, 1] used by heteroscedastic_daily.
double daylight(std::size_t hour);

/// Writes the series plus `true_lo,true_mid,true_hi` columns.
void write_synthetic_csv(std::ostream& out, const SyntheticSeries& synthetic);

/// Exchangeable regression pairs with one feature: x ~ U(0, 1),
/// y = sin(2 pi x) + (0.1 + 0.4 x) eps. Packed as N_x = N_y = 1 windows.
WindowedDataset gen_regression_pairs(std::size_t n, std::uint64_t seed);

}  // namespace encqr
