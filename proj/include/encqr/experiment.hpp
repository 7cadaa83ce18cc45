#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "encqr/conformal.hpp"
#include "encqr/data.hpp"
#include "encqr/eval.hpp"
#include "encqr/regress.hpp"

namespace encqr {

enum class DataSource { synthetic, csv };

struct DataConfig {
  DataSource source = DataSource::synthetic;
  // csv
  std::filesystem::path path;
  CsvColumns columns;
  // synthetic
  SyntheticKind kind = SyntheticKind::heteroscedastic_daily;
  std::size_t length = 4200;
  std::uint64_t seed = 0;
  SyntheticParams params;
};

struct ExperimentConfig {
  DataConfig data;
  SplitSpec split;
  Method method = Method::encqr;
  RegressorSpec regressor;
  double alpha = 0.1;
  std::size_t members = 3;  ///< B
  std::size_t batch = 24;   ///< s
  std::size_t n_x = 168;
  std::size_t n_y = 24;
  /// Nominal regressor levels; default alpha / 2 and 1 - alpha / 2.
  std::optional<double> q_lo;
  std::optional<double> q_hi;
  Aggregation aggregation;
  double eta = 30.0;
  std::uint64_t seed = 0;
  ResidualPooling pooling = ResidualPooling::pooled;
  SideLevel side_level = SideLevel::half_alpha;
  std::size_t train_stride = 1;

  QuantileLevels levels() const;
  /// Throws ConfigError on the first invalid field.
  void validate() const;

  /// Parses a JSON object. Unknown keys are rejected.
  static ExperimentConfig from_json(const std::string& text);
  /// Applies `dotted.key=value` overrides to a JSON config before parsing.
  /// Values are read as JSON when possible and as strings otherwise.
  static ExperimentConfig from_json(const std::string& text, std::span<const std::string> overrides);
  static ExperimentConfig load(const std::filesystem::path& path, std::span<const std::string> overrides = {});

  std::string to_json() const;
};

/// One predicted test step.
struct TraceRow {
  std::size_t step = 0;  ///< index into the full series
  std::int64_t timestamp = 0;
  double y = 0.0;
  double lower = 0.0;
  double center = 0.0;
  double upper = 0.0;
  bool covered = false;
  /// Raw quantile forecast before conformalization.
  double raw_lo = 0.0;
  double raw_hi = 0.0;
};

struct ExperimentResult {
  MetricReport report;
  std::vector<TraceRow> trace;
  /// Normalized true conditional quantiles at each trace step (synthetic data only).
  std::vector<double> true_lo;
  std::vector<double> true_hi;
};

/// Test-time access to inputs and targets, one batch at a time.
class ObservationFeed {
 public:
  virtual ~ObservationFeed() = default;
  virtual std::size_t batches() const = 0;
  /// First series index predicted by batch k.
  virtual std::size_t origin(std::size_t k) const = 0;
  /// Flattened input window preceding batch k.
  virtual std::vector<double> inputs(std::size_t k) = 0;
  /// Targets of batch k; only called after batch k has been predicted.
  virtual std::vector<double> reveal(std::size_t k) = 0;
};

/// Feed over a series with one batch of `batch` steps per origin.
class SeriesFeed final : public ObservationFeed {
 public:
  SeriesFeed(const TimeSeries& series, std::size_t n_x, std::size_t batch, std::vector<std::size_t> origins);

  std::size_t batches() const override { return origins_.size(); }
  std::size_t origin(std::size_t k) const override { return origins_.at(k); }
  std::vector<double> inputs(std::size_t k) override;
  std::vector<double> reveal(std::size_t k) override;

 private:
  const TimeSeries* series_;
  std::size_t n_x_;
  std::size_t batch_;
  std::vector<std::size_t> origins_;
};

/// Batch origins covering each range in s-step blocks; a trailing partial
/// block is dropped.
std::vector<std::size_t> batch_origins(const Partition& partition, std::size_t batch, std::size_t n_x);

/// Predict batch k, then reveal and observe it, for every batch in order.
std::vector<TraceRow> run_sequential(IntervalMethod& method, ObservationFeed& feed, const TimeSeries& series);

ExperimentResult run_experiment(const ExperimentConfig& config);

/// Writes metrics.json, intervals.csv and per_hour.csv into `out_dir`
/// (created if missing). Each file is written to a temporary name first
/// and renamed into place.
void emit_report(const MetricReport& report, std::span<const TraceRow> trace, const std::filesystem::path& out_dir);

/// Runs `config` once per method and writes one subdirectory per method
/// plus comparison.csv / comparison.json keyed by method.
std::vector<MetricReport> compare_methods(const ExperimentConfig& config, std::span<const Method> methods,
                                          const std::filesystem::path& out_dir);

/// Writes `contents` to `path` through a temporary file and a rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace encqr
