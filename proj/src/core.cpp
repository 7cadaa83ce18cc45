#include "encqr/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

namespace encqr {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::SeriesTooShort: return "SeriesTooShort";
    case ErrorCode::InvalidWindow: return "InvalidWindow";
    case ErrorCode::EmptyResidualSet: return "EmptyResidualSet";
    case ErrorCode::ShapeError: return "ShapeError";
    case ErrorCode::NoTrainingData: return "NoTrainingData";
    case ErrorCode::NotFitted: return "NotFitted";
    case ErrorCode::SubsetsTooSmall: return "SubsetsTooSmall";
    case ErrorCode::EmptyAggregate: return "EmptyAggregate";
    case ErrorCode::NoOutOfSampleLearner: return "NoOutOfSampleLearner";
    case ErrorCode::BatchSizeMismatch: return "BatchSizeMismatch";
    case ErrorCode::ProtocolError: return "ProtocolError";
    case ErrorCode::DegenerateRange: return "DegenerateRange";
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::NonUniformResolution: return "NonUniformResolution";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::PartitionTooSmall: return "PartitionTooSmall";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::FormatError: return "FormatError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

namespace {

void require_finite(const Channel& channel) {
  for (std::size_t i = 0; i < channel.values.size(); ++i) {
    if (!std::isfinite(channel.values[i])) {
      fail(ErrorCode::InvalidArgument,
           "channel '" + channel.name + "' has a non-finite value at step " + std::to_string(i));
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// TimeSeries

TimeSeries::TimeSeries(std::vector<std::int64_t> timestamps, Channel target, std::vector<Channel> exogenous,
                       std::int64_t resolution)
    : timestamps_(std::move(timestamps)),
      target_(std::move(target)),
      exogenous_(std::move(exogenous)),
      resolution_(resolution) {
  if (resolution_ <= 0) fail(ErrorCode::InvalidArgument, "resolution must be positive");
  if (timestamps_.size() != target_.values.size()) {
    fail(ErrorCode::ShapeError, "timestamp count differs from target length");
  }
  for (const auto& ch : exogenous_) {
    if (ch.values.size() != target_.values.size()) {
      fail(ErrorCode::ShapeError, "exogenous channel '" + ch.name + "' has a different length");
    }
  }
  for (std::size_t i = 1; i < timestamps_.size(); ++i) {
    if (timestamps_[i] - timestamps_[i - 1] != resolution_) {
      fail(ErrorCode::NonUniformResolution,
           "stride break before timestamp " + std::to_string(timestamps_[i]));
    }
  }
  require_finite(target_);
  for (const auto& ch : exogenous_) require_finite(ch);
}

TimeSeries TimeSeries::regular(std::int64_t start, std::int64_t resolution, std::vector<double> target,
                               std::vector<Channel> exogenous) {
  std::vector<std::int64_t> ts(target.size());
  for (std::size_t i = 0; i < ts.size(); ++i) ts[i] = start + static_cast<std::int64_t>(i) * resolution;
  return TimeSeries(std::move(ts), Channel{"target", std::move(target)}, std::move(exogenous), resolution);
}

std::span<const double> TimeSeries::channel(std::size_t feature) const {
  if (feature == 0) return target_.values;
  if (feature > exogenous_.size()) fail(ErrorCode::InvalidArgument, "feature index out of range");
  return exogenous_[feature - 1].values;
}

TimeSeries TimeSeries::slice(IndexRange range) const {
  if (range.end > size() || range.begin > range.end) fail(ErrorCode::InvalidArgument, "slice out of range");
  auto cut = [&](const std::vector<double>& v) {
    return std::vector<double>(v.begin() + static_cast<std::ptrdiff_t>(range.begin),
                               v.begin() + static_cast<std::ptrdiff_t>(range.end));
  };
  std::vector<std::int64_t> ts(timestamps_.begin() + static_cast<std::ptrdiff_t>(range.begin),
                               timestamps_.begin() + static_cast<std::ptrdiff_t>(range.end));
  std::vector<Channel> exo;
  exo.reserve(exogenous_.size());
  for (const auto& ch : exogenous_) exo.push_back({ch.name, cut(ch.values)});
  return TimeSeries(std::move(ts), Channel{target_.name, cut(target_.values)}, std::move(exo), resolution_);
}

TimeSeries TimeSeries::with_values(std::vector<std::vector<double>> channels) const {
  if (channels.size() != feature_count()) fail(ErrorCode::ShapeError, "channel count mismatch");
  std::vector<Channel> exo;
  exo.reserve(exogenous_.size());
  for (std::size_t c = 0; c < exogenous_.size(); ++c) {
    exo.push_back({exogenous_[c].name, std::move(channels[c + 1])});
  }
  return TimeSeries(timestamps_, Channel{target_.name, std::move(channels[0])}, std::move(exo), resolution_);
}

// ---------------------------------------------------------------------------
// WindowedDataset

WindowedDataset::WindowedDataset(std::size_t n_x, std::size_t n_y, std::size_t features,
                                 std::vector<double> inputs, std::vector<double> targets,
                                 std::vector<std::size_t> origins)
    : n_x_(n_x),
      n_y_(n_y),
      features_(features),
      inputs_(std::move(inputs)),
      targets_(std::move(targets)),
      origins_(std::move(origins)) {
  if (n_x_ == 0 || n_y_ == 0 || features_ == 0) fail(ErrorCode::InvalidWindow, "window sizes must be positive");
  if (inputs_.size() != origins_.size() * n_x_ * features_ || targets_.size() != origins_.size() * n_y_) {
    fail(ErrorCode::ShapeError, "inputs/targets do not match pair count");
  }
}

WindowedDataset WindowedDataset::select(std::span<const std::size_t> pairs) const {
  std::vector<double> in;
  std::vector<double> out;
  std::vector<std::size_t> org;
  in.reserve(pairs.size() * input_size());
  out.reserve(pairs.size() * n_y_);
  for (std::size_t k : pairs) {
    if (k >= size()) fail(ErrorCode::InvalidArgument, "pair index out of range");
    auto x = input(k);
    auto y = target(k);
    in.insert(in.end(), x.begin(), x.end());
    out.insert(out.end(), y.begin(), y.end());
    org.push_back(origins_[k]);
  }
  return WindowedDataset(n_x_, n_y_, features_, std::move(in), std::move(out), std::move(org));
}

// ---------------------------------------------------------------------------
// QuantileLevels / IntervalBatch

QuantileLevels QuantileLevels::from_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) fail(ErrorCode::InvalidArgument, "alpha must lie in (0, 1)");
  return nominal(alpha / 2.0, 1.0 - alpha / 2.0);
}

QuantileLevels QuantileLevels::nominal(double lo, double hi) {
  QuantileLevels levels{lo, 0.5, hi};
  levels.validate();
  return levels;
}

void QuantileLevels::validate() const {
  if (!(lo > 0.0 && lo < 0.5) || !(hi > 0.5 && hi < 1.0) || mid != 0.5) {
    fail(ErrorCode::InvalidArgument, "quantile levels must satisfy 0 < lo < 0.5 = mid < hi < 1");
  }
}

std::vector<double> IntervalBatch::widths() const {
  std::vector<double> w(size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = upper[i] - lower[i];
  return w;
}

std::size_t repair_crossed_bounds(IntervalBatch& batch) {
  std::size_t swaps = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch.lower[i] > batch.upper[i]) {
      std::swap(batch.lower[i], batch.upper[i]);
      ++swaps;
    }
  }
  return swaps;
}

// ---------------------------------------------------------------------------
// Windows

std::vector<double> window_input(const TimeSeries& series, std::size_t n_x, std::size_t origin) {
  if (origin < n_x || origin > series.size()) fail(ErrorCode::InvalidWindow, "input window out of range");
  const std::size_t d = series.feature_count();
  std::vector<double> x(n_x * d);
  for (std::size_t c = 0; c < d; ++c) {
    auto ch = series.channel(c);
    for (std::size_t t = 0; t < n_x; ++t) x[t * d + c] = ch[origin - n_x + t];
  }
  return x;
}

WindowedDataset make_windows_at(const TimeSeries& series, std::size_t n_x, std::size_t n_y,
                                std::span<const std::size_t> origins) {
  if (n_x == 0 || n_y == 0) fail(ErrorCode::InvalidWindow, "N_x and N_y must be positive");
  const std::size_t d = series.feature_count();
  std::vector<double> inputs;
  std::vector<double> targets;
  inputs.reserve(origins.size() * n_x * d);
  targets.reserve(origins.size() * n_y);
  auto y = series.target();
  for (std::size_t o : origins) {
    if (o < n_x || o + n_y > series.size()) {
      fail(ErrorCode::InvalidWindow, "origin " + std::to_string(o) + " does not fit a full window");
    }
    auto x = window_input(series, n_x, o);
    inputs.insert(inputs.end(), x.begin(), x.end());
    targets.insert(targets.end(), y.begin() + static_cast<std::ptrdiff_t>(o),
                   y.begin() + static_cast<std::ptrdiff_t>(o + n_y));
  }
  return WindowedDataset(n_x, n_y, d, std::move(inputs), std::move(targets),
                         std::vector<std::size_t>(origins.begin(), origins.end()));
}

WindowedDataset make_sliding_windows(const TimeSeries& series, std::size_t n_x, std::size_t n_y,
                                     std::size_t stride) {
  if (n_x == 0 || n_y == 0 || stride == 0) fail(ErrorCode::InvalidWindow, "N_x, N_y and stride must be positive");
  if (series.size() < n_x + n_y) {
    fail(ErrorCode::SeriesTooShort, "series of length " + std::to_string(series.size()) +
                                        " cannot host a window of length " + std::to_string(n_x + n_y));
  }
  std::vector<std::size_t> origins;
  for (std::size_t o = n_x; o + n_y <= series.size(); o += stride) origins.push_back(o);
  return make_windows_at(series, n_x, n_y, origins);
}

// ---------------------------------------------------------------------------
// Order statistics

std::size_t quantile_rank(std::size_t n, double level, QuantileConvention convention) {
  if (n == 0) fail(ErrorCode::EmptyResidualSet, "quantile of an empty collection");
  if (!(level > 0.0 && level < 1.0)) fail(ErrorCode::InvalidArgument, "quantile level must lie in (0, 1)");
  const double count = convention == QuantileConvention::conformal ? static_cast<double>(n + 1)
                                                                    : static_cast<double>(n);
  // Guard against level * count landing a hair above an integer (0.9 * 20).
  const double scaled = level * count;
  const double nearest = std::round(scaled);
  const double ceiled = std::abs(scaled - nearest) < 1e-9 * count ? nearest : std::ceil(scaled);
  const auto rank = static_cast<std::size_t>(std::max(1.0, ceiled));
  return std::min(rank, n);
}

double empirical_quantile(std::span<const double> values, double level, QuantileConvention convention) {
  const std::size_t rank = quantile_rank(values.size(), level, convention);
  std::vector<double> copy(values.begin(), values.end());
  auto nth = copy.begin() + static_cast<std::ptrdiff_t>(rank - 1);
  std::nth_element(copy.begin(), nth, copy.end());
  return *nth;
}

// ---------------------------------------------------------------------------
// Scaling

ScaleParams ScaleParams::fit(const TimeSeries& reference) {
  if (reference.empty()) fail(ErrorCode::SeriesTooShort, "cannot fit scaling on an empty series");
  ScaleParams params;
  for (std::size_t c = 0; c < reference.feature_count(); ++c) {
    auto v = reference.channel(c);
    auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    params.channels.push_back({*lo, *hi, !(*hi > *lo)});
  }
  return params;
}

TimeSeries ScaleParams::apply(const TimeSeries& series) const {
  if (channels.size() != series.feature_count()) fail(ErrorCode::ShapeError, "scale/channel count mismatch");
  std::vector<std::vector<double>> out(channels.size());
  for (std::size_t c = 0; c < channels.size(); ++c) {
    auto v = series.channel(c);
    out[c].reserve(v.size());
    for (double x : v) out[c].push_back(channels[c].normalize(x));
  }
  return series.with_values(std::move(out));
}

TimeSeries ScaleParams::invert(const TimeSeries& series) const {
  if (channels.size() != series.feature_count()) fail(ErrorCode::ShapeError, "scale/channel count mismatch");
  std::vector<std::vector<double>> out(channels.size());
  for (std::size_t c = 0; c < channels.size(); ++c) {
    auto v = series.channel(c);
    out[c].reserve(v.size());
    for (double x : v) out[c].push_back(channels[c].denormalize(x));
  }
  return series.with_values(std::move(out));
}

Normalized minmax_normalize(const TimeSeries& series, IndexRange fit_range) {
  ScaleParams params = ScaleParams::fit(series.slice(fit_range));
  return {params.apply(series), std::move(params)};
}

Normalized minmax_normalize(const TimeSeries& series) {
  return minmax_normalize(series, IndexRange{0, series.size()});
}

}  // namespace encqr
