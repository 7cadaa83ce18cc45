#include "encqr/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace encqr {

namespace {

void check_bounds(std::span<const double> lower, std::span<const double> upper) {
  if (lower.size() != upper.size()) fail(ErrorCode::ShapeError, "lower/upper length mismatch");
  if (lower.empty()) fail(ErrorCode::ShapeError, "no intervals to evaluate");
}

}  // namespace

double picp(std::span<const double> y, std::span<const double> lower, std::span<const double> upper) {
  check_bounds(lower, upper);
  if (y.size() != lower.size()) fail(ErrorCode::ShapeError, "targets/intervals length mismatch");
  std::size_t covered = 0;
  for (std::size_t i = 0; i < y.size(); ++i) covered += (lower[i] <= y[i] && y[i] <= upper[i]) ? 1 : 0;
  return static_cast<double>(covered) / static_cast<double>(y.size());
}

double pinaw(std::span<const double> y_range, std::span<const double> lower, std::span<const double> upper) {
  check_bounds(lower, upper);
  if (y_range.empty()) fail(ErrorCode::DegenerateRange, "no targets to take the range of");
  auto [lo, hi] = std::minmax_element(y_range.begin(), y_range.end());
  const double range = *hi - *lo;
  if (!(range > 0.0)) fail(ErrorCode::DegenerateRange, "target range is zero");
  double total = 0.0;
  for (std::size_t i = 0; i < lower.size(); ++i) total += upper[i] - lower[i];
  return total / (static_cast<double>(lower.size()) * range);
}

double cwc(double picp, double pinaw, double alpha, double eta) {
  if (eta < 0.0) fail(ErrorCode::InvalidArgument, "eta must be nonnegative");
  const double dev = picp - (1.0 - alpha);
  return (1.0 - pinaw) * std::exp(-eta * dev * dev);
}

double sample_stddev(std::span<const double> values) {
  if (values.size() < 2) fail(ErrorCode::SeriesTooShort, "sample StDev needs at least 2 values");
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

double heteroscedasticity_measure(std::span<const double> values, std::size_t period) {
  if (period < 2) fail(ErrorCode::InvalidArgument, "period must be at least 2");
  if (values.size() < 2 * period) fail(ErrorCode::SeriesTooShort, "need at least two full periods");
  std::vector<double> per_phase(period);
  std::vector<double> phase_values;
  for (std::size_t h = 0; h < period; ++h) {
    phase_values.clear();
    for (std::size_t i = h; i < values.size(); i += period) phase_values.push_back(values[i]);
    per_phase[h] = sample_stddev(phase_values);
  }
  return sample_stddev(per_phase);
}

double heteroscedasticity_measure(const TimeSeries& series, std::size_t period) {
  return heteroscedasticity_measure(series.target(), period);
}

std::size_t hour_of_day(std::int64_t timestamp) {
  const std::int64_t day = 86400;
  return static_cast<std::size_t>(((timestamp % day) + day) % day / 3600);
}

MetricReport MetricReport::compute(std::string method, std::span<const double> y, std::span<const double> lower,
                                   std::span<const double> upper, std::span<const std::int64_t> timestamps,
                                   double alpha, double eta) {
  if (timestamps.size() != y.size()) fail(ErrorCode::ShapeError, "timestamps/targets length mismatch");
  MetricReport r;
  r.method = std::move(method);
  r.picp = encqr::picp(y, lower, upper);
  r.pinaw = encqr::pinaw(y, lower, upper);
  r.cwc = encqr::cwc(r.picp, r.pinaw, alpha, eta);
  r.alpha = alpha;
  r.eta = eta;
  r.n = y.size();
  r.per_hour_width.assign(24, 0.0);
  r.per_hour_coverage.assign(24, 0.0);
  r.per_hour_count.assign(24, 0);
  for (std::size_t i = 0; i < y.size(); ++i) {
    const std::size_t h = hour_of_day(timestamps[i]);
    r.per_hour_width[h] += upper[i] - lower[i];
    r.per_hour_coverage[h] += (lower[i] <= y[i] && y[i] <= upper[i]) ? 1.0 : 0.0;
    ++r.per_hour_count[h];
  }
  for (std::size_t h = 0; h < 24; ++h) {
    if (r.per_hour_count[h] > 0) {
      r.per_hour_width[h] /= static_cast<double>(r.per_hour_count[h]);
      r.per_hour_coverage[h] /= static_cast<double>(r.per_hour_count[h]);
    }
  }
  return r;
}

std::string MetricReport::to_json() const {
  nlohmann::ordered_json j;
  j["method"] = method;
  j["picp"] = picp;
  j["pinaw"] = pinaw;
  j["cwc"] = cwc;
  j["alpha"] = alpha;
  j["eta"] = eta;
  j["n"] = n;
  j["interval_swaps"] = interval_swaps;
  j["per_hour_width"] = per_hour_width;
  j["per_hour_coverage"] = per_hour_coverage;
  j["per_hour_count"] = per_hour_count;
  return j.dump(2) + "\n";
}

MetricReport MetricReport::from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    MetricReport r;
    r.method = j.at("method").get<std::string>();
    r.picp = j.at("picp").get<double>();
    r.pinaw = j.at("pinaw").get<double>();
    r.cwc = j.at("cwc").get<double>();
    r.alpha = j.at("alpha").get<double>();
    r.eta = j.at("eta").get<double>();
    r.n = j.at("n").get<std::size_t>();
    r.interval_swaps = j.value("interval_swaps", std::size_t{0});
    r.per_hour_width = j.at("per_hour_width").get<std::vector<double>>();
    r.per_hour_coverage = j.at("per_hour_coverage").get<std::vector<double>>();
    r.per_hour_count = j.at("per_hour_count").get<std::vector<std::size_t>>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::FormatError, std::string("malformed metrics JSON: ") + e.what());
  }
}

std::string MetricReport::csv_header() { return "method,picp,pinaw,cwc,alpha,eta,n,interval_swaps"; }

std::string MetricReport::csv_row() const {
  std::ostringstream out;
  out.precision(17);
  out << method << ',' << picp << ',' << pinaw << ',' << cwc << ',' << alpha << ',' << eta << ',' << n << ','
      << interval_swaps;
  return out.str();
}

}  // namespace encqr
