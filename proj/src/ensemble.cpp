#include "encqr/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <numeric>

namespace encqr {

// ---------------------------------------------------------------------------
// Aggregation

Aggregation Aggregation::parse(std::string_view name, double trim_fraction) {
  if (name == "mean") return {AggregationKind::mean, trim_fraction};
  if (name == "median") return {AggregationKind::median, trim_fraction};
  if (name == "trimmed_mean") return {AggregationKind::trimmed_mean, trim_fraction};
  fail(ErrorCode::ConfigError, "unknown aggregation '" + std::string(name) + "'");
}

std::string_view Aggregation::name() const {
  switch (kind) {
    case AggregationKind::mean: return "mean";
    case AggregationKind::median: return "median";
    case AggregationKind::trimmed_mean: return "trimmed_mean";
  }
  return "unknown";
}

double aggregate(std::span<const double> values, const Aggregation& phi) {
  if (values.empty()) fail(ErrorCode::EmptyAggregate, "nothing to aggregate");
  const std::size_t n = values.size();
  switch (phi.kind) {
    case AggregationKind::mean:
      return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(n);
    case AggregationKind::median: {
      std::vector<double> v(values.begin(), values.end());
      std::sort(v.begin(), v.end());
      return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    }
    case AggregationKind::trimmed_mean: {
      if (!(phi.trim_fraction >= 0.0 && phi.trim_fraction < 0.5)) {
        fail(ErrorCode::InvalidArgument, "trim fraction must lie in [0, 0.5)");
      }
      const auto cut = static_cast<std::size_t>(std::floor(phi.trim_fraction * static_cast<double>(n)));
      if (2 * cut >= n) fail(ErrorCode::InvalidArgument, "trim fraction removes every value");
      std::vector<double> v(values.begin(), values.end());
      std::sort(v.begin(), v.end());
      const double sum = std::accumulate(v.begin() + static_cast<std::ptrdiff_t>(cut),
                                         v.end() - static_cast<std::ptrdiff_t>(cut), 0.0);
      return sum / static_cast<double>(n - 2 * cut);
    }
  }
  fail(ErrorCode::InvalidArgument, "unknown aggregation");
}

std::vector<double> aggregate(const std::vector<std::vector<double>>& vectors, const Aggregation& phi) {
  if (vectors.empty()) fail(ErrorCode::EmptyAggregate, "nothing to aggregate");
  const std::size_t len = vectors.front().size();
  std::vector<double> out(len);
  std::vector<double> column(vectors.size());
  for (std::size_t t = 0; t < len; ++t) {
    for (std::size_t b = 0; b < vectors.size(); ++b) {
      if (vectors[b].size() != len) fail(ErrorCode::ShapeError, "aggregated vectors differ in length");
      column[b] = vectors[b][t];
    }
    out[t] = aggregate(column, phi);
  }
  return out;
}

// ---------------------------------------------------------------------------
// SubsetPlan

SubsetPlan plan_subsets(std::size_t length, std::size_t members, std::size_t n_x, std::size_t n_y) {
  if (members < 2) fail(ErrorCode::InvalidArgument, "an ensemble needs at least 2 members");
  if (n_x == 0 || n_y == 0) fail(ErrorCode::InvalidWindow, "N_x and N_y must be positive");
  const std::size_t t_b = length / members;
  if (t_b < n_x + n_y) {
    fail(ErrorCode::SubsetsTooSmall, "subset length " + std::to_string(t_b) + " is shorter than the window length " +
                                         std::to_string(n_x + n_y) + "; reduce B or N_x");
  }
  SubsetPlan plan;
  plan.t_ = length;
  plan.t_b_ = t_b;
  plan.n_x_ = n_x;
  plan.n_y_ = n_y;
  for (std::size_t b = 0; b < members; ++b) plan.subsets_.push_back({b * t_b, (b + 1) * t_b});
  return plan;
}

std::optional<std::size_t> SubsetPlan::owner(std::size_t step) const {
  if (step >= assigned().end) return std::nullopt;
  return step / t_b_;
}

std::vector<std::size_t> SubsetPlan::members_disjoint_from(std::size_t first, std::size_t last) const {
  std::vector<std::size_t> out;
  for (std::size_t b = 0; b < subsets_.size(); ++b) {
    const auto& s = subsets_[b];
    if (last < s.begin || first >= s.end) out.push_back(b);
  }
  return out;
}

std::vector<std::size_t> SubsetPlan::eligible_members(std::size_t step) const {
  const std::size_t first = step >= n_x_ ? step - n_x_ : 0;
  return members_disjoint_from(first, step);
}

std::vector<std::size_t> SubsetPlan::training_origins(std::size_t member, std::size_t stride) const {
  if (member >= subsets_.size()) fail(ErrorCode::InvalidArgument, "member index out of range");
  if (stride == 0) fail(ErrorCode::InvalidArgument, "stride must be positive");
  const auto& s = subsets_[member];
  std::vector<std::size_t> out;
  for (std::size_t o = s.begin + n_x_; o + n_y_ <= s.end; o += stride) out.push_back(o);
  return out;
}

std::vector<std::size_t> SubsetPlan::residual_steps() const {
  std::vector<std::size_t> out;
  out.reserve(residual_count());
  for (const auto& s : subsets_) {
    for (std::size_t i = s.begin + n_x_; i < s.end; ++i) out.push_back(i);
  }
  return out;
}

// ---------------------------------------------------------------------------
// EnsembleModel

namespace {

QuantileForecast aggregate_forecasts(const std::vector<QuantileForecast>& parts, const Aggregation& phi) {
  std::vector<std::vector<double>> lo;
  std::vector<std::vector<double>> mid;
  std::vector<std::vector<double>> hi;
  for (const auto& p : parts) {
    lo.push_back(p.lo);
    mid.push_back(p.mid);
    hi.push_back(p.hi);
  }
  QuantileForecast f{aggregate(lo, phi), aggregate(mid, phi), aggregate(hi, phi)};
  uncross(f);
  return f;
}

}  // namespace

QuantileForecast EnsembleModel::forecast(std::span<const double> input) const {
  std::vector<std::size_t> all(members.size());
  std::iota(all.begin(), all.end(), 0);
  return forecast(input, all);
}

QuantileForecast EnsembleModel::forecast(std::span<const double> input, std::span<const std::size_t> subset) const {
  if (subset.empty()) fail(ErrorCode::NoOutOfSampleLearner, "no member available for this forecast");
  std::vector<QuantileForecast> parts;
  parts.reserve(subset.size());
  for (std::size_t b : subset) parts.push_back(members.at(b)->predict(input));
  return aggregate_forecasts(parts, aggregation);
}

std::uint64_t member_seed(std::uint64_t base, std::size_t member) {
  // splitmix64 step
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(member) + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

EnsembleModel fit_ensemble(const TimeSeries& series, const SubsetPlan& plan, const RegressorFactory& factory,
                           const EnsembleFitOptions& options) {
  if (series.size() < plan.assigned().end) fail(ErrorCode::SeriesTooShort, "series shorter than the subset plan");
  const std::size_t b_count = plan.members();

  auto fit_member = [&](std::size_t b) -> std::shared_ptr<const QuantileModel> {
    try {
      const auto origins = plan.training_origins(b, options.train_stride);
      if (origins.empty()) fail(ErrorCode::NoTrainingData, "subset hosts no training window");
      const auto data = make_windows_at(series, plan.n_x(), plan.n_y(), origins);
      return factory(data, member_seed(options.seed, b));
    } catch (const Error& e) {
      throw Error(e.code(), "member " + std::to_string(b) + ": " + e.message());
    }
  };

  EnsembleModel model{{}, plan, options.aggregation};
  model.members.resize(b_count);
  if (options.parallel && b_count > 1) {
    std::vector<std::future<std::shared_ptr<const QuantileModel>>> jobs;
    for (std::size_t b = 0; b < b_count; ++b) jobs.push_back(std::async(std::launch::async, fit_member, b));
    for (std::size_t b = 0; b < b_count; ++b) model.members[b] = jobs[b].get();
  } else {
    for (std::size_t b = 0; b < b_count; ++b) model.members[b] = fit_member(b);
  }
  return model;
}

LooEstimates loo_quantile_estimates(const EnsembleModel& ensemble, const TimeSeries& series, std::size_t tile) {
  const auto& plan = ensemble.plan;
  if (ensemble.members.size() != plan.members() || plan.members() < 2) {
    fail(ErrorCode::InvalidArgument, "ensemble needs one fitted member per subset (at least 2)");
  }
  if (tile == 0 || tile > plan.n_y()) fail(ErrorCode::InvalidArgument, "tile must lie in [1, N_y]");
  if (series.size() < plan.assigned().end) fail(ErrorCode::SeriesTooShort, "series shorter than the subset plan");

  LooEstimates out;
  auto y = series.target();
  for (const auto& subset : plan.subsets()) {
    for (std::size_t o = subset.begin + plan.n_x(); o < subset.end; o += tile) {
      const auto input = window_input(series, plan.n_x(), o);
      const std::size_t steps = std::min(tile, subset.end - o);
      std::vector<QuantileForecast> per_member(plan.members());
      std::vector<bool> done(plan.members(), false);
      for (std::size_t h = 0; h < steps; ++h) {
        const std::size_t i = o + h;
        const auto eligible = plan.eligible_members(i);
        if (eligible.empty()) {
          fail(ErrorCode::NoOutOfSampleLearner, "no out-of-sample member for step " + std::to_string(i));
        }
        std::vector<double> lo;
        std::vector<double> mid;
        std::vector<double> hi;
        for (std::size_t b : eligible) {
          if (!done[b]) {
            per_member[b] = ensemble.members[b]->predict(input);
            done[b] = true;
          }
          lo.push_back(per_member[b].lo[h]);
          mid.push_back(per_member[b].mid[h]);
          hi.push_back(per_member[b].hi[h]);
        }
        out.steps.push_back(i);
        out.horizon.push_back(h);
        out.lo.push_back(aggregate(lo, ensemble.aggregation));
        out.mid.push_back(aggregate(mid, ensemble.aggregation));
        out.hi.push_back(aggregate(hi, ensemble.aggregation));
        out.y.push_back(y[i]);
      }
    }
  }
  return out;
}

}  // namespace encqr
