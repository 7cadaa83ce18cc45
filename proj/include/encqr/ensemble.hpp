#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "encqr/core.hpp"
#include "encqr/regress.hpp"

namespace encqr {

// ---------------------------------------------------------------------------
// Aggregation

enum class AggregationKind { mean, median, trimmed_mean };

struct Aggregation {
  AggregationKind kind = AggregationKind::mean;
  /// Fraction dropped from each end by trimmed_mean.
  double trim_fraction = 0.1;

  static Aggregation parse(std::string_view name, double trim_fraction = 0.1);
  std::string_view name() const;
};

double aggregate(std::span<const double> values, const Aggregation& phi);

/// Elementwise aggregation of equal-length vectors.
std::vector<double> aggregate(const std::vector<std::vector<double>>& vectors, const Aggregation& phi);

// ---------------------------------------------------------------------------
// Disjoint subset plan

/// B contiguous, equal-length, disjoint training subsets over [0, T).
///
/// Subset b covers [b * T_b, (b + 1) * T_b) with T_b = floor(T / B); the
/// trailing T - B * T_b steps are unassigned. A window belongs to member b
/// only if every one of its N_x + N_y steps lies inside subset b.
class SubsetPlan {
 public:
  std::size_t members() const { return subsets_.size(); }
  std::size_t length() const { return t_; }
  std::size_t subset_length() const { return t_b_; }
  std::size_t n_x() const { return n_x_; }
  std::size_t n_y() const { return n_y_; }
  const std::vector<IndexRange>& subsets() const { return subsets_; }
  /// [0, B * T_b).
  IndexRange assigned() const { return {0, subsets_.size() * t_b_}; }

  std::optional<std::size_t> owner(std::size_t step) const;

  /// Members whose subset shares no step with [first, last].
  std::vector<std::size_t> members_disjoint_from(std::size_t first, std::size_t last) const;

  /// Members eligible for a residual at target step i: no step of the
  /// window [i - N_x, i] lies in their subset.
  std::vector<std::size_t> eligible_members(std::size_t step) const;

  /// Origins of the training windows of member b, spaced by `stride`.
  std::vector<std::size_t> training_origins(std::size_t member, std::size_t stride = 1) const;

  /// Target steps whose input window lies inside their own subset,
  /// chronological. There are exactly B * T_b - B * N_x of them.
  std::vector<std::size_t> residual_steps() const;
  std::size_t residual_count() const { return subsets_.size() * (t_b_ - n_x_); }

  bool operator==(const SubsetPlan&) const = default;

 private:
  friend SubsetPlan plan_subsets(std::size_t, std::size_t, std::size_t, std::size_t);

  std::size_t t_ = 0;
  std::size_t t_b_ = 0;
  std::size_t n_x_ = 0;
  std::size_t n_y_ = 0;
  std::vector<IndexRange> subsets_;
};

/// Throws SubsetsTooSmall when floor(T / B) < N_x + N_y.
SubsetPlan plan_subsets(std::size_t length, std::size_t members, std::size_t n_x, std::size_t n_y);

// ---------------------------------------------------------------------------
// Ensemble

struct EnsembleModel {
  std::vector<std::shared_ptr<const QuantileModel>> members;
  SubsetPlan plan;
  Aggregation aggregation;

  /// Aggregate over all members.
  QuantileForecast forecast(std::span<const double> input) const;
  /// Aggregate over the listed members only.
  QuantileForecast forecast(std::span<const double> input, std::span<const std::size_t> subset) const;
};

struct EnsembleFitOptions {
  Aggregation aggregation;
  std::uint64_t seed = 0;
  /// Stride between consecutive training windows inside a subset.
  std::size_t train_stride = 1;
  /// Fit members on separate threads; results match sequential fitting.
  bool parallel = true;
};

/// Seed handed to member b for a given base seed.
std::uint64_t member_seed(std::uint64_t base, std::size_t member);

/// Fits member b on the windows of `series` lying entirely in subset b.
EnsembleModel fit_ensemble(const TimeSeries& series, const SubsetPlan& plan, const RegressorFactory& factory,
                           const EnsembleFitOptions& options = {});

/// Leave-one-out quantile estimates on the training region.
struct LooEstimates {
  std::vector<std::size_t> steps;
  /// Horizon index of each step inside its forecast tile.
  std::vector<std::size_t> horizon;
  std::vector<double> lo;
  std::vector<double> mid;
  std::vector<double> hi;
  std::vector<double> y;

  std::size_t size() const { return steps.size(); }
};

/// For every residual step i, aggregates the forecasts of the members in
/// B_{-i} only. Steps are produced by tiling each subset's eligible region
/// with windows of `tile` forecast steps (tile <= N_y), so every residual step
/// appears once and with horizon index < tile.
LooEstimates loo_quantile_estimates(const EnsembleModel& ensemble, const TimeSeries& series, std::size_t tile);

}  // namespace encqr
