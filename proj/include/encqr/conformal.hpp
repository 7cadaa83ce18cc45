#pragma once

#include <cstddef>
#include <deque>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "encqr/core.hpp"
#include "encqr/ensemble.hpp"
#include "encqr/regress.hpp"

namespace encqr {

// ---------------------------------------------------------------------------
// Conformity scores

struct AsymmetricScores {
  double lo;  ///< q_lo - y
  double hi;  ///< y - q_hi
};

AsymmetricScores asymmetric_scores(double q_lo, double q_hi, double y);

/// max(q_lo - y, y - q_hi).
double cqr_score(double q_lo, double q_hi, double y);

// ---------------------------------------------------------------------------
// Residual storage

/// Bounded FIFO of conformity scores; pushing into a full FIFO evicts the
/// oldest score.
class ScoreFifo {
 public:
  explicit ScoreFifo(std::size_t capacity = 0) : capacity_(capacity) {}

  void push(double score);
  void push(std::span<const double> scores);

  std::size_t size() const { return scores_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return scores_.empty(); }
  std::vector<double> values() const { return {scores_.begin(), scores_.end()}; }
  double quantile(double level, QuantileConvention convention = QuantileConvention::conformal) const;

 private:
  std::size_t capacity_;
  std::deque<double> scores_;
};

enum class ResidualPooling {
  /// Every forecast step feeds one shared FIFO (per side).
  pooled,
  /// One FIFO per horizon index.
  per_horizon,
};

std::string_view to_string(ResidualPooling pooling);
ResidualPooling parse_residual_pooling(std::string_view name);

/// Low-side and high-side score FIFOs, optionally one pair per horizon.
class ResidualStore {
 public:
  ResidualStore() = default;

  /// Seeds the FIFOs with chronologically ordered training scores. Each
  /// pool's capacity equals the number of scores it receives.
  static ResidualStore warm(std::span<const double> lo, std::span<const double> hi,
                            std::span<const std::size_t> horizon, ResidualPooling pooling, std::size_t pools);

  /// Appends new scores; each pool evicts as many of its oldest entries.
  void update(std::span<const double> lo, std::span<const double> hi, std::span<const std::size_t> horizon);

  std::size_t pools() const { return lo_.size(); }
  std::size_t pool_for(std::size_t horizon) const;
  const ScoreFifo& lo(std::size_t pool) const { return lo_.at(pool); }
  const ScoreFifo& hi(std::size_t pool) const { return hi_.at(pool); }
  ResidualPooling pooling() const { return pooling_; }

 private:
  std::size_t pool_for_unchecked(std::size_t horizon, std::size_t pools) const;

  ResidualPooling pooling_ = ResidualPooling::pooled;
  std::vector<ScoreFifo> lo_;
  std::vector<ScoreFifo> hi_;
};

// ---------------------------------------------------------------------------
// Interval methods

enum class Method { encqr, enbpi, cqr, split_cp, raw_qr };

std::string_view to_string(Method method);
Method parse_method(std::string_view name);

/// Sequential interval construction: predict a batch of s steps, then
/// observe its targets. Calling predict twice without observe, or observe
/// without a pending batch, throws ProtocolError.
class IntervalMethod {
 public:
  virtual ~IntervalMethod() = default;

  virtual Method method() const = 0;
  std::size_t batch_size() const { return batch_; }
  double alpha() const { return alpha_; }

  /// Intervals for the first s forecast steps of one input window.
  IntervalBatch predict(std::span<const double> input);
  /// Targets of the pending batch, length s.
  void observe(std::span<const double> y);

  /// Raw aggregated quantile forecast (first s steps) of the last batch.
  const QuantileForecast& last_forecast() const { return last_; }
  /// Steps whose bounds crossed after conformalization and were swapped.
  std::size_t swapped_steps() const { return swaps_; }

 protected:
  IntervalMethod(double alpha, std::size_t batch);

  virtual QuantileForecast forecast(std::span<const double> input) const = 0;
  virtual IntervalBatch intervals(const QuantileForecast& batch) const = 0;
  virtual void update(const QuantileForecast& batch, std::span<const double> y) { (void)batch, (void)y; }

 private:
  double alpha_;
  std::size_t batch_;
  QuantileForecast last_;
  bool pending_ = false;
  std::size_t swaps_ = 0;
};

/// Ensemble interval without conformalization: [phi(q_lo), phi(q_hi)].
class RawQuantileIntervals final : public IntervalMethod {
 public:
  RawQuantileIntervals(std::shared_ptr<const EnsembleModel> ensemble, double alpha, std::size_t batch);
  Method method() const override { return Method::raw_qr; }

 protected:
  QuantileForecast forecast(std::span<const double> input) const override;
  IntervalBatch intervals(const QuantileForecast& batch) const override;

 private:
  std::shared_ptr<const EnsembleModel> ensemble_;
};

/// Split conformal: point forecast (mid level) +- the conformal (1 - alpha)
/// quantile of absolute calibration residuals.
class SplitConformal final : public IntervalMethod {
 public:
  /// Uses the first `batch` horizon steps of every calibration pair.
  static SplitConformal build(std::shared_ptr<const QuantileModel> model, const WindowedDataset& calibration,
                              double alpha, std::size_t batch);
  static SplitConformal from_residuals(std::shared_ptr<const QuantileModel> model, std::span<const double> residuals,
                                       double alpha, std::size_t batch);

  Method method() const override { return Method::split_cp; }
  double half_width() const { return half_width_; }
  IntervalBatch interval(std::span<const double> input) const { return intervals(forecast(input)); }

 protected:
  QuantileForecast forecast(std::span<const double> input) const override;
  IntervalBatch intervals(const QuantileForecast& batch) const override;

 private:
  SplitConformal(std::shared_ptr<const QuantileModel> model, double alpha, std::size_t batch, double half_width);

  std::shared_ptr<const QuantileModel> model_;
  double half_width_;
};

/// Conformalized quantile regression with the symmetric score max(E_lo, E_hi).
class ConformalizedQr final : public IntervalMethod {
 public:
  static ConformalizedQr build(std::shared_ptr<const QuantileModel> model, const WindowedDataset& calibration,
                               double alpha, std::size_t batch);
  static ConformalizedQr from_scores(std::shared_ptr<const QuantileModel> model, std::span<const double> scores,
                                     double alpha, std::size_t batch);

  Method method() const override { return Method::cqr; }
  double correction() const { return correction_; }
  IntervalBatch interval(std::span<const double> input) const { return intervals(forecast(input)); }
  /// [q_lo - Q, q_hi + Q] for a raw forecast.
  IntervalBatch conformalize(const QuantileForecast& raw) const { return intervals(raw); }

 protected:
  QuantileForecast forecast(std::span<const double> input) const override;
  IntervalBatch intervals(const QuantileForecast& batch) const override;

 private:
  ConformalizedQr(std::shared_ptr<const QuantileModel> model, double alpha, std::size_t batch, double correction);

  std::shared_ptr<const QuantileModel> model_;
  double correction_;
};

struct SequentialOptions {
  double alpha = 0.1;
  /// s: steps per batch between residual updates.
  std::size_t batch = 24;
  ResidualPooling pooling = ResidualPooling::pooled;
};

/// EnbPI: aggregated point forecast +- the conformal (1 - alpha) quantile
/// of the latest absolute LOO residuals. Width is constant within a batch.
class EnbpiPredictor final : public IntervalMethod {
 public:
  EnbpiPredictor(std::shared_ptr<const EnsembleModel> ensemble, const LooEstimates& loo,
                 const SequentialOptions& options);

  Method method() const override { return Method::enbpi; }
  const std::vector<ScoreFifo>& residuals() const { return residuals_; }
  double half_width(std::size_t horizon = 0) const;
  IntervalBatch conformalize(const QuantileForecast& raw) const { return intervals(raw); }

 protected:
  QuantileForecast forecast(std::span<const double> input) const override;
  IntervalBatch intervals(const QuantileForecast& batch) const override;
  void update(const QuantileForecast& batch, std::span<const double> y) override;

 private:
  std::size_t pool_for(std::size_t horizon) const;

  std::shared_ptr<const EnsembleModel> ensemble_;
  ResidualPooling pooling_;
  std::vector<ScoreFifo> residuals_;
};

/// Per-side quantile level of the asymmetric EnCQR scores.
enum class SideLevel {
  /// 1 - alpha/2 on each side; bounds miscoverage at alpha overall.
  half_alpha,
  /// 1 - alpha on each side, as written in the algorithm listing.
  full_alpha,
};

std::string_view to_string(SideLevel level);
SideLevel parse_side_level(std::string_view name);

struct EncqrOptions : SequentialOptions {
  SideLevel side_level = SideLevel::half_alpha;
};

/// Ensemble conformalized quantile regression.
///
/// Training: asymmetric scores of the LOO aggregates seed the low/high
/// FIFOs. Test: each batch gets [phi(q_lo) - w_lo, phi(q_hi) + w_hi] with
/// w the FIFO quantiles, constant within the batch; once the batch targets
/// are observed their s score pairs replace the s oldest.
class EncqrPredictor final : public IntervalMethod {
 public:
  EncqrPredictor(std::shared_ptr<const EnsembleModel> ensemble, const LooEstimates& loo, const EncqrOptions& options);
  /// Predictor seeded with explicit scores (no ensemble; use `conformalize`).
  static EncqrPredictor from_scores(std::span<const double> lo, std::span<const double> hi,
                                    const EncqrOptions& options);

  Method method() const override { return Method::encqr; }
  const ResidualStore& store() const { return store_; }
  double side_level() const;
  double omega_lo(std::size_t horizon = 0) const;
  double omega_hi(std::size_t horizon = 0) const;
  /// Pure: conformalized intervals of a raw forecast under the current store.
  IntervalBatch conformalize(const QuantileForecast& raw) const { return intervals(raw); }

 protected:
  QuantileForecast forecast(std::span<const double> input) const override;
  IntervalBatch intervals(const QuantileForecast& batch) const override;
  void update(const QuantileForecast& batch, std::span<const double> y) override;

 private:
  EncqrPredictor(std::shared_ptr<const EnsembleModel> ensemble, ResidualStore store, const EncqrOptions& options);

  std::shared_ptr<const EnsembleModel> ensemble_;
  ResidualStore store_;
  SideLevel side_level_;
};

/// Training scores (lo, hi) of LOO estimates, chronological.
std::pair<std::vector<double>, std::vector<double>> loo_asymmetric_scores(const LooEstimates& loo);

}  // namespace encqr
