#include "encqr/conformal.hpp"

#include <algorithm>
#include <cmath>

namespace encqr {

AsymmetricScores asymmetric_scores(double q_lo, double q_hi, double y) { return {q_lo - y, y - q_hi}; }

double cqr_score(double q_lo, double q_hi, double y) { return std::max(q_lo - y, y - q_hi); }

// ---------------------------------------------------------------------------
// ScoreFifo / ResidualStore

void ScoreFifo::push(double score) {
  if (capacity_ == 0) return;
  if (scores_.size() == capacity_) scores_.pop_front();
  scores_.push_back(score);
}

void ScoreFifo::push(std::span<const double> scores) {
  for (double s : scores) push(s);
}

double ScoreFifo::quantile(double level, QuantileConvention convention) const {
  if (scores_.empty()) fail(ErrorCode::EmptyResidualSet, "no conformity scores stored");
  const std::vector<double> v = values();
  return empirical_quantile(v, level, convention);
}

std::string_view to_string(ResidualPooling pooling) {
  return pooling == ResidualPooling::pooled ? "pooled" : "per_horizon";
}

ResidualPooling parse_residual_pooling(std::string_view name) {
  if (name == "pooled") return ResidualPooling::pooled;
  if (name == "per_horizon") return ResidualPooling::per_horizon;
  fail(ErrorCode::ConfigError, "unknown residual pooling '" + std::string(name) + "'");
}

ResidualStore ResidualStore::warm(std::span<const double> lo, std::span<const double> hi,
                                  std::span<const std::size_t> horizon, ResidualPooling pooling, std::size_t pools) {
  if (lo.size() != hi.size() || lo.size() != horizon.size()) fail(ErrorCode::ShapeError, "score vectors differ");
  if (lo.empty()) fail(ErrorCode::EmptyResidualSet, "no training scores to warm the residual store");
  ResidualStore store;
  store.pooling_ = pooling;
  const std::size_t n_pools = pooling == ResidualPooling::pooled ? 1 : pools;
  if (n_pools == 0) fail(ErrorCode::InvalidArgument, "pool count must be positive");
  std::vector<std::size_t> counts(n_pools, 0);
  for (std::size_t h : horizon) ++counts[store.pool_for_unchecked(h, n_pools)];
  for (std::size_t p = 0; p < n_pools; ++p) {
    if (counts[p] == 0) fail(ErrorCode::EmptyResidualSet, "horizon pool " + std::to_string(p) + " has no scores");
    store.lo_.emplace_back(counts[p]);
    store.hi_.emplace_back(counts[p]);
  }
  store.update(lo, hi, horizon);
  return store;
}

std::size_t ResidualStore::pool_for_unchecked(std::size_t horizon, std::size_t pools) const {
  if (pooling_ == ResidualPooling::pooled) return 0;
  if (horizon >= pools) fail(ErrorCode::InvalidArgument, "horizon index beyond the pool count");
  return horizon;
}

std::size_t ResidualStore::pool_for(std::size_t horizon) const { return pool_for_unchecked(horizon, lo_.size()); }

void ResidualStore::update(std::span<const double> lo, std::span<const double> hi,
                           std::span<const std::size_t> horizon) {
  if (lo.size() != hi.size() || lo.size() != horizon.size()) fail(ErrorCode::ShapeError, "score vectors differ");
  for (std::size_t i = 0; i < lo.size(); ++i) {
    const std::size_t p = pool_for(horizon[i]);
    lo_[p].push(lo[i]);
    hi_[p].push(hi[i]);
  }
}

// ---------------------------------------------------------------------------
// Names

std::string_view to_string(Method method) {
  switch (method) {
    case Method::encqr: return "encqr";
    case Method::enbpi: return "enbpi";
    case Method::cqr: return "cqr";
    case Method::split_cp: return "split_cp";
    case Method::raw_qr: return "raw_qr";
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  for (Method m : {Method::encqr, Method::enbpi, Method::cqr, Method::split_cp, Method::raw_qr}) {
    if (name == to_string(m)) return m;
  }
  fail(ErrorCode::ConfigError, "unknown method '" + std::string(name) + "'");
}

std::string_view to_string(SideLevel level) {
  return level == SideLevel::half_alpha ? "half_alpha" : "full_alpha";
}

SideLevel parse_side_level(std::string_view name) {
  if (name == "half_alpha") return SideLevel::half_alpha;
  if (name == "full_alpha") return SideLevel::full_alpha;
  fail(ErrorCode::ConfigError, "unknown side level '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// IntervalMethod

namespace {

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) fail(ErrorCode::InvalidArgument, "alpha must lie in (0, 1)");
}

QuantileForecast first_steps(QuantileForecast f, std::size_t batch) {
  if (f.size() < batch) {
    fail(ErrorCode::BatchSizeMismatch, "forecast has " + std::to_string(f.size()) + " steps, batch needs " +
                                           std::to_string(batch));
  }
  f.lo.resize(batch);
  f.mid.resize(batch);
  f.hi.resize(batch);
  return f;
}

}  // namespace

IntervalMethod::IntervalMethod(double alpha, std::size_t batch) : alpha_(alpha), batch_(batch) {
  check_alpha(alpha);
  if (batch == 0) fail(ErrorCode::InvalidArgument, "batch size must be positive");
}

IntervalBatch IntervalMethod::predict(std::span<const double> input) {
  if (pending_) fail(ErrorCode::ProtocolError, "previous batch has not been observed");
  QuantileForecast raw = first_steps(forecast(input), batch_);
  IntervalBatch out = intervals(raw);
  swaps_ += repair_crossed_bounds(out);
  last_ = std::move(raw);
  pending_ = true;
  return out;
}

void IntervalMethod::observe(std::span<const double> y) {
  if (!pending_) fail(ErrorCode::ProtocolError, "observe called without a predicted batch");
  if (y.size() != batch_) {
    fail(ErrorCode::BatchSizeMismatch,
         "observed " + std::to_string(y.size()) + " targets, batch size is " + std::to_string(batch_));
  }
  update(last_, y);
  pending_ = false;
}

// ---------------------------------------------------------------------------
// Raw QR

RawQuantileIntervals::RawQuantileIntervals(std::shared_ptr<const EnsembleModel> ensemble, double alpha,
                                           std::size_t batch)
    : IntervalMethod(alpha, batch), ensemble_(std::move(ensemble)) {
  if (!ensemble_) fail(ErrorCode::NotFitted, "raw QR needs a fitted ensemble");
}

QuantileForecast RawQuantileIntervals::forecast(std::span<const double> input) const {
  return ensemble_->forecast(input);
}

IntervalBatch RawQuantileIntervals::intervals(const QuantileForecast& batch) const {
  return {batch.lo, batch.mid, batch.hi, alpha()};
}

// ---------------------------------------------------------------------------
// Split CP

SplitConformal::SplitConformal(std::shared_ptr<const QuantileModel> model, double alpha, std::size_t batch,
                               double half_width)
    : IntervalMethod(alpha, batch), model_(std::move(model)), half_width_(half_width) {}

SplitConformal SplitConformal::from_residuals(std::shared_ptr<const QuantileModel> model,
                                              std::span<const double> residuals, double alpha, std::size_t batch) {
  check_alpha(alpha);
  if (!model) fail(ErrorCode::NotFitted, "split CP needs a fitted model");
  if (residuals.empty()) fail(ErrorCode::EmptyResidualSet, "empty calibration set");
  std::vector<double> abs_res(residuals.size());
  std::transform(residuals.begin(), residuals.end(), abs_res.begin(), [](double r) { return std::abs(r); });
  const double q = empirical_quantile(abs_res, 1.0 - alpha, QuantileConvention::conformal);
  return SplitConformal(std::move(model), alpha, batch, q);
}

SplitConformal SplitConformal::build(std::shared_ptr<const QuantileModel> model, const WindowedDataset& calibration,
                                     double alpha, std::size_t batch) {
  if (!model) fail(ErrorCode::NotFitted, "split CP needs a fitted model");
  if (calibration.empty()) fail(ErrorCode::EmptyResidualSet, "empty calibration set");
  if (batch > calibration.n_y()) fail(ErrorCode::BatchSizeMismatch, "batch exceeds the calibration horizon");
  std::vector<double> residuals;
  for (std::size_t k = 0; k < calibration.size(); ++k) {
    const auto f = model->predict(calibration.input(k));
    const auto y = calibration.target(k);
    for (std::size_t h = 0; h < batch; ++h) residuals.push_back(y[h] - f.mid[h]);
  }
  return from_residuals(std::move(model), residuals, alpha, batch);
}

QuantileForecast SplitConformal::forecast(std::span<const double> input) const { return model_->predict(input); }

IntervalBatch SplitConformal::intervals(const QuantileForecast& batch) const {
  IntervalBatch out{{}, batch.mid, {}, alpha()};
  for (double c : batch.mid) {
    out.lower.push_back(c - half_width_);
    out.upper.push_back(c + half_width_);
  }
  return out;
}

// ---------------------------------------------------------------------------
// CQR

ConformalizedQr::ConformalizedQr(std::shared_ptr<const QuantileModel> model, double alpha, std::size_t batch,
                                 double correction)
    : IntervalMethod(alpha, batch), model_(std::move(model)), correction_(correction) {}

ConformalizedQr ConformalizedQr::from_scores(std::shared_ptr<const QuantileModel> model, std::span<const double> scores,
                                             double alpha, std::size_t batch) {
  check_alpha(alpha);
  if (scores.empty()) fail(ErrorCode::EmptyResidualSet, "empty calibration set");
  const double q = empirical_quantile(scores, 1.0 - alpha, QuantileConvention::conformal);
  return ConformalizedQr(std::move(model), alpha, batch, q);
}

ConformalizedQr ConformalizedQr::build(std::shared_ptr<const QuantileModel> model, const WindowedDataset& calibration,
                                       double alpha, std::size_t batch) {
  if (!model) fail(ErrorCode::NotFitted, "CQR needs a fitted model");
  if (calibration.empty()) fail(ErrorCode::EmptyResidualSet, "empty calibration set");
  if (batch > calibration.n_y()) fail(ErrorCode::BatchSizeMismatch, "batch exceeds the calibration horizon");
  std::vector<double> scores;
  for (std::size_t k = 0; k < calibration.size(); ++k) {
    const auto f = model->predict(calibration.input(k));
    const auto y = calibration.target(k);
    for (std::size_t h = 0; h < batch; ++h) scores.push_back(cqr_score(f.lo[h], f.hi[h], y[h]));
  }
  return from_scores(std::move(model), scores, alpha, batch);
}

QuantileForecast ConformalizedQr::forecast(std::span<const double> input) const {
  if (!model_) fail(ErrorCode::NotFitted, "CQR has no model");
  return model_->predict(input);
}

IntervalBatch ConformalizedQr::intervals(const QuantileForecast& batch) const {
  IntervalBatch out{{}, batch.mid, {}, alpha()};
  for (std::size_t t = 0; t < batch.size(); ++t) {
    out.lower.push_back(batch.lo[t] - correction_);
    out.upper.push_back(batch.hi[t] + correction_);
  }
  return out;
}

// ---------------------------------------------------------------------------
// EnbPI

EnbpiPredictor::EnbpiPredictor(std::shared_ptr<const EnsembleModel> ensemble, const LooEstimates& loo,
                               const SequentialOptions& options)
    : IntervalMethod(options.alpha, options.batch), ensemble_(std::move(ensemble)), pooling_(options.pooling) {
  if (!ensemble_) fail(ErrorCode::NotFitted, "EnbPI needs a fitted ensemble");
  if (loo.size() == 0) fail(ErrorCode::EmptyResidualSet, "no LOO residuals to warm EnbPI");
  const std::size_t pools = pooling_ == ResidualPooling::pooled ? 1 : options.batch;
  std::vector<std::size_t> counts(pools, 0);
  for (std::size_t h : loo.horizon) ++counts[pool_for(h)];
  for (std::size_t p = 0; p < pools; ++p) {
    if (counts[p] == 0) fail(ErrorCode::EmptyResidualSet, "horizon pool " + std::to_string(p) + " has no residuals");
    residuals_.emplace_back(counts[p]);
  }
  for (std::size_t i = 0; i < loo.size(); ++i) residuals_[pool_for(loo.horizon[i])].push(std::abs(loo.y[i] - loo.mid[i]));
}

std::size_t EnbpiPredictor::pool_for(std::size_t horizon) const {
  if (pooling_ == ResidualPooling::pooled) return 0;
  if (horizon >= batch_size()) fail(ErrorCode::InvalidArgument, "horizon index beyond the batch size");
  return horizon;
}

double EnbpiPredictor::half_width(std::size_t horizon) const {
  return residuals_.at(pool_for(horizon)).quantile(1.0 - alpha());
}

QuantileForecast EnbpiPredictor::forecast(std::span<const double> input) const { return ensemble_->forecast(input); }

IntervalBatch EnbpiPredictor::intervals(const QuantileForecast& batch) const {
  IntervalBatch out{{}, batch.mid, {}, alpha()};
  std::vector<double> widths(residuals_.size());
  for (std::size_t p = 0; p < residuals_.size(); ++p) widths[p] = residuals_[p].quantile(1.0 - alpha());
  for (std::size_t t = 0; t < batch.size(); ++t) {
    const double w = widths[pool_for(t)];
    out.lower.push_back(batch.mid[t] - w);
    out.upper.push_back(batch.mid[t] + w);
  }
  return out;
}

void EnbpiPredictor::update(const QuantileForecast& batch, std::span<const double> y) {
  for (std::size_t t = 0; t < y.size(); ++t) residuals_[pool_for(t)].push(std::abs(y[t] - batch.mid[t]));
}

// ---------------------------------------------------------------------------
// EnCQR

std::pair<std::vector<double>, std::vector<double>> loo_asymmetric_scores(const LooEstimates& loo) {
  std::vector<double> lo(loo.size());
  std::vector<double> hi(loo.size());
  for (std::size_t i = 0; i < loo.size(); ++i) {
    const auto s = asymmetric_scores(loo.lo[i], loo.hi[i], loo.y[i]);
    lo[i] = s.lo;
    hi[i] = s.hi;
  }
  return {std::move(lo), std::move(hi)};
}

EncqrPredictor::EncqrPredictor(std::shared_ptr<const EnsembleModel> ensemble, ResidualStore store,
                               const EncqrOptions& options)
    : IntervalMethod(options.alpha, options.batch),
      ensemble_(std::move(ensemble)),
      store_(std::move(store)),
      side_level_(options.side_level) {}

EncqrPredictor::EncqrPredictor(std::shared_ptr<const EnsembleModel> ensemble, const LooEstimates& loo,
                               const EncqrOptions& options)
    : IntervalMethod(options.alpha, options.batch), ensemble_(std::move(ensemble)), side_level_(options.side_level) {
  if (!ensemble_) fail(ErrorCode::NotFitted, "EnCQR needs a fitted ensemble");
  for (std::size_t h : loo.horizon) {
    if (h >= options.batch) fail(ErrorCode::InvalidArgument, "LOO horizon index beyond the batch size");
  }
  const auto [lo, hi] = loo_asymmetric_scores(loo);
  store_ = ResidualStore::warm(lo, hi, loo.horizon, options.pooling, options.batch);
}

EncqrPredictor EncqrPredictor::from_scores(std::span<const double> lo, std::span<const double> hi,
                                           const EncqrOptions& options) {
  const std::vector<std::size_t> horizon(lo.size(), 0);
  EncqrOptions pooled = options;
  pooled.pooling = ResidualPooling::pooled;
  return EncqrPredictor(nullptr, ResidualStore::warm(lo, hi, horizon, ResidualPooling::pooled, 1), pooled);
}

double EncqrPredictor::side_level() const {
  return side_level_ == SideLevel::half_alpha ? 1.0 - alpha() / 2.0 : 1.0 - alpha();
}

double EncqrPredictor::omega_lo(std::size_t horizon) const {
  return store_.lo(store_.pool_for(horizon)).quantile(side_level());
}

double EncqrPredictor::omega_hi(std::size_t horizon) const {
  return store_.hi(store_.pool_for(horizon)).quantile(side_level());
}

QuantileForecast EncqrPredictor::forecast(std::span<const double> input) const {
  if (!ensemble_) fail(ErrorCode::NotFitted, "predictor was built from scores only");
  return ensemble_->forecast(input);
}

IntervalBatch EncqrPredictor::intervals(const QuantileForecast& batch) const {
  std::vector<double> w_lo(store_.pools());
  std::vector<double> w_hi(store_.pools());
  for (std::size_t p = 0; p < store_.pools(); ++p) {
    w_lo[p] = store_.lo(p).quantile(side_level());
    w_hi[p] = store_.hi(p).quantile(side_level());
  }
  IntervalBatch out{{}, batch.mid, {}, alpha()};
  for (std::size_t t = 0; t < batch.size(); ++t) {
    const std::size_t p = store_.pool_for(t);
    out.lower.push_back(batch.lo[t] - w_lo[p]);
    out.upper.push_back(batch.hi[t] + w_hi[p]);
  }
  return out;
}

void EncqrPredictor::update(const QuantileForecast& batch, std::span<const double> y) {
  std::vector<double> lo(y.size());
  std::vector<double> hi(y.size());
  std::vector<std::size_t> horizon(y.size());
  for (std::size_t t = 0; t < y.size(); ++t) {
    const auto s = asymmetric_scores(batch.lo[t], batch.hi[t], y[t]);
    lo[t] = s.lo;
    hi[t] = s.hi;
    horizon[t] = t;
  }
  store_.update(lo, hi, horizon);
}

}  // namespace encqr
