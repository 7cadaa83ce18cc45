#include "encqr/regress.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace encqr {

double pinball_loss(double y, double q_hat, double alpha) {
  return q_hat >= y ? (1.0 - alpha) * (q_hat - y) : alpha * (y - q_hat);
}

double pinball_subgradient(double y, double q_hat, double alpha) {
  return q_hat >= y ? 1.0 - alpha : -alpha;
}

double multi_quantile_loss(std::span<const double> targets, const std::vector<std::vector<double>>& predictions,
                           std::span<const double> levels) {
  if (predictions.size() != levels.size()) fail(ErrorCode::ShapeError, "one prediction track per level required");
  if (targets.empty()) fail(ErrorCode::ShapeError, "empty target batch");
  double total = 0.0;
  for (std::size_t l = 0; l < levels.size(); ++l) {
    if (predictions[l].size() != targets.size()) fail(ErrorCode::ShapeError, "prediction/target shape mismatch");
    for (std::size_t i = 0; i < targets.size(); ++i) total += pinball_loss(targets[i], predictions[l][i], levels[l]);
  }
  return total / static_cast<double>(targets.size() * levels.size());
}

void uncross(QuantileForecast& f) {
  for (std::size_t t = 0; t < f.size(); ++t) {
    std::array<double, 3> v{f.lo[t], f.mid[t], f.hi[t]};
    std::sort(v.begin(), v.end());
    f.lo[t] = v[0];
    f.mid[t] = v[1];
    f.hi[t] = v[2];
  }
}

std::string_view to_string(RegressorKind kind) {
  switch (kind) {
    case RegressorKind::linear_qr: return "linear_qr";
    case RegressorKind::quantile_forest: return "quantile_forest";
  }
  return "unknown";
}

RegressorKind parse_regressor_kind(std::string_view name) {
  if (name == "linear_qr") return RegressorKind::linear_qr;
  if (name == "quantile_forest") return RegressorKind::quantile_forest;
  fail(ErrorCode::ConfigError, "unknown regressor '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// LinearQuantileModel

LinearQuantileModel::LinearQuantileModel(QuantileLevels levels, std::size_t horizon, std::size_t input_size,
                                         std::vector<double> weights, bool intercept_only)
    : levels_(levels),
      horizon_(horizon),
      input_size_(input_size),
      weights_(std::move(weights)),
      intercept_only_(intercept_only) {
  levels_.validate();
  if (weights_.size() != 3 * horizon_ * (input_size_ + 1)) {
    fail(ErrorCode::ShapeError, "weight count must be levels * horizon * (input_size + 1)");
  }
}

double LinearQuantileModel::head_value(std::size_t level, std::size_t step, std::span<const double> input) const {
  const std::size_t stride = input_size_ + 1;
  const double* w = weights_.data() + (level * horizon_ + step) * stride;
  double v = w[input_size_];
  if (!intercept_only_) {
    for (std::size_t j = 0; j < input_size_; ++j) v += w[j] * input[j];
  }
  return v;
}

QuantileForecast LinearQuantileModel::predict(std::span<const double> input) const {
  if (input.size() != input_size_) fail(ErrorCode::ShapeError, "input window has the wrong size");
  QuantileForecast f;
  f.lo.resize(horizon_);
  f.mid.resize(horizon_);
  f.hi.resize(horizon_);
  for (std::size_t h = 0; h < horizon_; ++h) {
    f.lo[h] = head_value(0, h, input);
    f.mid[h] = head_value(1, h, input);
    f.hi[h] = head_value(2, h, input);
  }
  uncross(f);
  return f;
}

namespace {

struct HeadData {
  std::span<const double> inputs;  // n x p
  std::span<const double> targets;  // n x m
  std::size_t n;
  std::size_t p;
  std::size_t m;
  bool intercept_only;
};

double head_predict(const double* w, const double* x, std::size_t p, bool intercept_only) {
  double v = w[p];
  if (!intercept_only) {
    for (std::size_t j = 0; j < p; ++j) v += w[j] * x[j];
  }
  return v;
}

double head_loss(const HeadData& d, std::size_t step, double level, const double* w) {
  double loss = 0.0;
  for (std::size_t k = 0; k < d.n; ++k) {
    loss += pinball_loss(d.targets[k * d.m + step], head_predict(w, d.inputs.data() + k * d.p, d.p, d.intercept_only),
                         level);
  }
  return loss / static_cast<double>(d.n);
}

// Trains one (level, step) head in place.
void train_head(const HeadData& train, const HeadData* val, std::size_t step, double level,
                const LinearQrParams& params, double* w_out) {
  const std::size_t p = train.p;
  std::vector<double> w(p + 1, 0.0);
  if (params.init == LinearInit::quantile) {
    std::vector<double> col(train.n);
    for (std::size_t k = 0; k < train.n; ++k) col[k] = train.targets[k * train.m + step];
    w[p] = empirical_quantile(col, level, QuantileConvention::plain);
  }
  const std::vector<double> initial = w;
  const double initial_loss = head_loss(train, step, level, initial.data());

  std::vector<double> best = w;
  double best_score = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  std::vector<double> grad(p + 1);
  const double inv_n = 1.0 / static_cast<double>(train.n);

  for (std::size_t epoch = 0; epoch < params.max_epochs; ++epoch) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double loss = 0.0;
    for (std::size_t k = 0; k < train.n; ++k) {
      const double* x = train.inputs.data() + k * p;
      const double y = train.targets[k * train.m + step];
      const double q = head_predict(w.data(), x, p, train.intercept_only);
      loss += pinball_loss(y, q, level);
      const double g = pinball_subgradient(y, q, level);
      if (!train.intercept_only) {
        for (std::size_t j = 0; j < p; ++j) grad[j] += g * x[j];
      }
      grad[p] += g;
    }
    double penalty = 0.0;
    for (std::size_t j = 0; j < p; ++j) penalty += w[j] * w[j];
    const double objective = loss * inv_n + params.l2 * penalty;
    const double score = val ? head_loss(*val, step, level, w.data()) : objective;

    if (score < best_score) {
      best_score = score;
      best = w;
      since_best = 0;
    } else if (val && ++since_best >= params.patience) {
      break;
    }

    const double lr = params.learning_rate / std::sqrt(1.0 + static_cast<double>(epoch));
    for (std::size_t j = 0; j < p; ++j) w[j] -= lr * (grad[j] * inv_n + 2.0 * params.l2 * w[j]);
    w[p] -= lr * grad[p] * inv_n;
  }

  // Validation-driven selection may pick weights that fit training worse
  // than the starting point; fall back to it then.
  if (head_loss(train, step, level, best.data()) > initial_loss) best = initial;
  std::copy(best.begin(), best.end(), w_out);
}

}  // namespace

LinearQuantileModel fit_linear_quantile(const WindowedDataset& data, const QuantileLevels& levels,
                                        const LinearQrParams& params, const WindowedDataset* validation) {
  levels.validate();
  if (data.size() < 2) fail(ErrorCode::NoTrainingData, "linear QR needs at least 2 training pairs");
  if (validation && (validation->empty() || validation->input_size() != data.input_size() ||
                     validation->n_y() != data.n_y())) {
    validation = nullptr;
  }
  const std::size_t p = data.input_size();
  const std::size_t m = data.n_y();
  std::span<const double> inputs{data.input(0).data(), data.size() * p};
  HeadData train{inputs, data.all_targets(), data.size(), p, m, params.intercept_only};
  HeadData val_data{};
  if (validation) {
    val_data = HeadData{{validation->input(0).data(), validation->size() * p}, validation->all_targets(),
                        validation->size(), p, m, params.intercept_only};
  }
  const std::array<double, 3> lv{levels.lo, levels.mid, levels.hi};
  std::vector<double> weights(3 * m * (p + 1));
  for (std::size_t l = 0; l < 3; ++l) {
    for (std::size_t h = 0; h < m; ++h) {
      train_head(train, validation ? &val_data : nullptr, h, lv[l], params, weights.data() + (l * m + h) * (p + 1));
    }
  }
  return LinearQuantileModel(levels, m, p, std::move(weights), params.intercept_only);
}

// ---------------------------------------------------------------------------
// Factory

RegressorFactory make_regressor_factory(RegressorSpec spec, QuantileLevels levels,
                                        std::shared_ptr<const WindowedDataset> validation) {
  levels.validate();
  return [spec, levels, validation](const WindowedDataset& train,
                                    std::uint64_t seed) -> std::shared_ptr<const QuantileModel> {
    switch (spec.kind) {
      case RegressorKind::linear_qr:
        return std::make_shared<LinearQuantileModel>(
            fit_linear_quantile(train, levels, spec.linear, validation.get()));
      case RegressorKind::quantile_forest:
        return std::make_shared<QuantileForestModel>(fit_quantile_forest(train, levels, spec.forest, seed));
    }
    fail(ErrorCode::ConfigError, "unknown regressor kind");
  };
}

}  // namespace encqr
