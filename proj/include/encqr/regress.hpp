#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "encqr/core.hpp"

namespace encqr {

// ---------------------------------------------------------------------------
// Pinball loss

/// (1 - alpha)(q - y) if q >= y, else alpha (y - q).
double pinball_loss(double y, double q_hat, double alpha);

/// A subgradient of `pinball_loss` with respect to q_hat. At the kink
/// (q_hat == y) the over-prediction branch is used.
double pinball_subgradient(double y, double q_hat, double alpha);

/// Mean pinball loss over every (observation, horizon step, level) triple.
/// `targets` is n x N_y row-major, `predictions[l]` has the same shape.
double multi_quantile_loss(std::span<const double> targets, const std::vector<std::vector<double>>& predictions,
                           std::span<const double> levels);

// ---------------------------------------------------------------------------
// Quantile model contract

/// Per-level forecasts for one input window, each of length N_y.
struct QuantileForecast {
  std::vector<double> lo;
  std::vector<double> mid;
  std::vector<double> hi;

  std::size_t size() const { return mid.size(); }
};

/// Sorts (lo, mid, hi) ascending at every step.
void uncross(QuantileForecast& forecast);

enum class RegressorKind { linear_qr, quantile_forest };

std::string_view to_string(RegressorKind kind);
RegressorKind parse_regressor_kind(std::string_view name);

/// A fitted multi-horizon regressor producing lo/mid/hi quantile estimates.
/// Fitted models are immutable.
class QuantileModel {
 public:
  virtual ~QuantileModel() = default;

  virtual RegressorKind kind() const = 0;
  virtual const QuantileLevels& levels() const = 0;
  virtual std::size_t horizon() const = 0;
  virtual std::size_t input_size() const = 0;

  /// Non-crossing per-level forecasts; `input` has N_x * d values.
  virtual QuantileForecast predict(std::span<const double> input) const = 0;

  /// Versioned structured-text serialization.
  virtual void save(std::ostream& out) const = 0;
};

/// Reads any model written by `QuantileModel::save`.
std::unique_ptr<QuantileModel> load_model(std::istream& in);

// ---------------------------------------------------------------------------
// Linear quantile regression

enum class LinearInit { quantile, zero };

struct LinearQrParams {
  double learning_rate = 0.05;
  std::size_t max_epochs = 600;
  double l2 = 1e-4;
  /// Epochs without validation improvement before stopping.
  std::size_t patience = 50;
  LinearInit init = LinearInit::quantile;
  /// Zero every input feature (intercept-only model).
  bool intercept_only = false;
};

/// One affine head per (level, horizon step). Trained by full-batch
/// subgradient descent on the mean pinball loss plus an L2 penalty on the
/// non-bias weights, with step size learning_rate / sqrt(1 + epoch).
class LinearQuantileModel final : public QuantileModel {
 public:
  LinearQuantileModel(QuantileLevels levels, std::size_t horizon, std::size_t input_size,
                      std::vector<double> weights, bool intercept_only = false);

  RegressorKind kind() const override { return RegressorKind::linear_qr; }
  const QuantileLevels& levels() const override { return levels_; }
  std::size_t horizon() const override { return horizon_; }
  std::size_t input_size() const override { return input_size_; }
  QuantileForecast predict(std::span<const double> input) const override;
  void save(std::ostream& out) const override;

  /// Layout: [level][step][input_size + 1], bias last.
  std::span<const double> weights() const { return weights_; }
  double head_value(std::size_t level, std::size_t step, std::span<const double> input) const;

 private:
  QuantileLevels levels_;
  std::size_t horizon_;
  std::size_t input_size_;
  std::vector<double> weights_;
  bool intercept_only_;
};

/// `validation` is optional; when given, early stopping selects the epoch
/// with the lowest validation loss.
LinearQuantileModel fit_linear_quantile(const WindowedDataset& data, const QuantileLevels& levels,
                                        const LinearQrParams& params = {},
                                        const WindowedDataset* validation = nullptr);

// ---------------------------------------------------------------------------
// Quantile regression forest

struct ForestParams {
  std::size_t n_trees = 10;
  std::size_t min_samples_leaf = 2;
  /// Fraction of features examined per split (at least one).
  double max_features = 1.0 / 3.0;
  bool bootstrap = true;
};

struct TreeNode {
  /// -1 for leaves.
  std::int32_t feature = -1;
  double threshold = 0.0;
  std::int32_t left = -1;
  std::int32_t right = -1;
  /// Leaves only: training rows (with bootstrap multiplicity).
  std::vector<std::uint32_t> rows;

  bool is_leaf() const { return feature < 0; }
};

struct RegressionTree {
  std::vector<TreeNode> nodes;

  /// Index of the leaf reached by `input` (x[feature] <= threshold goes left).
  std::size_t leaf_for(std::span<const double> input) const;
  std::size_t depth() const;
};

/// Quantile regression forest over the flattened input window. Each leaf
/// keeps the training target vectors that reached it; the forecast at level
/// L is the plain empirical quantile of the leaf values pooled over trees.
class QuantileForestModel final : public QuantileModel {
 public:
  QuantileForestModel(QuantileLevels levels, std::size_t horizon, std::size_t input_size,
                      std::vector<double> targets, std::vector<RegressionTree> trees);

  RegressorKind kind() const override { return RegressorKind::quantile_forest; }
  const QuantileLevels& levels() const override { return levels_; }
  std::size_t horizon() const override { return horizon_; }
  std::size_t input_size() const override { return input_size_; }
  QuantileForecast predict(std::span<const double> input) const override;
  void save(std::ostream& out) const override;

  const std::vector<RegressionTree>& trees() const { return trees_; }
  /// Training targets, one row of N_y values per training pair.
  std::span<const double> targets() const { return targets_; }

  /// Pooled leaf values for horizon step h.
  std::vector<double> pooled_leaf_values(std::span<const double> input, std::size_t step) const;

 private:
  QuantileLevels levels_;
  std::size_t horizon_;
  std::size_t input_size_;
  std::vector<double> targets_;
  std::vector<RegressionTree> trees_;
};

QuantileForestModel fit_quantile_forest(const WindowedDataset& data, const QuantileLevels& levels,
                                        const ForestParams& params = {}, std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Factory

struct RegressorSpec {
  RegressorKind kind = RegressorKind::quantile_forest;
  LinearQrParams linear;
  ForestParams forest;
};

/// Builds a fitted model from training pairs and a member seed.
using RegressorFactory =
    std::function<std::shared_ptr<const QuantileModel>(const WindowedDataset& train, std::uint64_t seed)>;

RegressorFactory make_regressor_factory(RegressorSpec spec, QuantileLevels levels,
                                        std::shared_ptr<const WindowedDataset> validation = nullptr);

}  // namespace encqr
