#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <random>
#include <set>
#include <sstream>

#include "encqr/ensemble.hpp"
#include "oracles.hpp"

using namespace encqr;

namespace {

// Predicts (v - 1, v, v + 1) at every step, v = the member's subset index.
class StubModel final : public QuantileModel {
 public:
  StubModel(double value, std::size_t horizon, std::size_t input_size)
      : value_(value), horizon_(horizon), input_size_(input_size) {}
  RegressorKind kind() const override { return RegressorKind::linear_qr; }
  const QuantileLevels& levels() const override { return levels_; }
  std::size_t horizon() const override { return horizon_; }
  std::size_t input_size() const override { return input_size_; }
  QuantileForecast predict(std::span<const double>) const override {
    return {std::vector<double>(horizon_, value_ - 1), std::vector<double>(horizon_, value_),
            std::vector<double>(horizon_, value_ + 1)};
  }
  void save(std::ostream&) const override {}

 private:
  double value_;
  std::size_t horizon_;
  std::size_t input_size_;
  QuantileLevels levels_;
};

TimeSeries noise_series(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01;
  std::vector<double> y(n);
  for (auto& v : y) v = n01(rng);
  return TimeSeries::regular(0, 3600, y);
}

// Records every training origin and tags the model with its subset index.
struct RecordingFactory {
  std::size_t subset_length;
  std::shared_ptr<std::vector<std::vector<std::size_t>>> seen = std::make_shared<std::vector<std::vector<std::size_t>>>();

  std::shared_ptr<const QuantileModel> operator()(const WindowedDataset& d, std::uint64_t) const {
    static std::mutex mu;
    std::lock_guard lock(mu);
    seen->emplace_back(d.origins().begin(), d.origins().end());
    return std::make_shared<StubModel>(static_cast<double>(d.origins()[0] / subset_length), d.n_y(), d.input_size());
  }
};

}  // namespace

TEST_SUITE("ensemble") {

TEST_CASE("aggregation examples") {
  CHECK(aggregate(std::vector<double>{1, 2, 3}, Aggregation{}) == 2.0);
  CHECK(aggregate(std::vector<double>{1, 2, 100}, Aggregation::parse("median")) == 2.0);
  CHECK(aggregate(std::vector<double>{4, 1, 3, 2}, Aggregation::parse("median")) == 2.5);
  CHECK(aggregate(std::vector<double>{0, 1, 2, 3, 100}, Aggregation::parse("trimmed_mean", 0.2)) == 2.0);
  CHECK_THROWS_AS(aggregate(std::vector<double>{}, Aggregation{}), Error);
  CHECK_THROWS_AS(Aggregation::parse("mode"), Error);
  for (const char* name : {"mean", "median", "trimmed_mean"}) {
    for (double v : {-3.7, 0.1, 12.0}) CHECK(aggregate(std::vector<double>(5, v), Aggregation::parse(name)) == v);
  }
  const auto vec = aggregate({{1, 10}, {3, 20}}, Aggregation{});
  CHECK(vec == std::vector<double>{2, 15});
}

TEST_CASE("trimmed mean matches a drop-min/max oracle") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-10, 10);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> v(3 + trial % 9);
    for (auto& x : v) x = u(rng);
    const double f = 0.15;
    auto sorted = v;
    std::sort(sorted.begin(), sorted.end());
    const auto cut = static_cast<std::size_t>(std::floor(f * static_cast<double>(v.size())));
    std::vector<double> kept(sorted.begin() + static_cast<long>(cut), sorted.end() - static_cast<long>(cut));
    CHECK(aggregate(v, Aggregation::parse("trimmed_mean", f)) == doctest::Approx(oracle::mean(kept)));
  }
}

TEST_CASE("subset plan examples") {
  const auto plan = plan_subsets(30, 3, 7, 3);
  CHECK(plan.subsets() == std::vector<IndexRange>{{0, 10}, {10, 20}, {20, 30}});
  CHECK(plan.residual_count() == 9);
  CHECK(plan.residual_steps() == std::vector<std::size_t>{7, 8, 9, 17, 18, 19, 27, 28, 29});
  CHECK(plan.eligible_members(15) == std::vector<std::size_t>{2});
  CHECK_THROWS_AS(plan_subsets(30, 3, 9, 3), Error);
  try {
    plan_subsets(30, 3, 9, 3);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SubsetsTooSmall);
    CHECK(std::string(e.what()).find("reduce") != std::string::npos);
  }
  const auto odd = plan_subsets(31, 3, 7, 3);
  CHECK(odd.subset_length() == 10);
  CHECK(!odd.owner(30).has_value());
  CHECK(odd.assigned() == IndexRange{0, 30});
  CHECK_THROWS_AS(plan_subsets(30, 1, 7, 3), Error);
  CHECK(plan_subsets(5000, 5, 168, 24) == plan_subsets(5000, 5, 168, 24));
}

TEST_CASE("residual count identity against a brute-force census") {
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t B = 2 + rng() % 5, n_x = 1 + rng() % 20, n_y = 1 + rng() % 10;
    const std::size_t T = B * (n_x + n_y) + rng() % 200;
    const auto plan = plan_subsets(T, B, n_x, n_y);
    const std::size_t tb = T / B;
    std::size_t census = 0;
    for (std::size_t i = n_x; i < B * tb; ++i) census += (i / tb == (i - n_x) / tb) ? 1 : 0;
    CHECK(plan.residual_count() == census);
    CHECK(plan.residual_steps().size() == B * tb - B * n_x);
    for (std::size_t i : plan.residual_steps()) {
      for (std::size_t b : plan.eligible_members(i)) {
        const auto& s = plan.subsets()[b];
        for (std::size_t j = i - n_x; j <= i; ++j) CHECK(!s.contains(j));
      }
    }
  }
}

TEST_CASE("members train only on windows inside their subset") {
  const auto series = noise_series(30, 1);
  const auto plan = plan_subsets(30, 3, 7, 3);
  RecordingFactory factory{plan.subset_length()};
  EnsembleFitOptions opts;
  opts.parallel = false;
  const auto ens = fit_ensemble(series, plan, factory, opts);
  CHECK(ens.members.size() == 3);
  REQUIRE(factory.seen->size() == 3);
  for (const auto& origins : *factory.seen) CHECK(origins.size() == 1);

  const auto big = noise_series(400, 2);
  const auto plan2 = plan_subsets(400, 4, 12, 5);
  RecordingFactory f2{plan2.subset_length()};
  fit_ensemble(big, plan2, f2, opts);
  std::set<std::size_t> all_steps;
  for (const auto& origins : *f2.seen) {
    const std::size_t b = origins[0] / plan2.subset_length();
    const auto& s = plan2.subsets()[b];
    CHECK(origins.size() == s.size() - 12 - 5 + 1);
    for (std::size_t o : origins) {
      CHECK(s.contains(o - 12));
      CHECK(s.contains(o + 5 - 1));
      for (std::size_t j = o - 12; j < o + 5; ++j) all_steps.insert(j * 10 + b);
    }
  }
  // no step is used by two members
  std::set<std::size_t> steps_only;
  for (auto v : all_steps) CHECK(steps_only.insert(v / 10).second);
}

TEST_CASE("parallel fitting equals sequential fitting") {
  const auto series = noise_series(600, 3);
  const auto plan = plan_subsets(600, 3, 24, 6);
  RegressorSpec spec;
  spec.forest.n_trees = 4;
  const auto factory = make_regressor_factory(spec, {});
  EnsembleFitOptions par, seq;
  par.seed = seq.seed = 77;
  seq.parallel = false;
  const auto a = fit_ensemble(series, plan, factory, par);
  const auto b = fit_ensemble(series, plan, factory, seq);
  for (std::size_t m = 0; m < 3; ++m) {
    std::ostringstream sa, sb;
    a.members[m]->save(sa);
    b.members[m]->save(sb);
    CHECK(sa.str() == sb.str());
  }
  CHECK(member_seed(77, 0) != member_seed(77, 1));
}

TEST_CASE("identical subsets give identical deterministic members") {
  std::vector<double> half(50);
  for (std::size_t i = 0; i < 50; ++i) half[i] = std::sin(0.3 * static_cast<double>(i));
  std::vector<double> y = half;
  y.insert(y.end(), half.begin(), half.end());
  const auto series = TimeSeries::regular(0, 3600, y);
  const auto plan = plan_subsets(100, 2, 5, 2);
  RegressorSpec spec;
  spec.kind = RegressorKind::linear_qr;
  spec.linear.max_epochs = 30;
  const auto ens = fit_ensemble(series, plan, make_regressor_factory(spec, {}));
  std::ostringstream a, b;
  ens.members[0]->save(a);
  ens.members[1]->save(b);
  CHECK(a.str() == b.str());
}

TEST_CASE("member errors are tagged with the member index") {
  const auto series = noise_series(60, 4);
  const auto plan = plan_subsets(60, 3, 5, 2);
  RegressorFactory factory = [&](const WindowedDataset& d, std::uint64_t) -> std::shared_ptr<const QuantileModel> {
    if (d.origins()[0] / plan.subset_length() == 1) fail(ErrorCode::NoTrainingData, "boom");
    return std::make_shared<StubModel>(0.0, d.n_y(), d.input_size());
  };
  try {
    fit_ensemble(series, plan, factory);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NoTrainingData);
    CHECK(std::string(e.what()).find("member 1") != std::string::npos);
  }
}

TEST_CASE("LOO estimates aggregate only out-of-sample members") {
  const auto series = noise_series(30, 5);
  const auto plan = plan_subsets(30, 3, 7, 3);
  const auto ens = fit_ensemble(series, plan, RecordingFactory{plan.subset_length()});
  for (std::size_t tile : {1u, 2u, 3u}) {
    const auto loo = loo_quantile_estimates(ens, series, tile);
    CHECK(loo.size() == 9);
    CHECK(loo.steps == plan.residual_steps());
    for (std::size_t k = 0; k < loo.size(); ++k) {
      const std::size_t owner = *plan.owner(loo.steps[k]);
      double expected = 0;
      for (std::size_t b = 0; b < 3; ++b)
        if (b != owner) expected += static_cast<double>(b) / 2.0;
      CHECK(loo.mid[k] == expected);
      CHECK(loo.lo[k] == expected - 1);
      CHECK(loo.y[k] == series.target()[loo.steps[k]]);
      CHECK(loo.horizon[k] < tile);
    }
  }
  CHECK_THROWS_AS(loo_quantile_estimates(ens, series, 4), Error);
}

TEST_CASE("LOO of identical members equals a single member") {
  const auto series = noise_series(90, 6);
  const auto plan = plan_subsets(90, 3, 6, 3);
  RegressorFactory same = [](const WindowedDataset& d, std::uint64_t) -> std::shared_ptr<const QuantileModel> {
    return std::make_shared<StubModel>(0.25, d.n_y(), d.input_size());
  };
  const auto ens = fit_ensemble(series, plan, same);
  const auto loo = loo_quantile_estimates(ens, series, 3);
  CHECK(loo.size() == plan.residual_count());
  for (double v : loo.mid) CHECK(v == 0.25);
  const std::vector<double> input(6, 0.0);
  const auto f = ens.forecast(input);
  CHECK(f.mid == std::vector<double>(3, 0.25));
}

}  // TEST_SUITE
