#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "encqr/conformal.hpp"
#include "encqr/data.hpp"
#include "oracles.hpp"

using namespace encqr;

namespace {

// lo/hi = center -/+ half_width[step]; mid = center.
class ShapeModel final : public QuantileModel {
 public:
  ShapeModel(double center, std::vector<double> half_width, std::size_t input_size)
      : center_(center), half_(std::move(half_width)), input_size_(input_size) {}
  RegressorKind kind() const override { return RegressorKind::linear_qr; }
  const QuantileLevels& levels() const override { return levels_; }
  std::size_t horizon() const override { return half_.size(); }
  std::size_t input_size() const override { return input_size_; }
  QuantileForecast predict(std::span<const double>) const override {
    QuantileForecast f;
    for (double w : half_) {
      f.lo.push_back(center_ - w);
      f.mid.push_back(center_);
      f.hi.push_back(center_ + w);
    }
    return f;
  }
  void save(std::ostream&) const override {}

 private:
  double center_;
  std::vector<double> half_;
  std::size_t input_size_;
  QuantileLevels levels_;
};

std::shared_ptr<const EnsembleModel> shape_ensemble(std::vector<double> half_width, std::size_t n_x = 2) {
  auto e = std::make_shared<EnsembleModel>();
  const std::size_t n_y = half_width.size();
  e->plan = plan_subsets(3 * (n_x + n_y), 3, n_x, n_y);
  for (int b = 0; b < 3; ++b) e->members.push_back(std::make_shared<ShapeModel>(1.0, half_width, n_x));
  return e;
}

LooEstimates fake_loo(std::vector<double> lo, std::vector<double> mid, std::vector<double> hi, std::vector<double> y) {
  LooEstimates l;
  l.lo = std::move(lo);
  l.mid = std::move(mid);
  l.hi = std::move(hi);
  l.y = std::move(y);
  for (std::size_t i = 0; i < l.y.size(); ++i) {
    l.steps.push_back(i);
    l.horizon.push_back(0);
  }
  return l;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an encqr::Error");
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST_SUITE("conformal") {

TEST_CASE("asymmetric and CQR scores") {
  auto s = asymmetric_scores(2, 5, 3);
  CHECK((s.lo == -1 && s.hi == -2));
  s = asymmetric_scores(2, 5, 6);
  CHECK((s.lo == -4 && s.hi == 1));
  s = asymmetric_scores(2, 5, 1);
  CHECK((s.lo == 1 && s.hi == -4));
  CHECK(cqr_score(2, 5, 3) == -1);
  CHECK(cqr_score(2, 5, 6) == 1);

  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-100, 100);
  for (int i = 0; i < 10000; ++i) {
    const double lo = u(rng), hi = u(rng), y = u(rng);
    const auto a = asymmetric_scores(lo, hi, y);
    CHECK(cqr_score(lo, hi, y) == std::max(a.lo, a.hi));
  }
}

TEST_CASE("score FIFO evicts the oldest entries") {
  ScoreFifo f(3);
  f.push(std::vector<double>{1, 2, 3, 4});
  CHECK(f.values() == std::vector<double>{2, 3, 4});
  CHECK(f.quantile(0.5, QuantileConvention::plain) == 3);
  CHECK_THROWS_AS(ScoreFifo(2).quantile(0.5), Error);
}

TEST_CASE("residual store: exact-s replacement") {
  std::vector<double> lo(50), hi(50);
  std::iota(lo.begin(), lo.end(), 0.0);
  std::iota(hi.begin(), hi.end(), 100.0);
  const std::vector<std::size_t> h(50, 0);
  auto store = ResidualStore::warm(lo, hi, h, ResidualPooling::pooled, 1);
  const std::size_t s = 7;
  for (std::size_t u = 1; u <= (50 + s - 1) / s; ++u) {
    std::vector<double> nl(s, -1.0 * static_cast<double>(u)), nh(s, -2.0);
    store.update(nl, nh, std::vector<std::size_t>(s, 0));
    CHECK(store.lo(0).size() == 50);
    CHECK(store.hi(0).size() == 50);
    const auto v = store.lo(0).values();
    // the oldest 50 - u*s training scores remain, in order
    const std::size_t kept = u * s >= 50 ? 0 : 50 - u * s;
    for (std::size_t i = 0; i < kept; ++i) CHECK(v[i] == static_cast<double>(u * s + i));
    CHECK(v.back() == -1.0 * static_cast<double>(u));
  }
  for (double v : store.lo(0).values()) CHECK(v < 0.0);

  const std::vector<std::size_t> per{0, 1, 0, 1};
  const auto split = ResidualStore::warm(std::vector<double>{1, 2, 3, 4}, std::vector<double>{5, 6, 7, 8}, per,
                                         ResidualPooling::per_horizon, 2);
  CHECK(split.pools() == 2);
  CHECK(split.lo(0).values() == std::vector<double>{1, 3});
  CHECK(split.hi(1).values() == std::vector<double>{6, 8});
}

TEST_CASE("split CP half-widths") {
  auto model = std::make_shared<ShapeModel>(0.0, std::vector<double>{1, 1}, 1);
  CHECK(SplitConformal::from_residuals(model, std::vector<double>{1, -1, 1}, 0.1, 2).half_width() == 1.0);
  std::vector<double> r(19);
  std::iota(r.begin(), r.end(), 1.0);
  CHECK(SplitConformal::from_residuals(model, r, 0.1, 2).half_width() == 18.0);
  const auto cp = SplitConformal::from_residuals(model, r, 0.1, 2);
  const auto a = cp.interval(std::vector<double>{0.3});
  const auto b = cp.interval(std::vector<double>{-7.0});
  CHECK(a.widths() == b.widths());
  CHECK(a.widths()[0] == a.widths()[1]);
  CHECK(code_of([&] { SplitConformal::from_residuals(model, std::vector<double>{}, 0.1, 2); }) ==
        ErrorCode::EmptyResidualSet);
  CHECK(code_of([&] { SplitConformal::build(model, WindowedDataset(), 0.1, 2); }) == ErrorCode::EmptyResidualSet);
}

TEST_CASE("CQR shifts both bounds by the same correction") {
  auto model = std::make_shared<ShapeModel>(3.5, std::vector<double>{1.5}, 1);
  const auto cqr = ConformalizedQr::from_scores(model, std::vector<double>(10, 0.5), 0.1, 1);
  const auto iv = cqr.interval(std::vector<double>{0});
  CHECK(iv.lower[0] == 1.5);
  CHECK(iv.upper[0] == 5.5);
  // every calibration point inside with margin >= 0.4: the interval shrinks
  std::vector<double> inside{-0.4, -0.6, -0.9, -1.2, -0.5};
  const auto shrink = ConformalizedQr::from_scores(model, inside, 0.1, 1);
  CHECK(shrink.correction() <= -0.4);
  CHECK(shrink.interval(std::vector<double>{0}).widths()[0] < 3.0);
}

TEST_CASE("EnCQR interval structure") {
  EncqrOptions opts;
  opts.batch = 1;
  opts.side_level = SideLevel::full_alpha;
  const auto p = EncqrPredictor::from_scores(std::vector<double>(9, 0.5), std::vector<double>(9, 0.3), opts);
  CHECK(p.omega_lo() == 0.5);
  CHECK(p.omega_hi() == 0.3);
  const auto iv = p.conformalize({{2.0}, {3.0}, {5.0}});
  CHECK(iv.lower[0] == 1.5);
  CHECK(iv.upper[0] == doctest::Approx(5.3));

  const auto perfect = EncqrPredictor::from_scores(std::vector<double>(9, 0.0), std::vector<double>(9, 0.0), opts);
  const auto same = perfect.conformalize({{2.0, 4.0}, {3.0, 4.0}, {5.0, 4.0}});
  CHECK(same.lower == std::vector<double>{2.0, 4.0});
  CHECK(same.upper == std::vector<double>{5.0, 4.0});

  const auto over = EncqrPredictor::from_scores(std::vector<double>{-1, -0.5, -0.7}, std::vector<double>{-0.2, -0.4, -0.3},
                                                opts);
  const auto inner = over.conformalize({{2.0}, {3.0}, {5.0}});
  CHECK(inner.lower[0] > 2.0);
  CHECK(inner.upper[0] < 5.0);
}

TEST_CASE("EnCQR side level") {
  EncqrOptions opts;
  opts.alpha = 0.2;
  CHECK(EncqrPredictor::from_scores(std::vector<double>{0}, std::vector<double>{0}, opts).side_level() ==
        doctest::Approx(0.9));
  opts.side_level = SideLevel::full_alpha;
  CHECK(EncqrPredictor::from_scores(std::vector<double>{0}, std::vector<double>{0}, opts).side_level() ==
        doctest::Approx(0.8));
  CHECK(parse_side_level("half_alpha") == SideLevel::half_alpha);
  CHECK_THROWS_AS(parse_side_level("quarter"), Error);
}

TEST_CASE("decreasing alpha never shrinks the corrections") {
  std::mt19937_64 rng(32);
  std::normal_distribution<double> n01;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> lo(101), hi(101);
    for (std::size_t i = 0; i < lo.size(); ++i) lo[i] = n01(rng), hi[i] = n01(rng);
    for (auto side : {SideLevel::half_alpha, SideLevel::full_alpha}) {
      double prev_lo = -1e300, prev_hi = -1e300;
      for (double alpha = 0.5; alpha > 0.005; alpha -= 0.01) {
        EncqrOptions opts;
        opts.alpha = alpha;
        opts.side_level = side;
        const auto p = EncqrPredictor::from_scores(lo, hi, opts);
        CHECK(p.omega_lo() >= prev_lo);
        CHECK(p.omega_hi() >= prev_hi);
        prev_lo = p.omega_lo();
        prev_hi = p.omega_hi();
      }
    }
  }
}

TEST_CASE("EnCQR warm-up on the 30-step fixture matches hand-computed scores") {
  std::vector<double> y(30);
  for (std::size_t i = 0; i < 30; ++i) y[i] = 0.1 * static_cast<double>((i * 7) % 11);
  const auto series = TimeSeries::regular(0, 3600, y);
  const auto plan = plan_subsets(30, 3, 7, 3);
  // member b predicts (b - 1, b, b + 1)
  RegressorFactory factory = [&](const WindowedDataset& d, std::uint64_t) -> std::shared_ptr<const QuantileModel> {
    const double b = static_cast<double>(d.origins()[0] / plan.subset_length());
    return std::make_shared<ShapeModel>(b, std::vector<double>(3, 1.0), d.input_size());
  };
  auto ens = std::make_shared<const EnsembleModel>(fit_ensemble(series, plan, factory));
  const auto loo = loo_quantile_estimates(*ens, series, 3);
  EncqrOptions opts;
  opts.batch = 3;
  const EncqrPredictor p(ens, loo, opts);
  REQUIRE(p.store().lo(0).size() == 9);
  const std::vector<std::size_t> steps{7, 8, 9, 17, 18, 19, 27, 28, 29};
  const double loo_center[] = {1.5, 1.5, 1.5, 1.0, 1.0, 1.0, 0.5, 0.5, 0.5};
  const auto lo = p.store().lo(0).values();
  const auto hi = p.store().hi(0).values();
  for (std::size_t k = 0; k < 9; ++k) {
    CHECK(lo[k] == doctest::Approx((loo_center[k] - 1.0) - y[steps[k]]));
    CHECK(hi[k] == doctest::Approx(y[steps[k]] - (loo_center[k] + 1.0)));
  }
}

TEST_CASE("EnCQR batch widths vary with the raw interval; EnbPI widths do not") {
  const std::vector<double> half{0.1, 0.4, 0.2, 0.8};
  const auto ens = shape_ensemble(half);
  std::vector<double> lo(40), mid(40), hi(40), y(40);
  std::mt19937_64 rng(33);
  std::normal_distribution<double> n01;
  for (std::size_t i = 0; i < 40; ++i) {
    mid[i] = 1.0, lo[i] = 0.5, hi[i] = 1.5;
    y[i] = 1.0 + n01(rng);
  }
  auto loo = fake_loo(lo, mid, hi, y);
  EncqrOptions opts;
  opts.batch = 4;
  EncqrPredictor encqr(ens, loo, opts);
  EnbpiPredictor enbpi(ens, loo, opts);
  const std::vector<double> input(2, 0.0);
  for (int batch = 0; batch < 5; ++batch) {
    const auto a = encqr.predict(input);
    const auto b = enbpi.predict(input);
    const auto wa = a.widths();
    const auto wb = b.widths();
    for (std::size_t t = 1; t < 4; ++t) {
      CHECK(wb[t] == wb[0]);
      // the conformal offsets are batch-constant, so width differences equal raw differences
      CHECK(wa[t] - wa[0] == doctest::Approx(2 * half[t] - 2 * half[0]));
    }
    std::vector<double> obs{1.0 + n01(rng), 1.0 + n01(rng), 1.0 + n01(rng), 1.0 + n01(rng)};
    encqr.observe(obs);
    enbpi.observe(obs);
  }
}

TEST_CASE("EnbPI half-width and saturation") {
  const auto ens = shape_ensemble({0.5});
  std::vector<double> y(9);
  std::iota(y.begin(), y.end(), 1.0);
  auto loo = fake_loo(std::vector<double>(9, 0), std::vector<double>(9, 0), std::vector<double>(9, 0), y);
  SequentialOptions opts;
  opts.batch = 1;
  EnbpiPredictor p(ens, loo, opts);
  CHECK(p.half_width() == 9.0);
  const std::vector<double> input(2, 0.0);
  for (int i = 0; i < 20; ++i) {
    p.predict(input);
    p.observe(std::vector<double>{1.0 + 0.25});  // center is 1.0, residual 0.25
  }
  CHECK(p.half_width() == 0.25);
}

TEST_CASE("sequential protocol is enforced") {
  const auto ens = shape_ensemble({0.5, 0.5});
  auto loo = fake_loo({0, 0, 0}, {1, 1, 1}, {2, 2, 2}, {1, 1, 1});
  EncqrOptions opts;
  opts.batch = 2;
  EncqrPredictor p(ens, loo, opts);
  const std::vector<double> input(2, 0.0);
  CHECK(code_of([&] { p.observe(std::vector<double>{1, 1}); }) == ErrorCode::ProtocolError);
  p.predict(input);
  CHECK(code_of([&] { p.predict(input); }) == ErrorCode::ProtocolError);
  CHECK(code_of([&] { p.observe(std::vector<double>{1}); }) == ErrorCode::BatchSizeMismatch);
  p.observe(std::vector<double>{1, 1});
  CHECK(p.store().lo(0).size() == 3);

  RawQuantileIntervals raw(ens, 0.1, 3);
  CHECK(code_of([&] { raw.predict(input); }) == ErrorCode::BatchSizeMismatch);
}

TEST_CASE("crossed conformalized bounds are repaired and counted") {
  const auto ens = shape_ensemble({0.1});
  // strongly negative scores push the bounds past each other
  auto loo = fake_loo(std::vector<double>(5, 0), std::vector<double>(5, 0), std::vector<double>(5, 0),
                      std::vector<double>(5, 0));
  loo.lo.assign(5, -5.0);
  EncqrOptions opts;
  opts.batch = 1;
  EncqrPredictor p(ens, loo, opts);
  const auto iv = p.predict(std::vector<double>(2, 0.0));
  CHECK(iv.lower[0] <= iv.upper[0]);
  CHECK(p.swapped_steps() == 1);
}

TEST_CASE("split CP and CQR cover exchangeable data") {
  const auto train = gen_regression_pairs(1000, 41);
  const auto cal = gen_regression_pairs(500, 42);
  const auto test = gen_regression_pairs(2000, 43);
  RegressorSpec spec;
  spec.forest.min_samples_leaf = 5;
  const auto model = make_regressor_factory(spec, QuantileLevels::from_alpha(0.1))(train, 1);
  const auto cp = SplitConformal::build(model, cal, 0.1, 1);
  const auto cqr = ConformalizedQr::build(model, cal, 0.1, 1);
  std::size_t cov_cp = 0, cov_cqr = 0;
  for (std::size_t k = 0; k < test.size(); ++k) {
    const double y = test.target(k)[0];
    const auto a = cp.interval(test.input(k));
    const auto b = cqr.interval(test.input(k));
    cov_cp += (a.lower[0] <= y && y <= a.upper[0]);
    cov_cqr += (b.lower[0] <= y && y <= b.upper[0]);
  }
  const double tol = 2 * std::sqrt(0.1 * 0.9 / 2000.0);
  CHECK(static_cast<double>(cov_cp) / 2000.0 >= 0.9 - tol);
  CHECK(static_cast<double>(cov_cqr) / 2000.0 >= 0.9 - tol);
}

TEST_CASE("method names") {
  for (Method m : {Method::encqr, Method::enbpi, Method::cqr, Method::split_cp, Method::raw_qr}) {
    CHECK(parse_method(to_string(m)) == m);
  }
  CHECK_THROWS_AS(parse_method("bayes"), Error);
  CHECK(parse_residual_pooling("per_horizon") == ResidualPooling::per_horizon);
}

}  // TEST_SUITE
