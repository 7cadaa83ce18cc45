#include <doctest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "encqr/cli.hpp"
#include "encqr/experiment.hpp"

using namespace encqr;
namespace fs = std::filesystem;

namespace {

// Small but complete: 1,200 hourly steps, 24 -> 12 windows.
const char* kSmall = R"({
  "data": {"source": "synthetic", "kind": "heteroscedastic_daily", "length": 1200, "seed": 3},
  "split": {"train_fraction": 0.6, "val_fraction": 0.2, "test_fraction": 0.2},
  "regressor": {"kind": "quantile_forest", "n_trees": 5},
  "n_x": 24, "n_y": 12, "s": 12, "seed": 11
})";

ExperimentConfig small(std::vector<std::string> overrides = {}) { return ExperimentConfig::from_json(kSmall, overrides); }

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an encqr::Error");
  return ErrorCode::InvalidArgument;
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("encqr_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "encqr");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return cli::main(static_cast<int>(argv.size()), argv.data());
}

// Records every data access of the wrapped feed.
class LoggingFeed final : public ObservationFeed {
 public:
  LoggingFeed(SeriesFeed inner, std::size_t n_x, std::size_t first_test, std::vector<std::string>& log)
      : inner_(std::move(inner)), n_x_(n_x), first_test_(first_test), log_(log) {}
  std::size_t batches() const override { return inner_.batches(); }
  std::size_t origin(std::size_t k) const override { return inner_.origin(k); }
  std::vector<double> inputs(std::size_t k) override {
    log_.push_back("inputs " + std::to_string(k));
    for (std::size_t i = origin(k) - n_x_; i < origin(k); ++i) {
      if (i >= first_test_ && !revealed_.count(i)) unrevealed_reads++;
    }
    return inner_.inputs(k);
  }
  std::vector<double> reveal(std::size_t k) override {
    log_.push_back("reveal " + std::to_string(k));
    for (std::size_t h = 0; h < 4; ++h) revealed_.insert(origin(k) + h);
    return inner_.reveal(k);
  }
  std::size_t unrevealed_reads = 0;

 private:
  SeriesFeed inner_;
  std::size_t n_x_;
  std::size_t first_test_;
  std::vector<std::string>& log_;
  std::set<std::size_t> revealed_;
};

// Fixed-width intervals that log predict/observe calls.
class LoggingMethod final : public IntervalMethod {
 public:
  explicit LoggingMethod(std::vector<std::string>& log) : IntervalMethod(0.1, 4), log_(log) {}
  Method method() const override { return Method::raw_qr; }

 protected:
  QuantileForecast forecast(std::span<const double>) const override {
    log_.push_back("predict");
    return {std::vector<double>(4, -1), std::vector<double>(4, 0), std::vector<double>(4, 1)};
  }
  IntervalBatch intervals(const QuantileForecast& b) const override { return {b.lo, b.mid, b.hi, alpha()}; }
  void update(const QuantileForecast&, std::span<const double>) override { log_.push_back("observe"); }

 private:
  std::vector<std::string>& log_;
};

}  // namespace

TEST_SUITE("experiment") {

TEST_CASE("config defaults") {
  const auto c = ExperimentConfig::from_json("{}");
  CHECK(c.alpha == 0.1);
  CHECK(c.members == 3);
  CHECK(c.batch == 24);
  CHECK(c.n_x == 168);
  CHECK(c.n_y == 24);
  CHECK(c.levels().lo == doctest::Approx(0.05));
  CHECK(c.levels().hi == doctest::Approx(0.95));
  CHECK(c.aggregation.kind == AggregationKind::mean);
  CHECK(c.eta == 30.0);
  CHECK(c.pooling == ResidualPooling::pooled);
  CHECK(c.method == Method::encqr);
}

TEST_CASE("config validation and overrides") {
  CHECK(code_of([] { ExperimentConfig::from_json(R"({"alhpa": 0.1})"); }) == ErrorCode::ConfigError);
  CHECK(code_of([] { ExperimentConfig::from_json(R"({"alpha": "x"})"); }) == ErrorCode::ConfigError);
  CHECK(code_of([] { ExperimentConfig::from_json(R"({"s": 48})"); }) == ErrorCode::ConfigError);
  CHECK(code_of([] { ExperimentConfig::from_json(R"({"method": "bayes"})"); }) == ErrorCode::ConfigError);
  CHECK(code_of([] { ExperimentConfig::from_json("{not json"); }) == ErrorCode::ConfigError);
  CHECK(code_of([] {
          ExperimentConfig::from_json(R"({"split": {"train_fraction": 0.5, "val_fraction": 0.2, "test_fraction": 0.2}})");
        }) == ErrorCode::ConfigError);
  CHECK(code_of([] {
          ExperimentConfig::from_json(R"({"method": "cqr", "split": {"train_fraction": 0.7, "val_fraction": 0, "test_fraction": 0.3}})");
        }) == ErrorCode::ConfigError);
  CHECK(code_of([] { small({"B=1"}); }) == ErrorCode::ConfigError);
  CHECK(code_of([] { small({"q_lo=0.7"}); }) == ErrorCode::ConfigError);
  CHECK(code_of([] { small({"nonsense"}); }) == ErrorCode::ConfigError);

  const auto c = small({"method=enbpi", "alpha=0.2", "data.kind=homoscedastic_ar", "regressor.n_trees=3",
                        "residual_pooling=per_horizon", "aggregation=median"});
  CHECK(c.method == Method::enbpi);
  CHECK(c.alpha == 0.2);
  CHECK(c.data.kind == SyntheticKind::homoscedastic_ar);
  CHECK(c.regressor.forest.n_trees == 3);
  CHECK(c.pooling == ResidualPooling::per_horizon);
  CHECK(c.aggregation.kind == AggregationKind::median);
  CHECK(c.levels().lo == doctest::Approx(0.1));

  const auto again = ExperimentConfig::from_json(c.to_json());
  CHECK(again.to_json() == c.to_json());
}

TEST_CASE("sequential loop reveals targets only after prediction") {
  const auto series = TimeSeries::regular(0, 3600, std::vector<double>(100, 0.5));
  std::vector<std::string> log;
  Partition test{{{60, 100}}};
  const auto origins = batch_origins(test, 4, 8);
  CHECK(origins.size() == 10);
  LoggingFeed feed(SeriesFeed(series, 8, 4, origins), 8, 60, log);
  LoggingMethod method(log);
  const auto trace = run_sequential(method, feed, series);
  CHECK(trace.size() == 40);
  CHECK(feed.unrevealed_reads == 0);
  REQUIRE(log.size() == 40);
  for (std::size_t k = 0; k < 10; ++k) {
    CHECK(log[4 * k] == "inputs " + std::to_string(k));
    CHECK(log[4 * k + 1] == "predict");
    CHECK(log[4 * k + 2] == "reveal " + std::to_string(k));
    CHECK(log[4 * k + 3] == "observe");
  }
}

TEST_CASE("raw QR and EnCQR share quantile tracks; offsets are batch-constant") {
  const auto raw = run_experiment(small({"method=raw_qr"}));
  const auto enc = run_experiment(small({"method=encqr"}));
  REQUIRE(raw.trace.size() == enc.trace.size());
  REQUIRE(enc.report.interval_swaps == 0);
  for (std::size_t i = 0; i < raw.trace.size(); ++i) {
    CHECK(raw.trace[i].raw_lo == enc.trace[i].raw_lo);
    CHECK(raw.trace[i].raw_hi == enc.trace[i].raw_hi);
    CHECK(raw.trace[i].lower == raw.trace[i].raw_lo);
  }
  for (std::size_t b = 0; b < enc.trace.size() / 12; ++b) {
    const auto& first = enc.trace[b * 12];
    for (std::size_t h = 1; h < 12; ++h) {
      const auto& row = enc.trace[b * 12 + h];
      CHECK(row.raw_lo - row.lower == doctest::Approx(first.raw_lo - first.lower).epsilon(1e-12));
      CHECK(row.upper - row.raw_hi == doctest::Approx(first.upper - first.raw_hi).epsilon(1e-12));
    }
  }
}

TEST_CASE("split CP width is constant over the test set") {
  const auto r = run_experiment(small({"method=split_cp"}));
  const double w = r.trace.front().upper - r.trace.front().lower;
  for (const auto& row : r.trace) CHECK(row.upper - row.lower == doctest::Approx(w).epsilon(1e-12));
}

TEST_CASE("every method runs with both regressors") {
  for (const char* m : {"encqr", "enbpi", "cqr", "split_cp", "raw_qr"}) {
    for (const char* reg : {"quantile_forest", "linear_qr"}) {
      const auto r = run_experiment(small({std::string("method=") + m, std::string("regressor.kind=") + reg,
                                           "regressor.max_epochs=30", "n_x=12"}));
      CHECK(r.report.n == 240);
      CHECK(r.report.picp >= 0.0);
      CHECK(r.report.method == m);
    }
  }
  const auto per = run_experiment(small({"residual_pooling=per_horizon"}));
  CHECK(per.report.n == 240);
}

TEST_CASE("runtime errors carry their module code") {
  CHECK(code_of([] { run_experiment(small({"B=40"})); }) == ErrorCode::SubsetsTooSmall);
  CHECK(code_of([] { run_experiment(small({"data.source=csv", "data.path=/nonexistent.csv"})); }) ==
        ErrorCode::IoError);
}

TEST_CASE("reports are written atomically and consistently") {
  const auto dir = scratch("emit");
  const auto r = run_experiment(small());
  emit_report(r.report, r.trace, dir);
  CHECK(MetricReport::from_json(slurp(dir / "metrics.json")) == r.report);

  std::istringstream iv(slurp(dir / "intervals.csv"));
  std::string line;
  std::getline(iv, line);
  CHECK(line == "step,timestamp,y,lower,center,upper,covered");
  std::size_t rows = 0, covered = 0;
  while (std::getline(iv, line)) {
    ++rows;
    covered += line.back() == '1';
  }
  CHECK(rows == r.report.n);
  CHECK(static_cast<double>(covered) / static_cast<double>(rows) == r.report.picp);

  std::istringstream ph(slurp(dir / "per_hour.csv"));
  std::size_t lines = 0;
  while (std::getline(ph, line)) ++lines;
  CHECK(lines == 25);
  for (const auto& entry : fs::directory_iterator(dir)) CHECK(entry.path().extension() != ".tmp");
}

TEST_CASE("same config, byte-identical metrics") {
  const auto a = run_experiment(small());
  const auto b = run_experiment(small());
  CHECK(a.report.to_json() == b.report.to_json());
}

TEST_CASE("compare writes one table keyed by method") {
  const auto dir = scratch("compare");
  const std::vector<Method> methods{Method::encqr, Method::enbpi, Method::raw_qr};
  const auto reports = compare_methods(small(), methods, dir);
  CHECK(reports.size() == 3);
  const auto table = slurp(dir / "comparison.csv");
  CHECK(table.find("\nencqr,") != std::string::npos);
  CHECK(table.find("\nenbpi,") != std::string::npos);
  CHECK(fs::exists(dir / "raw_qr" / "metrics.json"));
  CHECK(fs::exists(dir / "comparison.json"));
}

TEST_CASE("command line exit codes") {
  const auto dir = scratch("cli");
  {
    std::ofstream(dir / "ok.json") << kSmall;
    std::ofstream(dir / "typo.json") << R"({"alpah": 0.1})";
  }
  CHECK(run_cli({"run", "--config", (dir / "ok.json").string(), "--out", (dir / "out").string()}) == 0);
  CHECK(fs::exists(dir / "out" / "metrics.json"));
  CHECK(run_cli({"run", "--config", (dir / "typo.json").string(), "--out", (dir / "x").string()}) == 1);
  CHECK(run_cli({"run", "--config", (dir / "missing.json").string()}) == 1);
  CHECK(run_cli({"run", "--config", (dir / "ok.json").string(), "--set", "B=40", "--out", (dir / "y").string()}) ==
        2);
  CHECK(run_cli({"run"}) == 1);
  CHECK(run_cli({"compare", "--config", (dir / "ok.json").string(), "--methods", "encqr,raw_qr", "--out",
                 (dir / "cmp").string()}) == 0);
  CHECK(fs::exists(dir / "cmp" / "comparison.csv"));
  CHECK(run_cli({"compare", "--config", (dir / "ok.json").string(), "--methods", "encqr,nope"}) == 1);
  CHECK(run_cli({"gen", "--kind", "homoscedastic_ar", "--out", (dir / "ar.csv").string(), "--length", "480"}) == 0);
  CHECK(load_csv_series(dir / "ar.csv", {}).size() == 480);
  CHECK(run_cli({"gen", "--kind", "weird", "--out", (dir / "w.csv").string()}) == 1);
}

}  // TEST_SUITE
