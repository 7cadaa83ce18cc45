#include "encqr/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <future>
#include <set>
#include <sstream>

#include <json.hpp>

#include "encqr/ensemble.hpp"

namespace encqr {

using nlohmann::json;

namespace {

// Reads fields from one JSON object and rejects keys nobody asked for.
class ObjectReader {
 public:
  ObjectReader(const json& object, std::string path) : object_(object), path_(std::move(path)) {
    if (!object_.is_object()) fail(ErrorCode::ConfigError, where() + " must be an object");
  }

  template <class T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    auto it = object_.find(key);
    if (it == object_.end() || it->is_null()) return;
    try {
      out = it->get<T>();
    } catch (const json::exception&) {
      fail(ErrorCode::ConfigError, where(key) + " has the wrong type");
    }
  }

  template <class T>
  void read_optional(const char* key, std::optional<T>& out) {
    seen_.insert(key);
    auto it = object_.find(key);
    if (it == object_.end() || it->is_null()) return;
    T value{};
    read(key, value);
    out = value;
  }

  void read_size(const char* key, std::size_t& out) {
    seen_.insert(key);
    auto it = object_.find(key);
    if (it == object_.end() || it->is_null()) return;
    if (!it->is_number_integer() || it->get<std::int64_t>() < 0) {
      fail(ErrorCode::ConfigError, where(key) + " must be a nonnegative integer");
    }
    out = it->get<std::size_t>();
  }

  void read_seed(const char* key, std::uint64_t& out) {
    std::size_t v = out;
    read_size(key, v);
    out = v;
  }

  void read_timestamp(const char* key, std::optional<std::int64_t>& out) {
    seen_.insert(key);
    auto it = object_.find(key);
    if (it == object_.end() || it->is_null()) return;
    try {
      out = it->is_string() ? parse_timestamp(it->get<std::string>()) : it->get<std::int64_t>();
    } catch (const std::exception& e) {
      fail(ErrorCode::ConfigError, where(key) + ": " + e.what());
    }
  }

  template <class Parse>
  void read_enum(const char* key, Parse parse) {
    std::string name;
    read(key, name);
    if (name.empty()) return;
    try {
      parse(name);
    } catch (const Error& e) {
      fail(ErrorCode::ConfigError, where(key) + ": " + e.message());
    }
  }

  std::optional<ObjectReader> child(const char* key) {
    seen_.insert(key);
    auto it = object_.find(key);
    if (it == object_.end() || it->is_null()) return std::nullopt;
    return ObjectReader(*it, where(key));
  }

  void finish() const {
    for (const auto& item : object_.items()) {
      if (!seen_.count(item.key())) fail(ErrorCode::ConfigError, "unknown config key '" + where(item.key()) + "'");
    }
  }

 private:
  std::string where(const std::string& key = {}) const {
    if (key.empty()) return path_.empty() ? "config" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

  const json& object_;
  std::string path_;
  std::set<std::string> seen_;
};

void apply_override(json& root, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    fail(ErrorCode::ConfigError, "override '" + assignment + "' must look like key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  json* node = &root;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) fail(ErrorCode::ConfigError, "override key '" + key + "' has an empty component");
    if (!node->is_object()) fail(ErrorCode::ConfigError, "override key '" + key + "' descends into a non-object");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

ExperimentConfig parse_config(const json& root) {
  ExperimentConfig c;
  ObjectReader r(root, "");

  if (auto data = r.child("data")) {
    data->read_enum("source", [&](const std::string& s) {
      if (s == "synthetic") {
        c.data.source = DataSource::synthetic;
      } else if (s == "csv") {
        c.data.source = DataSource::csv;
      } else {
        fail(ErrorCode::ConfigError, "unknown data source '" + s + "' (expected synthetic or csv)");
      }
    });
    std::string path;
    data->read("path", path);
    c.data.path = path;
    data->read("timestamp_column", c.data.columns.timestamp);
    data->read("target_column", c.data.columns.target);
    data->read("exogenous_columns", c.data.columns.exogenous);
    data->read_enum("kind", [&](const std::string& s) { c.data.kind = parse_synthetic_kind(s); });
    data->read_size("length", c.data.length);
    data->read_seed("seed", c.data.seed);
    auto& p = c.data.params;
    data->read("start", p.start);
    data->read("resolution", p.resolution);
    data->read("night_sigma", p.night_sigma);
    data->read("peak_sigma", p.peak_sigma);
    data->read("base_level", p.base_level);
    data->read("peak_level", p.peak_level);
    data->read("ar_coefficient", p.ar_coefficient);
    data->read("ar_sigma", p.ar_sigma);
    data->read("ar_mean", p.ar_mean);
    data->finish();
  }

  if (auto split = r.child("split")) {
    split->read("train_fraction", c.split.train_fraction);
    split->read("val_fraction", c.split.val_fraction);
    split->read("test_fraction", c.split.test_fraction);
    split->read_timestamp("val_start", c.split.val_start);
    split->read_timestamp("test_start", c.split.test_start);
    split->read("interleave_months", c.split.interleave_months);
    split->finish();
  }

  r.read_enum("method", [&](const std::string& s) { c.method = parse_method(s); });

  if (auto reg = r.child("regressor")) {
    reg->read_enum("kind", [&](const std::string& s) { c.regressor.kind = parse_regressor_kind(s); });
    auto& lin = c.regressor.linear;
    reg->read("learning_rate", lin.learning_rate);
    reg->read_size("max_epochs", lin.max_epochs);
    reg->read("l2", lin.l2);
    reg->read_size("patience", lin.patience);
    reg->read_enum("init", [&](const std::string& s) {
      if (s == "quantile") {
        lin.init = LinearInit::quantile;
      } else if (s == "zero") {
        lin.init = LinearInit::zero;
      } else {
        fail(ErrorCode::ConfigError, "unknown init '" + s + "' (expected quantile or zero)");
      }
    });
    auto& forest = c.regressor.forest;
    reg->read_size("n_trees", forest.n_trees);
    reg->read_size("min_samples_leaf", forest.min_samples_leaf);
    reg->read("max_features", forest.max_features);
    reg->read("bootstrap", forest.bootstrap);
    reg->finish();
  }

  r.read("alpha", c.alpha);
  r.read_size("B", c.members);
  r.read_size("s", c.batch);
  r.read_size("n_x", c.n_x);
  r.read_size("n_y", c.n_y);
  r.read_optional("q_lo", c.q_lo);
  r.read_optional("q_hi", c.q_hi);
  r.read_enum("aggregation", [&](const std::string& s) { c.aggregation.kind = Aggregation::parse(s).kind; });
  r.read("trim_fraction", c.aggregation.trim_fraction);
  r.read("eta", c.eta);
  r.read_seed("seed", c.seed);
  r.read_enum("residual_pooling", [&](const std::string& s) { c.pooling = parse_residual_pooling(s); });
  r.read_enum("side_level", [&](const std::string& s) { c.side_level = parse_side_level(s); });
  r.read_size("train_stride", c.train_stride);
  r.finish();
  return c;
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

bool is_ensemble_method(Method m) { return m == Method::encqr || m == Method::enbpi || m == Method::raw_qr; }

// Windows whose N_y targets all lie inside one range of `partition`.
WindowedDataset partition_windows(const TimeSeries& series, const Partition& partition, std::size_t n_x,
                                  std::size_t n_y, std::size_t stride) {
  std::vector<std::size_t> origins;
  for (const auto& range : partition.ranges) {
    for (std::size_t o = std::max(range.begin, n_x); o + n_y <= range.end; o += stride) origins.push_back(o);
  }
  return make_windows_at(series, n_x, n_y, origins);
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

QuantileLevels ExperimentConfig::levels() const {
  return QuantileLevels::nominal(q_lo.value_or(alpha / 2.0), q_hi.value_or(1.0 - alpha / 2.0));
}

void ExperimentConfig::validate() const {
  auto bad = [](const std::string& msg) { fail(ErrorCode::ConfigError, msg); };
  if (!(alpha > 0.0 && alpha < 1.0)) bad("alpha must lie in (0, 1)");
  if (members < 2) bad("B must be at least 2");
  if (n_x == 0 || n_y == 0) bad("n_x and n_y must be positive");
  if (batch == 0 || batch > n_y) bad("s must lie in [1, n_y]");
  if (train_stride == 0) bad("train_stride must be positive");
  if (eta < 0.0) bad("eta must be nonnegative");
  try {
    levels().validate();
  } catch (const Error& e) {
    bad(std::string("levels: ") + e.message());
  }
  if (aggregation.kind == AggregationKind::trimmed_mean &&
      !(aggregation.trim_fraction >= 0.0 && aggregation.trim_fraction < 0.5)) {
    bad("trim_fraction must lie in [0, 0.5)");
  }
  if (regressor.kind == RegressorKind::quantile_forest) {
    if (regressor.forest.n_trees == 0) bad("regressor.n_trees must be positive");
    if (regressor.forest.min_samples_leaf == 0) bad("regressor.min_samples_leaf must be positive");
    if (!(regressor.forest.max_features > 0.0 && regressor.forest.max_features <= 1.0)) {
      bad("regressor.max_features must lie in (0, 1]");
    }
  } else {
    if (!(regressor.linear.learning_rate > 0.0)) bad("regressor.learning_rate must be positive");
    if (regressor.linear.l2 < 0.0) bad("regressor.l2 must be nonnegative");
  }
  if (data.source == DataSource::csv) {
    if (data.path.empty()) bad("data.path is required for csv data");
  } else {
    if (data.length < 240) bad("data.length must be at least 240");
    if (data.params.resolution <= 0) bad("data.resolution must be positive");
  }
  try {
    split.validate();
  } catch (const Error& e) {
    bad(std::string("split: ") + e.message());
  }
  if ((method == Method::split_cp || method == Method::cqr) && !split.interleave_months && !split.val_start &&
      split.val_fraction == 0.0) {
    bad(std::string(to_string(method)) + " needs a validation partition for calibration");
  }
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) { return from_json(text, {}); }

ExperimentConfig ExperimentConfig::from_json(const std::string& text, std::span<const std::string> overrides) {
  json root = json::parse(text, nullptr, false, true);
  if (root.is_discarded()) fail(ErrorCode::ConfigError, "config is not valid JSON");
  if (root.is_null()) root = json::object();
  for (const auto& o : overrides) apply_override(root, o);
  ExperimentConfig c = parse_config(root);
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path, std::span<const std::string> overrides) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::ConfigError, "cannot read config '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return from_json(buf.str(), overrides);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.message());
  }
}

std::string ExperimentConfig::to_json() const {
  nlohmann::ordered_json j;
  auto& d = j["data"];
  if (data.source == DataSource::csv) {
    d["source"] = "csv";
    d["path"] = data.path.string();
    d["timestamp_column"] = data.columns.timestamp;
    d["target_column"] = data.columns.target;
    d["exogenous_columns"] = data.columns.exogenous;
  } else {
    d["source"] = "synthetic";
    d["kind"] = std::string(to_string(data.kind));
    d["length"] = data.length;
    d["seed"] = data.seed;
    d["start"] = data.params.start;
    d["resolution"] = data.params.resolution;
    d["night_sigma"] = data.params.night_sigma;
    d["peak_sigma"] = data.params.peak_sigma;
    d["base_level"] = data.params.base_level;
    d["peak_level"] = data.params.peak_level;
    d["ar_coefficient"] = data.params.ar_coefficient;
    d["ar_sigma"] = data.params.ar_sigma;
    d["ar_mean"] = data.params.ar_mean;
  }
  auto& s = j["split"];
  s["train_fraction"] = split.train_fraction;
  s["val_fraction"] = split.val_fraction;
  s["test_fraction"] = split.test_fraction;
  if (split.val_start) s["val_start"] = *split.val_start;
  if (split.test_start) s["test_start"] = *split.test_start;
  s["interleave_months"] = split.interleave_months;
  j["method"] = std::string(to_string(method));
  auto& r = j["regressor"];
  r["kind"] = std::string(to_string(regressor.kind));
  if (regressor.kind == RegressorKind::linear_qr) {
    r["learning_rate"] = regressor.linear.learning_rate;
    r["max_epochs"] = regressor.linear.max_epochs;
    r["l2"] = regressor.linear.l2;
    r["patience"] = regressor.linear.patience;
    r["init"] = regressor.linear.init == LinearInit::quantile ? "quantile" : "zero";
  } else {
    r["n_trees"] = regressor.forest.n_trees;
    r["min_samples_leaf"] = regressor.forest.min_samples_leaf;
    r["max_features"] = regressor.forest.max_features;
    r["bootstrap"] = regressor.forest.bootstrap;
  }
  j["alpha"] = alpha;
  j["B"] = members;
  j["s"] = batch;
  j["n_x"] = n_x;
  j["n_y"] = n_y;
  const auto lv = levels();
  j["q_lo"] = lv.lo;
  j["q_hi"] = lv.hi;
  j["aggregation"] = std::string(aggregation.name());
  j["trim_fraction"] = aggregation.trim_fraction;
  j["eta"] = eta;
  j["seed"] = seed;
  j["residual_pooling"] = std::string(to_string(pooling));
  j["side_level"] = std::string(to_string(side_level));
  j["train_stride"] = train_stride;
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Sequential loop

SeriesFeed::SeriesFeed(const TimeSeries& series, std::size_t n_x, std::size_t batch, std::vector<std::size_t> origins)
    : series_(&series), n_x_(n_x), batch_(batch), origins_(std::move(origins)) {
  for (std::size_t o : origins_) {
    if (o < n_x_ || o + batch_ > series.size()) {
      fail(ErrorCode::InvalidWindow, "batch at " + std::to_string(o) + " does not fit the series");
    }
  }
}

std::vector<double> SeriesFeed::inputs(std::size_t k) { return window_input(*series_, n_x_, origins_.at(k)); }

std::vector<double> SeriesFeed::reveal(std::size_t k) {
  auto y = series_->target().subspan(origins_.at(k), batch_);
  return {y.begin(), y.end()};
}

std::vector<std::size_t> batch_origins(const Partition& partition, std::size_t batch, std::size_t n_x) {
  std::vector<std::size_t> out;
  for (const auto& range : partition.ranges) {
    for (std::size_t o = std::max(range.begin, n_x); o + batch <= range.end; o += batch) out.push_back(o);
  }
  return out;
}

std::vector<TraceRow> run_sequential(IntervalMethod& method, ObservationFeed& feed, const TimeSeries& series) {
  std::vector<TraceRow> trace;
  const std::size_t s = method.batch_size();
  for (std::size_t k = 0; k < feed.batches(); ++k) {
    const std::size_t origin = feed.origin(k);
    const auto input = feed.inputs(k);
    const IntervalBatch batch = method.predict(input);
    const QuantileForecast raw = method.last_forecast();
    const auto y = feed.reveal(k);
    if (y.size() != s) fail(ErrorCode::BatchSizeMismatch, "feed revealed a batch of the wrong size");
    method.observe(y);
    for (std::size_t h = 0; h < s; ++h) {
      TraceRow row;
      row.step = origin + h;
      row.timestamp = series.timestamps()[origin + h];
      row.y = y[h];
      row.lower = batch.lower[h];
      row.center = batch.center[h];
      row.upper = batch.upper[h];
      row.covered = row.lower <= row.y && row.y <= row.upper;
      row.raw_lo = raw.lo[h];
      row.raw_hi = raw.hi[h];
      trace.push_back(row);
    }
  }
  return trace;
}

// ---------------------------------------------------------------------------
// Experiment

ExperimentResult run_experiment(const ExperimentConfig& config) {
  config.validate();
  const QuantileLevels levels = config.levels();

  // Data
  TimeSeries raw;
  std::optional<SyntheticSeries> synthetic;
  if (config.data.source == DataSource::csv) {
    raw = load_csv_series(config.data.path, config.data.columns);
  } else {
    synthetic = gen_synthetic(config.data.kind, config.data.length, config.data.seed, config.data.params);
    raw = synthetic->series;
  }
  const SplitResult split = chronological_split(raw, config.split, config.n_x + config.n_y);
  const IndexRange train_range = split.train.ranges.front();
  const Normalized norm = minmax_normalize(raw, train_range);
  const TimeSeries& series = norm.series;
  const TimeSeries train = series.slice(train_range);

  // Model and interval method
  std::unique_ptr<IntervalMethod> method;
  if (is_ensemble_method(config.method)) {
    std::shared_ptr<const WindowedDataset> validation;
    if (config.regressor.kind == RegressorKind::linear_qr && !split.val.empty()) {
      auto val = partition_windows(series, split.val, config.n_x, config.n_y, config.batch);
      if (!val.empty()) validation = std::make_shared<const WindowedDataset>(std::move(val));
    }
    const auto factory = make_regressor_factory(config.regressor, levels, validation);
    const SubsetPlan plan = plan_subsets(train.size(), config.members, config.n_x, config.n_y);
    EnsembleFitOptions fit;
    fit.aggregation = config.aggregation;
    fit.seed = config.seed;
    fit.train_stride = config.train_stride;
    auto ensemble = std::make_shared<const EnsembleModel>(fit_ensemble(train, plan, factory, fit));

    if (config.method == Method::raw_qr) {
      method = std::make_unique<RawQuantileIntervals>(ensemble, config.alpha, config.batch);
    } else {
      const LooEstimates loo = loo_quantile_estimates(*ensemble, train, config.batch);
      if (config.method == Method::encqr) {
        EncqrOptions opts;
        opts.alpha = config.alpha;
        opts.batch = config.batch;
        opts.pooling = config.pooling;
        opts.side_level = config.side_level;
        method = std::make_unique<EncqrPredictor>(ensemble, loo, opts);
      } else {
        SequentialOptions opts;
        opts.alpha = config.alpha;
        opts.batch = config.batch;
        opts.pooling = config.pooling;
        method = std::make_unique<EnbpiPredictor>(ensemble, loo, opts);
      }
    }
  } else {
    const auto factory = make_regressor_factory(config.regressor, levels);
    const auto pairs = make_sliding_windows(train, config.n_x, config.n_y, config.train_stride);
    auto model = factory(pairs, member_seed(config.seed, 0));
    const auto calibration = partition_windows(series, split.val, config.n_x, config.n_y, config.batch);
    if (calibration.empty()) fail(ErrorCode::PartitionTooSmall, "validation partition holds no calibration window");
    if (config.method == Method::split_cp) {
      method = std::make_unique<SplitConformal>(SplitConformal::build(model, calibration, config.alpha, config.batch));
    } else {
      method =
          std::make_unique<ConformalizedQr>(ConformalizedQr::build(model, calibration, config.alpha, config.batch));
    }
  }

  // Test loop
  SeriesFeed feed(series, config.n_x, config.batch, batch_origins(split.test, config.batch, config.n_x));
  if (feed.batches() == 0) fail(ErrorCode::PartitionTooSmall, "test partition holds no complete batch");
  ExperimentResult result;
  result.trace = run_sequential(*method, feed, series);

  std::vector<double> y, lower, upper;
  std::vector<std::int64_t> ts;
  for (const auto& row : result.trace) {
    y.push_back(row.y);
    lower.push_back(row.lower);
    upper.push_back(row.upper);
    ts.push_back(row.timestamp);
  }
  result.report = MetricReport::compute(std::string(to_string(config.method)), y, lower, upper, ts, config.alpha,
                                        config.eta);
  result.report.interval_swaps = method->swapped_steps();

  if (synthetic) {
    for (const auto& row : result.trace) {
      result.true_lo.push_back(norm.params.normalize_target(synthetic->true_lo[row.step]));
      result.true_hi.push_back(norm.params.normalize_target(synthetic->true_hi[row.step]));
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Output

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::IoError, "cannot write '" + tmp.string() + "'");
    out << contents;
    out.flush();
    if (!out) fail(ErrorCode::IoError, "failed writing '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorCode::IoError, "cannot rename '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
}

namespace {

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorCode::IoError, "cannot create '" + dir.string() + "': " + ec.message());
}

}  // namespace

void emit_report(const MetricReport& report, std::span<const TraceRow> trace, const std::filesystem::path& out_dir) {
  ensure_dir(out_dir);
  write_file_atomic(out_dir / "metrics.json", report.to_json());

  std::string intervals = "step,timestamp,y,lower,center,upper,covered\n";
  for (const auto& row : trace) {
    intervals += std::to_string(row.step) + ',' + format_iso8601(row.timestamp) + ',' + format_double(row.y) + ',' +
                 format_double(row.lower) + ',' + format_double(row.center) + ',' + format_double(row.upper) + ',' +
                 (row.covered ? "1" : "0") + '\n';
  }
  write_file_atomic(out_dir / "intervals.csv", intervals);

  std::string per_hour = "hour,mean_width,coverage\n";
  for (std::size_t h = 0; h < report.per_hour_width.size(); ++h) {
    per_hour += std::to_string(h) + ',' + format_double(report.per_hour_width[h]) + ',' +
                format_double(report.per_hour_coverage[h]) + '\n';
  }
  write_file_atomic(out_dir / "per_hour.csv", per_hour);
}

std::vector<MetricReport> compare_methods(const ExperimentConfig& config, std::span<const Method> methods,
                                          const std::filesystem::path& out_dir) {
  if (methods.empty()) fail(ErrorCode::ConfigError, "no methods to compare");
  std::vector<std::future<ExperimentResult>> runs;
  for (Method m : methods) {
    ExperimentConfig c = config;
    c.method = m;
    c.validate();
    runs.push_back(std::async(std::launch::async, [c] { return run_experiment(c); }));
  }
  std::vector<MetricReport> reports;
  std::string table = MetricReport::csv_header() + "\n";
  nlohmann::ordered_json combined = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const ExperimentResult r = runs[i].get();
    const std::string name(to_string(methods[i]));
    emit_report(r.report, r.trace, out_dir / name);
    table += r.report.csv_row() + "\n";
    combined[name] = nlohmann::ordered_json::parse(r.report.to_json());
    reports.push_back(r.report);
  }
  ensure_dir(out_dir);
  write_file_atomic(out_dir / "comparison.csv", table);
  write_file_atomic(out_dir / "comparison.json", combined.dump(2) + "\n");
  return reports;
}

}  // namespace encqr
