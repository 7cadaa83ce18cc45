#include "encqr/data.hpp"
#include "encqr/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <boost/math/distributions/normal.hpp>

namespace encqr {

namespace {

// Howard Hinnant's civil calendar algorithms.
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const auto yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m > 2 ? m - 3 : m + 9) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

struct CivilDate {
  std::int64_t year;
  unsigned month;
  unsigned day;
};

CivilDate civil_from_days(std::int64_t z) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const auto doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp < 10 ? mp + 3 : mp - 9;
  return {y + (m <= 2), m, d};
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) { return a / b - ((a % b != 0) && ((a < 0) != (b < 0))); }

unsigned calendar_month(std::int64_t epoch_seconds) {
  return civil_from_days(floor_div(epoch_seconds, 86400)).month;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (line[i] == ',' && !quoted) {
      out.push_back(trim(line.substr(start, i - start)));
      start = i + 1;
    }
  }
  out.push_back(trim(line.substr(start)));
  return out;
}

template <class T>
bool parse_number(std::string_view text, T& value) {
  if (text.empty()) return false;
  if (text.front() == '+') text.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  return ec == std::errc() && ptr == text.data() + text.size();
}

bool parse_fixed(std::string_view text, std::size_t pos, std::size_t len, unsigned& out) {
  if (pos + len > text.size()) return false;
  return parse_number(text.substr(pos, len), out);
}

}  // namespace

// ---------------------------------------------------------------------------
// Timestamps

std::int64_t parse_timestamp(std::string_view text) {
  text = trim(text);
  std::int64_t epoch = 0;
  if (parse_number(text, epoch)) return epoch;

  unsigned year = 0, month = 0, day = 0, hour = 0, minute = 0, second = 0;
  const bool date_ok = parse_fixed(text, 0, 4, year) && text.size() > 4 && text[4] == '-' &&
                       parse_fixed(text, 5, 2, month) && text.size() > 7 && text[7] == '-' &&
                       parse_fixed(text, 8, 2, day);
  if (!date_ok || month < 1 || month > 12 || day < 1 || day > 31) {
    fail(ErrorCode::ParseError, "unparseable timestamp '" + std::string(text) + "'");
  }
  std::size_t pos = 10;
  if (pos < text.size() && (text[pos] == 'T' || text[pos] == ' ')) {
    if (!parse_fixed(text, pos + 1, 2, hour) || text.size() <= pos + 3 || text[pos + 3] != ':' ||
        !parse_fixed(text, pos + 4, 2, minute)) {
      fail(ErrorCode::ParseError, "unparseable time in '" + std::string(text) + "'");
    }
    pos += 6;
    if (pos < text.size() && text[pos] == ':') {
      if (!parse_fixed(text, pos + 1, 2, second)) fail(ErrorCode::ParseError, "bad seconds in '" + std::string(text) + "'");
      pos += 3;
      // fractional seconds are truncated
      if (pos < text.size() && text[pos] == '.') {
        ++pos;
        while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') ++pos;
      }
    }
  }
  std::int64_t offset = 0;
  if (pos < text.size()) {
    const char sign = text[pos];
    unsigned oh = 0, om = 0;
    if (sign == 'Z' && pos + 1 == text.size()) {
      offset = 0;
    } else if ((sign == '+' || sign == '-') && parse_fixed(text, pos + 1, 2, oh) && text.size() == pos + 6 &&
               text[pos + 3] == ':' && parse_fixed(text, pos + 4, 2, om)) {
      offset = (sign == '+' ? 1 : -1) * static_cast<std::int64_t>(oh * 3600 + om * 60);
    } else {
      fail(ErrorCode::ParseError, "bad timezone suffix in '" + std::string(text) + "'");
    }
  }
  if (hour > 23 || minute > 59 || second > 60) fail(ErrorCode::ParseError, "time out of range in '" + std::string(text) + "'");
  return days_from_civil(year, month, day) * 86400 + hour * 3600 + minute * 60 + second - offset;
}

std::string format_iso8601(std::int64_t epoch_seconds) {
  const std::int64_t days = floor_div(epoch_seconds, 86400);
  const std::int64_t secs = epoch_seconds - days * 86400;
  const auto date = civil_from_days(days);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04lld-%02u-%02uT%02lld:%02lld:%02lldZ", static_cast<long long>(date.year), date.month,
                date.day, static_cast<long long>(secs / 3600), static_cast<long long>(secs % 3600 / 60),
                static_cast<long long>(secs % 60));
  return buf;
}

// ---------------------------------------------------------------------------
// CSV

TimeSeries read_csv_series(std::istream& in, const CsvColumns& columns) {
  std::string line;
  if (!std::getline(in, line)) fail(ErrorCode::ParseError, "missing header row");
  const auto header = split_fields(line);
  auto find_column = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), std::string_view(name));
    if (it == header.end()) fail(ErrorCode::MissingColumn, "column '" + name + "' not found in header");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t ts_col = find_column(columns.timestamp);
  std::vector<std::size_t> value_cols{find_column(columns.target)};
  for (const auto& name : columns.exogenous) value_cols.push_back(find_column(name));

  struct Row {
    std::int64_t ts;
    std::vector<double> values;
  };
  std::vector<Row> rows;
  std::vector<std::string> bad;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    Row row;
    bool ok = fields.size() == header.size();
    if (ok) {
      try {
        row.ts = parse_timestamp(fields[ts_col]);
      } catch (const Error&) {
        ok = false;
      }
      for (std::size_t c : value_cols) {
        double v = 0.0;
        if (!ok || !parse_number(fields[c], v) || !std::isfinite(v)) {
          ok = false;
          break;
        }
        row.values.push_back(v);
      }
    }
    if (!ok) {
      bad.push_back(std::to_string(line_no));
      continue;
    }
    rows.push_back(std::move(row));
  }
  if (!bad.empty()) {
    std::string list;
    for (std::size_t i = 0; i < bad.size() && i < 20; ++i) list += (i ? ", " : "") + bad[i];
    if (bad.size() > 20) list += ", ...";
    fail(ErrorCode::ParseError, std::to_string(bad.size()) + " unparseable row(s) at line(s) " + list);
  }
  if (rows.empty()) fail(ErrorCode::SeriesTooShort, "no data rows");
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.ts < b.ts; });

  std::int64_t resolution = 3600;
  if (rows.size() > 1) {
    resolution = rows[1].ts - rows[0].ts;
    for (std::size_t i = 1; i < rows.size(); ++i) {
      const std::int64_t diff = rows[i].ts - rows[i - 1].ts;
      if (diff == 0) fail(ErrorCode::ParseError, "duplicate timestamp " + format_iso8601(rows[i].ts));
      resolution = std::min(resolution, diff);
    }
    std::vector<std::string> gaps;
    for (std::size_t i = 1; i < rows.size(); ++i) {
      if (rows[i].ts - rows[i - 1].ts != resolution) gaps.push_back(format_iso8601(rows[i - 1].ts + resolution));
    }
    if (!gaps.empty()) {
      std::string list;
      for (std::size_t i = 0; i < gaps.size() && i < 20; ++i) list += (i ? ", " : "") + gaps[i];
      if (gaps.size() > 20) list += ", ...";
      fail(ErrorCode::NonUniformResolution, "expected stride " + std::to_string(resolution) +
                                                "s; missing data starting at " + list);
    }
  }

  std::vector<std::int64_t> ts;
  std::vector<std::vector<double>> values(value_cols.size());
  for (const auto& row : rows) {
    ts.push_back(row.ts);
    for (std::size_t c = 0; c < value_cols.size(); ++c) values[c].push_back(row.values[c]);
  }
  std::vector<Channel> exo;
  for (std::size_t c = 0; c < columns.exogenous.size(); ++c) exo.push_back({columns.exogenous[c], std::move(values[c + 1])});
  return TimeSeries(std::move(ts), Channel{columns.target, std::move(values[0])}, std::move(exo), resolution);
}

TimeSeries load_csv_series(const std::filesystem::path& path, const CsvColumns& columns) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open '" + path.string() + "'");
  try {
    return read_csv_series(in, columns);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.message());
  }
}

void write_csv_series(std::ostream& out, const TimeSeries& series) {
  out << "timestamp," << series.target_name();
  for (const auto& ch : series.exogenous()) out << ',' << ch.name;
  out << '\n';
  char buf[64];
  for (std::size_t i = 0; i < series.size(); ++i) {
    out << series.timestamps()[i];
    for (std::size_t c = 0; c < series.feature_count(); ++c) {
      auto res = std::to_chars(buf, buf + sizeof buf, series.channel(c)[i]);
      out << ',' << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf));
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Split

void SplitSpec::validate() const {
  if (val_start.has_value() != test_start.has_value() && !interleave_months) {
    fail(ErrorCode::ConfigError, "val_start and test_start must be given together");
  }
  if (val_start && test_start && *test_start < *val_start) fail(ErrorCode::ConfigError, "test_start precedes val_start");
  for (double f : {train_fraction, val_fraction, test_fraction}) {
    if (!(f >= 0.0 && f <= 1.0)) fail(ErrorCode::ConfigError, "split fractions must lie in [0, 1]");
  }
  if (std::abs(train_fraction + val_fraction + test_fraction - 1.0) > 1e-9) {
    fail(ErrorCode::ConfigError, "split fractions must sum to 1");
  }
}

std::size_t Partition::size() const {
  std::size_t n = 0;
  for (const auto& r : ranges) n += r.size();
  return n;
}

std::vector<std::size_t> Partition::indices() const {
  std::vector<std::size_t> out;
  out.reserve(size());
  for (const auto& r : ranges) {
    for (std::size_t i = r.begin; i < r.end; ++i) out.push_back(i);
  }
  return out;
}

namespace {

std::size_t fraction_steps(double fraction, std::size_t total) {
  const double x = fraction * static_cast<double>(total);
  const double r = std::round(x);
  return static_cast<std::size_t>(std::abs(x - r) < 1e-6 ? r : std::floor(x));
}

std::size_t first_at_or_after(const TimeSeries& series, std::int64_t ts) {
  auto t = series.timestamps();
  return static_cast<std::size_t>(std::lower_bound(t.begin(), t.end(), ts) - t.begin());
}

void push_range(Partition& p, std::size_t begin, std::size_t end) {
  if (end <= begin) return;
  if (!p.ranges.empty() && p.ranges.back().end == begin) {
    p.ranges.back().end = end;
  } else {
    p.ranges.push_back({begin, end});
  }
}

}  // namespace

SplitResult chronological_split(const TimeSeries& series, const SplitSpec& spec, std::size_t min_steps) {
  spec.validate();
  const std::size_t n = series.size();
  SplitResult out;
  const bool explicit_bounds = spec.val_start.has_value();
  if (spec.interleave_months) {
    const std::size_t train_end =
        explicit_bounds ? first_at_or_after(series, *spec.val_start) : fraction_steps(spec.train_fraction, n);
    push_range(out.train, 0, train_end);
    auto ts = series.timestamps();
    for (std::size_t i = train_end; i < n; ++i) {
      Partition& p = calendar_month(ts[i]) % 2 == 1 ? out.val : out.test;
      push_range(p, i, i + 1);
    }
  } else if (explicit_bounds) {
    const std::size_t val_begin = first_at_or_after(series, *spec.val_start);
    const std::size_t test_begin = first_at_or_after(series, *spec.test_start);
    push_range(out.train, 0, val_begin);
    push_range(out.val, val_begin, test_begin);
    push_range(out.test, test_begin, n);
  } else {
    const std::size_t n_train = fraction_steps(spec.train_fraction, n);
    const std::size_t n_val = std::min(n - n_train, fraction_steps(spec.val_fraction, n));
    push_range(out.train, 0, n_train);
    push_range(out.val, n_train, n_train + n_val);
    push_range(out.test, n_train + n_val, n);
  }
  const bool val_optional = !explicit_bounds && !spec.interleave_months && spec.val_fraction == 0.0;
  auto check = [&](const Partition& p, const char* name, bool optional) {
    if (optional && p.empty()) return;
    if (p.size() < min_steps) {
      fail(ErrorCode::PartitionTooSmall, std::string(name) + " partition has " + std::to_string(p.size()) +
                                             " steps, at least " + std::to_string(min_steps) + " required");
    }
  };
  check(out.train, "train", false);
  check(out.val, "validation", val_optional);
  check(out.test, "test", false);
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic

std::string_view to_string(SyntheticKind kind) {
  return kind == SyntheticKind::heteroscedastic_daily ? "heteroscedastic_daily" : "homoscedastic_ar";
}

SyntheticKind parse_synthetic_kind(std::string_view name) {
  if (name == "heteroscedastic_daily") return SyntheticKind::heteroscedastic_daily;
  if (name == "homoscedastic_ar") return SyntheticKind::homoscedastic_ar;
  fail(ErrorCode::ConfigError, "unknown synthetic kind '" + std::string(name) + "'");
}

double daylight(std::size_t hour) {
  constexpr double pi = 3.14159265358979323846;
  const double h = static_cast<double>(hour % 24);
  return std::max(0.0, std::sin(pi * (h - 6.0) / 12.0));
}

SyntheticSeries gen_synthetic(SyntheticKind kind, std::size_t length, std::uint64_t seed,
                              const SyntheticParams& params) {
  if (length < 240) fail(ErrorCode::InvalidArgument, "synthetic series need at least 10 periods (240 steps)");
  params.truth_levels.validate();
  const boost::math::normal standard;
  const double z_lo = boost::math::quantile(standard, params.truth_levels.lo);
  const double z_hi = boost::math::quantile(standard, params.truth_levels.hi);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  SyntheticSeries out;
  out.levels = params.truth_levels;
  std::vector<double> y(length);
  out.true_lo.resize(length);
  out.true_mid.resize(length);
  out.true_hi.resize(length);

  if (kind == SyntheticKind::heteroscedastic_daily) {
    for (std::size_t t = 0; t < length; ++t) {
      const std::int64_t ts = params.start + static_cast<std::int64_t>(t) * params.resolution;
      const double d = daylight(hour_of_day(ts));
      const double mean = params.base_level + (params.peak_level - params.base_level) * d;
      const double sigma = params.night_sigma + (params.peak_sigma - params.night_sigma) * d;
      y[t] = mean + sigma * noise(rng);
      out.true_lo[t] = mean + sigma * z_lo;
      out.true_mid[t] = mean;
      out.true_hi[t] = mean + sigma * z_hi;
    }
  } else {
    const double phi = params.ar_coefficient;
    const double stationary_sd = params.ar_sigma / std::sqrt(1.0 - phi * phi);
    double prev_mean = params.ar_mean;
    double sd = stationary_sd;
    for (std::size_t t = 0; t < length; ++t) {
      y[t] = prev_mean + sd * noise(rng);
      out.true_lo[t] = prev_mean + sd * z_lo;
      out.true_mid[t] = prev_mean;
      out.true_hi[t] = prev_mean + sd * z_hi;
      prev_mean = params.ar_mean + phi * (y[t] - params.ar_mean);
      sd = params.ar_sigma;
    }
  }
  out.series = TimeSeries::regular(params.start, params.resolution, std::move(y));
  return out;
}

void write_synthetic_csv(std::ostream& out, const SyntheticSeries& synthetic) {
  const auto& s = synthetic.series;
  out << "timestamp," << s.target_name() << ",true_lo,true_mid,true_hi\n";
  char buf[64];
  auto put = [&](double v) {
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    out << ',' << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf));
  };
  for (std::size_t i = 0; i < s.size(); ++i) {
    out << s.timestamps()[i];
    put(s.target()[i]);
    put(synthetic.true_lo[i]);
    put(synthetic.true_mid[i]);
    put(synthetic.true_hi[i]);
    out << '\n';
  }
}

WindowedDataset gen_regression_pairs(std::size_t n, std::uint64_t seed) {
  constexpr double pi = 3.14159265358979323846;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<double> x(n);
  std::vector<double> y(n);
  std::vector<std::size_t> origins(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = unif(rng);
    y[i] = std::sin(2.0 * pi * x[i]) + (0.1 + 0.4 * x[i]) * noise(rng);
    origins[i] = i + 1;
  }
  return WindowedDataset(1, 1, 1, std::move(x), std::move(y), std::move(origins));
}

}  // namespace encqr
