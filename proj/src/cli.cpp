#include "encqr/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "encqr/experiment.hpp"

namespace encqr::cli {

namespace {

constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;

std::filesystem::path default_out_dir() {
  if (const char* env = std::getenv("ENCQR_OUT_DIR"); env && *env) return env;
  return "encqr-out";
}

std::vector<Method> parse_methods(const std::string& list) {
  std::vector<Method> out;
  std::stringstream in(list);
  std::string name;
  while (std::getline(in, name, ',')) {
    if (name.empty()) continue;
    try {
      out.push_back(parse_method(name));
    } catch (const Error& e) {
      fail(ErrorCode::ConfigError, e.message());
    }
  }
  if (out.empty()) fail(ErrorCode::ConfigError, "--methods lists no method");
  return out;
}

void print_report(const MetricReport& r) {
  std::cout << r.method << ": PICP=" << r.picp << " PINAW=" << r.pinaw << " CWC=" << r.cwc << " (n=" << r.n
            << ")\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conformal prediction intervals for time series"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;

  auto* run = app.add_subcommand("run", "Run one experiment and write metrics.json, intervals.csv, per_hour.csv");
  run->add_option("--config", config_path, "JSON experiment config")->required();
  run->add_option("--set", overrides, "Override a config key, e.g. --set method=enbpi");
  run->add_option("--out", out_dir, "Output directory (default $ENCQR_OUT_DIR or ./encqr-out)");

  std::string methods = "encqr,enbpi,cqr,split_cp,raw_qr";
  auto* cmp = app.add_subcommand("compare", "Run several methods on one dataset and tabulate their metrics");
  cmp->add_option("--config", config_path, "JSON experiment config")->required();
  cmp->add_option("--set", overrides, "Override a config key");
  cmp->add_option("--methods", methods, "Comma-separated methods")->capture_default_str();
  cmp->add_option("--out", out_dir, "Output directory (default $ENCQR_OUT_DIR or ./encqr-out)");

  std::string kind = "heteroscedastic_daily";
  std::string gen_out;
  std::size_t length = 8760;
  std::uint64_t seed = 0;
  auto* gen = app.add_subcommand("gen", "Write a synthetic series with its true quantiles as CSV");
  gen->add_option("--kind", kind, "heteroscedastic_daily or homoscedastic_ar")->capture_default_str();
  gen->add_option("--out", gen_out, "Output CSV path")->required();
  gen->add_option("--length", length, "Number of hourly steps")->capture_default_str();
  gen->add_option("--seed", seed, "Random seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }

  try {
    const std::filesystem::path out = out_dir.empty() ? default_out_dir() : std::filesystem::path(out_dir);
    if (*run) {
      const auto config = ExperimentConfig::load(config_path, overrides);
      const auto result = run_experiment(config);
      emit_report(result.report, result.trace, out);
      print_report(result.report);
      std::cout << "wrote " << out.string() << "\n";
    } else if (*cmp) {
      const auto config = ExperimentConfig::load(config_path, overrides);
      const auto list = parse_methods(methods);
      for (const auto& r : compare_methods(config, list, out)) print_report(r);
      std::cout << "wrote " << (out / "comparison.csv").string() << "\n";
    } else if (*gen) {
      SyntheticKind k;
      try {
        k = parse_synthetic_kind(kind);
      } catch (const Error& e) {
        fail(ErrorCode::ConfigError, e.message());
      }
      if (length < 240) fail(ErrorCode::ConfigError, "--length must be at least 240");
      const auto synthetic = gen_synthetic(k, length, seed);
      std::ostringstream csv;
      write_synthetic_csv(csv, synthetic);
      write_file_atomic(gen_out, csv.str());
      std::cout << "wrote " << gen_out << "\n";
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == ErrorCode::ConfigError ? kConfigError : kRuntimeError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return 0;
}

}  // namespace encqr::cli
