#include <istream>
#include <ostream>

#include <json.hpp>

#include "encqr/regress.hpp"

namespace encqr {

namespace {

using nlohmann::json;

constexpr const char* kFormat = "encqr.quantile_model";
constexpr int kVersion = 1;

json header(RegressorKind kind, const QuantileLevels& levels, std::size_t horizon, std::size_t input_size) {
  return json{{"format", kFormat},
              {"version", kVersion},
              {"kind", std::string(to_string(kind))},
              {"levels", {levels.lo, levels.mid, levels.hi}},
              {"horizon", horizon},
              {"input_size", input_size}};
}

}  // namespace

void LinearQuantileModel::save(std::ostream& out) const {
  json j = header(kind(), levels_, horizon_, input_size_);
  j["intercept_only"] = intercept_only_;
  j["weights"] = weights_;
  out << j.dump() << '\n';
}

void QuantileForestModel::save(std::ostream& out) const {
  json j = header(kind(), levels_, horizon_, input_size_);
  j["targets"] = targets_;
  json trees = json::array();
  for (const auto& tree : trees_) {
    json feature = json::array();
    json threshold = json::array();
    json left = json::array();
    json right = json::array();
    json rows = json::array();
    for (const auto& node : tree.nodes) {
      feature.push_back(node.feature);
      threshold.push_back(node.threshold);
      left.push_back(node.left);
      right.push_back(node.right);
      rows.push_back(node.rows);
    }
    trees.push_back({{"feature", feature}, {"threshold", threshold}, {"left", left}, {"right", right}, {"rows", rows}});
  }
  j["trees"] = std::move(trees);
  out << j.dump() << '\n';
}

std::unique_ptr<QuantileModel> load_model(std::istream& in) {
  json j;
  try {
    in >> j;
    if (j.at("format") != kFormat) fail(ErrorCode::FormatError, "not a quantile model file");
    if (j.at("version").get<int>() != kVersion) {
      fail(ErrorCode::FormatError, "unsupported model version " + j.at("version").dump());
    }
    const auto lv = j.at("levels").get<std::vector<double>>();
    if (lv.size() != 3) fail(ErrorCode::FormatError, "expected three quantile levels");
    QuantileLevels levels{lv[0], lv[1], lv[2]};
    const auto horizon = j.at("horizon").get<std::size_t>();
    const auto input_size = j.at("input_size").get<std::size_t>();
    switch (parse_regressor_kind(j.at("kind").get<std::string>())) {
      case RegressorKind::linear_qr:
        return std::make_unique<LinearQuantileModel>(levels, horizon, input_size,
                                                     j.at("weights").get<std::vector<double>>(),
                                                     j.at("intercept_only").get<bool>());
      case RegressorKind::quantile_forest: {
        std::vector<RegressionTree> trees;
        for (const auto& jt : j.at("trees")) {
          RegressionTree tree;
          const auto& feature = jt.at("feature");
          tree.nodes.resize(feature.size());
          for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
            auto& node = tree.nodes[i];
            node.feature = feature.at(i).get<std::int32_t>();
            node.threshold = jt.at("threshold").at(i).get<double>();
            node.left = jt.at("left").at(i).get<std::int32_t>();
            node.right = jt.at("right").at(i).get<std::int32_t>();
            node.rows = jt.at("rows").at(i).get<std::vector<std::uint32_t>>();
          }
          trees.push_back(std::move(tree));
        }
        return std::make_unique<QuantileForestModel>(levels, horizon, input_size,
                                                     j.at("targets").get<std::vector<double>>(), std::move(trees));
      }
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::FormatError, std::string("malformed model file: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ConfigError) fail(ErrorCode::FormatError, e.message());
    throw;
  }
  fail(ErrorCode::FormatError, "unknown model kind");
}

}  // namespace encqr
