#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "mstree/calibration.hpp"
#include "mstree/forest.hpp"
#include "mstree/market_data.hpp"
#include "mstree/metrics.hpp"
#include "mstree/pricing.hpp"
#include "mstree/tree.hpp"

namespace mstree {

using Json = nlohmann::ordered_json;

inline constexpr int kForestFormatVersion = 1;
inline constexpr int kStateTableFormatVersion = 1;

Json to_json(const SummaryStats& stats);

Json to_json(const ForestConfig& config);
ForestConfig forest_config_from_json(const Json& j);

/// Versioned model file: config, feature names and per-tree arrays.
Json to_json(const Forest& forest);
/// Throws ParseError on a malformed document or unknown version.
Forest forest_from_json(const Json& j);

/// Classification metrics plus, when given, feature importances in column order.
Json to_json(const EvalReport& report, const std::vector<std::string>& feature_names = {},
             const std::vector<double>& importances = {});

Json to_json(const MarketState& state);
Json to_json(const StateTable& table);
/// Throws ParseError.
StateTable state_table_from_json(const Json& j);

/// Per-node id, level, price, state_id, p_up and child ids.
Json to_json(const PricingTree& tree);

Json to_json(const OptionSpec& spec);
Json to_json(const PricingResult& result);
Json to_json(const Comparison& comparison);

/// Throws ValidationError if the file is missing and ParseError if it is not JSON.
Json read_json_file(const std::string& path);
/// Two-space indented, trailing newline. Throws ValidationError on I/O failure.
void write_json_file(const std::string& path, const Json& j);

}  // namespace mstree
