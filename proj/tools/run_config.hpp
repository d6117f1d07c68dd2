#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "fmvp/attacks.hpp"
#include "fmvp/classifier.hpp"
#include "fmvp/dataset.hpp"
#include "fmvp/flow.hpp"
#include "fmvp/purify.hpp"

namespace fmvp::cli {

struct EvalSection {
  std::size_t workers = 1;
  std::size_t limit = 0;  // 0 = whole split
  std::size_t psd_bins = 16;
  std::vector<float> gammas{0.2f, 0.3f, 0.4f, 0.5f, 0.6f, 0.7f, 0.8f};
  std::vector<std::size_t> grid_steps{5, 10, 12, 15, 20};
};

struct TrainSection {
  std::string variant = "gaussian";
  PurifierTrainConfig cfg;
};

/// Effective configuration of one run. Seeds are flags, not config keys.
struct RunConfig {
  CorpusSpec data;
  ClassifierTrainConfig classifier;
  PgdConfig pgd;
  CwConfig cw;
  AdaptiveConfig adaptive;
  PurifyConfig purifier;
  TrainSection train;
  EvalSection eval;
};

nlohmann::json to_json(const RunConfig& c);

/// Defaults patched with `doc`. Keys absent from the defaults are rejected
/// (ContractError naming the key path), as are values of the wrong type.
RunConfig from_json(const nlohmann::json& doc);

/// Apply "section.key=value" where value is JSON (bare words are strings).
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// Throws ContractError for the first key of `doc` missing from `schema`.
void reject_unknown_keys(const nlohmann::json& doc, const nlohmann::json& schema, const std::string& path = "");

}  // namespace fmvp::cli
