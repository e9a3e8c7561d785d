#pragma once

#include <json.hpp>
#include <string>
#include <vector>

#include "xreid/config.hpp"
#include "xreid/data.hpp"
#include "xreid/eval.hpp"
#include "xreid/model.hpp"

namespace xreid::experiment {

using nlohmann::json;

json config_json(const config::ExperimentConfig& cfg);

/// The five-row ablation ladder, weakest to full model.
std::vector<std::pair<std::string, model::AblationFlags>> ablation_ladder();

struct TrainRun {
  model::TrainResult result;
  model::ModelConfig model_cfg;
  std::vector<json> epoch_lines;  // JSON-lines training log
};

/// Trains on the dataset with the config's schedule and flags.
TrainRun run_training(const config::ExperimentConfig& cfg,
                      const data::Dataset& ds);

/// Eval-mode embeddings + retrieval protocol; returns the metrics document.
json run_evaluation(const config::ExperimentConfig& cfg,
                    model::ModelParams& params,
                    const model::ModelConfig& model_cfg,
                    const data::Dataset& ds,
                    eval::ProtocolResult* result_out = nullptr);

std::string cmc_csv(const eval::ProtocolResult& result);

struct AblationRow {
  std::string name;
  model::AblationFlags flags;
  std::vector<double> rank1_per_seed;
  std::vector<double> map_per_seed;
  double rank1_mean = 0.0;
  double rank1_std = 0.0;
  double map_mean = 0.0;
  double map_std = 0.0;
};

/// Runs the full ladder over the given master seeds; every row of one seed
/// shares that seed's dataset, initialization, and batch order.
std::vector<AblationRow> run_ablation(const config::ExperimentConfig& cfg,
                                      const std::vector<uint64_t>& seeds);

json ablation_json(const config::ExperimentConfig& cfg,
                   const std::vector<AblationRow>& rows);

/// Positional pairwise alignment report between two feature datasets.
json got_report(const config::ExperimentConfig& cfg, const data::Dataset& a,
                const data::Dataset& b, double phi);

}  // namespace xreid::experiment
