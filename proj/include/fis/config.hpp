#pragma once

#include <json.hpp>
#include <string>

#include "fis/losses.hpp"
#include "fis/metrics.hpp"
#include "fis/model.hpp"
#include "fis/trainer.hpp"

namespace fis {

// Everything a run needs: model shape, training schedule, loss weights,
// evaluation settings, dataset paths, and the master seed. Parsing is
// schema-strict: unknown keys are rejected by name.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  LossWeights loss;
  EvalConfig eval;
  std::string train_data;
  std::string eval_data;
  std::uint64_t seed = 0;

  void validate() const;
};

RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);
nlohmann::json run_config_to_json(const RunConfig& config);

}  // namespace fis
