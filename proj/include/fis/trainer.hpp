#pragma once

#include <torch/torch.h>

#include <functional>
#include <json.hpp>
#include <string>
#include <vector>

#include "fis/common.hpp"
#include "fis/dataset.hpp"
#include "fis/losses.hpp"
#include "fis/model.hpp"

namespace fis {

struct TrainConfig {
  double learning_rate = 1e-4;
  double weight_decay = 0.05;
  int warmup_iters = 1000;
  int epochs = 100;
  int batch_size = 4;
  int k_points = 1024;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;  // epochs between checkpoints; 0 = final only
  std::string out_dir;       // checkpoints + train_log.jsonl land here; "" disables

  void validate() const;
};

// Linear warmup to the base rate over warmup_iters, then cosine decay to zero
// at the final iteration. `iteration` is 1-based.
double lr_at(const TrainConfig& config, std::int64_t iteration, std::int64_t total_iterations);

struct IterationRecord {
  int epoch = 0;
  std::int64_t iter = 0;
  double lr = 0.0;
  double total = 0.0;
  double l_ia_q = 0.0;
  double l_pred = 0.0;
  double l_pred_gt = 0.0;
  double l_d = 0.0;
};

struct TrainResult {
  std::vector<IterationRecord> history;
  double final_loss = 0.0;
};

// Raised when the loss goes non-finite; carries the iteration diagnostics.
class TrainAbort : public Error {
 public:
  TrainAbort(const std::string& what, IterationRecord record)
      : Error(what), record(record) {}
  IterationRecord record;
};

// Owns the optimizer so training can stop at a checkpoint and resume with
// bit-identical results.
class Trainer {
 public:
  Trainer(FisModel model, TrainConfig config, LossWeights weights,
          nlohmann::json config_snapshot = nlohmann::json::object());

  // Trains from the current position to config.epochs. Samples whose
  // dimensions are not multiples of 32 are padded (masks included) up front.
  TrainResult run(const std::vector<ImageSample>& dataset,
                  const std::function<void(const IterationRecord&)>& callback = {});

  void save(const std::string& path) const;
  // Restores parameters, optimizer state, and position from a checkpoint
  // produced by save(). The model architecture must match.
  void restore(const std::string& path);

  FisModel& model() { return model_; }
  torch::optim::AdamW& optimizer() { return optimizer_; }
  int completed_epochs() const { return completed_epochs_; }
  std::int64_t completed_iters() const { return completed_iters_; }

 private:
  FisModel model_;
  TrainConfig config_;
  LossWeights weights_;
  nlohmann::json config_snapshot_;
  torch::optim::AdamW optimizer_;
  int completed_epochs_ = 0;
  std::int64_t completed_iters_ = 0;
};

// Pads image and masks bottom/right to multiples of 32.
ImageSample pad_sample_to_multiple(const ImageSample& sample, int multiple = 32);

}  // namespace fis
