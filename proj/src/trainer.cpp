#include "fis/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "fis/checkpoint.hpp"
#include "fis/common.hpp"
#include "fis/logging.hpp"
#include "fis/rng.hpp"
#include "fis/tensor_utils.hpp"

namespace fis {

void TrainConfig::validate() const {
  FIS_CHECK(learning_rate > 0, "learning rate must be positive");
  FIS_CHECK(weight_decay >= 0, "weight decay must be nonnegative");
  FIS_CHECK(warmup_iters >= 1, "warmup_iters must be positive");
  FIS_CHECK(epochs >= 1, "epochs must be positive");
  FIS_CHECK(batch_size >= 1, "batch size must be positive");
  FIS_CHECK(k_points >= 1, "k_points must be positive");
  FIS_CHECK(checkpoint_every >= 0, "checkpoint_every must be nonnegative");
}

double lr_at(const TrainConfig& config, std::int64_t iteration, std::int64_t total_iterations) {
  if (iteration <= config.warmup_iters) {
    return config.learning_rate * static_cast<double>(iteration) / config.warmup_iters;
  }
  if (total_iterations <= config.warmup_iters) return config.learning_rate;
  const double progress = static_cast<double>(iteration - config.warmup_iters) /
                          static_cast<double>(total_iterations - config.warmup_iters);
  return config.learning_rate * 0.5 * (1.0 + std::cos(3.141592653589793 * progress));
}

ImageSample pad_sample_to_multiple(const ImageSample& sample, int multiple) {
  const int h = sample.image.height;
  const int w = sample.image.width;
  const int ph = (multiple - h % multiple) % multiple;
  const int pw = (multiple - w % multiple) % multiple;
  if (ph == 0 && pw == 0) return sample;

  ImageSample padded;
  padded.source_id = sample.source_id;
  padded.image = Image::zeros(h + ph, w + pw);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      for (int ch = 0; ch < 3; ++ch) padded.image.set(r, c, ch, sample.image.at(r, c, ch));
    }
  }
  for (const ShadowObjectInstance& instance : sample.instances) {
    ShadowObjectInstance out;
    out.pair_id = instance.pair_id;
    out.object_mask = BinaryMask::zeros(h + ph, w + pw);
    out.shadow_mask = BinaryMask::zeros(h + ph, w + pw);
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        out.object_mask.set(r, c, instance.object_mask.at(r, c));
        out.shadow_mask.set(r, c, instance.shadow_mask.at(r, c));
      }
    }
    padded.instances.push_back(std::move(out));
  }
  return padded;
}

Trainer::Trainer(FisModel model, TrainConfig config, LossWeights weights,
                 nlohmann::json config_snapshot)
    : model_(std::move(model)),
      config_(std::move(config)),
      weights_(weights),
      config_snapshot_(std::move(config_snapshot)),
      optimizer_(model_->parameters(), torch::optim::AdamWOptions(config_.learning_rate)
                                           .weight_decay(config_.weight_decay)) {
  config_.validate();
  weights_.validate();
}

TrainResult Trainer::run(const std::vector<ImageSample>& dataset,
                         const std::function<void(const IterationRecord&)>& callback) {
  FIS_CHECK(!dataset.empty(), "training dataset is empty");
  model_->train();

  struct Prepared {
    torch::Tensor image;
    std::vector<ShadowObjectInstance> gts;
  };
  std::vector<Prepared> prepared;
  prepared.reserve(dataset.size());
  const auto dtype = model_->parameter_dtype();
  for (const ImageSample& raw : dataset) {
    const ImageSample sample = pad_sample_to_multiple(raw);
    prepared.push_back(Prepared{image_to_tensor(sample.image, dtype), sample.instances});
  }

  const std::int64_t n = static_cast<std::int64_t>(prepared.size());
  const std::int64_t iters_per_epoch = (n + config_.batch_size - 1) / config_.batch_size;
  const std::int64_t total_iters = static_cast<std::int64_t>(config_.epochs) * iters_per_epoch;

  std::ofstream log_stream;
  if (!config_.out_dir.empty()) {
    std::filesystem::create_directories(config_.out_dir);
    const auto log_path = std::filesystem::path(config_.out_dir) / "train_log.jsonl";
    log_stream.open(log_path, completed_iters_ == 0 ? std::ios::out : std::ios::app);
    FIS_CHECK(log_stream.good(), "cannot open training log: ", log_path.string());
  }

  TrainResult result;
  for (int epoch = completed_epochs_; epoch < config_.epochs; ++epoch) {
    // Seeded per-epoch shuffle, independent of resume point.
    std::vector<std::int64_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(Rng::derive({config_.seed, 0x5137ull, static_cast<std::uint64_t>(epoch)}));
    for (std::int64_t i = n - 1; i > 0; --i) {
      std::swap(order[i], order[shuffle_rng.uniform_int(0, i)]);
    }

    for (std::int64_t start = 0; start < n; start += config_.batch_size) {
      const std::int64_t iter = ++completed_iters_;
      const double lr = lr_at(config_, iter, total_iters);
      for (auto& group : optimizer_.param_groups()) {
        static_cast<torch::optim::AdamWOptions&>(group.options()).lr(lr);
      }

      optimizer_.zero_grad();
      const std::int64_t batch_count = std::min<std::int64_t>(config_.batch_size, n - start);
      IterationRecord record;
      record.epoch = epoch;
      record.iter = iter;
      record.lr = lr;
      for (std::int64_t j = 0; j < batch_count; ++j) {
        const Prepared& sample = prepared[order[start + j]];
        ModelOutputs outputs = model_->forward(sample.image);
        Rng rng(Rng::derive({config_.seed, 0x105eull, static_cast<std::uint64_t>(epoch),
                             static_cast<std::uint64_t>(iter), static_cast<std::uint64_t>(j)}));
        TotalLoss loss = total_loss(*model_, outputs, sample.gts, weights_, epoch,
                                    config_.k_points, rng);
        (loss.total / static_cast<double>(batch_count)).backward();
        record.total += loss.total.item<double>() / batch_count;
        record.l_ia_q += loss.l_ia_q.item<double>() / batch_count;
        record.l_pred += loss.l_pred.item<double>() / batch_count;
        record.l_pred_gt += loss.l_pred_gt.item<double>() / batch_count;
        record.l_d += loss.l_d.item<double>() / batch_count;
      }
      if (!std::isfinite(record.total)) {
        throw TrainAbort(
            str_cat("non-finite loss at epoch ", epoch, " iteration ", iter, " (L_IA_q=",
                    record.l_ia_q, ", L_pred=", record.l_pred, ", L_pred_gt=", record.l_pred_gt,
                    ", L_d=", record.l_d, ")"),
            record);
      }
      optimizer_.step();

      if (log_stream.is_open()) {
        nlohmann::json line;
        line["epoch"] = record.epoch;
        line["iter"] = record.iter;
        line["lr"] = record.lr;
        line["total"] = record.total;
        line["L_IA_q"] = record.l_ia_q;
        line["L_pred"] = record.l_pred;
        line["L_pred_gt"] = record.l_pred_gt;
        line["L_d"] = record.l_d;
        log_stream << line.dump() << "\n";
      }
      if (callback) callback(record);
      result.history.push_back(record);
    }
    completed_epochs_ = epoch + 1;

    if (!config_.out_dir.empty() && config_.checkpoint_every > 0 &&
        completed_epochs_ % config_.checkpoint_every == 0 && completed_epochs_ < config_.epochs) {
      save((std::filesystem::path(config_.out_dir) /
            str_cat("checkpoint_epoch_", completed_epochs_, ".fisckpt"))
               .string());
    }
  }

  if (!config_.out_dir.empty()) {
    save((std::filesystem::path(config_.out_dir) / "checkpoint_final.fisckpt").string());
  }
  if (!result.history.empty()) result.final_loss = result.history.back().total;
  return result;
}

void Trainer::save(const std::string& path) const {
  Checkpoint checkpoint;
  checkpoint.completed_epochs = completed_epochs_;
  checkpoint.completed_iters = completed_iters_;
  checkpoint.config = config_snapshot_;

  for (const auto& item : model_->named_parameters()) {
    checkpoint.tensors.emplace_back("model/" + item.key(), item.value());
  }
  const auto& state = optimizer_.state();
  for (const auto& item : model_->named_parameters()) {
    auto it = state.find(item.value().unsafeGetTensorImpl());
    if (it == state.end()) continue;
    const auto& adamw = static_cast<const torch::optim::AdamWParamState&>(*it->second);
    checkpoint.tensors.emplace_back("optim/" + item.key() + "/exp_avg", adamw.exp_avg());
    checkpoint.tensors.emplace_back("optim/" + item.key() + "/exp_avg_sq", adamw.exp_avg_sq());
    checkpoint.optimizer_steps["optim/" + item.key() + "/step"] = adamw.step();
  }
  save_checkpoint(path, checkpoint);
}

void Trainer::restore(const std::string& path) {
  const Checkpoint checkpoint = load_checkpoint(path);
  completed_epochs_ = checkpoint.completed_epochs;
  completed_iters_ = checkpoint.completed_iters;

  load_model_parameters(*model_, checkpoint);

  torch::NoGradGuard no_grad;
  auto params = model_->named_parameters();
  auto& state = optimizer_.state();
  state.clear();
  for (const auto& item : params) {
    const torch::Tensor* exp_avg = checkpoint.find("optim/" + item.key() + "/exp_avg");
    const torch::Tensor* exp_avg_sq = checkpoint.find("optim/" + item.key() + "/exp_avg_sq");
    const auto step_it = checkpoint.optimizer_steps.find("optim/" + item.key() + "/step");
    if (exp_avg == nullptr || exp_avg_sq == nullptr ||
        step_it == checkpoint.optimizer_steps.end()) {
      continue;
    }
    auto param_state = std::make_unique<torch::optim::AdamWParamState>();
    param_state->step(step_it->second);
    param_state->exp_avg(exp_avg->to(item.value().dtype()).clone());
    param_state->exp_avg_sq(exp_avg_sq->to(item.value().dtype()).clone());
    state[item.value().unsafeGetTensorImpl()] = std::move(param_state);
  }
  log(LogLevel::kInfo, str_cat("restored checkpoint ", path, " at epoch ", completed_epochs_,
                               ", iteration ", completed_iters_));
}

}  // namespace fis
