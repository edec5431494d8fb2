#pragma once
// Training loop, learning-rate schedule, evaluation and inference helpers.

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "starnet/config.hpp"
#include "starnet/dataset.hpp"
#include "starnet/kv_file.hpp"
#include "starnet/losses.hpp"
#include "starnet/metrics.hpp"
#include "starnet/starnet.hpp"

namespace starnet {

struct TrainConfig {
  double base_lr = 2e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 1e-8;
  int64_t epochs = 210;
  int64_t lr_halving_period = 40;
  int64_t crop = 224;
  int64_t batch = 2;
  double loss_weight_a = kPerceptualWeight;
  uint64_t seed = 0;
  // Optimizer steps per epoch; 0 means one pass over the data (ceil(N / batch)).
  int64_t steps_per_epoch = 0;
  // Single-threaded kernels so runs are bitwise repeatable.
  bool deterministic = true;
  std::string dataset = "paired";
  std::string split = "train";
  std::string perceptual = "vgg16";  // vgg16 | none
  std::string vgg_weights;           // empty: $STARNET_VGG16_WEIGHTS
  int64_t log_every = 10;

  void validate() const;
};

// base * 0.5^floor(epoch / period), computed exactly.
double lr_at_epoch(double base_lr, int64_t epoch, int64_t period);

struct ExperimentConfig {
  StarNetConfig model;
  TrainConfig train;
};

// One flat key-value file holding model keys (preset, ablation flags,
// block_residual, global_residual) and TrainConfig keys. Unknown keys throw
// ConfigError. STARNET_SEED, when set, replaces `seed`.
ExperimentConfig parse_experiment(KeyValueFile kv);
ExperimentConfig load_experiment(const std::filesystem::path& path);

std::shared_ptr<FeatureExtractor> make_feature_extractor(const TrainConfig& cfg);

// Random-access source of training pairs.
struct TrainingData {
  size_t size = 0;
  std::function<ImagePair(size_t)> fetch;

  static TrainingData from_manifest(const DatasetManifest& manifest);
  static TrainingData from_pairs(std::vector<ImagePair> pairs);
};

struct StepRecord {
  int64_t epoch = 0;
  int64_t step = 0;  // global optimizer step, starting at 0
  double lr = 0;
  double total = 0;
  double smooth_l1 = 0;
  double perceptual = 0;
};

class Trainer {
 public:
  Trainer(ModelState model, TrainingData data, TrainConfig cfg, std::shared_ptr<FeatureExtractor> fx);

  // Continues from a checkpoint written by save_checkpoint(); the model
  // configuration comes from the checkpoint.
  static Trainer resume(const std::filesystem::path& checkpoint, TrainingData data, TrainConfig cfg,
                        std::shared_ptr<FeatureExtractor> fx);

  // One optimizer step at the current position. Throws TrainingError on a
  // non-finite loss after writing a diagnostic file (see set_output_dir).
  StepRecord step();

  // Steps until `epochs` are complete or `max_steps` more steps ran (if >= 0).
  // With an output directory, epoch_<e>.ckpt and latest.ckpt are written at
  // every epoch boundary.
  std::vector<StepRecord> run(int64_t max_steps = -1);

  void save_checkpoint(const std::filesystem::path& path) const;
  void set_output_dir(std::filesystem::path dir) { out_dir_ = std::move(dir); }

  // Input and target batch for a position; depends only on (seed, epoch, step).
  std::pair<torch::Tensor, torch::Tensor> batch_at(int64_t epoch, int64_t step_in_epoch,
                                                   std::vector<std::string>* ids = nullptr) const;

  int64_t epoch() const { return epoch_; }
  int64_t step_in_epoch() const { return step_in_epoch_; }
  int64_t global_step() const { return global_step_; }
  int64_t steps_per_epoch() const;
  bool finished() const { return epoch_ >= cfg_.epochs; }
  ModelState& model() { return model_; }
  const TrainConfig& config() const { return cfg_; }
  torch::optim::Adam& optimizer() { return *optimizer_; }

 private:
  ModelState model_;
  TrainingData data_;
  TrainConfig cfg_;
  std::shared_ptr<FeatureExtractor> fx_;
  std::unique_ptr<torch::optim::Adam> optimizer_;
  std::filesystem::path out_dir_;
  int64_t epoch_ = 0;
  int64_t step_in_epoch_ = 0;
  int64_t global_step_ = 0;
};

// Runs the network on one [3, H, W] image of any size: pads by edge
// replication to the network's input multiple, clamps and crops back.
torch::Tensor restore_image(ModelState& model, const torch::Tensor& image);

using Predictor = std::function<torch::Tensor(const ImagePair&)>;

// One record per manifest entry, comparing predict(pair) with pair.clean.
MetricReport evaluate(const DatasetManifest& manifest, const Predictor& predict);
MetricReport evaluate(ModelState& model, const DatasetManifest& manifest);

}  // namespace starnet
