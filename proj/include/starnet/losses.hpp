#pragma once
// Training objectives: smooth L1 reconstruction plus a frozen-feature
// perceptual term, total = smooth_l1 + a * perceptual with a = 0.04.

#include <torch/torch.h>

#include <filesystem>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

namespace starnet {

inline constexpr double kPerceptualWeight = 0.04;

// Elementwise 0.5 t^2 / beta for |t| < beta, |t| - 0.5 beta otherwise; mean over all elements.
torch::Tensor smooth_l1(const torch::Tensor& pred, const torch::Tensor& gt, double beta = 1.0);

// Fixed feature pyramid. Implementations never expose trainable parameters.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  // Tap activations for a [B, 3, H, W] batch in [0, 1].
  virtual std::vector<torch::Tensor> features(const torch::Tensor& x) = 0;
  virtual std::string name() const = 0;
};

// VGG16 convolutional trunk up to relu3_3, tapped after layers 3, 8 and 15
// (relu1_2, relu2_2, relu3_3), on ImageNet-normalized input.
class Vgg16Features : public FeatureExtractor {
 public:
  static constexpr uint64_t kFallbackSeed = 20240607;

  // Loads weights from `weights` (checkpoint container with tensors
  // "features.<i>.weight" / "features.<i>.bias"). When the file is absent the
  // trunk is initialized from kFallbackSeed and a warning is logged.
  explicit Vgg16Features(const std::filesystem::path& weights = {});

  std::vector<torch::Tensor> features(const torch::Tensor& x) override;
  std::string name() const override { return pretrained_ ? "vgg16" : "vgg16-random"; }
  bool pretrained() const { return pretrained_; }

  // Default weights location: $STARNET_VGG16_WEIGHTS.
  static std::filesystem::path default_weights();

 private:
  void init_fallback();

  torch::nn::Sequential trunk_;
  std::vector<int> taps_{3, 8, 15};
  bool pretrained_ = false;
  std::mutex mutex_;
};

// Returns the input itself as the only tap.
class IdentityFeatures : public FeatureExtractor {
 public:
  std::vector<torch::Tensor> features(const torch::Tensor& x) override { return {x}; }
  std::string name() const override { return "identity"; }
};

// No taps: the perceptual term is identically zero.
class NullFeatures : public FeatureExtractor {
 public:
  std::vector<torch::Tensor> features(const torch::Tensor&) override { return {}; }
  std::string name() const override { return "null"; }
};

// Sum over taps of the mean squared feature difference.
torch::Tensor perceptual_loss(const torch::Tensor& pred, const torch::Tensor& gt, FeatureExtractor& fx);

struct LossBundle {
  torch::Tensor smooth_l1;
  torch::Tensor perceptual;
  torch::Tensor total;
  double weight_a = kPerceptualWeight;
};

LossBundle total_loss(const torch::Tensor& pred, const torch::Tensor& gt, FeatureExtractor& fx,
                      double weight_a = kPerceptualWeight, double beta = 1.0);

}  // namespace starnet
