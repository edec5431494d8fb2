#include "starnet/losses.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>

#include "starnet/checkpoint.hpp"
#include "starnet/errors.hpp"
#include "starnet/log.hpp"

namespace starnet {
namespace {

void require_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (a.sizes() != b.sizes()) {
    throw ShapeError(std::string(what) + ": shape mismatch " + c10::str(a.sizes()) + " vs " + c10::str(b.sizes()));
  }
}

// relu1_2, relu2_2 and relu3_3 of the VGG16 trunk: (out channels, pool after).
constexpr std::array<std::pair<int64_t, bool>, 7> kVggConvs{{
    {64, false}, {64, true}, {128, false}, {128, true}, {256, false}, {256, false}, {256, false}}};

}  // namespace

torch::Tensor smooth_l1(const torch::Tensor& pred, const torch::Tensor& gt, double beta) {
  require_same_shape(pred, gt, "smooth_l1");
  if (beta <= 0) throw ParameterError("smooth_l1: beta must be positive");
  auto t = pred - gt;
  auto a = t.abs();
  return torch::where(a < beta, 0.5 * t * t / beta, a - 0.5 * beta).mean();
}

Vgg16Features::Vgg16Features(const std::filesystem::path& weights) {
  int64_t in = 3;
  for (const auto& [out, pool] : kVggConvs) {
    trunk_->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).padding(1)));
    trunk_->push_back(torch::nn::ReLU());
    if (pool) trunk_->push_back(torch::nn::MaxPool2d(torch::nn::MaxPool2dOptions(2).stride(2)));
    in = out;
  }

  if (!weights.empty() && std::filesystem::is_regular_file(weights)) {
    const auto ckpt = read_checkpoint(weights);
    torch::NoGradGuard no_grad;
    for (auto& p : trunk_->named_parameters()) {
      const auto* src = ckpt.find("features." + p.key());
      if (!src || src->sizes() != p.value().sizes()) {
        throw CheckpointError("vgg16 weights " + weights.string() + ": missing or misshaped '" + p.key() + "'");
      }
      p.value().copy_(*src);
    }
    pretrained_ = true;
  } else {
    log::warn("pretrained VGG16 weights not found", weights.empty() ? "" : " at " + weights.string(),
              "; perceptual loss uses a fixed random trunk (seed ", kFallbackSeed, ")");
    init_fallback();
  }
  for (auto& p : trunk_->parameters()) p.set_requires_grad(false);
  trunk_->eval();
}

void Vgg16Features::init_fallback() {
  torch::NoGradGuard no_grad;
  auto gen = at::detail::createCPUGenerator(kFallbackSeed);
  for (auto& m : trunk_->modules(/*include_self=*/false)) {
    if (auto* conv = m->as<torch::nn::Conv2d>()) {
      const auto& w = conv->weight;
      const double fan_out = static_cast<double>(w.size(0) * w.size(2) * w.size(3));
      w.normal_(0.0, std::sqrt(2.0 / fan_out), gen);
      conv->bias.zero_();
    }
  }
}

std::filesystem::path Vgg16Features::default_weights() {
  const char* env = std::getenv("STARNET_VGG16_WEIGHTS");
  return env ? std::filesystem::path(env) : std::filesystem::path();
}

std::vector<torch::Tensor> Vgg16Features::features(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(1) != 3) throw ShapeError("vgg16: expected a [B, 3, H, W] batch");
  {
    std::lock_guard<std::mutex> lock(mutex_);
    if (trunk_->parameters().front().scalar_type() != x.scalar_type()) trunk_->to(x.scalar_type());
  }
  const auto opts = x.options().requires_grad(false);
  const auto mean = torch::tensor({0.485, 0.456, 0.406}, opts).view({1, 3, 1, 1});
  const auto scale = torch::tensor({0.229, 0.224, 0.225}, opts).view({1, 3, 1, 1});
  auto h = (x - mean) / scale;
  std::vector<torch::Tensor> taps;
  int index = 0;
  for (auto& layer : *trunk_) {
    h = layer.forward<torch::Tensor>(h);
    if (std::find(taps_.begin(), taps_.end(), index++) != taps_.end()) taps.push_back(h);
  }
  return taps;
}

torch::Tensor perceptual_loss(const torch::Tensor& pred, const torch::Tensor& gt, FeatureExtractor& fx) {
  require_same_shape(pred, gt, "perceptual_loss");
  const auto fp = fx.features(pred);
  std::vector<torch::Tensor> fg;
  if (gt.requires_grad()) {
    fg = fx.features(gt);
  } else {
    torch::NoGradGuard no_grad;
    fg = fx.features(gt);
  }
  auto loss = torch::zeros({}, pred.options());
  for (size_t i = 0; i < fp.size(); ++i) loss = loss + torch::mse_loss(fp[i], fg[i]);
  return loss;
}

LossBundle total_loss(const torch::Tensor& pred, const torch::Tensor& gt, FeatureExtractor& fx,
                      double weight_a, double beta) {
  LossBundle b;
  b.weight_a = weight_a;
  b.smooth_l1 = smooth_l1(pred, gt, beta);
  b.perceptual = perceptual_loss(pred, gt, fx);
  b.total = b.smooth_l1 + weight_a * b.perceptual;
  return b;
}

}  // namespace starnet
