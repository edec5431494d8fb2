#include "starnet/ssc.hpp"

#include <stdexcept>
#include <string>

#include "starnet/errors.hpp"
#include "starnet/layers.hpp"

namespace starnet {

void check_pyramid(const Pyramid& levels, const std::vector<int64_t>& channels) {
  if (levels.size() != channels.size()) {
    throw ShapeError("pyramid has " + std::to_string(levels.size()) + " levels, expected " +
                     std::to_string(channels.size()));
  }
  for (size_t i = 0; i < levels.size(); ++i) {
    const auto& t = levels[i];
    if (t.dim() != 4 || t.size(1) != channels[i]) {
      throw ShapeError("pyramid level " + std::to_string(i) + " must have " +
                       std::to_string(channels[i]) + " channels");
    }
    if (i > 0 && (levels[i - 1].size(2) != 2 * t.size(2) || levels[i - 1].size(3) != 2 * t.size(3))) {
      throw ShapeError("pyramid level " + std::to_string(i) +
                       " must have half the spatial side of level " + std::to_string(i - 1));
    }
  }
}

void SscConfig::validate() const {
  if (channels.empty()) throw ConfigError("ssc: at least one level is required");
  if (chain_kernels.size() + 1 != channels.size()) {
    throw ConfigError("ssc: expected " + std::to_string(channels.size() - 1) +
                      " chain kernels, got " + std::to_string(chain_kernels.size()));
  }
  for (auto k : chain_kernels) {
    if (k <= 0 || k % 2 == 0) throw ConfigError("ssc: chain kernels must be odd");
  }
}

// ---------------------------------------------------------------------------

StarAggregatorImpl::StarAggregatorImpl(std::vector<int64_t> channels) : channels_(std::move(channels)) {
  const size_t n = channels_.size();
  down_.resize(n);
  up_.resize(n);
  for (size_t j = 0; j < n; ++j) {
    down_[j].resize(n, torch::nn::Sequential{nullptr});
    up_[j].resize(n, torch::nn::Sequential{nullptr});
  }
  for (size_t i = 0; i < n; ++i) {
    same_.push_back(register_module("same" + std::to_string(i), make_conv(channels_[i], channels_[i], 1)));
  }
  for (size_t j = 0; j < n; ++j) {
    const int64_t cj = channels_[j];
    for (size_t i = 0; i < n; ++i) {
      if (i == j) continue;
      torch::nn::Sequential path;
      const size_t octaves = i > j ? i - j : j - i;
      for (size_t o = 0; o < octaves; ++o) {
        if (i > j) {
          path->push_back(make_conv(cj, cj, 3, 2));
        } else {
          path->push_back(make_upsample(cj, cj));
        }
      }
      path->push_back(make_conv(cj, channels_[i], 1));
      const auto name = (i > j ? "down" : "up") + std::to_string(j) + "_" + std::to_string(i);
      (i > j ? down_ : up_)[j][i] = register_module(name, path);
    }
  }
}

void StarAggregatorImpl::require_level(size_t level) const {
  if (level >= channels_.size()) {
    throw std::out_of_range("ssc: level " + std::to_string(level) + " outside [0, " +
                            std::to_string(channels_.size() - 1) + "]");
  }
}

torch::nn::Sequential& StarAggregatorImpl::down_path(size_t from, size_t to) { return down_[from][to]; }
torch::nn::Sequential& StarAggregatorImpl::up_path(size_t from, size_t to) { return up_[from][to]; }

size_t StarAggregatorImpl::down_summands(size_t level) const {
  require_level(level);
  return level;
}

size_t StarAggregatorImpl::up_summands(size_t level) const {
  require_level(level);
  return channels_.size() - 1 - level;
}

torch::Tensor StarAggregatorImpl::downsampling(const Pyramid& f, size_t level) {
  require_level(level);
  check_pyramid(f, channels_);
  if (level == 0) return torch::zeros_like(f[0]);
  torch::Tensor sum;
  for (size_t j = 0; j < level; ++j) {
    auto term = down_path(j, level)->forward(f[j]);
    sum = sum.defined() ? sum + term : term;
  }
  return sum;
}

torch::Tensor StarAggregatorImpl::upsampling(const Pyramid& f, size_t level) {
  require_level(level);
  check_pyramid(f, channels_);
  if (level + 1 == channels_.size()) return torch::zeros_like(f[level]);
  torch::Tensor sum;
  for (size_t j = level + 1; j < channels_.size(); ++j) {
    auto term = up_path(j, level)->forward(f[j]);
    sum = sum.defined() ? sum + term : term;
  }
  return sum;
}

torch::Tensor StarAggregatorImpl::same_level(const Pyramid& f, size_t level) {
  require_level(level);
  check_pyramid(f, channels_);
  return same_[level]->forward(f[level]);
}

Pyramid StarAggregatorImpl::forward(const Pyramid& f) {
  check_pyramid(f, channels_);
  Pyramid out;
  out.reserve(f.size());
  for (size_t i = 0; i < f.size(); ++i) {
    auto y = same_level(f, i);
    if (i + 1 < f.size()) y = y + upsampling(f, i);
    if (i > 0) y = y + downsampling(f, i);
    out.push_back(y);
  }
  return out;
}

// ---------------------------------------------------------------------------

DfmChainImpl::DfmChainImpl(const SscConfig& cfg) : cfg_(cfg) {
  cfg.validate();
  for (size_t i = 1; i < cfg.channels.size(); ++i) {
    const int64_t k = cfg.chain_kernels[i - 1];
    convs_.push_back(register_module("chain" + std::to_string(i),
                                     make_conv(cfg.channels[i - 1], cfg.channels[i], k, 2)));
  }
}

int64_t DfmChainImpl::kernel_size(size_t level) const {
  if (level == 0) throw std::out_of_range("dfm chain: level 0 has no chained input");
  if (level >= cfg_.channels.size()) throw std::out_of_range("dfm chain: level out of range");
  return cfg_.chain_kernels[level - 1];
}

torch::Tensor DfmChainImpl::forward(const torch::Tensor& previous, size_t level) {
  kernel_size(level);
  if (previous.dim() != 4 || previous.size(1) != cfg_.channels[level - 1]) {
    throw ShapeError("dfm chain: level " + std::to_string(level) + " expects " +
                     std::to_string(cfg_.channels[level - 1]) + " input channels");
  }
  return convs_[level - 1]->forward(previous);
}

}  // namespace starnet
