#include "starnet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <opencv2/imgproc.hpp>
#include <random>

#include "starnet/errors.hpp"
#include "starnet/kv_file.hpp"

namespace starnet {
namespace {

void require_range(double lo, double hi, const char* name) {
  if (lo > hi) {
    throw ParameterError(std::string("snow synthesis: ") + name + " range is inverted (" + std::to_string(lo) +
                         " > " + std::to_string(hi) + ")");
  }
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo == hi ? lo : std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace

void SnowSynthesisSpec::validate() const {
  require_range(static_cast<double>(particles_min), static_cast<double>(particles_max), "particle count");
  require_range(size_min, size_max, "size");
  require_range(opacity_min, opacity_max, "opacity");
  if (particles_min < 0) throw ParameterError("snow synthesis: particle count must be non-negative");
  if (size_min <= 0) throw ParameterError("snow synthesis: particle size must be positive");
  if (opacity_min < 0 || opacity_max > 1) throw ParameterError("snow synthesis: opacity must lie in [0, 1]");
  if (blur_sigma < 0) throw ParameterError("snow synthesis: blur sigma must be non-negative");
  if (veiling < 0 || veiling > 1) throw ParameterError("snow synthesis: veiling must lie in [0, 1]");
}

SnowSynthesisSpec read_synthesis_spec(const std::filesystem::path& path) {
  auto kv = KeyValueFile::load(path);
  SnowSynthesisSpec s;
  s.particles_min = kv.take_int("particles_min", s.particles_min);
  s.particles_max = kv.take_int("particles_max", s.particles_max);
  s.size_min = kv.take_double("size_min", s.size_min);
  s.size_max = kv.take_double("size_max", s.size_max);
  s.opacity_min = kv.take_double("opacity_min", s.opacity_min);
  s.opacity_max = kv.take_double("opacity_max", s.opacity_max);
  s.blur_sigma = kv.take_double("blur_sigma", s.blur_sigma);
  s.veiling = kv.take_double("veiling", s.veiling);
  s.seed = static_cast<uint64_t>(kv.take_int("seed", static_cast<int64_t>(s.seed)));
  kv.finish();
  s.validate();
  return s;
}

ImagePair synthesize_pair(const torch::Tensor& clean, const SnowSynthesisSpec& spec) {
  spec.validate();
  if (clean.dim() != 3 || clean.size(0) != 3) throw ShapeError("synthesize_pair: expected a [3, H, W] image");
  const int h = static_cast<int>(clean.size(1)), w = static_cast<int>(clean.size(2));

  std::mt19937_64 rng(spec.seed);
  const int64_t count = std::uniform_int_distribution<int64_t>(spec.particles_min, spec.particles_max)(rng);

  // Transmission (1 - A), multiplied per particle.
  cv::Mat keep(h, w, CV_64F, cv::Scalar(1.0));
  for (int64_t k = 0; k < count; ++k) {
    const double cx = uniform(rng, 0, w), cy = uniform(rng, 0, h);
    const double r = uniform(rng, spec.size_min, spec.size_max);
    const double o = uniform(rng, spec.opacity_min, spec.opacity_max);
    const int pad = static_cast<int>(std::ceil(r + 3 * spec.blur_sigma + 1));
    const cv::Rect box = cv::Rect(static_cast<int>(cx) - pad, static_cast<int>(cy) - pad, 2 * pad + 1, 2 * pad + 1) &
                         cv::Rect(0, 0, w, h);
    if (box.empty()) continue;
    cv::Mat m(box.size(), CV_64F);
    for (int y = 0; y < box.height; ++y) {
      for (int x = 0; x < box.width; ++x) {
        // Anti-aliased disk: one-pixel linear falloff at the rim.
        const double d = std::hypot(box.x + x + 0.5 - cx, box.y + y + 0.5 - cy);
        m.at<double>(y, x) = std::clamp(r + 0.5 - d, 0.0, 1.0);
      }
    }
    if (spec.blur_sigma > 0) cv::GaussianBlur(m, m, cv::Size(0, 0), spec.blur_sigma, spec.blur_sigma, cv::BORDER_CONSTANT);
    cv::Mat roi = keep(box);
    roi = roi.mul(1.0 - o * m);
  }

  auto base = clean.detach().to(torch::kCPU, torch::kFloat64).contiguous();
  auto transmission = torch::from_blob(keep.data, {1, h, w}, torch::kFloat64).clone();
  auto veiled = base * (1.0 - spec.veiling) + spec.veiling;
  auto snowy = (veiled * transmission + (1.0 - transmission)).clamp(0.0, 1.0);
  return {"", snowy.to(clean.scalar_type()), clean.clone()};
}

torch::Tensor procedural_clean(int64_t height, int64_t width, uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto u = [&](double lo, double hi) { return uniform(rng, lo, hi); };
  auto ys = torch::linspace(0, 1, height, torch::kFloat64).view({1, height, 1});
  auto xs = torch::linspace(0, 1, width, torch::kFloat64).view({1, 1, width});
  auto img = torch::empty({3, height, width}, torch::kFloat64);
  for (int64_t c = 0; c < 3; ++c) {
    const double a = u(0.1, 0.5), bx = u(-0.3, 0.3), by = u(-0.3, 0.3), f = u(1.0, 4.0);
    img[c] = (a + bx * xs[0] + by * ys[0] + 0.1 * torch::sin(f * 3.14159265358979 * (xs[0] + ys[0]))).squeeze(0);
  }
  for (int k = 0; k < 4; ++k) {
    const int64_t y0 = static_cast<int64_t>(u(0, height * 0.75)), x0 = static_cast<int64_t>(u(0, width * 0.75));
    const int64_t hh = static_cast<int64_t>(u(height * 0.1, height * 0.4)), ww = static_cast<int64_t>(u(width * 0.1, width * 0.4));
    using torch::indexing::Slice;
    for (int64_t c = 0; c < 3; ++c) {
      img.index_put_({c, Slice(y0, std::min(height, y0 + hh)), Slice(x0, std::min(width, x0 + ww))}, u(0.05, 0.7));
    }
  }
  return img.clamp(0.0, 1.0).mul(255.0).round().div(255.0).to(torch::kFloat32);
}

}  // namespace starnet
