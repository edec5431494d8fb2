#include "starnet/metrics.hpp"

#include <cmath>
#include <istream>
#include <json.hpp>
#include <ostream>

#include "starnet/errors.hpp"

namespace starnet {
namespace {

torch::Tensor as_double(const torch::Tensor& t) {
  return t.detach().to(torch::kCPU, torch::kFloat64).contiguous();
}

void require_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (a.sizes() != b.sizes()) {
    throw ShapeError(std::string(what) + ": shape mismatch " + c10::str(a.sizes()) + " vs " + c10::str(b.sizes()));
  }
}

// Separable valid-mode filtering of an h x w plane.
std::vector<double> filter_valid(const double* img, int64_t h, int64_t w, const std::vector<double>& g) {
  const int64_t k = static_cast<int64_t>(g.size());
  const int64_t ow = w - k + 1, oh = h - k + 1;
  std::vector<double> rows(static_cast<size_t>(h * ow));
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < ow; ++x) {
      double s = 0;
      for (int64_t i = 0; i < k; ++i) s += g[i] * img[y * w + x + i];
      rows[y * ow + x] = s;
    }
  }
  std::vector<double> out(static_cast<size_t>(oh * ow));
  for (int64_t y = 0; y < oh; ++y) {
    for (int64_t x = 0; x < ow; ++x) {
      double s = 0;
      for (int64_t i = 0; i < k; ++i) s += g[i] * rows[(y + i) * ow + x];
      out[y * ow + x] = s;
    }
  }
  return out;
}

nlohmann::json number_or_inf(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

double read_number(const nlohmann::json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    throw ParameterError("metric report: unexpected value '" + s + "'");
  }
  return j.get<double>();
}

}  // namespace

double psnr_from_mse(double mse, double peak) {
  if (peak <= 0) throw ParameterError("psnr: peak must be positive");
  if (mse == 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

double psnr(const torch::Tensor& pred, const torch::Tensor& gt, double peak) {
  require_same_shape(pred, gt, "psnr");
  const auto a = as_double(pred), b = as_double(gt);
  const double* pa = a.data_ptr<double>();
  const double* pb = b.data_ptr<double>();
  const int64_t n = a.numel();
  double sum = 0;
  for (int64_t i = 0; i < n; ++i) sum += (pa[i] - pb[i]) * (pa[i] - pb[i]);
  return psnr_from_mse(sum / static_cast<double>(n), peak);
}

std::vector<double> gaussian_window(int size, double sigma) {
  if (size <= 0 || sigma <= 0) throw ParameterError("gaussian_window: size and sigma must be positive");
  std::vector<double> g(static_cast<size_t>(size));
  const double c = (size - 1) / 2.0;
  double total = 0;
  for (int i = 0; i < size; ++i) {
    g[i] = std::exp(-((i - c) * (i - c)) / (2 * sigma * sigma));
    total += g[i];
  }
  for (auto& v : g) v /= total;
  return g;
}

double ssim(const torch::Tensor& pred, const torch::Tensor& gt, const SsimOptions& opts) {
  require_same_shape(pred, gt, "ssim");
  if (pred.dim() < 2 || pred.dim() > 4) throw ShapeError("ssim: expected a 2-, 3- or 4-d tensor");
  const int64_t h = pred.size(-2), w = pred.size(-1);
  if (h < opts.window || w < opts.window) {
    throw ParameterError("ssim: image " + std::to_string(h) + "x" + std::to_string(w) +
                         " is smaller than the " + std::to_string(opts.window) + "-pixel window");
  }
  const auto a = as_double(pred).reshape({-1, h, w});
  const auto b = as_double(gt).reshape({-1, h, w});
  const auto g = gaussian_window(opts.window, opts.sigma);
  const double c1 = std::pow(opts.k1 * opts.peak, 2), c2 = std::pow(opts.k2 * opts.peak, 2);

  const int64_t planes = a.size(0), plane = h * w;
  std::vector<double> xx(plane), yy(plane), xy(plane);
  double total = 0;
  int64_t count = 0;
  for (int64_t p = 0; p < planes; ++p) {
    const double* x = a.data_ptr<double>() + p * plane;
    const double* y = b.data_ptr<double>() + p * plane;
    for (int64_t i = 0; i < plane; ++i) {
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const auto mx = filter_valid(x, h, w, g), my = filter_valid(y, h, w, g);
    const auto sxx = filter_valid(xx.data(), h, w, g), syy = filter_valid(yy.data(), h, w, g);
    const auto sxy = filter_valid(xy.data(), h, w, g);
    for (size_t i = 0; i < mx.size(); ++i) {
      const double vx = sxx[i] - mx[i] * mx[i];
      const double vy = syy[i] - my[i] * my[i];
      const double cov = sxy[i] - mx[i] * my[i];
      total += ((2 * mx[i] * my[i] + c1) * (2 * cov + c2)) /
               ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    count += static_cast<int64_t>(mx.size());
  }
  return total / static_cast<double>(count);
}

void MetricReport::add(std::string id, double psnr_db, double ssim_value) {
  records.push_back({std::move(id), psnr_db, ssim_value});
}

double MetricReport::mean_psnr() const {
  if (records.empty()) return 0;
  double s = 0;
  for (const auto& r : records) s += r.psnr_db;
  return s / static_cast<double>(records.size());
}

double MetricReport::mean_ssim() const {
  if (records.empty()) return 0;
  double s = 0;
  for (const auto& r : records) s += r.ssim;
  return s / static_cast<double>(records.size());
}

void MetricReport::write_jsonl(std::ostream& out) const {
  out << nlohmann::json{{"type", "header"}, {"color_space", color_space}, {"metrics", {"psnr_db", "ssim"}}}.dump()
      << '\n';
  for (const auto& r : records) {
    out << nlohmann::json{{"id", r.id}, {"psnr_db", number_or_inf(r.psnr_db)}, {"ssim", r.ssim}}.dump() << '\n';
  }
  out << nlohmann::json{{"type", "summary"},
                        {"count", records.size()},
                        {"mean_psnr_db", number_or_inf(mean_psnr())},
                        {"mean_ssim", mean_ssim()}}
             .dump()
      << '\n';
}

MetricReport MetricReport::read_jsonl(std::istream& in) {
  MetricReport report;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    const auto type = j.value("type", "");
    if (type == "header") {
      report.color_space = j.value("color_space", "RGB");
    } else if (type.empty()) {
      report.add(j.at("id").get<std::string>(), read_number(j.at("psnr_db")), read_number(j.at("ssim")));
    }
  }
  return report;
}

}  // namespace starnet
