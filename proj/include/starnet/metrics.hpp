#pragma once
// Image quality metrics on RGB tensors in [0, peak], computed in double precision.

#include <torch/torch.h>

#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

namespace starnet {

// 10 log10(peak^2 / mse); +infinity when mse == 0.
double psnr_from_mse(double mse, double peak = 1.0);

// PSNR over all elements of two equally shaped tensors.
double psnr(const torch::Tensor& pred, const torch::Tensor& gt, double peak = 1.0);

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double peak = 1.0;
};

// Mean SSIM over the valid (unpadded) window positions of every channel.
// Accepts [H, W], [C, H, W] or [B, C, H, W]; throws ParameterError when the
// image is smaller than the window.
double ssim(const torch::Tensor& pred, const torch::Tensor& gt, const SsimOptions& opts = {});

// Normalized 1-D Gaussian taps.
std::vector<double> gaussian_window(int size, double sigma);

struct MetricRecord {
  std::string id;
  double psnr_db = 0;
  double ssim = 0;
};

// Per-image records plus means. Means are over records; a single infinite
// PSNR makes the mean infinite.
struct MetricReport {
  std::string color_space = "RGB";
  std::vector<MetricRecord> records;

  void add(std::string id, double psnr_db, double ssim_value);
  double mean_psnr() const;
  double mean_ssim() const;

  // Line-delimited JSON: a header line, one line per record, a summary line.
  // Infinite PSNR is written as the string "inf".
  void write_jsonl(std::ostream& out) const;
  static MetricReport read_jsonl(std::istream& in);
};

}  // namespace starnet
