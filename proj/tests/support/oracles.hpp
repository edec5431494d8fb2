#pragma once
// Independent reference computations used by the unit and acceptance tests.

#include <torch/torch.h>

#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace starnet::testing {

// Central finite differences of a scalar function with respect to every
// entry of `inputs` (modified in place and restored).
inline std::vector<torch::Tensor> finite_difference(const std::function<double()>& f,
                                                    std::vector<torch::Tensor> inputs, double eps = 1e-6) {
  torch::NoGradGuard no_grad;
  std::vector<torch::Tensor> grads;
  for (auto& t : inputs) {
    auto g = torch::zeros_like(t);
    auto flat = t.view({-1});
    auto gflat = g.view({-1});
    auto* data = flat.data_ptr<double>();
    for (int64_t i = 0; i < flat.numel(); ++i) {
      const double orig = data[i];
      data[i] = orig + eps;
      const double up = f();
      data[i] = orig - eps;
      const double down = f();
      data[i] = orig;
      gflat[i] = (up - down) / (2 * eps);
    }
    grads.push_back(g);
  }
  return grads;
}

// ||a - b|| / max(||a||, ||b||) over the concatenation of all tensors.
inline double relative_error(const std::vector<torch::Tensor>& a, const std::vector<torch::Tensor>& b) {
  double diff = 0, na = 0, nb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]).square().sum().item<double>();
    na += a[i].square().sum().item<double>();
    nb += b[i].square().sum().item<double>();
  }
  const double denom = std::max(std::sqrt(na), std::sqrt(nb));
  return denom == 0 ? 0 : std::sqrt(diff) / denom;
}

// Analytic gradient (autograd) of f with respect to `inputs`.
inline std::vector<torch::Tensor> analytic_gradient(const std::function<torch::Tensor()>& f,
                                                    const std::vector<torch::Tensor>& inputs) {
  for (const auto& t : inputs) {
    if (t.grad().defined()) t.mutable_grad().zero_();
  }
  f().backward();
  std::vector<torch::Tensor> out;
  for (const auto& t : inputs) out.push_back(t.grad().defined() ? t.grad().clone() : torch::zeros_like(t));
  return out;
}

// Relative error between autograd and central differences.
inline double gradient_check(const std::function<torch::Tensor()>& f, const std::vector<torch::Tensor>& inputs,
                             double eps = 1e-6) {
  const auto analytic = analytic_gradient(f, inputs);
  const auto numeric = finite_difference([&] { return f().item<double>(); }, inputs, eps);
  return relative_error(analytic, numeric);
}

// softmax(q k^T / sqrt(d)) v with explicit loops, q: [N, d], k: [M, d], v: [M, dv].
inline torch::Tensor naive_attention(const torch::Tensor& q_in, const torch::Tensor& k_in, const torch::Tensor& v_in,
                                     double scale, torch::Tensor* weights_out = nullptr) {
  auto q = q_in.to(torch::kFloat64).contiguous();
  auto k = k_in.to(torch::kFloat64).contiguous();
  auto v = v_in.to(torch::kFloat64).contiguous();
  const int64_t n = q.size(0), m = k.size(0), d = q.size(1), dv = v.size(1);
  auto out = torch::zeros({n, dv}, torch::kFloat64);
  auto weights = torch::zeros({n, m}, torch::kFloat64);
  auto qa = q.accessor<double, 2>(), ka = k.accessor<double, 2>(), va = v.accessor<double, 2>();
  auto oa = out.accessor<double, 2>(), wa = weights.accessor<double, 2>();
  for (int64_t i = 0; i < n; ++i) {
    std::vector<double> e(m);
    double mx = -INFINITY;
    for (int64_t j = 0; j < m; ++j) {
      double s = 0;
      for (int64_t c = 0; c < d; ++c) s += qa[i][c] * ka[j][c];
      e[j] = s * scale;
      mx = std::max(mx, e[j]);
    }
    double z = 0;
    for (int64_t j = 0; j < m; ++j) z += std::exp(e[j] - mx);
    for (int64_t j = 0; j < m; ++j) {
      wa[i][j] = std::exp(e[j] - mx) / z;
      for (int64_t c = 0; c < dv; ++c) oa[i][c] += wa[i][j] * va[j][c];
    }
  }
  if (weights_out) *weights_out = weights;
  return out;
}

// Elementwise absolute change of f(x) when x[index] is bumped by delta.
inline torch::Tensor perturbation_response(const std::function<torch::Tensor(const torch::Tensor&)>& f,
                                           const torch::Tensor& x, std::vector<int64_t> index, double delta = 1.0) {
  torch::NoGradGuard no_grad;
  auto base = f(x);
  auto bumped = x.clone();
  std::vector<at::indexing::TensorIndex> idx(index.begin(), index.end());
  bumped.index_put_(idx, bumped.index(idx) + delta);
  return (f(bumped) - base).abs();
}

// Names of parameters whose gradient is missing or identically zero.
inline std::vector<std::string> dead_parameters(torch::nn::Module& m) {
  std::vector<std::string> dead;
  for (const auto& p : m.named_parameters()) {
    const auto& g = p.value().grad();
    if (!g.defined() || g.abs().max().item<double>() == 0) dead.push_back(p.key());
  }
  return dead;
}

inline std::string join_names(const std::vector<std::string>& names) {
  std::string out;
  for (const auto& n : names) out += (out.empty() ? "" : ", ") + n;
  return out;
}

}  // namespace starnet::testing
