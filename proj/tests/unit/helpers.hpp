#pragma once

#include <torch/torch.h>

#include <functional>
#include <random>
#include <vector>

namespace testutil {

// Probabilities kept away from {0,1} so the clamped-log region stays inactive.
inline torch::Tensor rand_prob(const std::vector<int64_t>& shape,
                               std::mt19937_64& rng, double lo = 1e-3) {
  auto t = torch::empty(shape, torch::kFloat64);
  std::uniform_real_distribution<double> dist(lo, 1.0 - lo);
  auto* data = t.data_ptr<double>();
  for (int64_t i = 0; i < t.numel(); ++i) data[i] = dist(rng);
  return t;
}

inline torch::Tensor rand_binary(const std::vector<int64_t>& shape,
                                 std::mt19937_64& rng) {
  auto t = torch::empty(shape, torch::kFloat64);
  std::bernoulli_distribution dist(0.5);
  auto* data = t.data_ptr<double>();
  for (int64_t i = 0; i < t.numel(); ++i) data[i] = dist(rng) ? 1.0 : 0.0;
  return t;
}

inline torch::Tensor rand_labels(const std::vector<int64_t>& shape,
                                 std::mt19937_64& rng, int max_label = 3) {
  auto t = torch::empty(shape, torch::kLong);
  std::uniform_int_distribution<int> dist(0, max_label);
  auto* data = t.data_ptr<int64_t>();
  for (int64_t i = 0; i < t.numel(); ++i) data[i] = dist(rng);
  return t;
}

inline std::vector<double> to_vec(const torch::Tensor& t) {
  auto flat = t.to(torch::kFloat64).contiguous().view(-1);
  return std::vector<double>(flat.data_ptr<double>(),
                             flat.data_ptr<double>() + flat.numel());
}

inline std::vector<int> to_ivec(const torch::Tensor& t) {
  auto flat = t.to(torch::kLong).contiguous().view(-1);
  std::vector<int> out(flat.numel());
  for (int64_t i = 0; i < flat.numel(); ++i) {
    out[i] = static_cast<int>(flat.data_ptr<int64_t>()[i]);
  }
  return out;
}

struct GradCheck {
  double max_rel_err = 0.0;
  bool ok = true;
};

// Central-difference check of d f / d x against autograd, elementwise
// relative error with a small absolute floor.
inline GradCheck gradcheck(
    const std::function<torch::Tensor(const torch::Tensor&)>& f,
    const torch::Tensor& x0, double rtol = 1e-4, double h = 1e-4) {
  auto x = x0.detach().clone().set_requires_grad(true);
  auto y = f(x);
  y.backward();
  auto analytic = x.grad().detach().clone().view(-1);

  auto flat = x0.detach().clone().view(-1);
  auto numeric = torch::zeros_like(flat);
  for (int64_t i = 0; i < flat.numel(); ++i) {
    auto xp = x0.detach().clone();
    auto xm = x0.detach().clone();
    xp.view(-1)[i] += h;
    xm.view(-1)[i] -= h;
    torch::NoGradGuard no_grad;
    numeric.view(-1)[i] = (f(xp).item<double>() - f(xm).item<double>()) / (2 * h);
  }

  GradCheck result;
  for (int64_t i = 0; i < flat.numel(); ++i) {
    const double a = analytic[i].item<double>();
    const double n = numeric[i].item<double>();
    const double err =
        std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-6});
    result.max_rel_err = std::max(result.max_rel_err, err);
  }
  result.ok = result.max_rel_err < rtol;
  return result;
}

} // namespace testutil
