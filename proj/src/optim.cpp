#include "switchnet/optim.hpp"

#include <algorithm>
#include <cmath>

#include "switchnet/errors.hpp"

namespace switchnet {

AdamState make_adam(std::size_t n_params, double lr) {
  AdamState s;
  s.lr = lr;
  s.m.assign(n_params, 0.0);
  s.v.assign(n_params, 0.0);
  return s;
}

void adam_step(AdamState& s, std::span<double> params, std::span<const double> grads) {
  if (params.size() != grads.size()) throw ShapeError("adam: parameter/gradient size mismatch");
  if (s.m.size() != params.size()) {
    if (s.step != 0) throw ShapeError("adam: state does not match the parameter count");
    s.m.assign(params.size(), 0.0);
    s.v.assign(params.size(), 0.0);
  }
  ++s.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    const double g = grads[k];
    s.m[k] = s.beta1 * s.m[k] + (1.0 - s.beta1) * g;
    s.v[k] = s.beta2 * s.v[k] + (1.0 - s.beta2) * g * g;
    const double mhat = s.m[k] / c1;
    const double vhat = s.v[k] / c2;
    params[k] -= s.lr * mhat / (std::sqrt(vhat) + s.eps);
  }
}

double glorot_bound(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

void glorot_init(SwitchParams& p, std::mt19937_64& rng) {
  const auto fill = [&rng](std::vector<cplx>& x, std::size_t rows, std::size_t cols) {
    const double a = glorot_bound(rows, cols) / std::sqrt(2.0);
    std::uniform_real_distribution<double> dist(-a, a);
    for (cplx& e : x) {
      const double re = dist(rng);
      const double im = dist(rng);
      e = {re, im};
    }
  };
  fill(p.u, static_cast<std::size_t>(p.in_block()), static_cast<std::size_t>(p.t) * p.p_out);
  fill(p.v, static_cast<std::size_t>(p.t) * p.p_in, static_cast<std::size_t>(p.out_block()));
}

void glorot_init(ConvParams& p, std::mt19937_64& rng) {
  const std::size_t area = static_cast<std::size_t>(p.w) * p.w;
  const double a = glorot_bound(area * p.c_in, area * p.c_out);
  std::uniform_real_distribution<double> dist(-a, a);
  for (double& x : p.weights) x = dist(rng);
  std::fill(p.bias.begin(), p.bias.end(), 0.0);
}

std::vector<double> finite_difference_gradient(const std::function<double()>& loss,
                                               std::span<double> params, double step) {
  std::vector<double> g(params.size());
  for (std::size_t k = 0; k < params.size(); ++k) {
    const double keep = params[k];
    params[k] = keep + step;
    const double fp = loss();
    params[k] = keep - step;
    const double fm = loss();
    params[k] = keep;
    g[k] = (fp - fm) / (2.0 * step);
  }
  return g;
}

double max_relative_error(std::span<const double> a, std::span<const double> f) {
  if (a.size() != f.size()) throw ShapeError("gradient check: size mismatch");
  double diff = 0.0, na = 0.0, nf = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    diff = std::max(diff, std::abs(a[k] - f[k]));
    na = std::max(na, std::abs(a[k]));
    nf = std::max(nf, std::abs(f[k]));
  }
  const double scale = std::max(na, nf);
  return scale == 0.0 ? 0.0 : diff / scale;
}

}  // namespace switchnet
