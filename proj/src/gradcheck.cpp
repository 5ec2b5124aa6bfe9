#include "switchnet/gradcheck.hpp"

#include <random>

#include "switchnet/layers.hpp"
#include "switchnet/model.hpp"
#include "switchnet/optim.hpp"

namespace switchnet {

namespace {

std::span<double> reals(std::vector<cplx>& v) {
  return {reinterpret_cast<double*>(v.data()), 2 * v.size()};
}

std::vector<double> uniform(std::size_t n, std::mt19937_64& rng, double a = 1.0) {
  std::uniform_real_distribution<double> dist(-a, a);
  std::vector<double> out(n);
  for (double& x : out) x = dist(rng);
  return out;
}

RealTensor random_tensor(int h, int w, int c, std::mt19937_64& rng) {
  RealTensor t = RealTensor::zeros(h, w, c);
  t.data = uniform(t.size(), rng);
  return t;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

// Compares analytic and numerical gradients for several parameter blocks at once.
struct Collector {
  std::vector<double> analytic;
  std::vector<double> numeric;
  void add(std::span<const double> a, std::span<const double> f) {
    analytic.insert(analytic.end(), a.begin(), a.end());
    numeric.insert(numeric.end(), f.begin(), f.end());
  }
  GradCheckResult result(std::string name) const {
    return {std::move(name), max_relative_error(analytic, numeric), analytic.size()};
  }
};

GradCheckResult check_switch(std::mt19937_64& rng, double step) {
  SwitchParams p = SwitchParams::zeros(2, 4, 4, 16, 16);
  glorot_init(p, rng);
  std::vector<double> zr = uniform(32, rng);
  std::vector<double> cr = uniform(32, rng);
  auto* z = reinterpret_cast<cplx*>(zr.data());
  const auto loss = [&] {
    std::vector<cplx> y = switch_forward(p, std::span<const cplx>(z, 16));
    return dot(reals(y), cr);
  };
  SwitchTape tape;
  switch_forward(p, std::span<const cplx>(z, 16), &tape);
  SwitchParams g = SwitchParams::zeros(2, 4, 4, 16, 16);
  std::vector<cplx> gout(reinterpret_cast<cplx*>(cr.data()), reinterpret_cast<cplx*>(cr.data()) + 16);
  std::vector<cplx> gz = switch_backward(p, tape, gout, g);

  Collector c;
  c.add(reals(g.u), finite_difference_gradient(loss, reals(p.u), step));
  c.add(reals(g.v), finite_difference_gradient(loss, reals(p.v), step));
  c.add(reals(gz), finite_difference_gradient(loss, zr, step));
  return c.result("switch (n=16, P=4, t=2)");
}

GradCheckResult check_conv(std::mt19937_64& rng, int w, int c_in, int c_out, int h, int wd,
                           Activation act, double step) {
  ConvParams p = ConvParams::zeros(w, c_in, c_out, act);
  glorot_init(p, rng);
  p.bias = uniform(p.bias.size(), rng, 0.1);
  RealTensor z = random_tensor(h, wd, c_in, rng);
  const std::vector<double> cr = uniform(static_cast<std::size_t>(h) * wd * c_out, rng);
  const auto loss = [&] { return dot(conv_forward(p, z).data, cr); };
  ConvTape tape;
  const RealTensor y = conv_forward(p, z, &tape);
  RealTensor gout = y;
  gout.data = cr;
  ConvParams g = ConvParams::zeros(w, c_in, c_out, act);
  const RealTensor gz = conv_backward(p, tape, gout, g);

  Collector c;
  c.add(g.weights, finite_difference_gradient(loss, p.weights, step));
  c.add(g.bias, finite_difference_gradient(loss, p.bias, step));
  c.add(gz.data, finite_difference_gradient(loss, z.data, step));
  return c.result("conv (w=" + std::to_string(w) + ", " + std::to_string(c_in) + "->" +
                  std::to_string(c_out) + (act == Activation::Relu ? ", relu)" : ", linear)"));
}

GradCheckResult check_pm(std::mt19937_64& rng, double step) {
  PmParams p = PmParams::zeros(5);
  p.weights = uniform(25, rng);
  p.bias = uniform(25, rng);
  RealTensor z = random_tensor(5, 5, 1, rng);
  const std::vector<double> cr = uniform(25, rng);
  const auto loss = [&] { return dot(pm_forward(p, z).data, cr); };
  PmTape tape;
  RealTensor gout = pm_forward(p, z, &tape);
  gout.data = cr;
  PmParams g = PmParams::zeros(5);
  const RealTensor gz = pm_backward(p, tape, gout, g);
  Collector c;
  c.add(g.weights, finite_difference_gradient(loss, p.weights, step));
  c.add(g.bias, finite_difference_gradient(loss, p.bias, step));
  c.add(gz.data, finite_difference_gradient(loss, z.data, step));
  return c.result("pm (n=5)");
}

GradCheckResult check_model(std::mt19937_64& rng, ProblemKind kind, MapDirection dir, double step) {
  ModelSpec spec;
  spec.kind = kind;
  spec.direction = dir;
  spec.n = 8;
  spec.m = 8;
  spec.t = 2;
  spec.p_d = 4;
  spec.p_x = 4;
  spec.w = 3;
  spec.alpha = 3;
  spec.layers = 2;
  ModelParams p = build(spec, rng());
  // Non-trivial biases and PM weights so every parameter matters.
  for (auto& conv : p.convs) conv.bias = uniform(conv.bias.size(), rng, 0.1);
  if (p.pm) {
    p.pm->weights = uniform(p.pm->weights.size(), rng);
    p.pm->bias = uniform(p.pm->bias.size(), rng, 0.1);
  }
  RealTensor x = input_shape(spec);
  x.data = uniform(static_cast<std::size_t>(x.height) * x.width * x.channels, rng);
  const RealTensor oshape = output_shape(spec);
  const std::vector<double> cr =
      uniform(static_cast<std::size_t>(oshape.height) * oshape.width * oshape.channels, rng);

  std::vector<double> flat = p.flatten();
  const auto loss = [&] {
    p.assign(flat);
    return dot(model_forward(p, x).data, cr);
  };
  ModelTape tape;
  RealTensor gout = model_forward(p, x, &tape);
  gout.data = cr;
  ModelParams g = zero_params(spec);
  const RealTensor gx = model_backward(p, tape, gout, g);
  const std::vector<double> ga = g.flatten();

  Collector c;
  c.add(ga, finite_difference_gradient(loss, flat, step));
  c.add(gx.data, finite_difference_gradient(loss, x.data, step));
  p.assign(flat);
  return c.result("model " + to_string(kind) + " " + to_string(dir) + " (N=M=8)");
}

}  // namespace

std::vector<GradCheckResult> run_gradient_suite(std::uint64_t seed, double step) {
  std::mt19937_64 rng(seed);
  std::vector<GradCheckResult> out;
  out.push_back(check_switch(rng, step));
  out.push_back(check_conv(rng, 3, 2, 3, 6, 5, Activation::Relu, step));
  out.push_back(check_conv(rng, 4, 2, 2, 5, 6, Activation::Linear, step));
  out.push_back(check_conv(rng, 10, 1, 2, 7, 7, Activation::Relu, step));
  out.push_back(check_conv(rng, 10, 2, 1, 6, 6, Activation::Linear, step));
  out.push_back(check_pm(rng, step));
  for (ProblemKind kind : {ProblemKind::FarField, ProblemKind::Seismic})
    for (MapDirection dir : {MapDirection::Inverse, MapDirection::Forward})
      out.push_back(check_model(rng, kind, dir, step));
  return out;
}

}  // namespace switchnet
