#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "switchnet/layers.hpp"

namespace switchnet {

struct AdamState {
  double lr = 0.002;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
  std::vector<double> m;
  std::vector<double> v;
};

AdamState make_adam(std::size_t n_params, double lr = 0.002);

/// One bias-corrected ADAM update of `params` in place.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads);

// --- initialization --------------------------------------------------------

/// Real and imaginary parts uniform in +-a/sqrt(2), a = sqrt(6/(fan_in+fan_out)),
/// so every entry has modulus <= a. Fan-in/out are the block's row and column counts.
void glorot_init(SwitchParams& p, std::mt19937_64& rng);
/// Uniform in +-sqrt(6/(w^2 c_in + w^2 c_out)); biases zero.
void glorot_init(ConvParams& p, std::mt19937_64& rng);
double glorot_bound(std::size_t fan_in, std::size_t fan_out);

// --- gradient checking -----------------------------------------------------

/// Central differences of `loss` with respect to every entry of `params`.
std::vector<double> finite_difference_gradient(const std::function<double()>& loss,
                                               std::span<double> params, double step = 1e-6);

/// max|a - f| / max(max|a|, max|f|); zero when both vanish.
double max_relative_error(std::span<const double> analytic, std::span<const double> numeric);

}  // namespace switchnet
