#pragma once

// SwitchNet layers. Switch layers carry complex weights and signals; Conv and
// PM layers act on real tensors (complex fields travel as two real channels).
// Backward passes accumulate parameter gradients into a parameter-shaped
// holder and return the input gradient. For complex quantities the gradient
// convention is dL/dRe + i dL/dIm.

#include <Eigen/Core>
#include <complex>
#include <cstdint>
#include <span>
#include <vector>

#include "switchnet/domain.hpp"
#include "switchnet/tensor.hpp"

namespace switchnet {

// --- Vect / Square ---------------------------------------------------------

/// Groups an n x n field by the sqrt(P) x sqrt(P) square partition: reshape to
/// (sqrt(P), n/sqrt(P), sqrt(P), n/sqrt(P)), swap axes 1 and 2, flatten.
template <typename T>
std::vector<T> vect(std::span<const T> z, int n, int p);

/// Inverse permutation of vect.
template <typename T>
std::vector<T> square(std::span<const T> v, int n, int p);

extern template std::vector<double> vect<double>(std::span<const double>, int, int);
extern template std::vector<cplx> vect<cplx>(std::span<const cplx>, int, int);
extern template std::vector<double> square<double>(std::span<const double>, int, int);
extern template std::vector<cplx> square<cplx>(std::span<const cplx>, int, int);

// --- Switch ----------------------------------------------------------------

struct SwitchParams {
  int t = 0;
  int p_in = 0;
  int p_out = 0;
  int n_in = 0;
  int n_out = 0;
  std::vector<cplx> u;  // p_in blocks, each (n_in/p_in) x (t p_out), row-major
  std::vector<cplx> v;  // p_out blocks, each (n_out/p_out) x (t p_in), row-major

  static SwitchParams zeros(int t, int p_in, int p_out, int n_in, int n_out);
  void validate() const;

  int in_block() const { return n_in / p_in; }
  int out_block() const { return n_out / p_out; }
  /// Real parameter count, 2 t (p_out n_in + p_in n_out).
  std::size_t real_count() const { return 2 * (u.size() + v.size()); }

  cplx& u_at(int a, int row, int col) {
    return u[(static_cast<std::size_t>(a) * in_block() + row) * (t * p_out) + col];
  }
  cplx& v_at(int b, int row, int col) {
    return v[(static_cast<std::size_t>(b) * out_block() + row) * (t * p_in) + col];
  }
  cplx u_at(int a, int row, int col) const {
    return u[(static_cast<std::size_t>(a) * in_block() + row) * (t * p_out) + col];
  }
  cplx v_at(int b, int row, int col) const {
    return v[(static_cast<std::size_t>(b) * out_block() + row) * (t * p_in) + col];
  }
};

struct SwitchTape {
  bool recorded = false;
  std::vector<cplx> input;
  std::vector<cplx> switched;  // z2, the shuffled U^T z
};

/// z1 = blockdiag(U_a)^T z; z2[b t P_in + a t + k] = z1[a t P_out + b t + k];
/// output block b = V_b z2^(b).
std::vector<cplx> switch_forward(const SwitchParams& p, std::span<const cplx> z,
                                 SwitchTape* tape = nullptr);
std::vector<cplx> switch_backward(const SwitchParams& p, const SwitchTape& tape,
                                  std::span<const cplx> grad_out, SwitchParams& grads);

// --- Conv ------------------------------------------------------------------

enum class Activation { Relu = 0, Linear = 1 };

/// Stride-1 zero-padded cross-correlation. Weight index ((p w + q) c_in + ci) c_out + co;
/// tap (p, q) reads input offset (p - lo, q - lo) with lo = floor((w-1)/2), so even
/// windows reach one further to the right/bottom.
struct ConvParams {
  int w = 0;
  int c_in = 0;
  int c_out = 0;
  Activation act = Activation::Relu;
  std::vector<double> weights;
  std::vector<double> bias;

  static ConvParams zeros(int w, int c_in, int c_out, Activation act);
  void validate() const;
  std::size_t real_count() const { return weights.size() + bias.size(); }
  double& weight(int p, int q, int ci, int co) {
    return weights[((static_cast<std::size_t>(p) * w + q) * c_in + ci) * c_out + co];
  }
};

struct ConvTape {
  bool recorded = false;
  RealTensor input;
  RealTensor output;
  // im2col patch matrix of the input, one row per pixel.
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> patches;
};

RealTensor conv_forward(const ConvParams& p, const RealTensor& z, ConvTape* tape = nullptr);
RealTensor conv_backward(const ConvParams& p, const ConvTape& tape, const RealTensor& grad_out,
                         ConvParams& grads);

// --- PM --------------------------------------------------------------------

/// z_out(k1, k2) = W(k1, k2) z(k1, k2) + b(k1, k2) on a single-channel n x n field.
struct PmParams {
  int n = 0;
  std::vector<double> weights;
  std::vector<double> bias;

  static PmParams zeros(int n);
  std::size_t real_count() const { return weights.size() + bias.size(); }
};

struct PmTape {
  bool recorded = false;
  RealTensor input;
};

RealTensor pm_forward(const PmParams& p, const RealTensor& z, PmTape* tape = nullptr);
RealTensor pm_backward(const PmParams& p, const PmTape& tape, const RealTensor& grad_out,
                       PmParams& grads);

}  // namespace switchnet
