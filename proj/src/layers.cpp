#include "switchnet/layers.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>

#include "switchnet/errors.hpp"

namespace switchnet {

namespace {

int checked_block(int n, int p, const char* what) {
  const int q = static_cast<int>(std::lround(std::sqrt(static_cast<double>(p))));
  if (p < 1 || q * q != p) {
    throw ShapeError(std::string(what) + ": P=" + std::to_string(p) + " is not a perfect square");
  }
  if (n < 1 || n % q != 0) {
    throw ShapeError(std::string(what) + ": sqrt(P)=" + std::to_string(q) +
                     " does not divide n=" + std::to_string(n));
  }
  return q;
}

// Flat field index for position `pos` of the grouped vector.
template <typename F>
void for_each_vect_pair(int n, int q, F&& f) {
  const int b = n / q;
  std::size_t pos = 0;
  for (int gi = 0; gi < q; ++gi)
    for (int gj = 0; gj < q; ++gj)
      for (int r = 0; r < b; ++r)
        for (int c = 0; c < b; ++c)
          f(pos++, static_cast<std::size_t>(gi * b + r) * n + (gj * b + c));
}

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMat>;
using ConstRowMap = Eigen::Map<const RowMat>;

// Patch matrix: one row per output pixel, one column per (p, q, ci) tap.
// Buffers are reused across calls to avoid reallocating.
void im2col(const RealTensor& z, int w, RowMat& cols) {
  const int lo = (w - 1) / 2;
  const int c = z.channels;
  cols.resize(static_cast<Eigen::Index>(z.height) * z.width, static_cast<Eigen::Index>(w) * w * c);
  cols.setZero();
  for (int i = 0; i < z.height; ++i) {
    for (int j = 0; j < z.width; ++j) {
      double* row = cols.row(static_cast<Eigen::Index>(i) * z.width + j).data();
      for (int p = 0; p < w; ++p) {
        const int ii = i + p - lo;
        if (ii < 0 || ii >= z.height) continue;
        for (int qq = 0; qq < w; ++qq) {
          const int jj = j + qq - lo;
          if (jj < 0 || jj >= z.width) continue;
          std::copy_n(&z.data[z.index(ii, jj, 0)], c, row + (p * w + qq) * c);
        }
      }
    }
  }
}

RowMat& workspace(int slot) {
  thread_local RowMat buffers[2];
  return buffers[slot];
}

void col2im_add(const RowMat& cols, int w, RealTensor& g) {
  const int lo = (w - 1) / 2;
  const int c = g.channels;
  for (int i = 0; i < g.height; ++i) {
    for (int j = 0; j < g.width; ++j) {
      const double* row = cols.row(static_cast<Eigen::Index>(i) * g.width + j).data();
      for (int p = 0; p < w; ++p) {
        const int ii = i + p - lo;
        if (ii < 0 || ii >= g.height) continue;
        for (int qq = 0; qq < w; ++qq) {
          const int jj = j + qq - lo;
          if (jj < 0 || jj >= g.width) continue;
          double* dst = &g.data[g.index(ii, jj, 0)];
          const double* src = row + (p * w + qq) * c;
          for (int ci = 0; ci < c; ++ci) dst[ci] += src[ci];
        }
      }
    }
  }
}

}  // namespace

// --- Vect / Square ---------------------------------------------------------

template <typename T>
std::vector<T> vect(std::span<const T> z, int n, int p) {
  const int q = checked_block(n, p, "vect");
  if (z.size() != static_cast<std::size_t>(n) * n) {
    throw ShapeError("vect: expected " + std::to_string(n * n) + " entries, got " +
                     std::to_string(z.size()));
  }
  std::vector<T> out(z.size());
  for_each_vect_pair(n, q, [&](std::size_t pos, std::size_t flat) { out[pos] = z[flat]; });
  return out;
}

template <typename T>
std::vector<T> square(std::span<const T> v, int n, int p) {
  const int q = checked_block(n, p, "square");
  if (v.size() != static_cast<std::size_t>(n) * n) {
    throw ShapeError("square: expected " + std::to_string(n * n) + " entries, got " +
                     std::to_string(v.size()));
  }
  std::vector<T> out(v.size());
  for_each_vect_pair(n, q, [&](std::size_t pos, std::size_t flat) { out[flat] = v[pos]; });
  return out;
}

template std::vector<double> vect<double>(std::span<const double>, int, int);
template std::vector<cplx> vect<cplx>(std::span<const cplx>, int, int);
template std::vector<double> square<double>(std::span<const double>, int, int);
template std::vector<cplx> square<cplx>(std::span<const cplx>, int, int);

// --- Switch ----------------------------------------------------------------

SwitchParams SwitchParams::zeros(int t, int p_in, int p_out, int n_in, int n_out) {
  SwitchParams p{t, p_in, p_out, n_in, n_out, {}, {}};
  p.validate();
  p.u.assign(static_cast<std::size_t>(n_in) * t * p_out, cplx{});
  p.v.assign(static_cast<std::size_t>(n_out) * t * p_in, cplx{});
  return p;
}

void SwitchParams::validate() const {
  if (t < 1) throw ConfigError("switch: t must be >= 1, got " + std::to_string(t));
  if (p_in < 1 || p_out < 1) throw ConfigError("switch: partition counts must be positive");
  if (n_in % p_in != 0) {
    throw ShapeError("switch: P_I=" + std::to_string(p_in) + " does not divide n_I=" +
                     std::to_string(n_in));
  }
  if (n_out % p_out != 0) {
    throw ShapeError("switch: P_O=" + std::to_string(p_out) + " does not divide n_O=" +
                     std::to_string(n_out));
  }
  if (!u.empty() && u.size() != static_cast<std::size_t>(n_in) * t * p_out)
    throw ShapeError("switch: U storage does not match its shape");
  if (!v.empty() && v.size() != static_cast<std::size_t>(n_out) * t * p_in)
    throw ShapeError("switch: V storage does not match its shape");
}

using CRowMat = Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<CRowMat>;
using ConstCMap = Eigen::Map<const CRowMat>;
using CVecMap = Eigen::Map<Eigen::VectorXcd>;
using ConstCVecMap = Eigen::Map<const Eigen::VectorXcd>;

std::vector<cplx> switch_forward(const SwitchParams& p, std::span<const cplx> z, SwitchTape* tape) {
  if (z.size() != static_cast<std::size_t>(p.n_in)) {
    throw ShapeError("switch: expected input length " + std::to_string(p.n_in) + ", got " +
                     std::to_string(z.size()));
  }
  const int t = p.t;
  const int bi = p.in_block();
  const int bo = p.out_block();
  const int wu = t * p.p_out;
  const int wv = t * p.p_in;

  std::vector<cplx> z1(static_cast<std::size_t>(p.p_in) * wu);
  for (int a = 0; a < p.p_in; ++a) {
    const ConstCMap u(&p.u[static_cast<std::size_t>(a) * bi * wu], bi, wu);
    const ConstCVecMap x(&z[static_cast<std::size_t>(a) * bi], bi);
    CVecMap(&z1[static_cast<std::size_t>(a) * wu], wu).noalias() = u.transpose() * x;
  }

  std::vector<cplx> z2(z1.size());
  for (int a = 0; a < p.p_in; ++a)
    for (int b = 0; b < p.p_out; ++b)
      for (int k = 0; k < t; ++k)
        z2[static_cast<std::size_t>(b) * wv + a * t + k] =
            z1[static_cast<std::size_t>(a) * wu + b * t + k];

  std::vector<cplx> out(static_cast<std::size_t>(p.n_out));
  for (int b = 0; b < p.p_out; ++b) {
    const ConstCMap v(&p.v[static_cast<std::size_t>(b) * bo * wv], bo, wv);
    const ConstCVecMap x(&z2[static_cast<std::size_t>(b) * wv], wv);
    CVecMap(&out[static_cast<std::size_t>(b) * bo], bo).noalias() = v * x;
  }

  if (tape) {
    tape->input.assign(z.begin(), z.end());
    tape->switched = std::move(z2);
    tape->recorded = true;
  }
  return out;
}

std::vector<cplx> switch_backward(const SwitchParams& p, const SwitchTape& tape,
                                  std::span<const cplx> grad_out, SwitchParams& grads) {
  if (!tape.recorded) throw ConfigError("switch backward: missing tape");
  if (grad_out.size() != static_cast<std::size_t>(p.n_out))
    throw ShapeError("switch backward: gradient length does not match n_O");
  if (grads.u.size() != p.u.size() || grads.v.size() != p.v.size())
    throw ShapeError("switch backward: gradient holder shape mismatch");
  const int t = p.t;
  const int bi = p.in_block();
  const int bo = p.out_block();
  const int wu = t * p.p_out;
  const int wv = t * p.p_in;

  // Outer products are explicit loops: Eigen's versions split head and tail
  // by alignment, and the two paths round differently.
  // out_b = V_b z2_b:  dV_b += g_b z2_b^H,  dz2_b = V_b^H g_b.
  std::vector<cplx> g2(tape.switched.size());
  for (int b = 0; b < p.p_out; ++b) {
    const std::size_t off = static_cast<std::size_t>(b) * bo * wv;
    const ConstCMap v(&p.v[off], bo, wv);
    const ConstCVecMap g(&grad_out[static_cast<std::size_t>(b) * bo], bo);
    const ConstCVecMap z2(&tape.switched[static_cast<std::size_t>(b) * wv], wv);
    for (int r = 0; r < bo; ++r) {
      cplx* row = &grads.v[off + static_cast<std::size_t>(r) * wv];
      for (int c = 0; c < wv; ++c) row[c] += g(r) * std::conj(z2(c));
    }
    CVecMap(&g2[static_cast<std::size_t>(b) * wv], wv).noalias() = v.adjoint() * g;
  }

  std::vector<cplx> g1(g2.size());
  for (int a = 0; a < p.p_in; ++a)
    for (int b = 0; b < p.p_out; ++b)
      for (int k = 0; k < t; ++k)
        g1[static_cast<std::size_t>(a) * wu + b * t + k] =
            g2[static_cast<std::size_t>(b) * wv + a * t + k];

  // z1_a = U_a^T z_a:  dU_a += conj(z_a) g1_a^T,  dz_a = conj(U_a) g1_a.
  std::vector<cplx> gz(static_cast<std::size_t>(p.n_in));
  for (int a = 0; a < p.p_in; ++a) {
    const std::size_t off = static_cast<std::size_t>(a) * bi * wu;
    const ConstCMap u(&p.u[off], bi, wu);
    const ConstCVecMap g(&g1[static_cast<std::size_t>(a) * wu], wu);
    const ConstCVecMap z(&tape.input[static_cast<std::size_t>(a) * bi], bi);
    for (int r = 0; r < bi; ++r) {
      cplx* row = &grads.u[off + static_cast<std::size_t>(r) * wu];
      const cplx zc = std::conj(z(r));
      for (int c = 0; c < wu; ++c) row[c] += zc * g(c);
    }
    CVecMap(&gz[static_cast<std::size_t>(a) * bi], bi).noalias() = u.conjugate() * g;
  }
  return gz;
}

// --- Conv ------------------------------------------------------------------

ConvParams ConvParams::zeros(int w, int c_in, int c_out, Activation act) {
  ConvParams p{w, c_in, c_out, act, {}, {}};
  p.validate();
  p.weights.assign(static_cast<std::size_t>(w) * w * c_in * c_out, 0.0);
  p.bias.assign(static_cast<std::size_t>(c_out), 0.0);
  return p;
}

void ConvParams::validate() const {
  if (w < 1) throw ConfigError("conv: window must be >= 1, got " + std::to_string(w));
  if (c_in < 1 || c_out < 1) throw ConfigError("conv: channel counts must be >= 1");
  if (!weights.empty() && weights.size() != static_cast<std::size_t>(w) * w * c_in * c_out)
    throw ShapeError("conv: weight storage does not match its shape");
  if (!bias.empty() && bias.size() != static_cast<std::size_t>(c_out))
    throw ShapeError("conv: bias storage does not match its shape");
}

RealTensor conv_forward(const ConvParams& p, const RealTensor& z, ConvTape* tape) {
  if (z.channels != p.c_in) {
    throw ShapeError("conv: expected " + std::to_string(p.c_in) + " input channels, got " +
                     std::to_string(z.channels));
  }
  RowMat& cols = tape ? tape->patches : workspace(0);
  im2col(z, p.w, cols);
  const ConstRowMap wmat(p.weights.data(), static_cast<Eigen::Index>(p.w) * p.w * p.c_in, p.c_out);
  RealTensor out = RealTensor::zeros(z.height, z.width, p.c_out);
  RowMap omat(out.data.data(), cols.rows(), p.c_out);
  omat.noalias() = cols * wmat;
  const Eigen::Map<const Eigen::RowVectorXd> bias(p.bias.data(), p.c_out);
  omat.rowwise() += bias;
  if (p.act == Activation::Relu) {
    for (double& x : out.data) x = x > 0.0 ? x : 0.0;
  }
  if (tape) {
    tape->input = z;
    tape->output = out;
    tape->recorded = true;
  }
  return out;
}

RealTensor conv_backward(const ConvParams& p, const ConvTape& tape, const RealTensor& grad_out,
                         ConvParams& grads) {
  if (!tape.recorded) throw ConfigError("conv backward: missing tape");
  if (!grad_out.same_shape(tape.output))
    throw ShapeError("conv backward: gradient shape " + grad_out.shape_string() +
                     " does not match output " + tape.output.shape_string());
  RealTensor gpre = grad_out;
  if (p.act == Activation::Relu) {
    for (std::size_t k = 0; k < gpre.size(); ++k)
      if (!(tape.output.data[k] > 0.0)) gpre.data[k] = 0.0;
  }
  const Eigen::Index taps = static_cast<Eigen::Index>(p.w) * p.w * p.c_in;
  const RowMat& cols = tape.patches;
  const ConstRowMap g(gpre.data.data(), cols.rows(), p.c_out);
  RowMap gw(grads.weights.data(), taps, p.c_out);
  gw.noalias() += cols.transpose() * g;
  // Plain loop: Eigen's vectorized sum peels to the first aligned element,
  // which would make the summation order depend on the allocation address.
  for (Eigen::Index k = 0; k < g.rows(); ++k)
    for (int co = 0; co < p.c_out; ++co) grads.bias[co] += g(k, co);

  const ConstRowMap wmat(p.weights.data(), taps, p.c_out);
  RowMat& gcols = workspace(1);
  gcols.noalias() = g * wmat.transpose();
  RealTensor gin = RealTensor::zeros(tape.input.height, tape.input.width, tape.input.channels);
  col2im_add(gcols, p.w, gin);
  return gin;
}

// --- PM --------------------------------------------------------------------

PmParams PmParams::zeros(int n) {
  if (n < 1) throw ConfigError("pm: n must be >= 1");
  const std::size_t sz = static_cast<std::size_t>(n) * n;
  return PmParams{n, std::vector<double>(sz, 0.0), std::vector<double>(sz, 0.0)};
}

RealTensor pm_forward(const PmParams& p, const RealTensor& z, PmTape* tape) {
  if (z.height != p.n || z.width != p.n || z.channels != 1) {
    throw ShapeError("pm: expected " + std::to_string(p.n) + "x" + std::to_string(p.n) +
                     "x1 input, got " + z.shape_string());
  }
  RealTensor out = z;
  for (std::size_t k = 0; k < out.size(); ++k) out.data[k] = p.weights[k] * z.data[k] + p.bias[k];
  if (tape) {
    tape->input = z;
    tape->recorded = true;
  }
  return out;
}

RealTensor pm_backward(const PmParams& p, const PmTape& tape, const RealTensor& grad_out,
                       PmParams& grads) {
  if (!tape.recorded) throw ConfigError("pm backward: missing tape");
  if (!grad_out.same_shape(tape.input)) throw ShapeError("pm backward: gradient shape mismatch");
  RealTensor gin = grad_out;
  for (std::size_t k = 0; k < gin.size(); ++k) {
    grads.weights[k] += grad_out.data[k] * tape.input.data[k];
    grads.bias[k] += grad_out.data[k];
    gin.data[k] = p.weights[k] * grad_out.data[k];
  }
  return gin;
}

}  // namespace switchnet
