#pragma once

// Finite-difference frequency-domain Helmholtz solver on the grid padded by a
// perfectly matched layer. The discrete operator is the 5-point Laplacian in
// complex-stretched coordinates, multiplied through by s_x s_y so the matrix
// is complex symmetric:
//
//   L u = -d_x (s_y/s_x d_x u) - d_y (s_x/s_y d_y u) - s_x s_y omega^2/c0^2 u - eta u
//
// with s(xi) = 1 + i sigma(xi)/omega and sigma(xi) = sigma_max (xi/delta)^2.
// Inside Omega s_x = s_y = 1 and the rows reduce to the plain stencil.

#include <Eigen/Dense>
#include <complex>
#include <span>
#include <vector>

#include "switchnet/domain.hpp"

namespace switchnet {

struct PmlSpec {
  int thickness = 12;     // grid points per side
  double strength = 0.0;  // sigma_max

  void validate() const;
};

/// Default layer: 12 points with sigma_max * delta fixed, so the one-way
/// attenuation does not depend on the grid spacing.
PmlSpec default_pml(const GridSpec& grid);

struct BackgroundModel {
  double omega = 0.0;
  PmlSpec pml{};
  /// Background velocity on the padded grid, row-major; empty means c0 = 1.
  std::vector<double> c0;

  bool homogeneous() const;
};

BackgroundModel homogeneous_background(const GridSpec& grid);
BackgroundModel homogeneous_background(const GridSpec& grid, const PmlSpec& pml);

/// Side length of the padded grid, N + 2 * thickness.
int padded_side(const GridSpec& grid, const PmlSpec& pml);

/// Pentadiagonal operator on the padded grid; padded node (i, j) has flat
/// index i*side + j, its x-neighbours are +-side and y-neighbours +-1, so the
/// bandwidth equals the padded side length.
struct DiscreteOperator {
  GridSpec grid;
  int thickness = 0;
  int side = 0;
  std::vector<cplx> center;
  std::vector<cplx> xm;  // coupling to (i-1, j)
  std::vector<cplx> xp;  // coupling to (i+1, j)
  std::vector<cplx> ym;  // coupling to (i, j-1)
  std::vector<cplx> yp;  // coupling to (i, j+1)

  std::size_t size() const { return static_cast<std::size_t>(side) * side; }
  int bandwidth() const { return side; }
  std::size_t padded_index(int i, int j) const {
    return static_cast<std::size_t>(i + thickness) * side + (j + thickness);
  }
  cplx entry(std::size_t row, std::size_t col) const;
  std::vector<cplx> apply(std::span<const cplx> u) const;
};

DiscreteOperator assemble(const BackgroundModel& model, const GridSpec& grid);
/// assemble(model, grid) minus diag(eta), with eta zero-extended onto the padded grid.
DiscreteOperator assemble(const BackgroundModel& model, const GridSpec& grid,
                          const ScattererField& eta);

/// Banded LU with partial pivoting. Immutable after construction; concurrent
/// solves are safe as long as each caller owns its right-hand side buffer.
class SolverFactorization {
 public:
  SolverFactorization() = default;

  std::size_t size() const { return n_; }
  int bandwidth() const { return kl_; }

  void solve_in_place(std::span<cplx> rhs_columns, int nrhs) const;

 private:
  friend SolverFactorization factorize(const DiscreteOperator& op);

  std::size_t n_ = 0;
  int kl_ = 0;
  int ku_ = 0;
  int ldab_ = 0;
  std::vector<cplx> band_;
  std::vector<int> pivots_;
};

/// Throws SingularPivotError naming the first (numerically) zero pivot.
SolverFactorization factorize(const DiscreteOperator& op);
std::vector<cplx> solve(const SolverFactorization& fact, std::span<const cplx> rhs);

/// Far-field data: incoming plane waves exp(i omega s.x), scattered field from
/// (L0 - E) u_sc = E u_inc, and d(r,s) = sum_x exp(-i omega r.x) eta(x) u_tot(x).
ScatteringPattern gen_farfield(const ScattererField& eta, const BackgroundModel& model,
                               const DirectionSet& sources, const DirectionSet& receivers);

/// Background Green's columns for sources/receivers on a line. green(s, x) is
/// L0^{-1} applied to a discrete unit point source at line point s (bilinear
/// spreading, scaled by 1/h^2), restricted to the N x N interior grid.
struct SeismicBackground {
  GridSpec grid;
  BackgroundModel model;
  ReceiverLine line;
  Eigen::MatrixXcd green;  // M x N^2
};

SeismicBackground make_seismic_background(const GridSpec& grid, const BackgroundModel& model,
                                          const ReceiverLine& line);

/// d(r,s) = sum_x g_r(x) eta(x) (g_s + u_sc)(x) with (L0 - E) u_sc = E g_s.
ScatteringPattern gen_seismic(const ScattererField& eta, const SeismicBackground& background);

}  // namespace switchnet
