#include "switchnet/helmholtz.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "switchnet/errors.hpp"

#define lapack_complex_float std::complex<float>
#define lapack_complex_double std::complex<double>
#include <lapacke.h>

namespace switchnet {

namespace {

constexpr cplx kI{0.0, 1.0};

// sigma_max * delta; the round-trip amplitude through the layer is exp(-2/3 * kPmlAbsorption).
constexpr double kPmlAbsorption = 15.0;

struct Stretch {
  double lo, hi, h, delta, sigma_max, omega;
  int thickness;

  // coordinate of padded node index i (half-integer offsets allowed)
  double coord(double i) const { return lo + (i - thickness + 0.5) * h; }

  cplx operator()(double i) const {
    const double x = coord(i);
    const double xi = std::max({lo - x, x - hi, 0.0});
    if (xi == 0.0 || sigma_max == 0.0) return {1.0, 0.0};
    const double r = xi / delta;
    return 1.0 + kI * (sigma_max * r * r / omega);
  }
};

void check_background(const BackgroundModel& model, const GridSpec& grid) {
  grid.validate();
  model.pml.validate();
  if (!(model.omega > 0.0)) throw ConfigError("helmholtz: omega must be positive");
  const std::size_t side = padded_side(grid, model.pml);
  if (!model.c0.empty()) {
    if (model.c0.size() != side * side) {
      throw ShapeError("helmholtz: background velocity has " + std::to_string(model.c0.size()) +
                       " values, padded grid needs " + std::to_string(side * side));
    }
    for (double c : model.c0)
      if (!(c > 0.0)) throw ConfigError("helmholtz: background velocity must be positive");
  }
}

}  // namespace

void PmlSpec::validate() const {
  if (thickness < 8) throw ConfigError("pml: thickness must be at least 8 grid points");
  if (!(strength > 0.0)) throw ConfigError("pml: strength must be positive");
}

PmlSpec default_pml(const GridSpec& grid) {
  PmlSpec p;
  p.thickness = 12;
  p.strength = kPmlAbsorption / (p.thickness * grid.h());
  return p;
}

bool BackgroundModel::homogeneous() const {
  return std::all_of(c0.begin(), c0.end(), [](double c) { return c == 1.0; });
}

BackgroundModel homogeneous_background(const GridSpec& grid) {
  return homogeneous_background(grid, default_pml(grid));
}

BackgroundModel homogeneous_background(const GridSpec& grid, const PmlSpec& pml) {
  return BackgroundModel{grid.omega, pml, {}};
}

int padded_side(const GridSpec& grid, const PmlSpec& pml) { return grid.n + 2 * pml.thickness; }

cplx DiscreteOperator::entry(std::size_t row, std::size_t col) const {
  if (row == col) return center[row];
  const std::size_t s = side;
  if (col + s == row) return xm[row];
  if (row + s == col) return xp[row];
  if (col + 1 == row && row % s != 0) return ym[row];
  if (row + 1 == col && col % s != 0) return yp[row];
  return {0.0, 0.0};
}

std::vector<cplx> DiscreteOperator::apply(std::span<const cplx> u) const {
  if (u.size() != size()) throw ShapeError("operator apply: vector length mismatch");
  std::vector<cplx> out(size());
  for (int i = 0; i < side; ++i)
    for (int j = 0; j < side; ++j) {
      const std::size_t k = static_cast<std::size_t>(i) * side + j;
      cplx v = center[k] * u[k];
      if (i > 0) v += xm[k] * u[k - side];
      if (i + 1 < side) v += xp[k] * u[k + side];
      if (j > 0) v += ym[k] * u[k - 1];
      if (j + 1 < side) v += yp[k] * u[k + 1];
      out[k] = v;
    }
  return out;
}

DiscreteOperator assemble(const BackgroundModel& model, const GridSpec& grid) {
  check_background(model, grid);
  DiscreteOperator op;
  op.grid = grid;
  op.thickness = model.pml.thickness;
  op.side = padded_side(grid, model.pml);
  const std::size_t n = op.size();
  op.center.assign(n, {});
  op.xm.assign(n, {});
  op.xp.assign(n, {});
  op.ym.assign(n, {});
  op.yp.assign(n, {});

  const double h = grid.h();
  const double inv_h2 = 1.0 / (h * h);
  const Stretch s{grid.lo, grid.hi, h,           model.pml.thickness * h,
                  model.pml.strength, model.omega, model.pml.thickness};
  const double w2 = model.omega * model.omega;

  for (int i = 0; i < op.side; ++i) {
    const cplx sx = s(i);
    const cplx sx_m = s(i - 0.5);
    const cplx sx_p = s(i + 0.5);
    for (int j = 0; j < op.side; ++j) {
      const cplx sy = s(j);
      const cplx sy_m = s(j - 0.5);
      const cplx sy_p = s(j + 0.5);
      const std::size_t k = static_cast<std::size_t>(i) * op.side + j;
      const cplx cxm = sy / sx_m * inv_h2;
      const cplx cxp = sy / sx_p * inv_h2;
      const cplx cym = sx / sy_m * inv_h2;
      const cplx cyp = sx / sy_p * inv_h2;
      const double c0 = model.c0.empty() ? 1.0 : model.c0[k];
      op.center[k] = cxm + cxp + cym + cyp - sx * sy * (w2 / (c0 * c0));
      // couplings across the outer boundary are dropped (homogeneous Dirichlet)
      if (i > 0) op.xm[k] = -cxm;
      if (i + 1 < op.side) op.xp[k] = -cxp;
      if (j > 0) op.ym[k] = -cym;
      if (j + 1 < op.side) op.yp[k] = -cyp;
    }
  }
  return op;
}

DiscreteOperator assemble(const BackgroundModel& model, const GridSpec& grid,
                          const ScattererField& eta) {
  if (eta.grid.n != grid.n || eta.values.size() != grid.size()) {
    throw ShapeError("helmholtz: scatterer is " + std::to_string(eta.grid.n) + "x" +
                     std::to_string(eta.grid.n) + ", grid is " + std::to_string(grid.n) + "x" +
                     std::to_string(grid.n));
  }
  DiscreteOperator op = assemble(model, grid);
  // eta lives inside Omega, where s_x = s_y = 1
  for (int i = 0; i < grid.n; ++i)
    for (int j = 0; j < grid.n; ++j) op.center[op.padded_index(i, j)] -= eta.at(i, j);
  return op;
}

SolverFactorization factorize(const DiscreteOperator& op) {
  SolverFactorization f;
  f.n_ = op.size();
  f.kl_ = op.bandwidth();
  f.ku_ = op.bandwidth();
  f.ldab_ = 2 * f.kl_ + f.ku_ + 1;
  f.band_.assign(f.n_ * f.ldab_, {});
  f.pivots_.assign(f.n_, 0);

  const std::size_t n = f.n_;
  const std::size_t s = op.side;
  auto put = [&](std::size_t row, std::size_t col, cplx v) {
    f.band_[col * f.ldab_ + (f.kl_ + f.ku_ + row - col)] = v;
  };
  double amax = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    put(k, k, op.center[k]);
    if (k >= s) put(k, k - s, op.xm[k]);
    if (k + s < n) put(k, k + s, op.xp[k]);
    if (k % s != 0) put(k, k - 1, op.ym[k]);
    if ((k + 1) % s != 0) put(k, k + 1, op.yp[k]);
    amax = std::max({amax, std::abs(op.center[k]), std::abs(op.xm[k]), std::abs(op.xp[k]),
                     std::abs(op.ym[k]), std::abs(op.yp[k])});
  }

  const lapack_int info =
      LAPACKE_zgbtrf(LAPACK_COL_MAJOR, static_cast<lapack_int>(n), static_cast<lapack_int>(n),
                     f.kl_, f.ku_, f.band_.data(), f.ldab_, f.pivots_.data());
  if (info < 0) throw NumericalError("zgbtrf: illegal argument " + std::to_string(-info));
  if (info > 0) throw SingularPivotError(static_cast<std::size_t>(info - 1));

  const double tiny = std::numeric_limits<double>::epsilon() * static_cast<double>(n) * amax;
  for (std::size_t k = 0; k < n; ++k)
    if (!(std::abs(f.band_[k * f.ldab_ + f.kl_ + f.ku_]) > tiny)) throw SingularPivotError(k);
  return f;
}

void SolverFactorization::solve_in_place(std::span<cplx> rhs_columns, int nrhs) const {
  if (nrhs < 0 || rhs_columns.size() != n_ * static_cast<std::size_t>(nrhs)) {
    throw ShapeError("solve: right-hand side has the wrong length");
  }
  if (nrhs == 0) return;
  // zgbtrs reads the factor only; the output buffer belongs to the caller
  const lapack_int info = LAPACKE_zgbtrs(
      LAPACK_COL_MAJOR, 'N', static_cast<lapack_int>(n_), kl_, ku_, nrhs,
      const_cast<cplx*>(band_.data()), ldab_, const_cast<lapack_int*>(pivots_.data()),
      rhs_columns.data(), static_cast<lapack_int>(n_));
  if (info != 0) throw NumericalError("zgbtrs failed with info " + std::to_string(info));
}

std::vector<cplx> solve(const SolverFactorization& fact, std::span<const cplx> rhs) {
  std::vector<cplx> u(rhs.begin(), rhs.end());
  fact.solve_in_place(u, 1);
  return u;
}

namespace {

bool all_zero(const ScattererField& eta) {
  return std::all_of(eta.values.begin(), eta.values.end(), [](double v) { return v == 0.0; });
}

// u_sc for each column of `incident` (interior values, N^2 x K); returns u_tot on the interior.
Eigen::MatrixXcd total_field(const ScattererField& eta, const BackgroundModel& model,
                             const Eigen::MatrixXcd& incident) {
  const GridSpec& grid = eta.grid;
  const DiscreteOperator op = assemble(model, grid, eta);
  const SolverFactorization fact = factorize(op);
  const std::size_t np = op.size();
  const int k = static_cast<int>(incident.cols());
  std::vector<cplx> rhs(np * k);
  for (int c = 0; c < k; ++c)
    for (int i = 0; i < grid.n; ++i)
      for (int j = 0; j < grid.n; ++j) {
        const std::size_t x = static_cast<std::size_t>(i) * grid.n + j;
        rhs[c * np + op.padded_index(i, j)] = eta.values[x] * incident(x, c);
      }
  fact.solve_in_place(rhs, k);
  Eigen::MatrixXcd total = incident;
  for (int c = 0; c < k; ++c)
    for (int i = 0; i < grid.n; ++i)
      for (int j = 0; j < grid.n; ++j) {
        const std::size_t x = static_cast<std::size_t>(i) * grid.n + j;
        total(x, c) += rhs[c * np + op.padded_index(i, j)];
      }
  return total;
}

}  // namespace

ScatteringPattern gen_farfield(const ScattererField& eta, const BackgroundModel& model,
                               const DirectionSet& sources, const DirectionSet& receivers) {
  if (!model.homogeneous()) throw ConfigError("far field: background velocity must be 1");
  if (sources.size() != receivers.size()) {
    throw ShapeError("far field: source and receiver sets must have the same size");
  }
  const GridSpec& grid = eta.grid;
  const int m = sources.size();
  if (all_zero(eta)) {
    check_background(model, grid);
    return zero_pattern(m);
  }
  const std::size_t nx = grid.size();
  const double w = model.omega;

  Eigen::MatrixXcd incident(nx, m);
  Eigen::MatrixXcd outgoing(m, nx);
  for (std::size_t x = 0; x < nx; ++x) {
    const Point2 p = grid.point(x);
    for (int s = 0; s < m; ++s) incident(x, s) = std::exp(kI * (w * dot(sources.units[s], p)));
    for (int r = 0; r < m; ++r) outgoing(r, x) = std::exp(-kI * (w * dot(receivers.units[r], p)));
  }
  Eigen::MatrixXcd weighted = total_field(eta, model, incident);
  for (std::size_t x = 0; x < nx; ++x) weighted.row(x) *= eta.values[x];

  const Eigen::MatrixXcd d = outgoing * weighted;
  ScatteringPattern out = zero_pattern(m);
  for (int r = 0; r < m; ++r)
    for (int s = 0; s < m; ++s) out.at(r, s) = d(r, s);
  return out;
}

SeismicBackground make_seismic_background(const GridSpec& grid, const BackgroundModel& model,
                                          const ReceiverLine& line) {
  const DiscreteOperator op = assemble(model, grid);
  const SolverFactorization fact = factorize(op);
  const std::size_t np = op.size();
  const int m = line.size();
  const double h = grid.h();
  const double inv_h2 = 1.0 / (h * h);

  std::vector<cplx> rhs(np * m);
  for (int s = 0; s < m; ++s) {
    const Point2 p = line.points[s];
    if (!grid.contains(p)) throw ConfigError("seismic: line point outside the domain");
    // padded-grid fractional index of p
    const double fx = (p.x - grid.lo) / h - 0.5 + op.thickness;
    const double fy = (p.y - grid.lo) / h - 0.5 + op.thickness;
    const int i0 = static_cast<int>(std::floor(fx));
    const int j0 = static_cast<int>(std::floor(fy));
    const double tx = fx - i0;
    const double ty = fy - j0;
    auto add = [&](int i, int j, double wgt) {
      if (wgt == 0.0) return;
      rhs[s * np + static_cast<std::size_t>(i) * op.side + j] += wgt * inv_h2;
    };
    add(i0, j0, (1 - tx) * (1 - ty));
    add(i0 + 1, j0, tx * (1 - ty));
    add(i0, j0 + 1, (1 - tx) * ty);
    add(i0 + 1, j0 + 1, tx * ty);
  }
  fact.solve_in_place(rhs, m);

  SeismicBackground bg{grid, model, line, Eigen::MatrixXcd(m, grid.size())};
  for (int s = 0; s < m; ++s)
    for (int i = 0; i < grid.n; ++i)
      for (int j = 0; j < grid.n; ++j)
        bg.green(s, static_cast<Eigen::Index>(i) * grid.n + j) = rhs[s * np + op.padded_index(i, j)];
  return bg;
}

ScatteringPattern gen_seismic(const ScattererField& eta, const SeismicBackground& background) {
  const GridSpec& grid = background.grid;
  if (eta.grid.n != grid.n || eta.values.size() != grid.size()) {
    throw ShapeError("seismic: scatterer grid does not match the background grid");
  }
  const int m = background.line.size();
  if (all_zero(eta)) return zero_pattern(m);

  const Eigen::MatrixXcd incident = background.green.transpose();  // N^2 x M
  Eigen::MatrixXcd weighted = total_field(eta, background.model, incident);
  for (std::size_t x = 0; x < grid.size(); ++x) weighted.row(x) *= eta.values[x];
  const Eigen::MatrixXcd d = background.green * weighted;

  ScatteringPattern out = zero_pattern(m);
  for (int r = 0; r < m; ++r)
    for (int s = 0; s < m; ++s) out.at(r, s) = d(r, s);
  return out;
}

}  // namespace switchnet
