#include "switchnet/operator_factor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <string>

#include "switchnet/errors.hpp"

namespace switchnet {

namespace {

constexpr cplx kI{0.0, 1.0};

Eigen::VectorXcd as_vector(std::span<const cplx> v) {
  return Eigen::Map<const Eigen::VectorXcd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<cplx> to_std(const Eigen::VectorXcd& v) { return {v.data(), v.data() + v.size()}; }

void check_partitions(const BornOperator& op, const PartitionScheme& rows,
                      const PartitionScheme& cols) {
  if (rows.n != op.m() || cols.n != op.grid().n) {
    throw ShapeError("born operator: partitions do not match the M x M and N x N grids");
  }
}

Eigen::VectorXd singular_values(const Eigen::MatrixXcd& block) {
  if (block.size() == 0) return {};
  return Eigen::BDCSVD<Eigen::MatrixXcd>(block).singularValues();
}

}  // namespace

BornOperator BornOperator::far_field(const GridSpec& grid, int m) {
  grid.validate();
  BornOperator op;
  op.kind_ = ProblemKind::FarField;
  op.grid_ = grid;
  op.m_ = m;
  op.directions_ = make_directions(m);
  const std::size_t nx = grid.size();
  op.recv_.resize(m, static_cast<Eigen::Index>(nx));
  op.src_.resize(m, static_cast<Eigen::Index>(nx));
  const double w = grid.omega;
  for (std::size_t x = 0; x < nx; ++x) {
    const Point2 p = grid.point(x);
    for (int k = 0; k < m; ++k) {
      const double phase = w * dot(op.directions_.units[k], p);
      op.recv_(k, x) = std::exp(-kI * phase);
      op.src_(k, x) = std::exp(kI * phase);
    }
  }
  return op;
}

BornOperator BornOperator::seismic(const SeismicBackground& background) {
  BornOperator op;
  op.kind_ = ProblemKind::Seismic;
  op.grid_ = background.grid;
  op.m_ = background.line.size();
  op.recv_ = background.green;
  op.src_ = background.green;
  return op;
}

cplx BornOperator::entry(std::size_t rs, std::size_t x) const {
  const auto r = static_cast<Eigen::Index>(rs / m_);
  const auto s = static_cast<Eigen::Index>(rs % m_);
  if (kind_ == ProblemKind::FarField) {
    const Point2 ur = directions_.units[r];
    const Point2 us = directions_.units[s];
    const Point2 p = grid_.point(x);
    const Point2 diff{us.x - ur.x, us.y - ur.y};
    return std::exp(kI * (grid_.omega * dot(diff, p)));
  }
  return recv_(r, static_cast<Eigen::Index>(x)) * src_(s, static_cast<Eigen::Index>(x));
}

std::vector<cplx> BornOperator::apply(std::span<const cplx> eta) const {
  if (eta.size() != cols()) throw ShapeError("born apply: eta must have N^2 entries");
  const Eigen::RowVectorXcd e = as_vector(eta).transpose();
  const Eigen::MatrixXcd weighted = (recv_.array().rowwise() * e.array()).matrix();
  const Eigen::MatrixXcd d = weighted * src_.transpose();  // M x M, (r, s)
  std::vector<cplx> out(rows());
  for (int r = 0; r < m_; ++r)
    for (int s = 0; s < m_; ++s) out[static_cast<std::size_t>(r) * m_ + s] = d(r, s);
  return out;
}

std::vector<cplx> BornOperator::apply_adjoint(std::span<const cplx> d) const {
  if (d.size() != rows()) throw ShapeError("born adjoint: d must have M^2 entries");
  Eigen::MatrixXcd dm(m_, m_);
  for (int r = 0; r < m_; ++r)
    for (int s = 0; s < m_; ++s) dm(r, s) = d[static_cast<std::size_t>(r) * m_ + s];
  const Eigen::MatrixXcd t = dm * src_.conjugate();  // M x N^2
  const Eigen::RowVectorXcd eta = (recv_.conjugate().array() * t.array()).colwise().sum();
  return {eta.data(), eta.data() + eta.size()};
}

Eigen::MatrixXcd born_block(const BornOperator& op, const PartitionScheme& rows,
                            const PartitionScheme& cols, int i, int j) {
  check_partitions(op, rows, cols);
  if (i < 0 || i >= rows.count() || j < 0 || j >= cols.count()) {
    throw ConfigError("born block: group index (" + std::to_string(i) + ", " + std::to_string(j) +
                      ") out of range");
  }
  const auto& ri = rows.groups[i];
  const auto& cj = cols.groups[j];
  Eigen::MatrixXcd b(ri.size(), cj.size());
  for (std::size_t a = 0; a < ri.size(); ++a)
    for (std::size_t c = 0; c < cj.size(); ++c) b(a, c) = op.entry(ri[a], cj[c]);
  return b;
}

int rank_from_singular_values(const Eigen::VectorXd& sv, double tol) {
  if (sv.size() == 0 || sv(0) == 0.0) return 0;
  int k = 0;
  while (k < sv.size() && sv(k) >= tol * sv(0)) ++k;
  return k;
}

int block_rank(const Eigen::MatrixXcd& block, double tol) {
  return rank_from_singular_values(singular_values(block), tol);
}

int BlockRankReport::max_rank(std::size_t tol_index) const {
  int best = 0;
  for (const auto& b : blocks) best = std::max(best, b.ranks.at(tol_index));
  return best;
}

void BlockRankReport::write_csv(std::ostream& out) const {
  out << "i,j,tol,rank,sigma_max\n";
  const auto old = out.precision(17);
  for (const auto& b : blocks)
    for (std::size_t k = 0; k < tolerances.size(); ++k) {
      out << b.i << ',' << b.j << ',' << tolerances[k] << ',' << b.ranks[k] << ','
          << (b.singular_values.size() ? b.singular_values(0) : 0.0) << '\n';
    }
  out.precision(old);
}

BlockRankReport block_rank_report(const BornOperator& op, int p_d, int p_x,
                                  const std::vector<double>& tolerances) {
  const PartitionScheme rows = make_partition(op.m(), p_d);
  const PartitionScheme cols = make_partition(op.grid().n, p_x);
  BlockRankReport rep;
  rep.tolerances = tolerances;
  rep.rows_per_block = static_cast<int>(rows.group_size());
  rep.cols_per_block = static_cast<int>(cols.group_size());
  for (int i = 0; i < rows.count(); ++i)
    for (int j = 0; j < cols.count(); ++j) {
      BlockRankEntry e;
      e.i = i;
      e.j = j;
      e.singular_values = singular_values(born_block(op, rows, cols, i, j));
      for (double tol : tolerances) e.ranks.push_back(rank_from_singular_values(e.singular_values, tol));
      rep.blocks.push_back(std::move(e));
    }
  return rep;
}

double verify_phase_identity(const BornOperator& op, int p_d, int p_x,
                             std::span<const std::pair<std::size_t, std::size_t>> samples) {
  if (op.kind() != ProblemKind::FarField) {
    throw ConfigError("phase identity: only defined for the far-field operator");
  }
  const PartitionScheme rows = make_partition(op.m(), p_d);
  const PartitionScheme cols = make_partition(op.grid().n, p_x);
  const GridSpec& grid = op.grid();
  const int m = op.m();
  const double w = grid.omega;
  const auto& units = op.directions().units;

  double worst = 0.0;
  for (const auto& [rs, x] : samples) {
    if (rs >= op.rows() || x >= op.cols()) throw ConfigError("phase identity: sample out of range");
    const Point2 r = units[rs / m];
    const Point2 s = units[rs % m];
    const Point2 p = grid.point(x);

    // centre of the D-square holding (r, s), in the angular parameterization
    const int gi = rows.group_of(rs);
    const double half_d = (rows.block - 1) / 2.0;
    const double ci = (gi / rows.groups_per_side) * rows.block + half_d;
    const double cs = (gi % rows.groups_per_side) * rows.block + half_d;
    const double tr = 2.0 * std::numbers::pi * ci / m;
    const double ts = 2.0 * std::numbers::pi * cs / m;
    const Point2 rc{std::cos(tr), std::sin(tr)};
    const Point2 sc{std::cos(ts), std::sin(ts)};

    const int gj = cols.group_of(x);
    const double half_x = (cols.block - 1) / 2.0;
    const double xi = (gj / cols.groups_per_side) * cols.block + half_x;
    const double xj = (gj % cols.groups_per_side) * cols.block + half_x;
    const Point2 xc{grid.lo + (xi + 0.5) * grid.h(), grid.lo + (xj + 0.5) * grid.h()};

    const Point2 k{s.x - r.x, s.y - r.y};
    const Point2 kc{sc.x - rc.x, sc.y - rc.y};
    const Point2 dk{k.x - kc.x, k.y - kc.y};
    const Point2 dx{p.x - xc.x, p.y - xc.y};

    const cplx lhs = std::exp(kI * (w * dot(k, p)));
    const cplx rhs = std::exp(kI * (w * dot(dk, dx))) * std::exp(kI * (w * dot(kc, p))) *
                     std::exp(kI * (w * dot(k, xc))) * std::exp(-kI * (w * dot(kc, xc)));
    worst = std::max(worst, std::abs(lhs - rhs));
  }
  return worst;
}

std::size_t SwitchFactorization::storage_entries() const {
  const std::size_t pd = p_d(), px = p_x();
  const std::size_t m2 = static_cast<std::size_t>(m) * m, n2 = static_cast<std::size_t>(n) * n;
  return static_cast<std::size_t>(t) * (px * m2 + pd * px + pd * n2);
}

namespace {

SwitchFactorization empty_factorization(const BornOperator& op, int p_d, int p_x, int t) {
  if (t < 1) throw ConfigError("factorization: t must be at least 1");
  SwitchFactorization f;
  f.rows = make_partition(op.m(), p_d);
  f.cols = make_partition(op.grid().n, p_x);
  f.m = op.m();
  f.n = op.grid().n;
  f.requested_t = t;
  const int limit = static_cast<int>(std::min(f.rows.group_size(), f.cols.group_size()));
  f.t = std::min(t, limit);
  f.clamped = f.t != t;
  f.u.assign(p_d, Eigen::MatrixXcd::Zero(f.rows.group_size(), f.t * p_x));
  f.v.assign(p_x, Eigen::MatrixXcd::Zero(f.cols.group_size(), f.t * p_d));
  return f;
}

}  // namespace

SwitchFactorization build_factorization(const BornOperator& op, int p_d, int p_x, int t) {
  SwitchFactorization f = empty_factorization(op, p_d, p_x, t);
  const int tt = f.t;
  for (int i = 0; i < p_d; ++i)
    for (int j = 0; j < p_x; ++j) {
      const Eigen::MatrixXcd a = born_block(op, f.rows, f.cols, i, j);
      Eigen::BDCSVD<Eigen::MatrixXcd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
      const Eigen::VectorXd sv = svd.singularValues().head(tt);
      f.u[i].middleCols(static_cast<Eigen::Index>(j) * tt, tt) =
          svd.matrixU().leftCols(tt) * sv.cast<cplx>().asDiagonal();
      f.v[j].middleCols(static_cast<Eigen::Index>(i) * tt, tt) = svd.matrixV().leftCols(tt);
    }
  return f;
}

SwitchFactorization build_shared_v_factorization(const BornOperator& op, int p_d, int p_x, int t) {
  if (op.kind() != ProblemKind::FarField) {
    throw ConfigError("shared-V factorization: only valid for the far-field operator");
  }
  SwitchFactorization f = empty_factorization(op, p_d, p_x, t);
  const int tt = f.t;
  for (int i = 0; i < p_d; ++i) {
    Eigen::BDCSVD<Eigen::MatrixXcd> svd(born_block(op, f.rows, f.cols, i, 0), Eigen::ComputeThinV);
    const Eigen::MatrixXcd basis = svd.matrixV().leftCols(tt);
    for (int j = 0; j < p_x; ++j) {
      const Eigen::MatrixXcd a = born_block(op, f.rows, f.cols, i, j);
      f.u[i].middleCols(static_cast<Eigen::Index>(j) * tt, tt) = a * basis;
      f.v[j].middleCols(static_cast<Eigen::Index>(i) * tt, tt) = basis;
    }
  }
  return f;
}

std::vector<cplx> apply(const SwitchFactorization& f, std::span<const cplx> eta) {
  const std::size_t n2 = static_cast<std::size_t>(f.n) * f.n;
  if (eta.size() != n2) throw ShapeError("factorization apply: eta must have N^2 entries");
  const int pd = f.p_d(), px = f.p_x(), t = f.t;

  // V^* per X-group, then the switch: segment i of group j goes to segment j of group i
  std::vector<Eigen::VectorXcd> switched(pd, Eigen::VectorXcd(static_cast<Eigen::Index>(t) * px));
  for (int j = 0; j < px; ++j) {
    const auto& members = f.cols.groups[j];
    Eigen::VectorXcd local(members.size());
    for (std::size_t k = 0; k < members.size(); ++k) local(k) = eta[members[k]];
    const Eigen::VectorXcd w = f.v[j].adjoint() * local;
    for (int i = 0; i < pd; ++i) switched[i].segment(j * t, t) = w.segment(i * t, t);
  }
  std::vector<cplx> d(static_cast<std::size_t>(f.m) * f.m);
  for (int i = 0; i < pd; ++i) {
    const Eigen::VectorXcd out = f.u[i] * switched[i];
    const auto& members = f.rows.groups[i];
    for (std::size_t k = 0; k < members.size(); ++k) d[members[k]] = out(k);
  }
  return d;
}

std::vector<cplx> apply_adjoint(const SwitchFactorization& f, std::span<const cplx> d) {
  const std::size_t m2 = static_cast<std::size_t>(f.m) * f.m;
  if (d.size() != m2) throw ShapeError("factorization adjoint: d must have M^2 entries");
  const int pd = f.p_d(), px = f.p_x(), t = f.t;

  std::vector<Eigen::VectorXcd> switched(px, Eigen::VectorXcd(static_cast<Eigen::Index>(t) * pd));
  for (int i = 0; i < pd; ++i) {
    const auto& members = f.rows.groups[i];
    Eigen::VectorXcd local(members.size());
    for (std::size_t k = 0; k < members.size(); ++k) local(k) = d[members[k]];
    const Eigen::VectorXcd y = f.u[i].adjoint() * local;
    for (int j = 0; j < px; ++j) switched[j].segment(i * t, t) = y.segment(j * t, t);
  }
  std::vector<cplx> eta(static_cast<std::size_t>(f.n) * f.n);
  for (int j = 0; j < px; ++j) {
    const Eigen::VectorXcd out = f.v[j] * switched[j];
    const auto& members = f.cols.groups[j];
    for (std::size_t k = 0; k < members.size(); ++k) eta[members[k]] = out(k);
  }
  return eta;
}

double factorization_error(const BornOperator& op, const SwitchFactorization& f) {
  const int t = f.t;
  double sum = 0.0;
  for (int i = 0; i < f.p_d(); ++i)
    for (int j = 0; j < f.p_x(); ++j) {
      const Eigen::MatrixXcd a = born_block(op, f.rows, f.cols, i, j);
      const Eigen::MatrixXcd approx = f.u[i].middleCols(static_cast<Eigen::Index>(j) * t, t) *
                                      f.v[j].middleCols(static_cast<Eigen::Index>(i) * t, t).adjoint();
      sum += (a - approx).squaredNorm();
    }
  return std::sqrt(sum);
}

double eckart_young_tail(const BornOperator& op, int p_d, int p_x, int t) {
  const PartitionScheme rows = make_partition(op.m(), p_d);
  const PartitionScheme cols = make_partition(op.grid().n, p_x);
  double sum = 0.0;
  for (int i = 0; i < p_d; ++i)
    for (int j = 0; j < p_x; ++j) {
      const Eigen::VectorXd sv = singular_values(born_block(op, rows, cols, i, j));
      for (Eigen::Index k = t; k < sv.size(); ++k) sum += sv(k) * sv(k);
    }
  return std::sqrt(sum);
}

BackprojectionResult filtered_backprojection(const BornOperator& op, std::span<const cplx> d,
                                             double eps, double tol, int max_iter) {
  if (!(eps > 0.0)) throw ConfigError("back-projection: eps must be positive");
  const std::size_t nx = op.cols();
  auto normal = [&](const Eigen::VectorXcd& v) {
    const std::vector<cplx> av = op.apply({v.data(), static_cast<std::size_t>(v.size())});
    return Eigen::VectorXcd(as_vector(op.apply_adjoint(av)) + eps * v);
  };

  const Eigen::VectorXcd b = as_vector(op.apply_adjoint(d));
  const double bnorm = b.norm();
  BackprojectionResult res;
  Eigen::VectorXcd x = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(nx));
  if (bnorm == 0.0) {
    res.converged = true;
  } else {
    Eigen::VectorXcd r = b;
    Eigen::VectorXcd p = r;
    double rs = r.squaredNorm();
    Eigen::VectorXcd best = x;
    double best_res = 1.0;
    for (int it = 1; it <= max_iter; ++it) {
      const Eigen::VectorXcd ap = normal(p);
      const double alpha = rs / p.dot(ap).real();
      x += alpha * p;
      r -= alpha * ap;
      const double rs_new = r.squaredNorm();
      const double rel = std::sqrt(rs_new) / bnorm;
      res.iterations = it;
      if (rel < best_res) {
        best_res = rel;
        best = x;
      }
      if (rel <= tol) {
        res.converged = true;
        break;
      }
      p = r + (rs_new / rs) * p;
      rs = rs_new;
    }
    x = best;
    res.relative_residual = best_res;
  }
  res.solution = to_std(x);
  res.field = zero_field(op.grid());
  for (std::size_t k = 0; k < nx; ++k) res.field.values[k] = x(static_cast<Eigen::Index>(k)).real();
  return res;
}

double normal_operator_norm(const BornOperator& op, int iterations) {
  const std::size_t nx = op.cols();
  Eigen::VectorXcd v(static_cast<Eigen::Index>(nx));
  for (std::size_t k = 0; k < nx; ++k) v(k) = cplx(1.0 + 0.5 * std::sin(0.7 * k), 0.25 * std::cos(1.3 * k));
  v.normalize();
  double lambda = 0.0;
  for (int it = 0; it < iterations; ++it) {
    const std::vector<cplx> av = op.apply({v.data(), nx});
    const Eigen::VectorXcd w = as_vector(op.apply_adjoint(av));
    lambda = v.dot(w).real();
    const double nw = w.norm();
    if (nw == 0.0) return 0.0;
    v = w / nw;
  }
  return lambda;
}

}  // namespace switchnet
