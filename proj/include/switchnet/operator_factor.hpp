#pragma once

// Linearized (Born) operator A : eta -> d for the far-field and seismic
// settings, blockwise rank measurement over square partitions, the
// block-diagonal U Sigma V^* switch factorization, and regularized
// least-squares inversion (filtered back-projection).

#include <Eigen/Dense>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

#include "switchnet/domain.hpp"
#include "switchnet/helmholtz.hpp"

namespace switchnet {

enum class ProblemKind { FarField = 0, Seismic = 1 };

/// A(rs, x) for rs = r*M + s. Both settings share the Khatri-Rao form
/// A(rs, x) = recv(r, x) * src(s, x); the far-field entries are also
/// available through the direct phase formula exp(i omega (s - r).x).
class BornOperator {
 public:
  static BornOperator far_field(const GridSpec& grid, int m);
  static BornOperator seismic(const SeismicBackground& background);

  ProblemKind kind() const { return kind_; }
  const GridSpec& grid() const { return grid_; }
  int m() const { return m_; }
  std::size_t rows() const { return static_cast<std::size_t>(m_) * m_; }
  std::size_t cols() const { return grid_.size(); }
  const DirectionSet& directions() const { return directions_; }

  cplx entry(std::size_t rs, std::size_t x) const;

  /// d = A eta; eta has N^2 entries, d has M^2 entries.
  std::vector<cplx> apply(std::span<const cplx> eta) const;
  /// A^* d.
  std::vector<cplx> apply_adjoint(std::span<const cplx> d) const;

 private:
  ProblemKind kind_ = ProblemKind::FarField;
  GridSpec grid_;
  int m_ = 0;
  DirectionSet directions_;
  Eigen::MatrixXcd recv_;  // M x N^2
  Eigen::MatrixXcd src_;   // M x N^2
};

/// Block A_ij: rows in D-group i of the M x M (receiver, source) grid, columns
/// in X-group j of the N x N grid, both in partition member order.
Eigen::MatrixXcd born_block(const BornOperator& op, const PartitionScheme& rows,
                            const PartitionScheme& cols, int i, int j);

/// Smallest k with sigma_{k+1} <= tol * sigma_1 (0 for a zero block).
int block_rank(const Eigen::MatrixXcd& block, double tol);
int rank_from_singular_values(const Eigen::VectorXd& sv, double tol);

struct BlockRankEntry {
  int i = 0;
  int j = 0;
  Eigen::VectorXd singular_values;
  std::vector<int> ranks;  // one per tolerance
};

struct BlockRankReport {
  std::vector<double> tolerances;
  int rows_per_block = 0;
  int cols_per_block = 0;
  std::vector<BlockRankEntry> blocks;

  int max_rank(std::size_t tol_index = 0) const;
  /// Columns: i, j, tol, rank, sigma_max.
  void write_csv(std::ostream& out) const;
};

BlockRankReport block_rank_report(const BornOperator& op, int p_d, int p_x,
                                  const std::vector<double>& tolerances);

/// Evaluates both sides of the centred four-factor phase identity at the
/// given (rs, x) pairs and returns max |lhs - rhs|. Far-field only.
double verify_phase_identity(const BornOperator& op, int p_d, int p_x,
                             std::span<const std::pair<std::size_t, std::size_t>> samples);

/// A ~ U Sigma V^*: U block-diagonal over D-groups with U_i = [U_i0 ... U_i(P_X-1)],
/// V block-diagonal over X-groups with V_j = [V_0j ... V_(P_D-1)j]; Sigma is the
/// block transpose and stays implicit. Singular values are absorbed into U.
struct SwitchFactorization {
  int t = 0;
  int requested_t = 0;
  bool clamped = false;
  int m = 0;
  int n = 0;
  PartitionScheme rows;  // D partition of the M x M grid
  PartitionScheme cols;  // X partition of the N x N grid
  std::vector<Eigen::MatrixXcd> u;  // P_D blocks, (M^2/P_D) x (t P_X)
  std::vector<Eigen::MatrixXcd> v;  // P_X blocks, (N^2/P_X) x (t P_D)

  int p_d() const { return rows.count(); }
  int p_x() const { return cols.count(); }
  /// tP(M^2 + P + N^2) for P_D = P_X = P; general form t(P_X M^2 + P_D P_X + P_D N^2).
  std::size_t storage_entries() const;
};

/// Per-block truncated SVD of rank t (clamped to the block dimensions).
SwitchFactorization build_factorization(const BornOperator& op, int p_d, int p_x, int t);

/// Far-field variant: one right basis per D-group, taken from the SVD of its
/// first block and reused for every X-group, so V_0 = V_1 = ... = V_{P_X-1}.
SwitchFactorization build_shared_v_factorization(const BornOperator& op, int p_d, int p_x, int t);

std::vector<cplx> apply(const SwitchFactorization& f, std::span<const cplx> eta);
std::vector<cplx> apply_adjoint(const SwitchFactorization& f, std::span<const cplx> d);

/// ||A - U Sigma V^*||_F, accumulated block by block.
double factorization_error(const BornOperator& op, const SwitchFactorization& f);
/// sqrt(sum_ij sum_{k>t} sigma_k(A_ij)^2).
double eckart_young_tail(const BornOperator& op, int p_d, int p_x, int t);

struct BackprojectionResult {
  ScattererField field;
  std::vector<cplx> solution;  // complex CG iterate; field holds its real part
  int iterations = 0;
  bool converged = false;
  double relative_residual = 0.0;
};

/// (A^*A + eps I)^{-1} A^* d by conjugate gradients on the normal equations.
/// Returns the best iterate with converged = false when the iteration cap is hit.
BackprojectionResult filtered_backprojection(const BornOperator& op, std::span<const cplx> d,
                                             double eps, double tol = 1e-8, int max_iter = 500);

/// Largest eigenvalue of A^*A by power iteration.
double normal_operator_norm(const BornOperator& op, int iterations = 100);

}  // namespace switchnet
