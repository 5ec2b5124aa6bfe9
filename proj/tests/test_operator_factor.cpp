#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "switchnet/errors.hpp"
#include "switchnet/helmholtz.hpp"
#include "switchnet/operator_factor.hpp"

using namespace switchnet;

namespace {

std::vector<cplx> random_vector(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::vector<cplx> v(n);
  for (auto& x : v) x = {g(rng), g(rng)};
  return v;
}

cplx inner(std::span<const cplx> a, std::span<const cplx> b) {
  cplx s{};
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * std::conj(b[k]);
  return s;
}

double rel_diff(std::span<const cplx> a, std::span<const cplx> b) {
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    num += std::norm(a[k] - b[k]);
    den += std::norm(b[k]);
  }
  return std::sqrt(num / den);
}

// Column y of A^*A.
std::vector<cplx> normal_column(const BornOperator& op, std::size_t y) {
  std::vector<cplx> e(op.cols());
  e[y] = 1.0;
  return op.apply_adjoint(op.apply(e));
}

const SeismicBackground& seismic_background() {
  static const SeismicBackground bg = [] {
    const GridSpec g = make_grid(32, 24.0);
    return make_seismic_background(g, homogeneous_background(g), make_receiver_line(32, 0.45, g));
  }();
  return bg;
}

}  // namespace

TEST_CASE("far-field entries") {
  SUBCASE("zero frequency gives all ones") {
    const BornOperator op = BornOperator::far_field(make_grid(8, 0.0), 4);
    const auto rows = make_partition(4, 4), cols = make_partition(8, 4);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) {
        const Eigen::MatrixXcd b = born_block(op, rows, cols, i, j);
        CHECK((b.array() - cplx(1.0, 0.0)).abs().maxCoeff() == 0.0);
      }
  }
  SUBCASE("singleton groups have unit modulus") {
    const BornOperator op = BornOperator::far_field(make_grid(4, 2.0), 4);
    const auto rows = make_partition(4, 16), cols = make_partition(4, 16);
    for (int i = 0; i < 16; i += 5)
      for (int j = 0; j < 16; j += 3) {
        const Eigen::MatrixXcd b = born_block(op, rows, cols, i, j);
        REQUIRE(b.rows() == 1);
        REQUIRE(b.cols() == 1);
        CHECK(std::abs(b(0, 0)) == doctest::Approx(1.0).epsilon(1e-15));
      }
  }
  SUBCASE("blocks match an elementwise oracle") {
    const GridSpec g = make_grid(32, 24.0);
    const BornOperator op = BornOperator::far_field(g, 32);
    const auto rows = make_partition(32, 16), cols = make_partition(32, 16);
    double worst = 0.0;
    for (int i : {0, 5, 15})
      for (int j : {0, 9, 15}) {
        const Eigen::MatrixXcd b = born_block(op, rows, cols, i, j);
        for (std::size_t a = 0; a < rows.group_size(); ++a)
          for (std::size_t c = 0; c < cols.group_size(); ++c) {
            const std::size_t rs = rows.groups[i][a], x = cols.groups[j][c];
            const double tr = 2 * std::numbers::pi * static_cast<double>(rs / 32) / 32;
            const double ts = 2 * std::numbers::pi * static_cast<double>(rs % 32) / 32;
            const double px = -0.5 + (static_cast<double>(x / 32) + 0.5) / 32;
            const double py = -0.5 + (static_cast<double>(x % 32) + 0.5) / 32;
            const double phase =
                24.0 * ((std::cos(ts) - std::cos(tr)) * px + (std::sin(ts) - std::sin(tr)) * py);
            worst = std::max(worst, std::abs(b(a, c) - std::polar(1.0, phase)));
          }
      }
    CHECK(worst <= 1e-15);
  }
  SUBCASE("group index out of range") {
    const BornOperator op = BornOperator::far_field(make_grid(8, 4.0), 4);
    const auto rows = make_partition(4, 4), cols = make_partition(8, 4);
    CHECK_THROWS_AS(born_block(op, rows, cols, 4, 0), ConfigError);
    CHECK_THROWS_AS(born_block(op, rows, cols, 0, -1), ConfigError);
  }
}

TEST_CASE("operator apply matches entries and its adjoint") {
  for (bool seismic : {false, true}) {
    const BornOperator op = seismic ? BornOperator::seismic(seismic_background())
                                    : BornOperator::far_field(make_grid(32, 24.0), 32);
    const auto eta = random_vector(op.cols(), 1);
    const auto d = random_vector(op.rows(), 2);
    const auto a_eta = op.apply(eta);
    // dense oracle on a few rows
    for (std::size_t rs : {std::size_t{0}, std::size_t{77}, op.rows() - 1}) {
      cplx acc{};
      for (std::size_t x = 0; x < op.cols(); ++x) acc += op.entry(rs, x) * eta[x];
      CHECK(std::abs(acc - a_eta[rs]) <= 1e-10 * std::abs(acc));
    }
    const cplx lhs = inner(a_eta, d);
    const cplx rhs = inner(eta, op.apply_adjoint(d));
    CHECK(std::abs(lhs - rhs) <= 1e-12 * std::abs(lhs));
  }
}

TEST_CASE("block rank") {
  Eigen::VectorXcd a = Eigen::VectorXcd::Random(10), b = Eigen::VectorXcd::Random(7);
  const Eigen::MatrixXcd outer = a * b.adjoint();
  for (double tol : {1e-12, 1e-3, 0.5, 1.0}) CHECK(block_rank(outer, tol) == 1);
  CHECK(block_rank(Eigen::MatrixXcd::Zero(6, 6), 1e-3) == 0);
  CHECK(block_rank(Eigen::MatrixXcd::Identity(6, 6), 1e-3) == 6);
}

TEST_CASE("rank report invariants and CSV") {
  const BornOperator op = BornOperator::far_field(make_grid(16, 12.0), 16);
  const BlockRankReport rep = block_rank_report(op, 16, 16, {1e-6, 1e-3, 1e-1});
  CHECK(rep.blocks.size() == 256);
  for (const auto& b : rep.blocks) {
    CHECK(b.ranks[0] >= b.ranks[1]);
    CHECK(b.ranks[1] >= b.ranks[2]);
    CHECK(b.ranks[0] <= std::min(rep.rows_per_block, rep.cols_per_block));
  }
  std::ostringstream os;
  rep.write_csv(os);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  CHECK(line == "i,j,tol,rank,sigma_max");
  int lines = 0;
  while (std::getline(is, line)) ++lines;
  CHECK(lines == 256 * 3);
}

TEST_CASE("far-field blocks are numerically low rank at omega=24") {
  const BornOperator op = BornOperator::far_field(make_grid(32, 24.0), 32);
  const BlockRankReport rep = block_rank_report(op, 16, 16, {1e-3});
  MESSAGE("max block rank at tol 1e-3: " << rep.max_rank() << " of " << rep.rows_per_block);
  CHECK(rep.rows_per_block == 64);
  CHECK(rep.max_rank() <= 25);
}

TEST_CASE("max rank does not grow when omega doubles with rescaled partitions") {
  // points per wavelength fixed; sqrt(P) = largest divisor of N with squares >= 1/sqrt(omega)
  int ranks[2];
  int k = 0;
  for (auto [n, w] : {std::pair{16, 12.0}, std::pair{32, 24.0}}) {
    const int q = partition_side_for(n, w);
    const BornOperator op = BornOperator::far_field(make_grid(n, w), n);
    ranks[k++] = block_rank_report(op, q * q, q * q, {1e-3}).max_rank();
  }
  MESSAGE("omega=12: " << ranks[0] << ", omega=24: " << ranks[1]);
  CHECK(ranks[1] <= 25);
  CHECK(ranks[1] <= ranks[0]);
}

TEST_CASE("phase identity") {
  SUBCASE("single point") {
    const BornOperator op = BornOperator::far_field(make_grid(32, 24.0), 32);
    const std::pair<std::size_t, std::size_t> one[] = {{123, 456}};
    CHECK(verify_phase_identity(op, 16, 16, one) <= 1e-12);
  }
  SUBCASE("1000 random points at omega=60") {
    const BornOperator op = BornOperator::far_field(make_grid(80, 60.0), 80);
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<std::size_t> r(0, op.rows() - 1), x(0, op.cols() - 1);
    std::vector<std::pair<std::size_t, std::size_t>> pts;
    for (int k = 0; k < 1000; ++k) pts.emplace_back(r(rng), x(rng));
    CHECK(verify_phase_identity(op, 16, 64, pts) <= 1e-10);
  }
  SUBCASE("points at the square centres") {
    // odd square sides put a grid point at each centre
    const BornOperator op = BornOperator::far_field(make_grid(15, 8.0), 15);
    const std::size_t rs = 2 * 15 + 7;  // (r, s) = (2, 7): centre of D-square (0, 1)
    const std::size_t x = 7 * 15 + 12;  // (7, 12): centre of X-square (1, 2)
    const std::pair<std::size_t, std::size_t> c[] = {{rs, x}};
    CHECK(verify_phase_identity(op, 9, 9, c) <= 1e-14);
  }
  SUBCASE("seismic is rejected") {
    const BornOperator op = BornOperator::seismic(seismic_background());
    CHECK_THROWS_AS(verify_phase_identity(op, 16, 16, {}), ConfigError);
  }
}

TEST_CASE("factorization reconstruction") {
  SUBCASE("full rank reproduces every block") {
    const BornOperator op = BornOperator::far_field(make_grid(8, 4.0), 8);
    const SwitchFactorization f = build_factorization(op, 4, 4, 16);
    CHECK(f.t == 16);
    CHECK_FALSE(f.clamped);
    double norm = 0.0;
    for (std::size_t rs = 0; rs < op.rows(); ++rs)
      for (std::size_t x = 0; x < op.cols(); ++x) norm += std::norm(op.entry(rs, x));
    CHECK(factorization_error(op, f) <= 1e-12 * std::sqrt(norm));
  }
  SUBCASE("t beyond the block size is clamped") {
    const BornOperator op = BornOperator::far_field(make_grid(8, 4.0), 8);
    const SwitchFactorization f = build_factorization(op, 4, 4, 40);
    CHECK(f.t == 16);
    CHECK(f.requested_t == 40);
    CHECK(f.clamped);
  }
  SUBCASE("t=1 is exact on a rank-one operator") {
    const BornOperator op = BornOperator::far_field(make_grid(8, 0.0), 8);
    const SwitchFactorization f = build_factorization(op, 4, 4, 1);
    CHECK(factorization_error(op, f) <= 1e-12);
  }
  SUBCASE("t must be positive") {
    const BornOperator op = BornOperator::far_field(make_grid(8, 4.0), 8);
    CHECK_THROWS_AS(build_factorization(op, 4, 4, 0), ConfigError);
  }
}

TEST_CASE("factorization error equals the blockwise Eckart-Young tail") {
  const BornOperator op = BornOperator::far_field(make_grid(32, 24.0), 32);
  double previous = INFINITY;
  for (int t : {1, 2, 3}) {
    const SwitchFactorization f = build_factorization(op, 16, 16, t);
    const double err = factorization_error(op, f);
    const double tail = eckart_young_tail(op, 16, 16, t);
    CHECK(std::abs(err - tail) <= 1e-10 * tail);
    CHECK(err <= previous);
    previous = err;
  }
  const SwitchFactorization f = build_factorization(op, 16, 16, 3);
  CHECK(f.storage_entries() == 3u * 16u * (1024u + 16u + 1024u));
}

TEST_CASE("factorization apply and adjoint") {
  const BornOperator op = BornOperator::far_field(make_grid(8, 4.0), 8);
  const SwitchFactorization f = build_factorization(op, 4, 4, 2);
  SUBCASE("zero in, zero out") {
    for (const cplx& v : switchnet::apply(f, std::vector<cplx>(64))) CHECK(v == cplx{});
  }
  SUBCASE("dense assembly oracle") {
    Eigen::MatrixXcd dense = Eigen::MatrixXcd::Zero(64, 64);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) {
        const Eigen::MatrixXcd blk =
            f.u[i].middleCols(j * f.t, f.t) * f.v[j].middleCols(i * f.t, f.t).adjoint();
        for (std::size_t a = 0; a < f.rows.group_size(); ++a)
          for (std::size_t c = 0; c < f.cols.group_size(); ++c)
            dense(f.rows.groups[i][a], f.cols.groups[j][c]) = blk(a, c);
      }
    const auto eta = random_vector(64, 5);
    const Eigen::VectorXcd expect = dense * Eigen::Map<const Eigen::VectorXcd>(eta.data(), 64);
    const auto got = switchnet::apply(f, eta);
    CHECK(rel_diff(got, std::vector<cplx>(expect.data(), expect.data() + 64)) <= 1e-12);
    const auto d = random_vector(64, 6);
    const Eigen::VectorXcd expect_adj = dense.adjoint() * Eigen::Map<const Eigen::VectorXcd>(d.data(), 64);
    CHECK(rel_diff(switchnet::apply_adjoint(f, d), std::vector<cplx>(expect_adj.data(), expect_adj.data() + 64)) <=
          1e-12);
  }
  SUBCASE("adjoint pairing") {
    const BornOperator big = BornOperator::far_field(make_grid(32, 24.0), 32);
    const SwitchFactorization g = build_factorization(big, 16, 16, 3);
    const auto eta = random_vector(1024, 7), d = random_vector(1024, 8);
    const cplx lhs = inner(switchnet::apply(g, eta), d);
    const cplx rhs = inner(eta, switchnet::apply_adjoint(g, d));
    CHECK(std::abs(lhs - rhs) <= 1e-12 * std::abs(lhs));
  }
  SUBCASE("shape mismatch") {
    CHECK_THROWS_AS(switchnet::apply(f, std::vector<cplx>(10)), ShapeError);
    CHECK_THROWS_AS(switchnet::apply_adjoint(f, std::vector<cplx>(10)), ShapeError);
  }
}

TEST_CASE("shared right bases") {
  const BornOperator op = BornOperator::far_field(make_grid(32, 24.0), 32);
  const SwitchFactorization shared = build_shared_v_factorization(op, 16, 16, 3);
  const SwitchFactorization best = build_factorization(op, 16, 16, 3);
  for (int j = 1; j < 16; ++j) CHECK((shared.v[j] - shared.v[0]).norm() == 0.0);
  const double e_shared = factorization_error(op, shared);
  const double e_best = factorization_error(op, best);
  MESSAGE("shared-V error " << e_shared << ", per-block " << e_best);
  CHECK(e_shared <= 2.0 * e_best);
  CHECK_THROWS_AS(build_shared_v_factorization(BornOperator::seismic(seismic_background()), 16, 16, 3),
                  ConfigError);
}

TEST_CASE("normal operator structure") {
  SUBCASE("far field is translation invariant") {
    const BornOperator op = BornOperator::far_field(make_grid(32, 24.0), 32);
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<int> pos(0, 31);
    double worst = 0.0, scale = 0.0;
    for (int trial = 0; trial < 40; ++trial) {
      const int yi = pos(rng), yj = pos(rng), ti = pos(rng) - yi, tj = pos(rng) - yj;
      const auto c1 = normal_column(op, static_cast<std::size_t>(yi) * 32 + yj);
      const auto c2 = normal_column(op, static_cast<std::size_t>(yi + ti) * 32 + (yj + tj));
      for (int xi = 0; xi < 32; ++xi)
        for (int xj = 0; xj < 32; ++xj) {
          const int si = xi + ti, sj = xj + tj;
          scale = std::max(scale, std::abs(c1[xi * 32 + xj]));
          if (si < 0 || si >= 32 || sj < 0 || sj >= 32) continue;
          worst = std::max(worst, std::abs(c1[xi * 32 + xj] - c2[si * 32 + sj]));
        }
    }
    CHECK(worst <= 1e-12 * scale);
  }
  SUBCASE("seismic is not") {
    const BornOperator op = BornOperator::seismic(seismic_background());
    const auto c1 = normal_column(op, 16 * 32 + 10);
    const auto c2 = normal_column(op, 16 * 32 + 20);  // shifted by 10 in y
    double worst = 0.0, scale = 0.0;
    for (int xi = 0; xi < 32; ++xi)
      for (int xj = 0; xj < 22; ++xj) {
        scale = std::max(scale, std::abs(c1[xi * 32 + xj]));
        worst = std::max(worst, std::abs(c1[xi * 32 + xj] - c2[xi * 32 + xj + 10]));
      }
    CHECK(worst > 1e-3 * scale);
  }
}

TEST_CASE("filtered back-projection") {
  const GridSpec g = make_grid(32, 24.0);
  const BornOperator op = BornOperator::far_field(g, 32);
  const double norm = normal_operator_norm(op);
  SUBCASE("zero data") {
    const BackprojectionResult r = filtered_backprojection(op, std::vector<cplx>(1024), 1e-3 * norm);
    CHECK(r.converged);
    for (double v : r.field.values) CHECK(v == 0.0);
  }
  SUBCASE("large eps approaches the scaled adjoint") {
    const auto d = random_vector(1024, 3);
    const double eps = 1e6 * norm;
    const BackprojectionResult r = filtered_backprojection(op, d, eps);
    std::vector<cplx> expect = op.apply_adjoint(d);
    for (cplx& v : expect) v /= eps;
    CHECK(rel_diff(r.solution, expect) <= 1e-3);
  }
  SUBCASE("eps must be positive") {
    CHECK_THROWS_AS(filtered_backprojection(op, std::vector<cplx>(1024), 0.0), ConfigError);
  }
  SUBCASE("Born-regime data") {
    GaussianMixtureSpec spec;
    spec.beta = 0.002;
    spec.sigma = 0.9 / 24.0;
    const ScattererField eta = sample_scatterer(spec, g, 17);
    const DirectionSet dirs = make_directions(32);
    const ScatteringPattern d = gen_farfield(eta, homogeneous_background(g), dirs, dirs);
    const BackprojectionResult r = filtered_backprojection(op, d.values, 1e-3 * norm);
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < eta.values.size(); ++k) {
      num += std::pow(r.field.values[k] - eta.values[k], 2);
      den += eta.values[k] * eta.values[k];
    }
    MESSAGE("relative error " << std::sqrt(num / den));
    CHECK(std::sqrt(num / den) <= 0.2);
  }
  SUBCASE("iteration cap returns the best iterate") {
    const auto d = random_vector(1024, 4);
    const BackprojectionResult r = filtered_backprojection(op, d, 1e-9 * norm, 1e-14, 3);
    CHECK_FALSE(r.converged);
    CHECK(r.iterations == 3);
    CHECK(r.relative_residual < 1.0);
  }
}
