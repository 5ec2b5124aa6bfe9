#pragma once

// Geometry shared by the simulator, the linearized operator and the networks:
// the N x N cell-centred grid over Omega, source/receiver sets, square
// partitions of index grids and Gaussian-mixture scatterers.

#include <complex>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace switchnet {

using cplx = std::complex<double>;

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

inline double dot(Point2 a, Point2 b) { return a.x * b.x + a.y * b.y; }

/// Uniform N x N grid of cell centres over [lo, hi]^2. Flat index i*N + j
/// addresses the point (lo + (i+1/2)h, lo + (j+1/2)h).
struct GridSpec {
  int n = 0;
  double omega = 0.0;
  double lo = -0.5;
  double hi = 0.5;

  double h() const { return (hi - lo) / n; }
  std::size_t size() const { return static_cast<std::size_t>(n) * n; }
  Point2 point(int i, int j) const { return {lo + (i + 0.5) * h(), lo + (j + 0.5) * h()}; }
  Point2 point(std::size_t flat) const {
    return point(static_cast<int>(flat / n), static_cast<int>(flat % n));
  }
  bool contains(Point2 p) const { return p.x >= lo && p.x <= hi && p.y >= lo && p.y <= hi; }

  /// Throws ConfigError unless N >= 2, lo < hi and h*omega <= pi/2.
  void validate() const;
};

GridSpec make_grid(int n, double omega, double lo = -0.5, double hi = 0.5);

/// M uniformly spaced unit directions, theta_k = 2*pi*k/M.
struct DirectionSet {
  std::vector<double> angles;
  std::vector<Point2> units;
  int size() const { return static_cast<int>(angles.size()); }
};

DirectionSet make_directions(int m);

/// M points on the horizontal line y = depth, x_k = lo + (k+1/2)(hi-lo)/M.
struct ReceiverLine {
  double depth = 0.0;
  std::vector<Point2> points;
  int size() const { return static_cast<int>(points.size()); }
};

ReceiverLine make_receiver_line(int m, double depth, const GridSpec& grid);

/// Cartesian square partition of an n x n index grid into P groups.
/// Group g = floor(i/b)*sqrt(P) + floor(j/b) with b = n/sqrt(P); members are
/// listed in row-major order within the square.
struct PartitionScheme {
  int n = 0;
  int groups_per_side = 0;  // sqrt(P)
  int block = 0;            // n / sqrt(P)
  std::vector<std::vector<std::size_t>> groups;

  int count() const { return static_cast<int>(groups.size()); }
  std::size_t group_size() const { return static_cast<std::size_t>(block) * block; }
  int group_of(std::size_t flat) const;
  /// Position of `flat` inside its group.
  std::size_t offset_in_group(std::size_t flat) const;
};

/// Throws ConfigError if P is not a perfect square or sqrt(P) does not divide n.
PartitionScheme make_partition(int n, int p);

/// Integer square root of P, or -1 if P is not a perfect square.
int exact_sqrt(int p);

struct Rect {
  double x0 = -0.5;
  double x1 = 0.5;
  double y0 = -0.5;
  double y1 = 0.5;
};

struct GaussianMixtureSpec {
  int n_s = 2;
  double beta = 0.2;
  double sigma = 0.015;
  Rect center_region{};

  void validate(const GridSpec& grid) const;
};

/// Scatterer eta on the N x N grid, row-major.
struct ScattererField {
  GridSpec grid;
  std::vector<double> values;

  double& at(int i, int j) { return values[static_cast<std::size_t>(i) * grid.n + j]; }
  double at(int i, int j) const { return values[static_cast<std::size_t>(i) * grid.n + j]; }
};

ScattererField zero_field(const GridSpec& grid);

/// Observation data d(r, s): row index = receiver, column = source, row-major.
struct ScatteringPattern {
  int m = 0;
  std::vector<cplx> values;

  cplx& at(int r, int s) { return values[static_cast<std::size_t>(r) * m + s]; }
  cplx at(int r, int s) const { return values[static_cast<std::size_t>(r) * m + s]; }
};

ScatteringPattern zero_pattern(int m);

/// eta(x) = sum_i beta * exp(-|x - c_i|^2 / (2 sigma^2)) with centres drawn
/// uniformly from spec.center_region by a generator seeded with `seed`.
ScattererField sample_scatterer(const GaussianMixtureSpec& spec, const GridSpec& grid,
                                std::uint64_t seed);

/// Same formula with explicit centres.
ScattererField mixture_field(const GaussianMixtureSpec& spec, const GridSpec& grid,
                             const std::vector<Point2>& centers);

/// Derives an independent per-item seed from a master seed (splitmix64).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

/// Largest divisor of n that does not exceed sqrt(omega) * (hi - lo): the
/// number of partition squares per side when squares are at least
/// 1/sqrt(omega) wide.
int partition_side_for(int n, double omega, double extent = 1.0);

}  // namespace switchnet
