#include "switchnet/domain.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "switchnet/errors.hpp"

namespace switchnet {

void GridSpec::validate() const {
  if (n < 2) throw ConfigError("grid: N must be at least 2, got " + std::to_string(n));
  if (!(lo < hi)) throw ConfigError("grid: domain corners must satisfy lo < hi");
  if (omega < 0.0) throw ConfigError("grid: omega must be non-negative");
  // at least four points per wavelength
  if (h() * omega > std::numbers::pi / 2.0 + 1e-12) {
    throw ConfigError("grid: h*omega = " + std::to_string(h() * omega) +
                      " exceeds pi/2 (fewer than 4 points per wavelength)");
  }
}

GridSpec make_grid(int n, double omega, double lo, double hi) {
  GridSpec g{n, omega, lo, hi};
  g.validate();
  return g;
}

DirectionSet make_directions(int m) {
  if (m < 1) throw ConfigError("directions: M must be at least 1");
  DirectionSet d;
  d.angles.resize(m);
  d.units.resize(m);
  for (int k = 0; k < m; ++k) {
    const double theta = 2.0 * std::numbers::pi * k / m;
    d.angles[k] = theta;
    d.units[k] = {std::cos(theta), std::sin(theta)};
  }
  return d;
}

ReceiverLine make_receiver_line(int m, double depth, const GridSpec& grid) {
  if (m < 1) throw ConfigError("receiver line: M must be at least 1");
  if (depth < grid.lo || depth > grid.hi) {
    throw ConfigError("receiver line: depth " + std::to_string(depth) + " lies outside the domain");
  }
  const double extent = grid.hi - grid.lo;
  if (depth < grid.hi - 0.1 * extent) {
    throw ConfigError("receiver line: depth " + std::to_string(depth) +
                      " is not within the top 10% of the domain");
  }
  ReceiverLine line;
  line.depth = depth;
  line.points.resize(m);
  for (int k = 0; k < m; ++k) line.points[k] = {grid.lo + (k + 0.5) * extent / m, depth};
  return line;
}

int exact_sqrt(int p) {
  if (p < 1) return -1;
  int r = static_cast<int>(std::lround(std::sqrt(static_cast<double>(p))));
  return r * r == p ? r : -1;
}

int PartitionScheme::group_of(std::size_t flat) const {
  const int i = static_cast<int>(flat / n);
  const int j = static_cast<int>(flat % n);
  return (i / block) * groups_per_side + (j / block);
}

std::size_t PartitionScheme::offset_in_group(std::size_t flat) const {
  const int i = static_cast<int>(flat / n);
  const int j = static_cast<int>(flat % n);
  return static_cast<std::size_t>(i % block) * block + (j % block);
}

PartitionScheme make_partition(int n, int p) {
  const int q = exact_sqrt(p);
  if (q < 0) throw ConfigError("partition: P = " + std::to_string(p) + " is not a perfect square");
  if (n < 1 || n % q != 0) {
    throw ConfigError("partition: sqrt(P) = " + std::to_string(q) + " does not divide n = " +
                      std::to_string(n));
  }
  PartitionScheme ps;
  ps.n = n;
  ps.groups_per_side = q;
  ps.block = n / q;
  ps.groups.assign(p, {});
  for (auto& g : ps.groups) g.reserve(ps.group_size());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const std::size_t flat = static_cast<std::size_t>(i) * n + j;
      ps.groups[ps.group_of(flat)].push_back(flat);
    }
  return ps;
}

void GaussianMixtureSpec::validate(const GridSpec& grid) const {
  if (n_s < 1) throw ConfigError("mixture: n_s must be at least 1");
  if (!(beta > 0.0)) throw ConfigError("mixture: beta must be positive");
  if (!(sigma > 0.0)) throw ConfigError("mixture: sigma must be positive");
  const Rect& r = center_region;
  if (!(r.x0 <= r.x1 && r.y0 <= r.y1) || r.x0 < grid.lo || r.x1 > grid.hi || r.y0 < grid.lo ||
      r.y1 > grid.hi) {
    throw ConfigError("mixture: center region must be a rectangle inside the domain");
  }
}

ScattererField zero_field(const GridSpec& grid) {
  return ScattererField{grid, std::vector<double>(grid.size(), 0.0)};
}

ScatteringPattern zero_pattern(int m) {
  return ScatteringPattern{m, std::vector<cplx>(static_cast<std::size_t>(m) * m)};
}

ScattererField mixture_field(const GaussianMixtureSpec& spec, const GridSpec& grid,
                             const std::vector<Point2>& centers) {
  ScattererField f = zero_field(grid);
  const double inv = 1.0 / (2.0 * spec.sigma * spec.sigma);
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const Point2 x = grid.point(k);
    double v = 0.0;
    for (const Point2& c : centers) {
      const double dx = x.x - c.x;
      const double dy = x.y - c.y;
      v += spec.beta * std::exp(-(dx * dx + dy * dy) * inv);
    }
    f.values[k] = v;
  }
  return f;
}

ScattererField sample_scatterer(const GaussianMixtureSpec& spec, const GridSpec& grid,
                                std::uint64_t seed) {
  spec.validate(grid);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(spec.center_region.x0, spec.center_region.x1);
  std::uniform_real_distribution<double> uy(spec.center_region.y0, spec.center_region.y1);
  std::vector<Point2> centers(spec.n_s);
  for (auto& c : centers) {
    c.x = ux(rng);
    c.y = uy(rng);
  }
  return mixture_field(spec, grid, centers);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

int partition_side_for(int n, double omega, double extent) {
  const double limit = std::sqrt(omega) * extent;
  int best = 1;
  for (int q = 1; q <= n; ++q)
    if (n % q == 0 && q <= limit + 1e-12) best = q;
  return best;
}

}  // namespace switchnet
