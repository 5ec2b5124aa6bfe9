#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "switchnet/domain.hpp"
#include "switchnet/errors.hpp"

using namespace switchnet;

TEST_CASE("grid points sit at cell centres") {
  const GridSpec g = make_grid(4, 1.0);
  CHECK(g.h() == doctest::Approx(0.25));
  CHECK(g.point(0, 0).x == doctest::Approx(-0.375));
  CHECK(g.point(3, 1).x == doctest::Approx(0.375));
  CHECK(g.point(3, 1).y == doctest::Approx(-0.125));
  CHECK(g.point(std::size_t{13}).x == g.point(3, 1).x);
}

TEST_CASE("grid validation") {
  CHECK_THROWS_AS(make_grid(1, 1.0), ConfigError);
  CHECK_THROWS_AS(make_grid(8, -1.0), ConfigError);
  // h*omega = pi/2 is the boundary, slightly above is rejected
  CHECK_NOTHROW(make_grid(32, 16.0 * std::numbers::pi));
  CHECK_THROWS_AS(make_grid(32, 16.0 * std::numbers::pi * 1.01), ConfigError);
  CHECK_THROWS_AS(make_grid(8, 1.0, 0.5, 0.5), ConfigError);
}

TEST_CASE("partition examples") {
  SUBCASE("n=4, P=4") {
    const PartitionScheme p = make_partition(4, 4);
    REQUIRE(p.count() == 4);
    CHECK(p.groups[0] == std::vector<std::size_t>{0, 1, 4, 5});
    CHECK(p.groups[1] == std::vector<std::size_t>{2, 3, 6, 7});
    CHECK(p.groups[2] == std::vector<std::size_t>{8, 9, 12, 13});
    CHECK(p.groups[3] == std::vector<std::size_t>{10, 11, 14, 15});
  }
  SUBCASE("P=1 is a single group") {
    const PartitionScheme p = make_partition(4, 1);
    REQUIRE(p.count() == 1);
    std::vector<std::size_t> all(16);
    std::iota(all.begin(), all.end(), std::size_t{0});
    CHECK(p.groups[0] == all);
  }
  SUBCASE("P=n^2 gives row-major singletons") {
    const PartitionScheme p = make_partition(4, 16);
    REQUIRE(p.count() == 16);
    for (std::size_t g = 0; g < 16; ++g) CHECK(p.groups[g] == std::vector<std::size_t>{g});
  }
}

TEST_CASE("partition errors") {
  CHECK_THROWS_AS(make_partition(4, 3), ConfigError);
  CHECK_THROWS_AS(make_partition(6, 16), ConfigError);
  CHECK_THROWS_AS(make_partition(4, 0), ConfigError);
}

TEST_CASE("partition covers every index exactly once") {
  for (int n : {4, 6, 8, 12, 16, 32}) {
    for (int q = 1; q <= n; ++q) {
      if (n % q != 0) continue;
      const PartitionScheme p = make_partition(n, q * q);
      std::vector<std::size_t> all;
      for (const auto& g : p.groups) {
        CHECK(g.size() == p.group_size());
        all.insert(all.end(), g.begin(), g.end());
      }
      std::sort(all.begin(), all.end());
      std::vector<std::size_t> expect(static_cast<std::size_t>(n) * n);
      std::iota(expect.begin(), expect.end(), std::size_t{0});
      CHECK(all == expect);
      // brute-force membership scan against the block-index formula
      const int b = n / q;
      for (std::size_t flat = 0; flat < expect.size(); ++flat) {
        const int i = static_cast<int>(flat) / n, j = static_cast<int>(flat) % n;
        const int g = (i / b) * q + j / b;
        int hits = 0;
        for (int k = 0; k < p.count(); ++k)
          hits += static_cast<int>(std::count(p.groups[k].begin(), p.groups[k].end(), flat));
        CHECK(hits == 1);
        CHECK(std::find(p.groups[g].begin(), p.groups[g].end(), flat) != p.groups[g].end());
        CHECK(p.group_of(flat) == g);
        CHECK(p.groups[g][p.offset_in_group(flat)] == flat);
      }
    }
  }
}

TEST_CASE("directions") {
  const DirectionSet d = make_directions(4);
  REQUIRE(d.size() == 4);
  for (int k = 0; k < 4; ++k) CHECK(d.angles[k] == doctest::Approx(k * std::numbers::pi / 2));
  const DirectionSet d80 = make_directions(80);
  for (int k = 0; k < 80; ++k) {
    CHECK(std::hypot(d80.units[k].x, d80.units[k].y) == doctest::Approx(1.0).epsilon(1e-15));
    if (k > 0) CHECK(d80.angles[k] > d80.angles[k - 1]);
    CHECK(d80.angles[k] < 2 * std::numbers::pi);
  }
  CHECK_THROWS_AS(make_directions(0), ConfigError);
}

TEST_CASE("receiver line") {
  const GridSpec g = make_grid(32, 24.0);
  const ReceiverLine two = make_receiver_line(2, 0.45, g);
  CHECK(two.points[0].x == doctest::Approx(-0.25));
  CHECK(two.points[1].x == doctest::Approx(0.25));
  const ReceiverLine l80 = make_receiver_line(80, 0.45, g);
  REQUIRE(l80.size() == 80);
  for (int k = 1; k < 80; ++k)
    CHECK(l80.points[k].x - l80.points[k - 1].x == doctest::Approx(0.0125));
  for (const Point2& p : l80.points) {
    CHECK(g.contains(p));
    CHECK(p.y == 0.45);
  }
  CHECK_THROWS_AS(make_receiver_line(4, 0.6, g), ConfigError);
  CHECK_THROWS_AS(make_receiver_line(4, -0.7, g), ConfigError);
  CHECK_THROWS_AS(make_receiver_line(4, 0.0, g), ConfigError);  // not near the top
}

TEST_CASE("mixture values") {
  const GridSpec g = make_grid(16, 8.0);
  GaussianMixtureSpec spec;
  spec.n_s = 1;
  const Point2 x = g.point(5, 9);
  SUBCASE("one bump centred on a grid point peaks at beta") {
    const ScattererField f = mixture_field(spec, g, {x});
    CHECK(f.at(5, 9) == spec.beta);
  }
  SUBCASE("two coincident bumps peak at 2 beta") {
    spec.n_s = 2;
    const ScattererField f = mixture_field(spec, g, {x, x});
    CHECK(f.at(5, 9) == doctest::Approx(2 * spec.beta).epsilon(1e-15));
    CHECK(*std::max_element(f.values.begin(), f.values.end()) == f.at(5, 9));
  }
  SUBCASE("zero bumps are rejected") {
    spec.n_s = 0;
    CHECK_THROWS_AS(sample_scatterer(spec, g, 1), ConfigError);
  }
  SUBCASE("centre region must lie in the domain") {
    spec.center_region.x1 = 0.7;
    CHECK_THROWS_AS(spec.validate(g), ConfigError);
  }
}

TEST_CASE("scatterer sampling is reproducible and bounded") {
  const GridSpec g = make_grid(32, 24.0);
  GaussianMixtureSpec spec;
  spec.n_s = 4;
  spec.sigma = 0.0375;
  for (std::uint64_t seed : {0ULL, 1ULL, 99ULL, 123456789ULL}) {
    const ScattererField a = sample_scatterer(spec, g, seed);
    const ScattererField b = sample_scatterer(spec, g, seed);
    CHECK(a.values == b.values);
    for (double v : a.values) {
      CHECK(v >= 0.0);
      CHECK(v <= spec.n_s * spec.beta);
    }
  }
  CHECK(sample_scatterer(spec, g, 1).values != sample_scatterer(spec, g, 2).values);
}

TEST_CASE("centre region restricts bump locations") {
  const GridSpec g = make_grid(32, 24.0);
  GaussianMixtureSpec spec;
  spec.n_s = 1;
  spec.sigma = 0.01;
  spec.center_region = Rect{-0.5, 0.5, -0.5, 0.25};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const ScattererField f = sample_scatterer(spec, g, seed);
    const auto it = std::max_element(f.values.begin(), f.values.end());
    const Point2 peak = g.point(static_cast<std::size_t>(it - f.values.begin()));
    CHECK(peak.y <= 0.25 + g.h());
  }
}

TEST_CASE("derived seeds are distinct and deterministic") {
  std::vector<std::uint64_t> s;
  for (std::uint64_t k = 0; k < 1000; ++k) s.push_back(derive_seed(42, k));
  CHECK(derive_seed(42, 7) == s[7]);
  std::sort(s.begin(), s.end());
  CHECK(std::adjacent_find(s.begin(), s.end()) == s.end());
  CHECK(derive_seed(1, 0) != derive_seed(2, 0));
}

TEST_CASE("partition side for frequency") {
  CHECK(partition_side_for(32, 24.0) == 4);
  CHECK(partition_side_for(16, 12.0) == 2);
  CHECK(partition_side_for(80, 60.0) == 5);
  CHECK(partition_side_for(7, 100.0) == 7);
  CHECK(partition_side_for(32, 0.5) == 1);
}
