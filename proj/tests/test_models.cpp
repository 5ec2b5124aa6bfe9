#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "switchnet/errors.hpp"
#include "switchnet/helmholtz.hpp"
#include "switchnet/model.hpp"

using namespace switchnet;
namespace fs = std::filesystem;

namespace {

ModelSpec small_spec(ProblemKind kind, MapDirection dir) {
  ModelSpec s;
  s.kind = kind;
  s.direction = dir;
  s.t = 2;
  s.p_d = 4;
  s.p_x = 4;
  s.n = 16;
  s.m = 16;
  s.w = 3;
  s.alpha = 4;
  s.layers = 2;
  return s;
}

ModelSpec paper_spec(ProblemKind kind, MapDirection dir) {
  ModelSpec s;
  s.kind = kind;
  s.direction = dir;
  s.t = 3;
  s.p_x = 64;
  s.p_d = 16;
  s.n = 80;
  s.m = 80;
  s.w = 10;
  s.alpha = 18;
  s.layers = 3;
  if (kind == ProblemKind::Seismic) {
    s.n = 64;
    s.w = 8;
  } else if (dir == MapDirection::Forward) {
    s.t = 4;
    s.alpha = 24;
  }
  return s;
}

// Independent layer-by-layer count.
std::size_t count_oracle(const ModelSpec& s) {
  const std::size_t n2 = static_cast<std::size_t>(s.n) * s.n, m2 = static_cast<std::size_t>(s.m) * s.m;
  const std::size_t sw = 2 * static_cast<std::size_t>(s.t) * (s.p_x * m2 + s.p_d * n2);
  const std::size_t w2 = static_cast<std::size_t>(s.w) * s.w, a = s.alpha;
  const std::size_t c0 = s.direction == MapDirection::Inverse ? 2 : 1;
  std::size_t conv = w2 * c0 * a + a;
  for (int l = 1; l < s.layers; ++l) conv += w2 * a * a + a;
  conv += w2 * a + 1;
  const std::size_t pm = s.kind == ProblemKind::Seismic ? 2 * n2 : 0;
  return sw + conv + pm;
}

RealTensor random_input(const ModelSpec& s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  RealTensor x = input_shape(s);
  x.data.resize(static_cast<std::size_t>(x.height) * x.width * x.channels);
  for (double& v : x.data) v = g(rng);
  return x;
}

// Conv stack that passes a field through unchanged: the first layer splits
// each input channel c into relu(+c), relu(-c), the middle layers copy, and
// the last recombines channel 0 as (+) - (-).
void make_identity_convs(ModelParams& p) {
  const int lo = (p.spec.w - 1) / 2;
  for (std::size_t l = 0; l < p.convs.size(); ++l) {
    ConvParams& c = p.convs[l];
    std::fill(c.weights.begin(), c.weights.end(), 0.0);
    std::fill(c.bias.begin(), c.bias.end(), 0.0);
    if (l == 0) {
      for (int ci = 0; ci < c.c_in; ++ci) {
        c.weight(lo, lo, ci, 2 * ci) = 1.0;
        c.weight(lo, lo, ci, 2 * ci + 1) = -1.0;
      }
    } else if (l + 1 < p.convs.size()) {
      for (int ci = 0; ci < c.c_in; ++ci) c.weight(lo, lo, ci, ci) = 1.0;
    } else {
      c.weight(lo, lo, 0, 0) = 1.0;
      c.weight(lo, lo, 1, 0) = -1.0;
    }
  }
}

std::vector<cplx> random_complex(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::vector<cplx> v(n);
  for (auto& x : v) x = {g(rng), g(rng)};
  return v;
}

}  // namespace

TEST_CASE("build and shapes") {
  ModelSpec s = small_spec(ProblemKind::FarField, MapDirection::Inverse);
  s.t = 1;
  s.alpha = 2;
  s.layers = 1;
  const ModelParams p = build(s, 1);
  CHECK(p.count() == param_count(s));
  CHECK(p.count() == count_oracle(s));
  const RealTensor out = model_forward(p, random_input(s, 2));
  CHECK(out.height == 16);
  CHECK(out.width == 16);
  CHECK(out.channels == 1);

  for (ProblemKind k : {ProblemKind::FarField, ProblemKind::Seismic})
    for (MapDirection d : {MapDirection::Inverse, MapDirection::Forward}) {
      ModelSpec r = small_spec(k, d);
      r.m = 8;  // rectangular
      const ModelParams q = build(r, 3);
      CHECK(q.count() == count_oracle(r));
      CHECK(q.pm.has_value() == (k == ProblemKind::Seismic));
      const RealTensor o = model_forward(q, random_input(r, 4));
      CHECK(o.same_shape(output_shape(r)));
    }
}

TEST_CASE("spec validation") {
  ModelSpec s = small_spec(ProblemKind::FarField, MapDirection::Inverse);
  s.t = 0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = small_spec(ProblemKind::FarField, MapDirection::Inverse);
  s.layers = 0;
  CHECK_THROWS_AS(build(s, 1), ConfigError);
  s = small_spec(ProblemKind::FarField, MapDirection::Inverse);
  s.p_x = 9;
  try {
    s.validate();
    FAIL("expected a ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("16") != std::string::npos);
  }
  s = small_spec(ProblemKind::FarField, MapDirection::Inverse);
  s.p_d = 5;
  CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("desk model parameter counts") {
  const ModelSpec ffi = paper_spec(ProblemKind::FarField, MapDirection::Inverse);
  const ModelSpec ffo = paper_spec(ProblemKind::FarField, MapDirection::Forward);
  const std::size_t ni = param_count(ffi), nf = param_count(ffo);
  MESSAGE("far-field inverse " << ni << ", forward " << nf);
  CHECK(ni == count_oracle(ffi));
  CHECK(nf == count_oracle(ffo));
  CHECK(ni >= 3'000'000);
  CHECK(ni <= 3'300'000);
  CHECK(nf >= 4'000'000);
  CHECK(nf <= 4'400'000);
  for (MapDirection d : {MapDirection::Inverse, MapDirection::Forward}) {
    const ModelSpec s = paper_spec(ProblemKind::Seismic, d);
    const std::size_t c = param_count(s);
    MESSAGE("seismic " << to_string(d) << " " << c);
    CHECK(c == count_oracle(s));
    CHECK(c >= 2'700'000);
    CHECK(c <= 3'100'000);
  }
  const ModelParams p = build(ffi, 1);
  CHECK(p.sw.u.size() + p.sw.v.size() == 1'536'000);
  CHECK(p.count() == ni);
  for (const ModelSpec& s : {ffi, ffo, paper_spec(ProblemKind::Seismic, MapDirection::Inverse)}) {
    const double share = 2.0 * s.t * (s.p_x * s.m * s.m + s.p_d * s.n * s.n) / static_cast<double>(param_count(s));
    CHECK(share > 0.9);
  }
}

TEST_CASE("zero input and zero biases give zero output") {
  for (ProblemKind k : {ProblemKind::FarField, ProblemKind::Seismic}) {
    ModelParams p = build(small_spec(k, MapDirection::Inverse), 5);
    if (p.pm) std::fill(p.pm->bias.begin(), p.pm->bias.end(), 0.0);
    RealTensor x = input_shape(p.spec);
    x.data.assign(static_cast<std::size_t>(x.height) * x.width * x.channels, 0.0);
    for (double v : model_forward(p, x).data) CHECK(v == 0.0);
  }
}

TEST_CASE("stage shape errors") {
  const ModelParams p = build(small_spec(ProblemKind::FarField, MapDirection::Inverse), 1);
  RealTensor bad = RealTensor::zeros(8, 8, 2);
  try {
    model_forward(p, bad);
    FAIL("expected a ShapeError");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("input") != std::string::npos);
  }
}

TEST_CASE("backward accumulates and matches flat layout") {
  const ModelSpec s = small_spec(ProblemKind::Seismic, MapDirection::Inverse);
  const ModelParams p = build(s, 6);
  ModelTape tape;
  const RealTensor out = model_forward(p, random_input(s, 7), &tape);
  RealTensor up = out;
  std::fill(up.data.begin(), up.data.end(), 1.0);
  ModelParams g = zero_params(s);
  model_backward(p, tape, up, g);
  const auto once = g.flatten();
  model_backward(p, tape, up, g);
  const auto twice = g.flatten();
  REQUIRE(once.size() == p.count());
  for (std::size_t k = 0; k < once.size(); ++k) CHECK(twice[k] == doctest::Approx(2 * once[k]));
  CHECK_THROWS_AS(model_backward(p, ModelTape{}, up, g), ConfigError);
}

TEST_CASE("factorization init with an identity conv stack reproduces the operator") {
  const GridSpec grid = make_grid(16, 12.0);
  const BornOperator ff = BornOperator::far_field(grid, 16);
  const SeismicBackground bg =
      make_seismic_background(grid, homogeneous_background(grid), make_receiver_line(16, 0.45, grid));
  const BornOperator sm = BornOperator::seismic(bg);
  for (ProblemKind k : {ProblemKind::FarField, ProblemKind::Seismic}) {
    const BornOperator& op = k == ProblemKind::FarField ? ff : sm;
    ModelSpec s = small_spec(k, MapDirection::Inverse);
    s.t = 3;
    s.layers = 3;
    const SwitchFactorization f = build_factorization(op, s.p_d, s.p_x, s.t);

    // inverse: eta = Re(A^* d)
    ModelParams inv = build(s, 8);
    init_switch_from_factorization(inv, f);
    make_identity_convs(inv);
    const auto d = random_complex(256, 9);
    const RealTensor eta = model_forward(inv, to_channels(d, 16));
    const auto expect = apply_adjoint(f, d);
    double num = 0.0, den = 0.0;
    for (std::size_t x = 0; x < 256; ++x) {
      num += std::pow(eta.data[x] - expect[x].real(), 2);
      den += std::pow(expect[x].real(), 2);
    }
    CHECK(std::sqrt(num / den) <= 1e-10);

    // forward: d = A eta
    s.direction = MapDirection::Forward;
    ModelParams fwd = build(s, 10);
    init_switch_from_factorization(fwd, f);
    make_identity_convs(fwd);
    std::vector<double> field(256);
    std::mt19937_64 rng(11);
    std::normal_distribution<double> g;
    for (double& v : field) v = g(rng);
    const auto got = from_channels(model_forward(fwd, to_tensor(field, 16)));
    std::vector<cplx> cfield(field.begin(), field.end());
    const auto want = switchnet::apply(f, cfield);
    num = den = 0.0;
    for (std::size_t r = 0; r < 256; ++r) {
      num += std::norm(got[r] - want[r]);
      den += std::norm(want[r]);
    }
    CHECK(std::sqrt(num / den) <= 1e-10);
  }
}

TEST_CASE("factorization init shape mismatch") {
  const BornOperator op = BornOperator::far_field(make_grid(16, 12.0), 16);
  const SwitchFactorization f = build_factorization(op, 4, 4, 2);
  ModelSpec s = small_spec(ProblemKind::FarField, MapDirection::Inverse);
  s.t = 3;
  ModelParams p = build(s, 1);
  CHECK_THROWS_AS(init_switch_from_factorization(p, f), ShapeError);
}

TEST_CASE("determinism") {
  const ModelSpec s = small_spec(ProblemKind::Seismic, MapDirection::Forward);
  const ModelParams a = build(s, 12), b = build(s, 12), c = build(s, 13);
  CHECK(a.flatten() == b.flatten());
  CHECK(a.flatten() != c.flatten());
  const RealTensor x = random_input(s, 14);
  CHECK(model_forward(a, x).data == model_forward(a, x).data);
}

TEST_CASE("spec text round trip") {
  ModelSpec s = paper_spec(ProblemKind::Seismic, MapDirection::Forward);
  s.init = InitMode::FromFactorization;
  s.input_scale = 0.1 + 1e-17;
  s.output_scale = 3.0e5;
  const ModelSpec r = ModelSpec::from_text(s.to_text());
  CHECK(r.to_text() == s.to_text());
  CHECK(r.input_scale == s.input_scale);
  CHECK(r.output_scale == s.output_scale);
  CHECK_THROWS_AS(ModelSpec::from_text("kind = far-field\nbogus = 1\n"), ConfigError);
  CHECK_THROWS_AS(ModelSpec::from_text("t = x\n"), ConfigError);
  CHECK(parse_kind("seismic") == ProblemKind::Seismic);
  CHECK_THROWS_AS(parse_direction("sideways"), ConfigError);
}

TEST_CASE("checkpoints") {
  const fs::path dir = fs::temp_directory_path() / "switchnet_test_models";
  fs::create_directories(dir);
  const fs::path path = dir / "a.ckpt";
  ModelSpec s = small_spec(ProblemKind::Seismic, MapDirection::Inverse);
  s.output_scale = 2.5;
  const ModelParams p = build(s, 15);
  save_checkpoint(path, p);
  const ModelParams q = load_checkpoint(path);
  CHECK(q.flatten() == p.flatten());
  CHECK(q.spec.to_text() == p.spec.to_text());
  const RealTensor x = random_input(s, 16);
  CHECK(model_forward(q, x).data == model_forward(p, x).data);

  std::ifstream in(path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  auto write = [&](const std::string& b) {
    std::ofstream o(dir / "bad.ckpt", std::ios::binary);
    o << b;
  };
  write(bytes.substr(0, bytes.size() - 8));
  CHECK_THROWS_AS(load_checkpoint(dir / "bad.ckpt"), ConfigError);
  write(bytes + "x");
  CHECK_THROWS_AS(load_checkpoint(dir / "bad.ckpt"), ConfigError);
  std::string magic = bytes;
  magic[0] = 'X';
  write(magic);
  CHECK_THROWS_AS(load_checkpoint(dir / "bad.ckpt"), ConfigError);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), ConfigError);
  fs::remove_all(dir);
}
