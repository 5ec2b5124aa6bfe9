#include "switchnet/model.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "binary_io.hpp"
#include "switchnet/optim.hpp"
#include "switchnet/errors.hpp"

namespace switchnet {

namespace {

constexpr char kMagic[9] = "SWNETPAR";
constexpr std::uint32_t kVersion = 1;

enum LayerKind : std::uint32_t { kSwitch = 0, kConv = 1, kPm = 2 };

void check_partition(int p, int n, const char* pname, const char* nname) {
  const int q = static_cast<int>(std::lround(std::sqrt(static_cast<double>(std::max(p, 0)))));
  if (p < 1 || q * q != p) {
    throw ConfigError(std::string(pname) + "=" + std::to_string(p) + " is not a perfect square");
  }
  if (n % q != 0) {
    throw ConfigError("sqrt(" + std::string(pname) + ")=" + std::to_string(q) +
                      " does not divide " + nname + "=" + std::to_string(n));
  }
}

int first_channels(const ModelSpec& s) { return s.direction == MapDirection::Inverse ? 2 : 1; }

std::span<double> real_view(std::vector<cplx>& v) {
  return {reinterpret_cast<double*>(v.data()), 2 * v.size()};
}
std::span<const double> real_view(const std::vector<cplx>& v) {
  return {reinterpret_cast<const double*>(v.data()), 2 * v.size()};
}

template <typename Params, typename F>
void visit_impl(Params& p, F&& f) {
  const bool inverse = p.spec.direction == MapDirection::Inverse;
  const auto visit_pm = [&] {
    if (p.pm) {
      f(std::span(p.pm->weights));
      f(std::span(p.pm->bias));
    }
  };
  const auto visit_convs = [&] {
    for (auto& c : p.convs) {
      f(std::span(c.weights));
      f(std::span(c.bias));
    }
  };
  const auto visit_switch = [&] {
    f(real_view(p.sw.u));
    f(real_view(p.sw.v));
  };
  if (inverse) {
    visit_switch();
    visit_convs();
    visit_pm();
  } else {
    visit_pm();
    visit_convs();
    visit_switch();
  }
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

int parse_int(const std::string& key, const std::string& v) {
  int out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size())
    throw ConfigError("model spec: bad integer for " + key + ": '" + v + "'");
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size() || !std::isfinite(out))
    throw ConfigError("model spec: bad number for " + key + ": '" + v + "'");
  return out;
}

std::string format_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

// --- names -----------------------------------------------------------------

std::string to_string(ProblemKind kind) {
  return kind == ProblemKind::FarField ? "far-field" : "seismic";
}

std::string to_string(MapDirection direction) {
  return direction == MapDirection::Forward ? "forward" : "inverse";
}

ProblemKind parse_kind(std::string_view s) {
  if (s == "far-field" || s == "farfield") return ProblemKind::FarField;
  if (s == "seismic") return ProblemKind::Seismic;
  throw ConfigError("unknown problem kind '" + std::string(s) + "' (far-field | seismic)");
}

MapDirection parse_direction(std::string_view s) {
  if (s == "forward") return MapDirection::Forward;
  if (s == "inverse") return MapDirection::Inverse;
  throw ConfigError("unknown direction '" + std::string(s) + "' (forward | inverse)");
}

// --- spec ------------------------------------------------------------------

void ModelSpec::validate() const {
  if (t < 1) throw ConfigError("t must be >= 1, got " + std::to_string(t));
  if (layers < 1) throw ConfigError("L must be >= 1, got " + std::to_string(layers));
  if (w < 1) throw ConfigError("w must be >= 1, got " + std::to_string(w));
  if (alpha < 1) throw ConfigError("alpha must be >= 1, got " + std::to_string(alpha));
  if (n < 1 || m < 1) throw ConfigError("N and M must be positive");
  check_partition(p_d, m, "P_D", "M");
  check_partition(p_x, n, "P_X", "N");
  if (!(input_scale > 0.0) || !(output_scale > 0.0) || !std::isfinite(input_scale) ||
      !std::isfinite(output_scale))
    throw ConfigError("data scales must be positive and finite");
}

std::string ModelSpec::to_text() const {
  std::ostringstream os;
  os << "kind = " << to_string(kind) << '\n'
     << "direction = " << to_string(direction) << '\n'
     << "t = " << t << '\n'
     << "p_d = " << p_d << '\n'
     << "p_x = " << p_x << '\n'
     << "n = " << n << '\n'
     << "m = " << m << '\n'
     << "w = " << w << '\n'
     << "alpha = " << alpha << '\n'
     << "layers = " << layers << '\n'
     << "init = " << (init == InitMode::Glorot ? "glorot" : "factorization") << '\n'
     << "input_scale = " << format_double(input_scale) << '\n'
     << "output_scale = " << format_double(output_scale) << '\n';
  return os.str();
}

ModelSpec ModelSpec::from_text(std::string_view text) {
  ModelSpec s;
  std::istringstream is{std::string(text)};
  std::string line;
  while (std::getline(is, line)) {
    const std::string l = trim(line);
    if (l.empty() || l[0] == '#') continue;
    const auto eq = l.find('=');
    if (eq == std::string::npos) throw ConfigError("model spec: expected key = value, got '" + l + "'");
    const std::string key = trim(std::string_view(l).substr(0, eq));
    const std::string val = trim(std::string_view(l).substr(eq + 1));
    if (key == "kind") s.kind = parse_kind(val);
    else if (key == "direction") s.direction = parse_direction(val);
    else if (key == "t") s.t = parse_int(key, val);
    else if (key == "p_d") s.p_d = parse_int(key, val);
    else if (key == "p_x") s.p_x = parse_int(key, val);
    else if (key == "n") s.n = parse_int(key, val);
    else if (key == "m") s.m = parse_int(key, val);
    else if (key == "w") s.w = parse_int(key, val);
    else if (key == "alpha") s.alpha = parse_int(key, val);
    else if (key == "layers") s.layers = parse_int(key, val);
    else if (key == "init") {
      if (val == "glorot") s.init = InitMode::Glorot;
      else if (val == "factorization") s.init = InitMode::FromFactorization;
      else throw ConfigError("model spec: unknown init '" + val + "'");
    } else if (key == "input_scale") s.input_scale = parse_double(key, val);
    else if (key == "output_scale") s.output_scale = parse_double(key, val);
    else throw ConfigError("model spec: unknown key '" + key + "'");
  }
  s.validate();
  return s;
}

// --- parameters ------------------------------------------------------------

std::size_t param_count(const ModelSpec& s) {
  s.validate();
  const std::size_t t = s.t, pd = s.p_d, px = s.p_x, w2 = static_cast<std::size_t>(s.w) * s.w,
                    a = s.alpha, n2 = static_cast<std::size_t>(s.n) * s.n,
                    m2 = static_cast<std::size_t>(s.m) * s.m;
  std::size_t total = 2 * t * (px * m2 + pd * n2);
  total += w2 * first_channels(s) * a + a;
  total += (s.layers - 1) * (w2 * a * a + a);
  total += w2 * a + 1;
  if (s.has_pm()) total += 2 * n2;
  return total;
}

std::size_t ModelParams::count() const {
  std::size_t c = 0;
  visit([&c](std::span<const double> x) { c += x.size(); });
  return c;
}

void ModelParams::visit(const std::function<void(std::span<double>)>& f) { visit_impl(*this, f); }

void ModelParams::visit(const std::function<void(std::span<const double>)>& f) const {
  visit_impl(*this, f);
}

std::vector<double> ModelParams::flatten() const {
  std::vector<double> out;
  out.reserve(count());
  visit([&out](std::span<const double> x) { out.insert(out.end(), x.begin(), x.end()); });
  return out;
}

void ModelParams::assign(std::span<const double> values) {
  if (values.size() != count())
    throw ShapeError("parameter vector has " + std::to_string(values.size()) +
                     " entries, model expects " + std::to_string(count()));
  std::size_t pos = 0;
  visit([&](std::span<double> x) {
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(pos), x.size(), x.begin());
    pos += x.size();
  });
}

ModelParams zero_params(const ModelSpec& spec) {
  spec.validate();
  ModelParams p;
  p.spec = spec;
  const int n2 = spec.n * spec.n;
  const int m2 = spec.m * spec.m;
  if (spec.direction == MapDirection::Inverse)
    p.sw = SwitchParams::zeros(spec.t, spec.p_d, spec.p_x, m2, n2);
  else
    p.sw = SwitchParams::zeros(spec.t, spec.p_x, spec.p_d, n2, m2);
  int c = first_channels(spec);
  for (int l = 0; l < spec.layers; ++l) {
    p.convs.push_back(ConvParams::zeros(spec.w, c, spec.alpha, Activation::Relu));
    c = spec.alpha;
  }
  p.convs.push_back(ConvParams::zeros(spec.w, c, 1, Activation::Linear));
  if (spec.has_pm()) p.pm = PmParams::zeros(spec.n);
  return p;
}

ModelParams build(const ModelSpec& spec, std::uint64_t seed) {
  ModelParams p = zero_params(spec);
  std::mt19937_64 rng(seed);
  const auto init_convs = [&] {
    for (auto& c : p.convs) glorot_init(c, rng);
  };
  if (spec.direction == MapDirection::Inverse) {
    glorot_init(p.sw, rng);
    init_convs();
  } else {
    init_convs();
    glorot_init(p.sw, rng);
  }
  if (p.pm) std::fill(p.pm->weights.begin(), p.pm->weights.end(), 1.0);
  return p;
}

void init_switch_from_factorization(ModelParams& params, const SwitchFactorization& f) {
  const ModelSpec& s = params.spec;
  if (f.t != s.t || f.p_d() != s.p_d || f.p_x() != s.p_x || f.m != s.m || f.n != s.n) {
    throw ShapeError("factorization (t=" + std::to_string(f.t) + ", P_D=" +
                     std::to_string(f.p_d()) + ", P_X=" + std::to_string(f.p_x()) + ", M=" +
                     std::to_string(f.m) + ", N=" + std::to_string(f.n) +
                     ") is incompatible with the model spec");
  }
  SwitchParams& sw = params.sw;
  const bool inverse = s.direction == MapDirection::Inverse;
  // Inverse: layer U_b = conj(F.u_b), layer V_a = F.v_a. Forward: layer U_a = conj(F.v_a),
  // layer V_b = F.u_b.
  const auto& first = inverse ? f.u : f.v;
  const auto& second = inverse ? f.v : f.u;
  for (int a = 0; a < sw.p_in; ++a) {
    const Eigen::MatrixXcd& blk = first[a];
    for (int r = 0; r < sw.in_block(); ++r)
      for (int c = 0; c < sw.t * sw.p_out; ++c) sw.u_at(a, r, c) = std::conj(blk(r, c));
  }
  for (int b = 0; b < sw.p_out; ++b) {
    const Eigen::MatrixXcd& blk = second[b];
    for (int r = 0; r < sw.out_block(); ++r)
      for (int c = 0; c < sw.t * sw.p_in; ++c) sw.v_at(b, r, c) = blk(r, c);
  }
}

// --- conversions -----------------------------------------------------------

RealTensor to_channels(std::span<const cplx> z, int n) {
  if (z.size() != static_cast<std::size_t>(n) * n) throw ShapeError("to_channels: size mismatch");
  RealTensor x = RealTensor::zeros(n, n, 2);
  for (std::size_t k = 0; k < z.size(); ++k) {
    x.data[2 * k] = z[k].real();
    x.data[2 * k + 1] = z[k].imag();
  }
  return x;
}

std::vector<cplx> from_channels(const RealTensor& x) {
  if (x.channels != 2) throw ShapeError("from_channels: expected 2 channels, got " + x.shape_string());
  std::vector<cplx> z(x.size() / 2);
  for (std::size_t k = 0; k < z.size(); ++k) z[k] = {x.data[2 * k], x.data[2 * k + 1]};
  return z;
}

RealTensor to_tensor(std::span<const double> field, int n) {
  if (field.size() != static_cast<std::size_t>(n) * n) throw ShapeError("to_tensor: size mismatch");
  RealTensor x = RealTensor::zeros(n, n, 1);
  std::copy(field.begin(), field.end(), x.data.begin());
  return x;
}

RealTensor input_shape(const ModelSpec& s) {
  return s.direction == MapDirection::Inverse ? RealTensor{s.m, s.m, 2, {}}
                                              : RealTensor{s.n, s.n, 1, {}};
}

RealTensor output_shape(const ModelSpec& s) {
  return s.direction == MapDirection::Inverse ? RealTensor{s.n, s.n, 1, {}}
                                              : RealTensor{s.m, s.m, 2, {}};
}

// --- forward / backward ----------------------------------------------------

RealTensor model_forward(const ModelParams& params, const RealTensor& input, ModelTape* tape) {
  const ModelSpec& s = params.spec;
  const RealTensor expect = input_shape(s);
  if (!input.same_shape(expect)) {
    throw ShapeError(to_string(s.direction) + " net input: expected " + expect.shape_string() +
                     ", got " + input.shape_string());
  }
  if (tape) {
    // Reuse buffers from a previous pass when the tape is recycled.
    tape->recorded = false;
    tape->sw.recorded = false;
    tape->convs.resize(params.convs.size());
    for (ConvTape& c : tape->convs) c.recorded = false;
    if (params.pm) {
      if (!tape->pm) tape->pm.emplace();
      tape->pm->recorded = false;
    } else {
      tape->pm.reset();
    }
  }
  const auto run_convs = [&](RealTensor x) {
    for (std::size_t l = 0; l < params.convs.size(); ++l)
      x = conv_forward(params.convs[l], x, tape ? &tape->convs[l] : nullptr);
    return x;
  };
  const auto run_pm = [&](const RealTensor& x) {
    return params.pm ? pm_forward(*params.pm, x, tape ? &*tape->pm : nullptr) : x;
  };
  SwitchTape* sw_tape = tape ? &tape->sw : nullptr;

  RealTensor out;
  if (s.direction == MapDirection::Inverse) {
    const std::vector<cplx> d = from_channels(input);
    const std::vector<cplx> z = switch_forward(params.sw, vect<cplx>(d, s.m, s.p_d), sw_tape);
    const RealTensor x = to_channels(square<cplx>(z, s.n, s.p_x), s.n);
    out = run_pm(run_convs(x));
  } else {
    const RealTensor x = run_convs(run_pm(input));
    std::vector<cplx> eta(x.size());
    for (std::size_t k = 0; k < eta.size(); ++k) eta[k] = x.data[k];
    const std::vector<cplx> z = switch_forward(params.sw, vect<cplx>(eta, s.n, s.p_x), sw_tape);
    out = to_channels(square<cplx>(z, s.m, s.p_d), s.m);
  }
  if (tape) tape->recorded = true;
  return out;
}

RealTensor model_backward(const ModelParams& params, const ModelTape& tape,
                          const RealTensor& grad_out, ModelParams& grads) {
  if (!tape.recorded) throw ConfigError("model backward: missing tape");
  const ModelSpec& s = params.spec;
  const RealTensor expect = output_shape(s);
  if (!grad_out.same_shape(expect)) {
    throw ShapeError(to_string(s.direction) + " net output gradient: expected " +
                     expect.shape_string() + ", got " + grad_out.shape_string());
  }
  const auto back_convs = [&](RealTensor g) {
    for (std::size_t l = params.convs.size(); l-- > 0;)
      g = conv_backward(params.convs[l], tape.convs[l], g, grads.convs[l]);
    return g;
  };
  const auto back_pm = [&](const RealTensor& g) {
    return params.pm ? pm_backward(*params.pm, *tape.pm, g, *grads.pm) : g;
  };

  if (s.direction == MapDirection::Inverse) {
    const RealTensor g = back_convs(back_pm(grad_out));
    const std::vector<cplx> gz = vect<cplx>(from_channels(g), s.n, s.p_x);
    const std::vector<cplx> gd = switch_backward(params.sw, tape.sw, gz, grads.sw);
    return to_channels(square<cplx>(gd, s.m, s.p_d), s.m);
  }
  const std::vector<cplx> gz = vect<cplx>(from_channels(grad_out), s.m, s.p_d);
  const std::vector<cplx> geta = square<cplx>(switch_backward(params.sw, tape.sw, gz, grads.sw),
                                              s.n, s.p_x);
  RealTensor g = RealTensor::zeros(s.n, s.n, 1);
  for (std::size_t k = 0; k < g.size(); ++k) g.data[k] = geta[k].real();
  return back_pm(back_convs(g));
}

// --- checkpoints -----------------------------------------------------------

namespace {

struct LayerRecord {
  std::uint32_t kind;
  std::array<std::uint32_t, 6> dims;
  std::uint64_t values;
};

std::vector<LayerRecord> layer_records(const ModelParams& p) {
  std::vector<LayerRecord> out;
  const auto u32 = [](int x) { return static_cast<std::uint32_t>(x); };
  const auto add_switch = [&] {
    out.push_back({kSwitch,
                   {u32(p.sw.t), u32(p.sw.p_in), u32(p.sw.p_out), u32(p.sw.n_in), u32(p.sw.n_out), 0},
                   p.sw.real_count()});
  };
  const auto add_convs = [&] {
    for (const auto& c : p.convs)
      out.push_back({kConv,
                     {u32(c.w), u32(c.c_in), u32(c.c_out), static_cast<std::uint32_t>(c.act), 0, 0},
                     c.real_count()});
  };
  const auto add_pm = [&] {
    if (p.pm) out.push_back({kPm, {u32(p.pm->n), 0, 0, 0, 0, 0}, p.pm->real_count()});
  };
  if (p.spec.direction == MapDirection::Inverse) {
    add_switch();
    add_convs();
    add_pm();
  } else {
    add_pm();
    add_convs();
    add_switch();
  }
  return out;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot open " + path.string() + " for writing");
  out.write(kMagic, 8);
  io::write_u32(out, kVersion);
  const std::string text = params.spec.to_text();
  io::write_u32(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  const auto records = layer_records(params);
  io::write_u32(out, static_cast<std::uint32_t>(records.size()));
  for (const auto& r : records) {
    io::write_u32(out, r.kind);
    for (auto d : r.dims) io::write_u32(out, d);
    io::write_u64(out, r.values);
  }
  io::write_u64(out, params.count());
  params.visit([&out](std::span<const double> x) {
    for (double v : x) io::write_f64(out, v);
  });
  if (!out) throw ConfigError("write failed for " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint " + path.string());
  const std::string name = path.string();
  io::expect_magic(in, kMagic, name);
  const std::uint32_t version = io::read_u32(in, "checkpoint version");
  if (version != kVersion)
    throw ConfigError(name + ": unsupported checkpoint version " + std::to_string(version));
  const std::uint32_t text_len = io::read_u32(in, "spec length");
  if (text_len > (1u << 20)) throw ConfigError(name + ": implausible spec length");
  std::string text(text_len, '\0');
  in.read(text.data(), text_len);
  if (in.gcount() != static_cast<std::streamsize>(text_len))
    throw ConfigError(name + ": truncated spec text");
  ModelParams params = zero_params(ModelSpec::from_text(text));

  const auto expected = layer_records(params);
  const std::uint32_t n_layers = io::read_u32(in, "layer count");
  if (n_layers != expected.size()) throw ConfigError(name + ": layer count does not match spec");
  for (const auto& e : expected) {
    LayerRecord r{};
    r.kind = io::read_u32(in, "layer kind");
    for (auto& d : r.dims) d = io::read_u32(in, "layer dims");
    r.values = io::read_u64(in, "layer size");
    if (r.kind != e.kind || r.dims != e.dims || r.values != e.values)
      throw ConfigError(name + ": layer record does not match spec");
  }
  const std::uint64_t total = io::read_u64(in, "value count");
  if (total != params.count()) throw ConfigError(name + ": value count does not match spec");
  params.visit([&in](std::span<double> x) {
    for (double& v : x) v = io::read_f64(in, "parameter values");
  });
  if (in.peek() != std::char_traits<char>::eof())
    throw ConfigError(name + ": trailing bytes after parameters");
  return params;
}

}  // namespace switchnet
