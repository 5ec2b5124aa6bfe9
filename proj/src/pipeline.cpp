#include "switchnet/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "binary_io.hpp"
#include "switchnet/errors.hpp"
#include "switchnet/helmholtz.hpp"

namespace switchnet {

namespace {

constexpr char kDatasetMagic[9] = "SWNETDS1";
constexpr std::uint32_t kDatasetVersion = 1;

std::size_t sample_bytes(int n, int m) {
  return static_cast<std::size_t>(n) * n * 8 + static_cast<std::size_t>(m) * m * 16;
}

// Runs f(k) for k in [0, count) on `threads` workers. The first failure (by
// sample index) is rethrown after all workers stop.
template <typename F>
void parallel_for(int count, int threads, F&& f) {
  threads = std::max(1, std::min(threads, count));
  if (threads == 1) {
    for (int k = 0; k < count; ++k) f(k);
    return;
  }
  std::atomic<int> next{0};
  std::atomic<bool> failed{false};
  std::mutex mu;
  int failed_index = count;
  std::exception_ptr error;
  {
    std::vector<std::jthread> pool;
    for (int w = 0; w < threads; ++w) {
      pool.emplace_back([&] {
        for (int k = next++; k < count && !failed; k = next++) {
          try {
            f(k);
          } catch (...) {
            std::lock_guard lock(mu);
            if (k < failed_index) {
              failed_index = k;
              error = std::current_exception();
            }
            failed = true;
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

double max_modulus(std::span<const double> x) {
  double m = 0.0;
  for (double v : x) m = std::max(m, std::abs(v));
  return m;
}

double max_modulus(std::span<const cplx> x) {
  double m = 0.0;
  for (const cplx& v : x) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace

// --- dataset files ---------------------------------------------------------

void write_dataset(const std::filesystem::path& path, const Dataset& data) {
  const auto& h = data.header;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot open " + path.string() + " for writing");
  out.write(kDatasetMagic, 8);
  io::write_u32(out, kDatasetVersion);
  io::write_u32(out, static_cast<std::uint32_t>(h.kind));
  io::write_u32(out, static_cast<std::uint32_t>(h.n));
  io::write_u32(out, static_cast<std::uint32_t>(h.m));
  io::write_u32(out, static_cast<std::uint32_t>(data.samples.size()));
  io::write_u32(out, h.flags);
  io::write_f64(out, h.omega);
  const std::size_t n2 = static_cast<std::size_t>(h.n) * h.n;
  const std::size_t m2 = static_cast<std::size_t>(h.m) * h.m;
  for (std::size_t k = 0; k < data.samples.size(); ++k) {
    const Sample& s = data.samples[k];
    if (s.eta.size() != n2 || s.d.size() != m2)
      throw ShapeError("sample " + std::to_string(k) + " does not match the dataset header");
    for (double v : s.eta) io::write_f64(out, v);
    for (const cplx& v : s.d) {
      io::write_f64(out, v.real());
      io::write_f64(out, v.imag());
    }
  }
  if (!out) throw ConfigError("write failed for " + path.string());
}

Dataset read_dataset(const std::filesystem::path& path) {
  const std::string name = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open dataset " + name);
  io::expect_magic(in, kDatasetMagic, name);
  const std::uint32_t version = io::read_u32(in, "dataset version");
  if (version != kDatasetVersion)
    throw ConfigError(name + ": unsupported dataset version " + std::to_string(version));
  Dataset data;
  const std::uint32_t kind = io::read_u32(in, "dataset kind");
  if (kind > 1) throw ConfigError(name + ": unknown problem kind " + std::to_string(kind));
  data.header.kind = static_cast<ProblemKind>(kind);
  const std::uint32_t n = io::read_u32(in, "N");
  const std::uint32_t m = io::read_u32(in, "M");
  const std::uint32_t count = io::read_u32(in, "sample count");
  data.header.flags = io::read_u32(in, "flags");
  data.header.omega = io::read_f64(in, "omega");
  if (n < 1 || m < 1 || n > 65535 || m > 65535) throw ConfigError(name + ": implausible N or M");
  data.header.n = static_cast<int>(n);
  data.header.m = static_cast<int>(m);

  const std::uintmax_t expect = kDatasetHeaderBytes + count * sample_bytes(data.header.n, data.header.m);
  const std::uintmax_t actual = std::filesystem::file_size(path);
  if (actual != expect) {
    throw ConfigError(name + ": payload is " + std::to_string(actual) + " bytes, header implies " +
                      std::to_string(expect));
  }
  data.samples.resize(count);
  const std::size_t n2 = static_cast<std::size_t>(n) * n;
  const std::size_t m2 = static_cast<std::size_t>(m) * m;
  for (Sample& s : data.samples) {
    s.eta.resize(n2);
    for (double& v : s.eta) v = io::read_f64(in, "eta");
    s.d.resize(m2);
    for (cplx& v : s.d) {
      const double re = io::read_f64(in, "d");
      const double im = io::read_f64(in, "d");
      v = {re, im};
    }
  }
  return data;
}

// --- generation ------------------------------------------------------------

GaussianMixtureSpec default_mixture(ProblemKind kind, double omega, int n_s, double beta) {
  GaussianMixtureSpec spec;
  spec.n_s = n_s;
  spec.beta = beta;
  spec.sigma = 0.9 / omega;
  if (kind == ProblemKind::Seismic) spec.center_region.y1 = 0.25;
  return spec;
}

Dataset generate_dataset(const GenerateConfig& cfg) {
  if (cfg.count < 0) throw ConfigError("sample count must be >= 0");
  const GridSpec grid = make_grid(cfg.n, cfg.omega);
  if (cfg.m < 1) throw ConfigError("M must be >= 1");
  cfg.mixture.validate(grid);
  const BackgroundModel model = homogeneous_background(grid);

  Dataset data;
  data.header = DatasetHeader{cfg.kind, cfg.n, cfg.m, 0, cfg.omega};
  data.samples.resize(static_cast<std::size_t>(cfg.count));

  std::optional<SeismicBackground> background;
  DirectionSet dirs;
  if (cfg.kind == ProblemKind::Seismic) {
    background = make_seismic_background(grid, model, make_receiver_line(cfg.m, cfg.depth, grid));
  } else {
    dirs = make_directions(cfg.m);
  }

  parallel_for(cfg.count, cfg.threads, [&](int k) {
    const ScattererField eta =
        sample_scatterer(cfg.mixture, grid, derive_seed(cfg.seed, static_cast<std::uint64_t>(k)));
    try {
      ScatteringPattern d = cfg.kind == ProblemKind::Seismic ? gen_seismic(eta, *background)
                                                             : gen_farfield(eta, model, dirs, dirs);
      data.samples[k] = Sample{eta.values, std::move(d.values)};
    } catch (const NumericalError& e) {
      throw NumericalError("sample " + std::to_string(k) + ": " + e.what());
    }
  });
  return data;
}

// --- training --------------------------------------------------------------

void check_compatible(const ModelSpec& spec, const Dataset& data) {
  const auto& h = data.header;
  if (h.kind != spec.kind)
    throw ShapeError("dataset is " + to_string(h.kind) + ", model is " + to_string(spec.kind));
  if (h.n != spec.n || h.m != spec.m) {
    throw ShapeError("dataset has N=" + std::to_string(h.n) + ", M=" + std::to_string(h.m) +
                     "; model expects N=" + std::to_string(spec.n) + ", M=" + std::to_string(spec.m));
  }
}

RealTensor sample_input(const ModelSpec& spec, const Sample& s) {
  if (spec.direction == MapDirection::Inverse) {
    RealTensor x = to_channels(s.d, spec.m);
    for (double& v : x.data) v *= spec.input_scale;
    return x;
  }
  RealTensor x = to_tensor(s.eta, spec.n);
  for (double& v : x.data) v *= spec.input_scale;
  return x;
}

RealTensor sample_target(const ModelSpec& spec, const Sample& s) {
  RealTensor y = spec.direction == MapDirection::Inverse ? to_tensor(s.eta, spec.n)
                                                         : to_channels(s.d, spec.m);
  for (double& v : y.data) v *= spec.output_scale;
  return y;
}

double mse_loss(const RealTensor& pred, const RealTensor& target, RealTensor* grad) {
  if (!pred.same_shape(target))
    throw ShapeError("loss: prediction " + pred.shape_string() + " vs target " + target.shape_string());
  const double inv = 1.0 / static_cast<double>(pred.size());
  double loss = 0.0;
  if (grad) *grad = RealTensor::zeros(pred.height, pred.width, pred.channels);
  for (std::size_t k = 0; k < pred.size(); ++k) {
    const double r = pred.data[k] - target.data[k];
    loss += r * r;
    if (grad) grad->data[k] = 2.0 * r * inv;
  }
  return loss * inv;
}

void fit_normalization(ModelSpec& spec, const Dataset& train) {
  double eta_max = 0.0, d_max = 0.0;
  for (const Sample& s : train.samples) {
    eta_max = std::max(eta_max, max_modulus(s.eta));
    d_max = std::max(d_max, max_modulus(s.d));
  }
  if (!(eta_max > 0.0) || !(d_max > 0.0))
    throw ConfigError("cannot normalize: training data is identically zero");
  const bool inverse = spec.direction == MapDirection::Inverse;
  spec.input_scale = 1.0 / (inverse ? d_max : eta_max);
  spec.output_scale = 1.0 / (inverse ? eta_max : d_max);
}

TrainResult train(const TrainConfig& cfg, const Dataset& data) {
  ModelSpec spec = cfg.spec;
  spec.validate();
  check_compatible(spec, data);
  if (cfg.epochs < 1) throw ConfigError("epochs must be >= 1");
  if (cfg.batch < 1 || static_cast<std::size_t>(cfg.batch) > data.size()) {
    throw ConfigError("batch size " + std::to_string(cfg.batch) + " must be in [1, " +
                      std::to_string(data.size()) + "]");
  }
  if (!(cfg.lr >= 0.0)) throw ConfigError("learning rate must be >= 0");
  if (cfg.normalize) fit_normalization(spec, data);

  TrainResult result{build(spec, cfg.seed), {}};
  ModelParams& params = result.params;
  if (spec.init == InitMode::FromFactorization) {
    if (!cfg.factorization) throw ConfigError("factorization init requested without a factorization");
    init_switch_from_factorization(params, *cfg.factorization);
  }

  const std::size_t n_params = params.count();
  AdamState adam = make_adam(n_params, cfg.lr);
  std::vector<double> flat = params.flatten();
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, 0x73687566666c65ULL));

  std::vector<RealTensor> inputs, targets;
  inputs.reserve(data.size());
  targets.reserve(data.size());
  for (const Sample& s : data.samples) {
    inputs.push_back(sample_input(spec, s));
    targets.push_back(sample_target(spec, s));
  }

  const int workers = std::max(1, cfg.threads);
  std::vector<ModelParams> grads(workers, zero_params(spec));
  std::vector<double> partial_loss(workers);
  std::vector<double> gflat(n_params);
  std::int64_t step = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    int epoch_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch);
      const std::size_t bsize = stop - start;
      // Contiguous chunks per worker; reduction happens in worker order.
      const int used = static_cast<int>(std::min<std::size_t>(workers, bsize));
      const auto work = [&](int w) {
        ModelParams& g = grads[w];
        g.visit([](std::span<double> x) { std::fill(x.begin(), x.end(), 0.0); });
        const std::size_t lo = start + bsize * w / used;
        const std::size_t hi = start + bsize * (w + 1) / used;
        double sum = 0.0;
        ModelTape tape;
        RealTensor gout;
        for (std::size_t k = lo; k < hi; ++k) {
          const std::size_t idx = order[k];
          const RealTensor pred = model_forward(params, inputs[idx], &tape);
          sum += mse_loss(pred, targets[idx], &gout);
          model_backward(params, tape, gout, g);
        }
        partial_loss[w] = sum;
      };
      parallel_for(used, used, work);

      double loss = 0.0;
      std::fill(gflat.begin(), gflat.end(), 0.0);
      for (int w = 0; w < used; ++w) {
        loss += partial_loss[w];
        std::size_t pos = 0;
        grads[w].visit([&](std::span<const double> x) {
          for (double v : x) gflat[pos++] += v;
        });
      }
      const double inv = 1.0 / static_cast<double>(bsize);
      loss *= inv;
      for (double& v : gflat) v *= inv;
      if (!std::isfinite(loss))
        throw NumericalError("non-finite training loss at step " + std::to_string(step));
      result.metrics.loss_trace.push_back(loss);
      adam_step(adam, flat, gflat);
      params.assign(flat);
      epoch_loss += loss;
      ++epoch_batches;
      ++step;
    }
    if (cfg.on_epoch) cfg.on_epoch(epoch, epoch_loss / epoch_batches, params);
    if (cfg.checkpoint_path && cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0)
      save_checkpoint(*cfg.checkpoint_path, params);
  }
  if (cfg.checkpoint_path) save_checkpoint(*cfg.checkpoint_path, params);
  return result;
}

// --- evaluation ------------------------------------------------------------

std::vector<double> predict_field(const ModelParams& params, const Sample& s) {
  if (params.spec.direction != MapDirection::Inverse)
    throw ConfigError("predict_field needs an inverse model");
  const RealTensor y = model_forward(params, sample_input(params.spec, s));
  std::vector<double> out(y.data);
  for (double& v : out) v /= params.spec.output_scale;
  return out;
}

std::vector<cplx> predict_pattern(const ModelParams& params, const Sample& s) {
  if (params.spec.direction != MapDirection::Forward)
    throw ConfigError("predict_pattern needs a forward model");
  std::vector<cplx> out = from_channels(model_forward(params, sample_input(params.spec, s)));
  for (cplx& v : out) v /= params.spec.output_scale;
  return out;
}

Metrics relative_errors(const std::vector<std::vector<cplx>>& pred,
                        const std::vector<std::vector<cplx>>& truth) {
  if (pred.size() != truth.size()) throw ShapeError("metric: prediction/truth count mismatch");
  Metrics m;
  double sum = 0.0;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    if (pred[k].size() != truth[k].size())
      throw ShapeError("metric: sample " + std::to_string(k) + " size mismatch");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < pred[k].size(); ++i) {
      num += std::norm(pred[k][i] - truth[k][i]);
      den += std::norm(truth[k][i]);
    }
    if (den == 0.0) {
      m.excluded.push_back(k);
      continue;
    }
    const double e = std::sqrt(num / den);
    m.per_sample.push_back(e);
    sum += e;
  }
  m.mean_relative_error = m.per_sample.empty() ? 0.0 : sum / static_cast<double>(m.per_sample.size());
  return m;
}

Metrics evaluate(const ModelParams& params, const Dataset& data) {
  check_compatible(params.spec, data);
  std::vector<std::vector<cplx>> pred, truth;
  pred.reserve(data.size());
  truth.reserve(data.size());
  for (const Sample& s : data.samples) {
    if (params.spec.direction == MapDirection::Inverse) {
      const std::vector<double> p = predict_field(params, s);
      pred.emplace_back(p.begin(), p.end());
      truth.emplace_back(s.eta.begin(), s.eta.end());
    } else {
      pred.push_back(predict_pattern(params, s));
      truth.push_back(s.d);
    }
  }
  return relative_errors(pred, truth);
}

// --- plots -----------------------------------------------------------------

std::vector<unsigned char> pgm_bytes(std::span<const double> values) {
  std::vector<unsigned char> out(values.size(), 128);
  if (values.empty()) return out;
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it, hi = *hi_it;
  if (!(hi > lo)) return out;
  for (std::size_t k = 0; k < values.size(); ++k)
    out[k] = static_cast<unsigned char>(std::lround((values[k] - lo) / (hi - lo) * 255.0));
  return out;
}

void emit_plot(std::span<const double> values, int rows, int cols,
               const std::filesystem::path& path, PlotFormat format) {
  if (values.size() != static_cast<std::size_t>(rows) * cols)
    throw ShapeError("plot: value count does not match " + std::to_string(rows) + "x" +
                     std::to_string(cols));
  for (double v : values)
    if (!std::isfinite(v)) throw ConfigError("plot: non-finite input");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot open " + path.string() + " for writing");
  if (format == PlotFormat::Pgm) {
    out << "P5\n" << cols << ' ' << rows << "\n255\n";
    const auto bytes = pgm_bytes(values);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  } else {
    char buf[32];
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < cols; ++j) {
        std::snprintf(buf, sizeof buf, "%.17g", values[static_cast<std::size_t>(i) * cols + j]);
        if (j) out << ',';
        out << buf;
      }
      out << '\n';
    }
  }
  if (!out) throw ConfigError("write failed for " + path.string());
}

void emit_plot(std::span<const cplx> values, int rows, int cols,
               const std::filesystem::path& path, PlotFormat format) {
  std::vector<double> mod(values.size());
  std::transform(values.begin(), values.end(), mod.begin(), [](const cplx& z) { return std::abs(z); });
  emit_plot(mod, rows, cols, path, format);
}

std::vector<double> read_csv_grid(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::vector<double> out;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) out.push_back(std::stod(cell));
  }
  return out;
}

}  // namespace switchnet
