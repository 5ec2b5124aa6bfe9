#pragma once

// Dataset files, data generation, training, evaluation and plot output.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "switchnet/domain.hpp"
#include "switchnet/model.hpp"
#include "switchnet/optim.hpp"

namespace switchnet {

// --- dataset files ---------------------------------------------------------

struct DatasetHeader {
  ProblemKind kind = ProblemKind::FarField;
  int n = 0;
  int m = 0;
  std::uint32_t flags = 0;
  double omega = 0.0;
};

struct Sample {
  std::vector<double> eta;  // N^2, row-major
  std::vector<cplx> d;      // M^2, receiver-major
};

struct Dataset {
  DatasetHeader header;
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
};

/// Header bytes: magic, version, kind, N, M, count, flags, omega.
inline constexpr std::size_t kDatasetHeaderBytes = 8 + 6 * 4 + 8;

void write_dataset(const std::filesystem::path& path, const Dataset& data);
Dataset read_dataset(const std::filesystem::path& path);

// --- generation ------------------------------------------------------------

struct GenerateConfig {
  ProblemKind kind = ProblemKind::FarField;
  double omega = 24.0;
  int n = 32;
  int m = 32;
  int count = 0;
  GaussianMixtureSpec mixture{};
  double depth = 0.45;  // seismic source/receiver line
  std::uint64_t seed = 0;
  int threads = 1;
};

/// Sample k uses derive_seed(seed, k); results are stored in index order
/// regardless of thread count.
Dataset generate_dataset(const GenerateConfig& config);

/// Mixture defaults: bump width 0.9/omega, centres anywhere in Omega.
/// Seismic keeps centres below the top quarter.
GaussianMixtureSpec default_mixture(ProblemKind kind, double omega, int n_s = 2, double beta = 0.2);

// --- training --------------------------------------------------------------

struct TrainConfig {
  ModelSpec spec;
  double lr = 0.002;
  int batch = 200;
  int epochs = 1;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;  // epochs; 0 disables intermediate checkpoints
  std::optional<std::filesystem::path> checkpoint_path;
  int threads = 1;
  bool normalize = false;
  /// Optional switch initialization (used when spec.init == FromFactorization).
  std::optional<SwitchFactorization> factorization;
  /// Called after every epoch with (epoch, mean loss of that epoch, current parameters).
  std::function<void(int, double, const ModelParams&)> on_epoch;
};

struct Metrics {
  double mean_relative_error = 0.0;
  std::vector<double> per_sample;
  std::vector<std::size_t> excluded;  // zero-norm truth samples
  std::vector<double> loss_trace;     // one entry per optimizer step
};

struct TrainResult {
  ModelParams params;
  Metrics metrics;
};

/// Network input/target for one sample, after the spec's data scaling.
RealTensor sample_input(const ModelSpec& spec, const Sample& s);
RealTensor sample_target(const ModelSpec& spec, const Sample& s);

/// Mean-squared loss over output entries and its gradient.
double mse_loss(const RealTensor& pred, const RealTensor& target, RealTensor* grad = nullptr);

/// Per-dataset max-modulus scales: the network sees inputs and targets with
/// largest entry of modulus 1.
void fit_normalization(ModelSpec& spec, const Dataset& train);

TrainResult train(const TrainConfig& config, const Dataset& train_set);

// --- evaluation ------------------------------------------------------------

/// Undoes the spec's output scaling.
std::vector<double> predict_field(const ModelParams& params, const Sample& s);
std::vector<cplx> predict_pattern(const ModelParams& params, const Sample& s);

/// Mean of ||pred - truth||_F / ||truth||_F over samples with nonzero truth.
Metrics evaluate(const ModelParams& params, const Dataset& data);
/// Same metric on explicit prediction/truth pairs.
Metrics relative_errors(const std::vector<std::vector<cplx>>& pred,
                        const std::vector<std::vector<cplx>>& truth);

/// Checks that a dataset matches the spec's kind, N and M.
void check_compatible(const ModelSpec& spec, const Dataset& data);

// --- plots -----------------------------------------------------------------

enum class PlotFormat { Pgm, Csv };

/// Binary P5 with min -> 0 and max -> 255 (constant input -> 128); CSV with
/// one line per grid row at full precision.
void emit_plot(std::span<const double> values, int rows, int cols,
               const std::filesystem::path& path, PlotFormat format);
/// Complex data is rendered as its modulus.
void emit_plot(std::span<const cplx> values, int rows, int cols,
               const std::filesystem::path& path, PlotFormat format);
std::vector<unsigned char> pgm_bytes(std::span<const double> values);
std::vector<double> read_csv_grid(const std::filesystem::path& path);

}  // namespace switchnet
