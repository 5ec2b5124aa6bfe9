#pragma once

// End-to-end SwitchNet models.
//   inverse: Vect[P_D] -> Switch[t,P_D,P_X] -> Square[P_X] -> (re, im) channels
//            -> L x Conv[w,alpha] (ReLU) -> Conv[w,1] (linear) -> PM (seismic)
//   forward: PM (seismic) -> L x Conv[w,alpha] (ReLU) -> Conv[w,1] (linear)
//            -> Vect[P_X] -> Switch[t,P_X,P_D] -> Square[P_D] -> (re, im) channels

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "switchnet/layers.hpp"
#include "switchnet/operator_factor.hpp"

namespace switchnet {

enum class MapDirection { Forward = 0, Inverse = 1 };
enum class InitMode { Glorot = 0, FromFactorization = 1 };

struct ModelSpec {
  ProblemKind kind = ProblemKind::FarField;
  MapDirection direction = MapDirection::Inverse;
  int t = 3;
  int p_d = 16;
  int p_x = 16;
  int n = 32;
  int m = 32;
  int w = 5;
  int alpha = 8;
  int layers = 3;
  InitMode init = InitMode::Glorot;
  // Data scaling applied by the training pipeline: the network sees
  // input * input_scale and is trained against target * output_scale.
  double input_scale = 1.0;
  double output_scale = 1.0;

  bool has_pm() const { return kind == ProblemKind::Seismic; }
  void validate() const;
  /// One `key = value` per line.
  std::string to_text() const;
  static ModelSpec from_text(std::string_view text);
};

/// Parameters in declaration order: inverse nets list the switch, then the
/// convs, then PM; forward nets list PM, then the convs, then the switch.
struct ModelParams {
  ModelSpec spec;
  SwitchParams sw;
  std::vector<ConvParams> convs;
  std::optional<PmParams> pm;

  std::size_t count() const;
  /// Visits every parameter array as a span of reals, in declaration order.
  void visit(const std::function<void(std::span<double>)>& f);
  void visit(const std::function<void(std::span<const double>)>& f) const;
  std::vector<double> flatten() const;
  void assign(std::span<const double> values);
};

std::size_t param_count(const ModelSpec& spec);

/// Zero-valued parameters with the spec's shapes (PM weights zero as well).
ModelParams zero_params(const ModelSpec& spec);
/// Glorot switch and conv weights, zero biases, identity PM.
ModelParams build(const ModelSpec& spec, std::uint64_t seed);

/// Copies the factorization into the switch stage: forward nets get
/// U_a = conj(V_a), V_b = U_b; inverse nets get U_b = conj(U_b), V_a = V_a.
void init_switch_from_factorization(ModelParams& params, const SwitchFactorization& f);

struct ModelTape {
  bool recorded = false;
  std::optional<PmTape> pm;
  std::vector<ConvTape> convs;
  SwitchTape sw;
};

/// Inverse nets take an M x M x 2 tensor and return N x N x 1; forward nets
/// take N x N x 1 and return M x M x 2.
RealTensor model_forward(const ModelParams& params, const RealTensor& input,
                         ModelTape* tape = nullptr);
/// Accumulates parameter gradients into `grads` and returns the input gradient.
RealTensor model_backward(const ModelParams& params, const ModelTape& tape,
                          const RealTensor& grad_out, ModelParams& grads);

RealTensor input_shape(const ModelSpec& spec);
RealTensor output_shape(const ModelSpec& spec);

// --- tensor conversions ----------------------------------------------------

RealTensor to_channels(std::span<const cplx> z, int n);
std::vector<cplx> from_channels(const RealTensor& x);
RealTensor to_tensor(std::span<const double> field, int n);

// --- checkpoints -----------------------------------------------------------

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params);
ModelParams load_checkpoint(const std::filesystem::path& path);

std::string to_string(ProblemKind kind);
std::string to_string(MapDirection direction);
ProblemKind parse_kind(std::string_view s);
MapDirection parse_direction(std::string_view s);

}  // namespace switchnet
