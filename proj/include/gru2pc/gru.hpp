#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gru2pc/activation.hpp"
#include "gru2pc/fixedpoint.hpp"

namespace gru2pc {

enum class Scenario : uint8_t { BASELINE, CG1, CG2 };

std::string to_string(Scenario s);
/// "baseline", "cg1", "cg2" in any case; ParamError otherwise.
Scenario parse_scenario(const std::string& s);

/// Candidate-gate activation and activation bit-width of a scenario.
struct ScenarioSpec {
  ActivationKind candidate = ActivationKind::TANH;
  int bits = 20;
};
ScenarioSpec scenario_spec(Scenario s);
/// The scenario with this (candidate, bits), if any.
std::optional<Scenario> scenario_for(ActivationKind candidate, int bits);

struct ModelConfig {
  std::size_t input_dim = 0;   // m
  std::size_t hidden_dim = 0;  // n
  std::size_t time_steps = 30;
  std::size_t classes = 2;     // k
  ActivationKind candidate = ActivationKind::TANH;
  FixedPointConfig fp = FixedPointConfig::for_bits(20);

  int bits() const { return fp.activation_bits; }
  /// Cell parameter count with one bias per gate row: 3(n^2 + nm + n).
  std::size_t cell_parameter_count() const;
  /// Numbers the model file stores for the cell (weights plus both bias vectors): 3(n^2 + nm + 2n).
  std::size_t stored_cell_parameter_count() const;
  /// Throws ShapeError / ParamError.
  void validate() const;
};

/// Integer codes (signed, |v| <= (p-1)/2). Matrices are row-major; the 3n rows
/// are ordered reset, update ("input" gate), candidate.
/// W_i, W_h, W_o at the weight scale w; b_i, b_h, b_o at the product scale w+a.
struct GruWeights {
  std::vector<int64_t> W_i, W_h, b_i, b_h, W_o, b_o;
};

/// Real-valued twin of GruWeights, same layout.
struct RealWeights {
  std::vector<double> W_i, W_h, b_i, b_h, W_o, b_o;
};

struct Model {
  ModelConfig config;
  GruWeights weights;
  std::optional<RealWeights> real;
};

inline constexpr int kModelFormatVersion = 1;

/// Model file (JSON). SchemaError on syntax, version or field problems, ShapeError on array shapes.
Model load_model(const std::string& path);
Model parse_model(const std::string& json_text);
std::string model_to_json(const Model& model);
void save_model(const Model& model, const std::string& path);

/// Quantizes a real model at a scenario's fixed-point configuration.
Model quantize_model(const RealWeights& real, std::size_t m, std::size_t n, std::size_t k, std::size_t T,
                     Scenario scenario);
/// Seeded random real weights in +-1/sqrt(m+n) (biases +-0.1), quantized for the scenario.
Model synthetic_model(std::size_t m, std::size_t n, std::size_t T, std::size_t k, Scenario scenario, uint64_t seed);
/// Seeded real input sequence in [-1, 1]^m of length T.
std::vector<std::vector<double>> synthetic_inputs(std::size_t m, std::size_t T, uint64_t seed);
/// Field elements at the activation scale, one vector per time step.
std::vector<std::vector<uint64_t>> quantize_inputs(const ModelConfig& config,
                                                   const std::vector<std::vector<double>>& x);

/// The three activation blocks of one cell step.
struct CellBlocks {
  ActivationSpec reset;      // sigmoid(i_r + h_r) * h_n, output at w+a
  ActivationSpec candidate;  // act(i_n + reset product), output at a
  ActivationSpec update;     // sigmoid(i_i + h_i) * (h_prev - Gate_new), output at a
};
CellBlocks cell_blocks(const ModelConfig& config);

/// Counts per cell step of the linear (HE) operations and garbled blocks the
/// cell performs. The two Hadamard products run inside garbled blocks but are
/// linear operations of the cell, so they are counted in `fused_products`.
struct OpCensus {
  std::size_t mult_pc = 0, add_cc = 0, fused_products = 0, gc_blocks = 0, refreshes = 0;
  std::size_t linear() const { return mult_pc + add_cc + fused_products; }
  bool operator==(const OpCensus&) const = default;
};

struct StepTrace {
  std::vector<uint64_t> gate_reset, gate_input, gate_new;  // at scale a
  std::vector<uint64_t> h;                                 // h_t at scale a
};

struct OracleResult {
  std::vector<StepTrace> steps;
  std::vector<uint64_t> scores;  // at scale w+a
  OpCensus census;               // per step
};

/// One cell step in the clear: x_t at scale a (m values), h_prev at scale a (n values).
StepTrace oracle_cell_step(const Model& model, const std::vector<uint64_t>& x_t, const std::vector<uint64_t>& h_prev);

/// Bit-exact twin of the secure protocol, in the clear, mod p.
OracleResult oracle_infer_fixed(const Model& model, const std::vector<std::vector<uint64_t>>& x);

/// Real-arithmetic GRU with exact activations; h_trace receives h_t per step when non-null.
/// h0 defaults to the zero vector.
std::vector<double> oracle_infer_real(const RealWeights& w, std::size_t m, std::size_t n, std::size_t k,
                                      ActivationKind candidate, const std::vector<std::vector<double>>& x,
                                      std::vector<std::vector<double>>* h_trace = nullptr,
                                      const std::vector<double>& h0 = {});

/// Signed real values of field elements at a scale.
std::vector<double> dequantize_all(const std::vector<uint64_t>& v, int scale_log2, const FixedPointConfig& cfg);

}  // namespace gru2pc
