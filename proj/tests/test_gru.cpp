#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "gru2pc/aes.hpp"

#include "doctest.h"
#include "gru2pc/errors.hpp"
#include "gru2pc/gru.hpp"

using namespace gru2pc;

namespace {

ModelConfig config_for(std::size_t m, std::size_t n, Scenario s) {
  const auto sp = scenario_spec(s);
  ModelConfig c;
  c.input_dim = m;
  c.hidden_dim = n;
  c.candidate = sp.candidate;
  c.fp = FixedPointConfig::for_bits(sp.bits);
  return c;
}

std::string temp_path(const char* name) { return (std::filesystem::temp_directory_path() / name).string(); }

}  // namespace

TEST_CASE("scenarios map to candidate kind and width") {
  CHECK(scenario_spec(Scenario::BASELINE).candidate == ActivationKind::TANH);
  CHECK(scenario_spec(Scenario::CG1).bits == 20);
  CHECK(scenario_spec(Scenario::CG2).bits == 8);
  CHECK(parse_scenario("CG2") == Scenario::CG2);
  CHECK_THROWS_AS(parse_scenario("cg3"), ParamError);
  CHECK(scenario_for(ActivationKind::RELU, 8) == Scenario::CG2);
  CHECK_FALSE(scenario_for(ActivationKind::TANH, 8).has_value());
}

TEST_CASE("parameter counts") {
  CHECK(config_for(10, 128, Scenario::BASELINE).cell_parameter_count() == 53376);
  CHECK(config_for(100, 64, Scenario::BASELINE).cell_parameter_count() == 31680);
  CHECK(config_for(10, 128, Scenario::BASELINE).stored_cell_parameter_count() == 53376 + 384);
  const auto model = synthetic_model(10, 128, 2, 2, Scenario::CG1, 1);
  const auto& w = model.weights;
  CHECK(w.W_i.size() + w.W_h.size() + w.b_i.size() + w.b_h.size() == model.config.stored_cell_parameter_count());
}

TEST_CASE("model file round-trips and rejects bad input") {
  const auto model = synthetic_model(5, 6, 3, 2, Scenario::BASELINE, 9);
  const auto path = temp_path("gru2pc_model_rt.json");
  save_model(model, path);
  const auto back = load_model(path);
  CHECK(back.config.input_dim == 5);
  CHECK(back.config.hidden_dim == 6);
  CHECK(back.config.time_steps == 3);
  CHECK(back.config.candidate == ActivationKind::TANH);
  CHECK(back.weights.W_h == model.weights.W_h);
  CHECK(back.weights.b_o == model.weights.b_o);
  REQUIRE(back.real.has_value());
  CHECK(back.real->W_i == model.real->W_i);

  const std::string text = model_to_json(model);
  CHECK_THROWS_AS(parse_model(text.substr(0, text.size() / 2)), SchemaError);
  CHECK_THROWS_AS(parse_model("[]"), SchemaError);
  CHECK_THROWS_AS(load_model(temp_path("gru2pc_no_such_file.json")), SchemaError);

  auto bad = [&](auto mutate) {
    auto j = model_to_json(model);
    mutate(j);
    return j;
  };
  // Wrong version.
  CHECK_THROWS_AS(parse_model(bad([](std::string& j) { j.replace(j.find("\"version\":1"), 11, "\"version\":7"); })),
                  SchemaError);
  // n claims 7 rows per gate while the arrays hold 6.
  CHECK_THROWS_AS(parse_model(bad([](std::string& j) { j.replace(j.find("\"n\":6"), 5, "\"n\":7"); })), ShapeError);
  // Unknown candidate activation.
  CHECK_THROWS_AS(parse_model(bad([](std::string& j) { j.replace(j.find("\"tanh\""), 6, "\"gelu\""); })), SchemaError);
  std::remove(path.c_str());
}

TEST_CASE("oracle matches a closed form on a constant-candidate cell") {
  // All gate pre-activations zero except the candidate bias c: Gate_new = relu(c) = c,
  // both sigmoids are 1/2, so h_t = c (1 - 2^-t).
  const std::size_t m = 3, n = 4;
  RealWeights r;
  r.W_i.assign(3 * n * m, 0.0);
  r.W_h.assign(3 * n * n, 0.0);
  r.b_i.assign(3 * n, 0.0);
  r.b_h.assign(3 * n, 0.0);
  for (std::size_t j = 0; j < n; ++j) r.b_i[2 * n + j] = 0.5 * static_cast<double>(j + 1);
  r.W_o.assign(2 * n, 0.0);
  r.b_o = {0.25, -0.75};
  const auto model = quantize_model(r, m, n, 2, 6, Scenario::CG1);
  const auto x = quantize_inputs(model.config, synthetic_inputs(m, 6, 4));
  const auto res = oracle_infer_fixed(model, x);
  const auto& cfg = model.config.fp;
  const double lsb = std::ldexp(1.0, -cfg.activation_scale_log2);
  for (std::size_t t = 0; t < res.steps.size(); ++t) {
    const auto h = dequantize_all(res.steps[t].h, cfg.activation_scale_log2, cfg);
    for (std::size_t j = 0; j < n; ++j) {
      const double c = 0.5 * static_cast<double>(j + 1);
      CHECK(std::fabs(h[j] - c * (1.0 - std::ldexp(1.0, -static_cast<int>(t + 1)))) <= 2 * lsb);
    }
  }
  const auto s = dequantize_all(res.scores, cfg.product_scale_log2(), cfg);
  CHECK(s[0] == doctest::Approx(0.25));
  CHECK(s[1] == doctest::Approx(-0.75));

  std::vector<std::vector<double>> trace;
  oracle_infer_real(r, m, n, 2, ActivationKind::RELU, synthetic_inputs(m, 6, 4), &trace);
  for (std::size_t t = 0; t < trace.size(); ++t)
    CHECK(trace[t][1] == doctest::Approx(1.0 * (1.0 - std::ldexp(1.0, -static_cast<int>(t + 1)))));
}

TEST_CASE("zero model keeps h at zero") {
  const std::size_t m = 4, n = 5;
  auto model = synthetic_model(m, n, 5, 3, Scenario::BASELINE, 2);
  for (auto* v : {&model.weights.W_i, &model.weights.W_h, &model.weights.b_i, &model.weights.b_h})
    std::fill(v->begin(), v->end(), 0);
  const auto res = oracle_infer_fixed(model, quantize_inputs(model.config, synthetic_inputs(m, 5, 3)));
  for (const auto& st : res.steps)
    for (uint64_t v : st.h) CHECK(v == 0);
  for (std::size_t i = 0; i < 3; ++i) CHECK(lift_signed(res.scores[i], model.config.fp.modulus_p) == model.weights.b_o[i]);
}

TEST_CASE("fixed-point oracle tracks the real GRU") {
  // Error budget per h element after T steps: PWL sigmoid (8 segments) error plus rounding,
  // compounded through the recurrence. Pinned empirically with margin.
  for (Scenario s : {Scenario::BASELINE, Scenario::CG1}) {
    for (uint64_t seed = 0; seed < 5; ++seed) {
      const std::size_t m = 8, n = 8, T = 10;
      const auto model = synthetic_model(m, n, T, 2, s, seed);
      const auto xr = synthetic_inputs(m, T, seed + 100);
      const auto res = oracle_infer_fixed(model, quantize_inputs(model.config, xr));
      std::vector<std::vector<double>> trace;
      oracle_infer_real(*model.real, m, n, 2, model.config.candidate, xr, &trace);
      const auto& cfg = model.config.fp;
      double worst = 0;
      for (std::size_t t = 0; t < T; ++t) {
        const auto h = dequantize_all(res.steps[t].h, cfg.activation_scale_log2, cfg);
        for (std::size_t j = 0; j < n; ++j) worst = std::max(worst, std::fabs(h[j] - trace[t][j]));
      }
      CAPTURE(to_string(s));
      CAPTURE(seed);
      CHECK(worst < 0.05);
    }
  }
}

TEST_CASE("gate outputs stay in range") {
  for (Scenario s : {Scenario::BASELINE, Scenario::CG1, Scenario::CG2}) {
    const auto model = synthetic_model(6, 7, 8, 2, s, 77);
    const auto& cfg = model.config.fp;
    const int a = cfg.activation_scale_log2;
    const auto res = oracle_infer_fixed(model, quantize_inputs(model.config, synthetic_inputs(6, 8, 78)));
    for (const auto& st : res.steps) {
      for (double g : dequantize_all(st.gate_reset, a, cfg)) CHECK((g >= 0.0 && g <= 1.0));
      for (double g : dequantize_all(st.gate_input, a, cfg)) CHECK((g >= 0.0 && g <= 1.0));
      for (double g : dequantize_all(st.gate_new, a, cfg)) {
        if (model.config.candidate == ActivationKind::RELU)
          CHECK(g >= 0.0);
        else
          CHECK((g >= -1.0 && g <= 1.0));
      }
    }
  }
}

TEST_CASE("per-step operation census") {
  const auto model = synthetic_model(3, 4, 2, 2, Scenario::CG2, 5);
  const auto res = oracle_infer_fixed(model, quantize_inputs(model.config, synthetic_inputs(3, 2, 6)));
  CHECK(res.census.mult_pc == 2);
  CHECK(res.census.linear() == 9);
  CHECK(res.census.gc_blocks == 3);
  const auto blocks = cell_blocks(model.config);
  CHECK(blocks.reset.fused_product);
  CHECK(blocks.update.fused_product);
  CHECK_FALSE(blocks.candidate.fused_product);
  CHECK(blocks.candidate.kind == ActivationKind::RELU);
}

TEST_CASE("shape errors on inputs and config") {
  const auto model = synthetic_model(3, 4, 2, 2, Scenario::CG1, 5);
  CHECK_THROWS_AS(quantize_inputs(model.config, {{0.1, 0.2}}), ShapeError);
  CHECK_THROWS_AS(oracle_infer_fixed(model, {{1, 2}}), ShapeError);
  ModelConfig c = model.config;
  c.hidden_dim = 0;
  CHECK_THROWS_AS(c.validate(), ShapeError);
}

TEST_CASE("zero weights halve any hidden state") {
  const std::size_t m = 3, n = 6;
  for (Scenario s : {Scenario::BASELINE, Scenario::CG1, Scenario::CG2}) {
    auto model = synthetic_model(m, n, 1, 2, s, 31);
    for (auto* v : {&model.weights.W_i, &model.weights.W_h, &model.weights.b_i, &model.weights.b_h})
      std::fill(v->begin(), v->end(), 0);
    const auto& cfg = model.config.fp;
    const int a = cfg.activation_scale_log2;
    const double lsb = std::ldexp(1.0, -a);
    Prg prg(Block::from_u64(8, static_cast<uint64_t>(s)));
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<double> hr(n);
      for (auto& v : hr) v = 2.0 * prg.uniform_real() - 1.0;
      const auto hq = quantize_vector(hr, a, cfg).values;
      const auto st = oracle_cell_step(model, std::vector<uint64_t>(m, 0), hq);
      const auto h0 = dequantize_all(hq, a, cfg), h1 = dequantize_all(st.h, a, cfg);
      for (std::size_t j = 0; j < n; ++j) CHECK(std::fabs(h1[j] - 0.5 * h0[j]) <= lsb);
    }
  }
  // Real recurrence from a non-zero start: h_t = 0.5^t h_0, scores follow W_o = 0.
  RealWeights r;
  r.W_i.assign(3 * n * m, 0.0);
  r.W_h.assign(3 * n * n, 0.0);
  r.b_i.assign(3 * n, 0.0);
  r.b_h.assign(3 * n, 0.0);
  r.W_o.assign(2 * n, 0.0);
  r.b_o = {0.5, -0.5};
  const std::vector<double> h0 = {0.9, -0.4, 0.25, 1.0, -1.0, 0.0};
  for (ActivationKind kind : {ActivationKind::TANH, ActivationKind::RELU}) {
    std::vector<std::vector<double>> trace;
    const auto scores = oracle_infer_real(r, m, n, 2, kind, synthetic_inputs(m, 4, 1), &trace, h0);
    for (std::size_t t = 0; t < trace.size(); ++t)
      for (std::size_t j = 0; j < n; ++j) CHECK(trace[t][j] == doctest::Approx(std::ldexp(h0[j], -static_cast<int>(t + 1))));
    CHECK(scores[0] == 0.5);
  }
}

namespace {

// Independent real GRU in the gate-major formulation: n = act(W_in x + b_in + r*(W_hn h + b_hn)),
// h' = (1 - z) * n + z * h.
std::vector<double> reference_gru(const RealWeights& w, std::size_t m, std::size_t n, std::size_t k, bool relu,
                                  const std::vector<std::vector<double>>& xs) {
  auto row = [](const std::vector<double>& W, std::size_t r, std::size_t cols, const std::vector<double>& v) {
    double acc = 0;
    for (std::size_t c = 0; c < cols; ++c) acc += W[r * cols + c] * v[c];
    return acc;
  };
  std::vector<double> h(n, 0.0);
  for (const auto& x : xs) {
    std::vector<double> hn(n);
    for (std::size_t j = 0; j < n; ++j) {
      const double r = 1.0 / (1.0 + std::exp(-(row(w.W_i, j, m, x) + w.b_i[j] + row(w.W_h, j, n, h) + w.b_h[j])));
      const double z =
          1.0 / (1.0 + std::exp(-(row(w.W_i, n + j, m, x) + w.b_i[n + j] + row(w.W_h, n + j, n, h) + w.b_h[n + j])));
      const double pre = row(w.W_i, 2 * n + j, m, x) + w.b_i[2 * n + j] + r * (row(w.W_h, 2 * n + j, n, h) + w.b_h[2 * n + j]);
      const double cand = relu ? (pre > 0 ? pre : 0.0) : std::tanh(pre);
      hn[j] = (1.0 - z) * cand + z * h[j];
    }
    h = hn;
  }
  std::vector<double> out(k);
  for (std::size_t i = 0; i < k; ++i) out[i] = row(w.W_o, i, n, h) + w.b_o[i];
  return out;
}

}  // namespace

TEST_CASE("real oracle agrees with an independent formulation") {
  for (uint64_t seed = 0; seed < 10; ++seed) {
    const bool relu = seed % 2;
    const auto model = synthetic_model(7, 5, 6, 3, relu ? Scenario::CG1 : Scenario::BASELINE, seed);
    const auto xs = synthetic_inputs(7, 6, seed + 3);
    const auto a = oracle_infer_real(*model.real, 7, 5, 3, relu ? ActivationKind::RELU : ActivationKind::TANH, xs);
    const auto b = reference_gru(*model.real, 7, 5, 3, relu, xs);
    for (std::size_t i = 0; i < 3; ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
  }
}

TEST_CASE("scenario ablation: only the candidate path differs") {
  const auto base = synthetic_model(6, 8, 4, 2, Scenario::BASELINE, 40);
  const auto cg1 = synthetic_model(6, 8, 4, 2, Scenario::CG1, 40);
  const auto cg2 = synthetic_model(6, 8, 4, 2, Scenario::CG2, 40);
  // Config diffs.
  CHECK(base.config.fp.activation_bits == cg1.config.fp.activation_bits);
  CHECK(base.config.candidate != cg1.config.candidate);
  CHECK(cg1.config.candidate == cg2.config.candidate);
  CHECK(cg1.config.fp.activation_bits != cg2.config.fp.activation_bits);
  CHECK(base.weights.W_h == cg1.weights.W_h);
  CHECK(base.weights.b_i == cg1.weights.b_i);

  const auto xr = synthetic_inputs(6, 4, 41);
  const auto rb = oracle_infer_fixed(base, quantize_inputs(base.config, xr));
  const auto r1 = oracle_infer_fixed(cg1, quantize_inputs(cg1.config, xr));
  // Same h_0 and weights: the first step's sigmoid gates agree; Gate_new is where they part.
  CHECK(rb.steps[0].gate_reset == r1.steps[0].gate_reset);
  CHECK(rb.steps[0].gate_input == r1.steps[0].gate_input);
  CHECK(rb.steps[0].gate_new != r1.steps[0].gate_new);
  const auto cb = cell_blocks(base.config), c1 = cell_blocks(cg1.config);
  CHECK(cb.reset.kind == c1.reset.kind);
  CHECK(cb.reset.bits == c1.reset.bits);
  CHECK(cb.update.output_scale_log2 == c1.update.output_scale_log2);
  CHECK(cb.candidate.kind == ActivationKind::TANH);
  CHECK(c1.candidate.kind == ActivationKind::RELU);
}

TEST_CASE("gate ranges over 10^4 random cell steps") {
  std::size_t steps = 0;
  for (Scenario s : {Scenario::BASELINE, Scenario::CG1, Scenario::CG2}) {
    const std::size_t m = 5, n = 10;
    const auto model = synthetic_model(m, n, 1, 2, s, 60 + static_cast<uint64_t>(s));
    const auto& cfg = model.config.fp;
    const int a = cfg.activation_scale_log2;
    const double top = std::ldexp(1.0, cfg.activation_bits - 1 - a);  // saturation level of a b-bit word
    Prg prg(Block::from_u64(61, static_cast<uint64_t>(s)));
    for (int trial = 0; trial < 1000; ++trial, steps += n) {
      std::vector<double> xr(m), hr(n);
      for (auto& v : xr) v = 4.0 * prg.uniform_real() - 2.0;
      for (auto& v : hr) v = 2.0 * prg.uniform_real() - 1.0;
      const auto st = oracle_cell_step(model, quantize_vector(xr, a, cfg).values, quantize_vector(hr, a, cfg).values);
      for (double g : dequantize_all(st.gate_reset, a, cfg)) REQUIRE((g >= 0.0 && g <= 1.0));
      for (double g : dequantize_all(st.gate_input, a, cfg)) REQUIRE((g >= 0.0 && g <= 1.0));
      for (double g : dequantize_all(st.gate_new, a, cfg)) {
        if (model.config.candidate == ActivationKind::RELU)
          REQUIRE((g >= 0.0 && g < top));
        else
          REQUIRE((g >= -1.0 && g <= 1.0));
      }
    }
  }
  CHECK(steps >= 10000);
}
