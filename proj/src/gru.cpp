#include "gru2pc/gru.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "gru2pc/aes.hpp"
#include "gru2pc/errors.hpp"
#include "json.hpp"

namespace gru2pc {

using json = nlohmann::json;

std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::BASELINE: return "baseline";
    case Scenario::CG1: return "cg1";
    case Scenario::CG2: return "cg2";
  }
  return "?";
}

Scenario parse_scenario(const std::string& s) {
  std::string l;
  for (char c : s) l += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (l == "baseline") return Scenario::BASELINE;
  if (l == "cg1") return Scenario::CG1;
  if (l == "cg2") return Scenario::CG2;
  throw ParamError("unknown scenario '" + s + "'");
}

ScenarioSpec scenario_spec(Scenario s) {
  switch (s) {
    case Scenario::BASELINE: return {ActivationKind::TANH, 20};
    case Scenario::CG1: return {ActivationKind::RELU, 20};
    case Scenario::CG2: return {ActivationKind::RELU, 8};
  }
  throw ParamError("bad scenario");
}

std::optional<Scenario> scenario_for(ActivationKind candidate, int bits) {
  for (Scenario s : {Scenario::BASELINE, Scenario::CG1, Scenario::CG2}) {
    const auto sp = scenario_spec(s);
    if (sp.candidate == candidate && sp.bits == bits) return s;
  }
  return std::nullopt;
}

std::size_t ModelConfig::cell_parameter_count() const {
  const std::size_t n = hidden_dim, m = input_dim;
  return 3 * (n * n + n * m + n);
}

std::size_t ModelConfig::stored_cell_parameter_count() const { return cell_parameter_count() + 3 * hidden_dim; }

void ModelConfig::validate() const {
  if (input_dim < 1 || hidden_dim < 1) throw ShapeError("m and n must be at least 1");
  if (classes < 1) throw ShapeError("at least one output class");
  if (time_steps < 1) throw ShapeError("at least one time step");
  if (candidate == ActivationKind::SIGMOID) throw SchemaError("candidate activation must be tanh or relu");
  fp.validate();
}

namespace {

struct Shapes {
  std::size_t rows, cols;
};

// name -> (rows, cols); cols == 0 marks a vector.
std::vector<std::pair<std::string, Shapes>> layout(const ModelConfig& c) {
  const std::size_t n = c.hidden_dim, m = c.input_dim, k = c.classes;
  return {{"W_i", {3 * n, m}}, {"W_h", {3 * n, n}}, {"b_i", {3 * n, 0}},
          {"b_h", {3 * n, 0}}, {"W_o", {k, n}},     {"b_o", {k, 0}}};
}

template <class W>
auto& field(W& w, const std::string& name) {
  if (name == "W_i") return w.W_i;
  if (name == "W_h") return w.W_h;
  if (name == "b_i") return w.b_i;
  if (name == "b_h") return w.b_h;
  if (name == "W_o") return w.W_o;
  return w.b_o;
}

template <class T>
json to_json_array(const std::vector<T>& v, Shapes s) {
  if (s.cols == 0) return json(v);
  json rows = json::array();
  for (std::size_t r = 0; r < s.rows; ++r)
    rows.push_back(std::vector<T>(v.begin() + r * s.cols, v.begin() + (r + 1) * s.cols));
  return rows;
}

template <class T>
std::vector<T> from_json_array(const json& j, Shapes s, const std::string& name) {
  std::vector<T> out;
  auto take = [&](const json& e) {
    if constexpr (std::is_same_v<T, int64_t>) {
      if (!e.is_number_integer()) throw SchemaError(name + " holds a non-integer entry");
    } else {
      if (!e.is_number()) throw SchemaError(name + " holds a non-numeric entry");
    }
    out.push_back(e.get<T>());
  };
  if (!j.is_array()) throw SchemaError(name + " must be an array");
  if (s.cols == 0) {
    if (j.size() != s.rows) throw ShapeError(name + " has " + std::to_string(j.size()) + " entries, expected " + std::to_string(s.rows));
    for (const auto& e : j) take(e);
  } else {
    if (j.size() != s.rows) throw ShapeError(name + " has " + std::to_string(j.size()) + " rows, expected " + std::to_string(s.rows));
    for (const auto& row : j) {
      if (!row.is_array() || row.size() != s.cols)
        throw ShapeError(name + " row width differs from " + std::to_string(s.cols));
      for (const auto& e : row) take(e);
    }
  }
  return out;
}

template <class T>
T required(const json& j, const char* key) {
  if (!j.contains(key)) throw SchemaError(std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw SchemaError(std::string("field '") + key + "': " + e.what());
  }
}

}  // namespace

Model parse_model(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError(std::string("model file is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw SchemaError("model file must be a JSON object");
  if (required<std::string>(j, "format") != "gru2pc-model") throw SchemaError("not a gru2pc model file");
  const int version = required<int>(j, "version");
  if (version != kModelFormatVersion) throw SchemaError("unsupported model version " + std::to_string(version));

  Model model;
  auto& c = model.config;
  const auto dim = [&](const char* key) {
    const int64_t v = required<int64_t>(j, key);
    if (v < 1) throw ShapeError(std::string(key) + " must be positive");
    return static_cast<std::size_t>(v);
  };
  c.input_dim = dim("m");
  c.hidden_dim = dim("n");
  c.time_steps = dim("T");
  c.classes = dim("k");
  try {
    c.candidate = parse_activation_kind(required<std::string>(j, "activation_kind"));
  } catch (const SpecError& e) {
    throw SchemaError(e.what());
  }
  c.fp.activation_bits = required<int>(j, "activation_bits");
  c.fp.plaintext_bits = required<int>(j, "plaintext_bits");
  c.fp.modulus_p = required<uint64_t>(j, "p");
  c.fp.weight_scale_log2 = required<int>(j, "weight_scale_log2");
  c.fp.activation_scale_log2 = required<int>(j, "activation_scale_log2");
  try {
    c.validate();
  } catch (const ParamError& e) {
    throw SchemaError(e.what());
  }

  if (!j.contains("weights") || !j["weights"].is_object()) throw SchemaError("missing weights object");
  const int64_t half = static_cast<int64_t>((c.fp.modulus_p - 1) / 2);
  for (const auto& [name, shape] : layout(c)) {
    if (!j["weights"].contains(name)) throw SchemaError("missing weight array '" + name + "'");
    auto v = from_json_array<int64_t>(j["weights"][name], shape, name);
    for (int64_t x : v)
      if (x < -half || x > half) throw SchemaError(name + " entry " + std::to_string(x) + " is not a field element");
    field(model.weights, name) = std::move(v);
  }
  if (j.contains("real")) {
    RealWeights r;
    for (const auto& [name, shape] : layout(c)) {
      if (!j["real"].contains(name)) throw SchemaError("missing real array '" + name + "'");
      field(r, name) = from_json_array<double>(j["real"][name], shape, name);
    }
    model.real = std::move(r);
  }
  return model;
}

Model load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("cannot open model file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_model(ss.str());
}

std::string model_to_json(const Model& model) {
  const auto& c = model.config;
  json j;
  j["format"] = "gru2pc-model";
  j["version"] = kModelFormatVersion;
  j["m"] = c.input_dim;
  j["n"] = c.hidden_dim;
  j["T"] = c.time_steps;
  j["k"] = c.classes;
  j["activation_kind"] = to_string(c.candidate);
  j["activation_bits"] = c.fp.activation_bits;
  j["plaintext_bits"] = c.fp.plaintext_bits;
  j["p"] = c.fp.modulus_p;
  j["weight_scale_log2"] = c.fp.weight_scale_log2;
  j["activation_scale_log2"] = c.fp.activation_scale_log2;
  json w = json::object();
  for (const auto& [name, shape] : layout(c))
    w[name] = to_json_array(field(model.weights, name), shape);
  j["weights"] = std::move(w);
  if (model.real) {
    json r = json::object();
    for (const auto& [name, shape] : layout(c))
      r[name] = to_json_array(field(*model.real, name), shape);
    j["real"] = std::move(r);
  }
  return j.dump();
}

void save_model(const Model& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw SchemaError("cannot write model file " + path);
  out << model_to_json(model) << '\n';
}

Model quantize_model(const RealWeights& real, std::size_t m, std::size_t n, std::size_t k, std::size_t T,
                     Scenario scenario) {
  const auto sp = scenario_spec(scenario);
  Model model;
  auto& c = model.config;
  c.input_dim = m;
  c.hidden_dim = n;
  c.classes = k;
  c.time_steps = T;
  c.candidate = sp.candidate;
  c.fp = FixedPointConfig::for_bits(sp.bits);
  c.validate();
  const int w = c.fp.weight_scale_log2, wa = c.fp.product_scale_log2();
  for (const auto& [name, shape] : layout(c)) {
    const auto& src = field(real, name);
    const std::size_t want = shape.rows * std::max<std::size_t>(shape.cols, 1);
    if (src.size() != want) throw ShapeError(name + " has the wrong number of entries");
    const int scale = name[0] == 'W' ? w : wa;
    auto& dst = field(model.weights, name);
    for (double v : src) dst.push_back(lift_signed(quantize(v, scale, c.fp), c.fp.modulus_p));
  }
  model.real = real;
  return model;
}

Model synthetic_model(std::size_t m, std::size_t n, std::size_t T, std::size_t k, Scenario scenario, uint64_t seed) {
  Prg prg(Block::from_u64(0x73796e7468ull, seed));
  const double wr = 1.0 / std::sqrt(static_cast<double>(m + n)), wo = 1.0 / std::sqrt(static_cast<double>(n));
  auto fill = [&](std::size_t count, double range) {
    std::vector<double> v(count);
    for (auto& x : v) x = (2.0 * prg.uniform_real() - 1.0) * range;
    return v;
  };
  RealWeights r;
  r.W_i = fill(3 * n * m, wr);
  r.W_h = fill(3 * n * n, wr);
  r.b_i = fill(3 * n, 0.1);
  r.b_h = fill(3 * n, 0.1);
  r.W_o = fill(k * n, wo);
  r.b_o = fill(k, 0.1);
  return quantize_model(r, m, n, k, T, scenario);
}

std::vector<std::vector<double>> synthetic_inputs(std::size_t m, std::size_t T, uint64_t seed) {
  Prg prg(Block::from_u64(0x696e707574ull, seed));
  std::vector<std::vector<double>> x(T, std::vector<double>(m));
  for (auto& row : x)
    for (auto& v : row) v = 2.0 * prg.uniform_real() - 1.0;
  return x;
}

std::vector<std::vector<uint64_t>> quantize_inputs(const ModelConfig& config,
                                                   const std::vector<std::vector<double>>& x) {
  std::vector<std::vector<uint64_t>> out;
  for (const auto& row : x) {
    if (row.size() != config.input_dim) throw ShapeError("input vector has the wrong width");
    out.push_back(quantize_vector(row, config.fp.activation_scale_log2, config.fp).values);
  }
  return out;
}

CellBlocks cell_blocks(const ModelConfig& config) {
  const int b = config.bits(), a = config.fp.activation_scale_log2, wa = config.fp.product_scale_log2();
  CellBlocks c;
  c.reset = {ActivationKind::SIGMOID, b, true, 8, wa, wa, wa};
  c.candidate = {config.candidate, b, false, config.candidate == ActivationKind::TANH ? kExactTable : 8, wa};
  c.update = {ActivationKind::SIGMOID, b, true, 8, wa, a, a};
  return c;
}

namespace {

// y = W x + bias over Z_p; W holds signed codes, x and bias field elements.
std::vector<uint64_t> matvec_mod(const std::vector<int64_t>& W, std::size_t rows, std::size_t cols,
                                 const std::vector<uint64_t>& x, const std::vector<int64_t>& bias, uint64_t p) {
  std::vector<uint64_t> y(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    unsigned __int128 acc = embed_signed(bias[r], p);
    for (std::size_t c = 0; c < cols; ++c) acc += static_cast<unsigned __int128>(embed_signed(W[r * cols + c], p)) * x[c];
    y[r] = static_cast<uint64_t>(acc % p);
  }
  return y;
}

uint64_t addp(uint64_t a, uint64_t b, uint64_t p) { return (a + b) % p; }
uint64_t subp(uint64_t a, uint64_t b, uint64_t p) { return (a + p - b) % p; }

}  // namespace

StepTrace oracle_cell_step(const Model& model, const std::vector<uint64_t>& x_t, const std::vector<uint64_t>& h_prev) {
  const auto& c = model.config;
  const auto& w = model.weights;
  const auto& cfg = c.fp;
  const uint64_t p = cfg.modulus_p;
  const std::size_t n = c.hidden_dim, m = c.input_dim;
  if (x_t.size() != m) throw ShapeError("input vector has the wrong width");
  if (h_prev.size() != n) throw ShapeError("hidden state has the wrong width");
  const CellBlocks blocks = cell_blocks(c);
  ActivationSpec plain_sigmoid = blocks.reset;
  plain_sigmoid.fused_product = false;
  plain_sigmoid.output_scale_log2 = plain_sigmoid.operand_scale_log2 = -1;

  const auto gi = matvec_mod(w.W_i, 3 * n, m, x_t, w.b_i, p);
  const auto gh = matvec_mod(w.W_h, 3 * n, n, h_prev, w.b_h, p);
  StepTrace st;
  st.gate_reset.resize(n);
  st.gate_input.resize(n);
  st.gate_new.resize(n);
  st.h.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    const uint64_t s_r = addp(gi[j], gh[j], p);
    const uint64_t s_i = addp(gi[n + j], gh[n + j], p);
    const uint64_t rh = block_reference(blocks.reset, cfg, s_r, gh[2 * n + j]);
    const uint64_t gn = block_reference(blocks.candidate, cfg, addp(gi[2 * n + j], rh, p));
    const uint64_t upd = block_reference(blocks.update, cfg, s_i, subp(h_prev[j], gn, p));
    st.gate_reset[j] = block_reference(plain_sigmoid, cfg, s_r);
    st.gate_input[j] = block_reference(plain_sigmoid, cfg, s_i);
    st.gate_new[j] = gn;
    st.h[j] = addp(gn, upd, p);
  }
  return st;
}

OracleResult oracle_infer_fixed(const Model& model, const std::vector<std::vector<uint64_t>>& x) {
  const auto& c = model.config;
  OracleResult out;
  out.census = {2, 5, 2, 3, 1};
  std::vector<uint64_t> h(c.hidden_dim, 0);
  for (const auto& xt : x) {
    out.steps.push_back(oracle_cell_step(model, xt, h));
    h = out.steps.back().h;
  }
  out.scores = matvec_mod(model.weights.W_o, c.classes, c.hidden_dim, h, model.weights.b_o, c.fp.modulus_p);
  return out;
}

std::vector<double> oracle_infer_real(const RealWeights& w, std::size_t m, std::size_t n, std::size_t k,
                                      ActivationKind candidate, const std::vector<std::vector<double>>& x,
                                      std::vector<std::vector<double>>* h_trace, const std::vector<double>& h0) {
  auto sigmoid = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  auto act = [&](double v) { return candidate == ActivationKind::TANH ? std::tanh(v) : std::max(0.0, v); };
  if (!h0.empty() && h0.size() != n) throw ShapeError("initial hidden state has the wrong width");
  std::vector<double> h = h0.empty() ? std::vector<double>(n, 0.0) : h0;
  for (const auto& xt : x) {
    if (xt.size() != m) throw ShapeError("input vector has the wrong width");
    std::vector<double> gi(3 * n), gh(3 * n);
    for (std::size_t r = 0; r < 3 * n; ++r) {
      double a = w.b_i[r], b = w.b_h[r];
      for (std::size_t c = 0; c < m; ++c) a += w.W_i[r * m + c] * xt[c];
      for (std::size_t c = 0; c < n; ++c) b += w.W_h[r * n + c] * h[c];
      gi[r] = a;
      gh[r] = b;
    }
    std::vector<double> next(n);
    for (std::size_t j = 0; j < n; ++j) {
      const double r = sigmoid(gi[j] + gh[j]);
      const double z = sigmoid(gi[n + j] + gh[n + j]);
      const double g = act(gi[2 * n + j] + r * gh[2 * n + j]);
      next[j] = g + z * (h[j] - g);
    }
    h = std::move(next);
    if (h_trace) h_trace->push_back(h);
  }
  std::vector<double> scores(k);
  for (std::size_t r = 0; r < k; ++r) {
    double a = w.b_o[r];
    for (std::size_t c = 0; c < n; ++c) a += w.W_o[r * n + c] * h[c];
    scores[r] = a;
  }
  return scores;
}

std::vector<double> dequantize_all(const std::vector<uint64_t>& v, int scale_log2, const FixedPointConfig& cfg) {
  std::vector<double> out;
  out.reserve(v.size());
  for (uint64_t x : v) out.push_back(dequantize(x, scale_log2, cfg));
  return out;
}

}  // namespace gru2pc
