#include "gru2pc/bench.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <sstream>

#include "gru2pc/errors.hpp"
#include "json.hpp"

namespace gru2pc {

using json = nlohmann::json;

std::string to_string(RunMode m) {
  switch (m) {
    case RunMode::Local: return "local";
    case RunMode::Server: return "server";
    case RunMode::Client: return "client";
  }
  return "?";
}

RunMode parse_run_mode(const std::string& s) {
  if (s == "local") return RunMode::Local;
  if (s == "server") return RunMode::Server;
  if (s == "client") return RunMode::Client;
  throw ParamError("unknown mode '" + s + "'");
}

int log_level() {
  const char* v = std::getenv("GRU2PC_LOG");
  if (!v) return 1;
  const std::string s(v);
  if (s == "quiet" || s == "0") return 0;
  if (s == "debug" || s == "2") return 2;
  return 1;
}

void log_info(const std::string& msg) {
  if (log_level() >= 1) std::cerr << "[bench] " << msg << '\n';
}

void log_debug(const std::string& msg) {
  if (log_level() >= 2) std::cerr << "[bench:debug] " << msg << '\n';
}

Model bench_model(const BenchConfig& cfg) {
  if (!cfg.model_path.empty()) {
    Model m = load_model(cfg.model_path);
    if (cfg.act_bits && *cfg.act_bits != m.config.bits())
      throw ParamError("--act-bits disagrees with the model file's activation width");
    return m;
  }
  if (!cfg.act_bits) return synthetic_model(cfg.m, cfg.n, cfg.T, cfg.k, cfg.scenario, cfg.seed);
  // Custom width: quantize the scenario's synthetic real weights at the requested width.
  Model base = synthetic_model(cfg.m, cfg.n, cfg.T, cfg.k, cfg.scenario, cfg.seed);
  Model out = base;
  out.config.fp = FixedPointConfig::for_bits(*cfg.act_bits);
  out.config.validate();
  const int w = out.config.fp.weight_scale_log2, wa = out.config.fp.product_scale_log2();
  auto requant = [&](const std::vector<double>& src, int scale) {
    std::vector<int64_t> v;
    for (double x : src) v.push_back(lift_signed(quantize(x, scale, out.config.fp), out.config.fp.modulus_p));
    return v;
  };
  const RealWeights& r = *base.real;
  out.weights = {requant(r.W_i, w), requant(r.W_h, w), requant(r.b_i, wa),
                 requant(r.b_h, wa), requant(r.W_o, w), requant(r.b_o, wa)};
  return out;
}

std::vector<std::vector<uint64_t>> bench_inputs(const Model& model, uint64_t seed) {
  return quantize_inputs(model.config, synthetic_inputs(model.config.input_dim, model.config.time_steps, seed + 1));
}

namespace {

double median(std::vector<double> v) {
  if (v.empty()) return 0;
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

void fill_traffic(BenchReport& rep, const TrafficCounters& c2s, const TrafficCounters& s2c) {
  rep.total_bytes = 0;
  for (int p = 0; p < 3; ++p) {
    auto& ph = rep.phases[p];
    ph.c2s_bytes = c2s.phase_bytes(static_cast<Phase>(p));
    ph.s2c_bytes = s2c.phase_bytes(static_cast<Phase>(p));
    ph.frames = c2s.phase_frames(static_cast<Phase>(p)) + s2c.phase_frames(static_cast<Phase>(p));
    rep.total_bytes += ph.c2s_bytes + ph.s2c_bytes;
  }
  for (int t = 1; t <= 6; ++t)
    rep.bytes_by_type[t] = c2s.type_bytes(static_cast<MsgType>(t)) + s2c.type_bytes(static_cast<MsgType>(t));
  rep.gc_msg_bytes = rep.bytes_by_type[static_cast<int>(MsgType::GC_TABLES)];
  rep.gc_msg_bytes_with_ot = rep.gc_msg_bytes + rep.bytes_by_type[static_cast<int>(MsgType::OT_MSG)];
}

void fill_gc(BenchReport& rep, const GcTotals& g) {
  rep.gc_instances = g.instances;
  rep.gc_non_xor = g.non_xor;
  rep.gc_table_bytes = g.table_bytes;
  rep.gc_material_bytes = g.material_bytes;
  rep.ot_transfers = g.ot_transfers;
}

}  // namespace

std::optional<BenchReport> run_scenario(const BenchConfig& cfg) {
  if (cfg.trials == 0) return std::nullopt;
  const Model model = bench_model(cfg);
  const ModelConfig& mc = model.config;
  const auto x = bench_inputs(model, cfg.seed);
  const auto ref = oracle_infer_fixed(model, x);

  ProtocolOptions opt;
  opt.backend = cfg.backend;
  opt.ot = cfg.secure_ot ? OtMode::ChouOrlandi : OtMode::Dealer;
  opt.refresh = cfg.refresh;

  BenchReport rep;
  const auto sc = scenario_for(mc.candidate, mc.bits());
  rep.scenario = sc ? to_string(*sc) : "custom";
  rep.activation_kind = mc.candidate;
  rep.activation_bits = mc.bits();
  rep.m = mc.input_dim;
  rep.n = mc.hidden_dim;
  rep.T = mc.time_steps;
  rep.k = mc.classes;
  rep.backend = to_string(cfg.backend);
  rep.ot = cfg.secure_ot ? "chou-orlandi" : "dealer";
  rep.mode = to_string(cfg.mode);
  rep.refresh = cfg.refresh;
  rep.trials = cfg.trials;
  rep.seed = cfg.seed;

  std::vector<double> setup, offline, online, total, gc, lin, refr, outp, frac;
  bool all_match = true, any_checked = false;
  auto check = [&](const ClientReport& c) { return std::optional<bool>(c.scores == ref.scores); };

  auto take_server = [&](const ServerReport& s) {
    gc.push_back(1e3 * s.online_gc_seconds);
    lin.push_back(1e3 * s.online_linear_seconds);
    refr.push_back(1e3 * s.online_refresh_seconds);
    outp.push_back(1e3 * s.online_output_seconds);
    frac.push_back(s.phase_seconds[2] > 0 ? s.online_gc_seconds / s.phase_seconds[2] : 0);
    fill_gc(rep, s.gc);
    if (!s.census.empty()) rep.census = s.census.front();
    if (cfg.backend == Backend::Bfv) rep.min_noise_budget_bits = s.min_noise_budget;
    fill_traffic(rep, s.received, s.sent);
  };
  auto take_phases = [&](const std::array<double, 3>& ph) {
    setup.push_back(1e3 * ph[0]);
    offline.push_back(1e3 * ph[1]);
    online.push_back(1e3 * ph[2]);
    total.push_back(1e3 * (ph[0] + ph[1] + ph[2]));
  };

  for (std::size_t trial = 0; trial < cfg.trials; ++trial) {
    log_info(rep.scenario + " m=" + std::to_string(rep.m) + " n=" + std::to_string(rep.n) + " T=" +
             std::to_string(rep.T) + " trial " + std::to_string(trial + 1) + "/" + std::to_string(cfg.trials));
    switch (cfg.mode) {
      case RunMode::Local: {
        const LocalRun r = cfg.loopback_tcp ? run_local_tcp(model, x, opt, cfg.seed, check)
                                            : run_local(model, x, opt, cfg.seed, check);
        const bool ok = r.client.scores == ref.scores;
        all_match = all_match && ok;
        any_checked = true;
        take_phases(r.client.phase_seconds);
        take_server(r.server);
        fill_traffic(rep, r.client.sent, r.server.sent);
        break;
      }
      case RunMode::Server: {
        const auto [host, port] = parse_endpoint(cfg.endpoint);
        (void)host;
        auto ch = listen_tcp(port);
        ServerSession s(*ch, model, opt, cfg.seed);
        const ServerReport sr = s.run();
        take_phases(sr.phase_seconds);
        take_server(sr);
        if (sr.client_verdict) {
          any_checked = true;
          all_match = all_match && *sr.client_verdict;
        }
        break;
      }
      case RunMode::Client: {
        const auto [host, port] = parse_endpoint(cfg.endpoint);
        auto ch = connect_tcp(host, port);
        ClientSession c(*ch, x, cfg.seed ^ 0x9e3779b97f4a7c15ull);
        const ClientReport cr = c.run();
        const bool ok = cr.scores == ref.scores;
        c.send_verdict(ok);
        any_checked = true;
        all_match = all_match && ok;
        take_phases(cr.phase_seconds);
        fill_gc(rep, cr.gc);
        fill_traffic(rep, ch->sent(), ch->received());
        break;
      }
    }
    log_debug("trial done, online " + std::to_string(online.back()) + " ms");
  }
  rep.verdict = !any_checked ? "unchecked" : (all_match ? "match" : "mismatch");
  rep.setup_ms = median(setup);
  rep.offline_ms = median(offline);
  rep.online_ms = median(online);
  rep.total_ms = median(total);
  if (!gc.empty())
    rep.breakdown = BenchReport::Breakdown{median(gc), median(lin), median(refr), median(outp), median(frac)};
  return rep;
}

// ---------------------------------------------------------------- output

namespace {

const char* kPhaseNames[3] = {"setup", "offline", "online"};

json report_json(const BenchReport& r) {
  json j;
  j["scenario"] = r.scenario;
  j["activation_kind"] = to_string(r.activation_kind);
  j["activation_bits"] = r.activation_bits;
  j["m"] = r.m;
  j["n"] = r.n;
  j["T"] = r.T;
  j["k"] = r.k;
  j["backend"] = r.backend;
  j["ot"] = r.ot;
  j["mode"] = r.mode;
  j["refresh"] = r.refresh;
  j["trials"] = r.trials;
  j["seed"] = r.seed;
  j["verdict"] = r.verdict;
  j["latency_ms"] = {{"setup", r.setup_ms}, {"offline", r.offline_ms}, {"online", r.online_ms}, {"total", r.total_ms}};
  if (r.breakdown)
    j["online_breakdown_ms"] = {{"gc", r.breakdown->gc_ms},
                                {"linear", r.breakdown->linear_ms},
                                {"refresh", r.breakdown->refresh_ms},
                                {"output", r.breakdown->output_ms},
                                {"gc_fraction", r.breakdown->gc_fraction}};
  else
    j["online_breakdown_ms"] = nullptr;
  json ph = json::object();
  for (int p = 0; p < 3; ++p)
    ph[kPhaseNames[p]] = {{"c2s_bytes", r.phases[p].c2s_bytes},
                          {"s2c_bytes", r.phases[p].s2c_bytes},
                          {"frames", r.phases[p].frames}};
  j["phases"] = ph;
  json bt = json::object();
  for (int t = 1; t <= 6; ++t) bt[to_string(static_cast<MsgType>(t))] = r.bytes_by_type[t];
  j["bytes_by_type"] = bt;
  j["total_bytes"] = r.total_bytes;
  j["gc"] = {{"instances", r.gc_instances},
             {"non_xor", r.gc_non_xor},
             {"table_bytes", r.gc_table_bytes},
             {"material_bytes", r.gc_material_bytes},
             {"msg_bytes", r.gc_msg_bytes},
             {"msg_bytes_with_ot", r.gc_msg_bytes_with_ot},
             {"ot_transfers", r.ot_transfers}};
  if (r.census)
    j["census"] = {{"mult_pc", r.census->mult_pc},
                   {"add_cc", r.census->add_cc},
                   {"fused_products", r.census->fused_products},
                   {"gc_blocks", r.census->gc_blocks},
                   {"refreshes", r.census->refreshes},
                   {"linear", r.census->linear()}};
  else
    j["census"] = nullptr;
  if (r.min_noise_budget_bits && std::isfinite(*r.min_noise_budget_bits))
    j["min_noise_budget_bits"] = *r.min_noise_budget_bits;
  else
    j["min_noise_budget_bits"] = nullptr;
  return j;
}

template <class T>
T field(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw SchemaError(std::string("report lacks '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw SchemaError(std::string("report field '") + key + "': " + e.what());
  }
}

const json& object(const json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_object()) throw SchemaError(std::string("report lacks object '") + key + "'");
  return j.at(key);
}

BenchReport report_from_json(const json& j) {
  BenchReport r;
  r.scenario = field<std::string>(j, "scenario");
  try {
    r.activation_kind = parse_activation_kind(field<std::string>(j, "activation_kind"));
  } catch (const SpecError& e) {
    throw SchemaError(e.what());
  }
  r.activation_bits = field<int>(j, "activation_bits");
  r.m = field<std::size_t>(j, "m");
  r.n = field<std::size_t>(j, "n");
  r.T = field<std::size_t>(j, "T");
  r.k = field<std::size_t>(j, "k");
  r.backend = field<std::string>(j, "backend");
  r.ot = field<std::string>(j, "ot");
  r.mode = field<std::string>(j, "mode");
  r.refresh = field<bool>(j, "refresh");
  r.trials = field<std::size_t>(j, "trials");
  r.seed = field<uint64_t>(j, "seed");
  r.verdict = field<std::string>(j, "verdict");
  if (r.verdict != "match" && r.verdict != "mismatch" && r.verdict != "unchecked")
    throw SchemaError("bad verdict '" + r.verdict + "'");
  const json& lat = object(j, "latency_ms");
  r.setup_ms = field<double>(lat, "setup");
  r.offline_ms = field<double>(lat, "offline");
  r.online_ms = field<double>(lat, "online");
  r.total_ms = field<double>(lat, "total");
  if (!j.contains("online_breakdown_ms")) throw SchemaError("report lacks 'online_breakdown_ms'");
  if (!j["online_breakdown_ms"].is_null()) {
    const json& b = object(j, "online_breakdown_ms");
    r.breakdown = BenchReport::Breakdown{field<double>(b, "gc"), field<double>(b, "linear"), field<double>(b, "refresh"),
                                         field<double>(b, "output"), field<double>(b, "gc_fraction")};
  }
  const json& ph = object(j, "phases");
  for (int p = 0; p < 3; ++p) {
    const json& q = object(ph, kPhaseNames[p]);
    r.phases[p] = {field<uint64_t>(q, "c2s_bytes"), field<uint64_t>(q, "s2c_bytes"), field<uint64_t>(q, "frames")};
  }
  const json& bt = object(j, "bytes_by_type");
  for (int t = 1; t <= 6; ++t) r.bytes_by_type[t] = field<uint64_t>(bt, to_string(static_cast<MsgType>(t)).c_str());
  r.total_bytes = field<uint64_t>(j, "total_bytes");
  const json& g = object(j, "gc");
  r.gc_instances = field<std::size_t>(g, "instances");
  r.gc_non_xor = field<std::size_t>(g, "non_xor");
  r.gc_table_bytes = field<std::size_t>(g, "table_bytes");
  r.gc_material_bytes = field<std::size_t>(g, "material_bytes");
  r.gc_msg_bytes = field<uint64_t>(g, "msg_bytes");
  r.gc_msg_bytes_with_ot = field<uint64_t>(g, "msg_bytes_with_ot");
  r.ot_transfers = field<std::size_t>(g, "ot_transfers");
  if (!j.contains("census")) throw SchemaError("report lacks 'census'");
  if (!j["census"].is_null()) {
    const json& c = object(j, "census");
    r.census = OpCensus{field<std::size_t>(c, "mult_pc"), field<std::size_t>(c, "add_cc"),
                        field<std::size_t>(c, "fused_products"), field<std::size_t>(c, "gc_blocks"),
                        field<std::size_t>(c, "refreshes")};
    if (field<std::size_t>(c, "linear") != r.census->linear()) throw SchemaError("census linear total is inconsistent");
  }
  if (!j.contains("min_noise_budget_bits")) throw SchemaError("report lacks 'min_noise_budget_bits'");
  if (!j["min_noise_budget_bits"].is_null()) r.min_noise_budget_bits = field<double>(j, "min_noise_budget_bits");
  uint64_t sum = 0;
  for (const auto& p : r.phases) sum += p.c2s_bytes + p.s2c_bytes;
  if (sum != r.total_bytes) throw SchemaError("phase bytes do not add up to total_bytes");
  sum = 0;
  for (uint64_t b : r.bytes_by_type) sum += b;
  if (sum != r.total_bytes) throw SchemaError("per-type bytes do not add up to total_bytes");
  return r;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

}  // namespace

std::string emit_json(const std::vector<BenchReport>& reports) {
  json j;
  j["format"] = "gru2pc-bench";
  j["version"] = 1;
  j["reports"] = json::array();
  for (const auto& r : reports) j["reports"].push_back(report_json(r));
  return j.dump(2);
}

std::vector<BenchReport> parse_json_reports(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError(std::string("report is not valid JSON: ") + e.what());
  }
  if (!j.is_object() || field<std::string>(j, "format") != "gru2pc-bench") throw SchemaError("not a bench report");
  if (field<int>(j, "version") != 1) throw SchemaError("unsupported report version");
  if (!j.contains("reports") || !j["reports"].is_array()) throw SchemaError("report lacks the 'reports' array");
  std::vector<BenchReport> out;
  for (const auto& r : j["reports"]) out.push_back(report_from_json(r));
  return out;
}

std::string emit_table(const std::vector<BenchReport>& reports) {
  struct Col {
    const char* name;
    int width;
  };
  const Col cols[] = {{"Scenario", 9},     {"Input", 6},       {"Hidden", 7},     {"T", 4},
                      {"Bits", 5},         {"Verdict", 10},    {"Setup ms", 10},  {"Offline ms", 11},
                      {"Online ms", 10},   {"Total ms", 10},   {"GC MB", 9},      {"GC+OT MB", 9},
                      {"Online GC %", 12}, {"Total MB", 9}};
  std::ostringstream os;
  std::string line;
  auto cell = [&](const std::string& s, int w, bool left) {
    std::string v = s.size() > static_cast<std::size_t>(w) ? s.substr(0, w) : s;
    const std::string pad(w - v.size(), ' ');
    line += (left ? v + pad : pad + v) + ' ';
  };
  auto end_line = [&] {
    line.erase(line.find_last_not_of(' ') + 1);
    os << line << '\n';
    line.clear();
  };
  for (std::size_t i = 0; i < std::size(cols); ++i) cell(cols[i].name, cols[i].width, i == 0 || i == 5);
  end_line();
  for (const auto& r : reports) {
    const double mb = 1e6;
    const std::string row[] = {r.scenario,
                               std::to_string(r.m),
                               std::to_string(r.n),
                               std::to_string(r.T),
                               std::to_string(r.activation_bits),
                               r.verdict,
                               fmt("%.1f", r.setup_ms),
                               fmt("%.1f", r.offline_ms),
                               fmt("%.1f", r.online_ms),
                               fmt("%.1f", r.total_ms),
                               fmt("%.2f", static_cast<double>(r.gc_msg_bytes) / mb),
                               fmt("%.2f", static_cast<double>(r.gc_msg_bytes_with_ot) / mb),
                               r.breakdown ? fmt("%.1f", 100.0 * r.breakdown->gc_fraction) : std::string("-"),
                               fmt("%.2f", static_cast<double>(r.total_bytes) / mb)};
    for (std::size_t i = 0; i < std::size(cols); ++i) cell(row[i], cols[i].width, i == 0 || i == 5);
    end_line();
  }
  return os.str();
}

}  // namespace gru2pc
