#include "gru2pc/protocol.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <thread>

#include "gru2pc/bridge.hpp"
#include "gru2pc/errors.hpp"
#include "gru2pc/garble.hpp"
#include "json.hpp"

namespace gru2pc {

using json = nlohmann::json;

std::string to_string(Backend b) { return b == Backend::Bfv ? "bfv" : "debug"; }

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Adds the elapsed time of its scope to a counter.
class ScopeTimer {
 public:
  explicit ScopeTimer(double& acc) : acc_(acc), t0_(Clock::now()) {}
  ~ScopeTimer() { acc_ += seconds_since(t0_); }
  ScopeTimer(const ScopeTimer&) = delete;
  ScopeTimer& operator=(const ScopeTimer&) = delete;

 private:
  double& acc_;
  Clock::time_point t0_;
};

constexpr uint8_t kVerdictMismatch = 0, kVerdictMatch = 1, kVerdictUnchecked = 2;

// One of the three activation blocks of a cell step, as both parties see it.
struct BlockPlan {
  ActivationSpec spec;
  BoolCircuit circuit;
  std::size_t garbler_bits = 0, evaluator_bits = 0;
  int sum_scale = 0, operand_scale = 0, out_scale = 0;
  std::size_t out_period = 0;  // 0: compact result, else replicated with this period
};

std::array<BlockPlan, 3> plan_blocks(const ModelConfig& c) {
  const CellBlocks cb = cell_blocks(c);
  const int a = c.fp.activation_scale_log2, wa = c.fp.product_scale_log2();
  const std::size_t hp = next_pow2(c.hidden_dim);
  std::array<BlockPlan, 3> out;
  const ActivationSpec specs[3] = {cb.reset, cb.candidate, cb.update};
  for (int j = 0; j < 3; ++j) {
    auto& b = out[j];
    b.spec = specs[j];
    b.circuit = build_activation_block(b.spec, c.fp);
    b.garbler_bits = b.circuit.input_bits(Party::Garbler);
    b.evaluator_bits = b.circuit.input_bits(Party::Evaluator);
    b.sum_scale = wa;
    b.out_scale = b.spec.output_scale_log2 >= 0 ? b.spec.output_scale_log2 : a;
  }
  out[0].operand_scale = wa;  // h_n
  out[2].operand_scale = a;   // h_prev - Gate_new
  // The reset product feeds a compact sum; Gate_new and the update term build h_t,
  // which must be replicated for the next step's mult_pc.
  out[1].out_period = out[2].out_period = hp;
  return out;
}

json hello(const ModelConfig& c, const ProtocolOptions& o) {
  return {{"m", c.input_dim},
          {"n", c.hidden_dim},
          {"T", c.time_steps},
          {"k", c.classes},
          {"activation_kind", to_string(c.candidate)},
          {"activation_bits", c.fp.activation_bits},
          {"plaintext_bits", c.fp.plaintext_bits},
          {"p", c.fp.modulus_p},
          {"weight_scale_log2", c.fp.weight_scale_log2},
          {"activation_scale_log2", c.fp.activation_scale_log2},
          {"backend", to_string(o.backend)},
          {"ot", o.ot == OtMode::Dealer ? "dealer" : "chou-orlandi"},
          {"refresh", o.refresh},
          {"ring_dimension", o.params.ring_dimension},
          {"q", o.params.ciphertext_modulus},
          {"q_bits", o.params.ciphertext_modulus_bits},
          {"error_stddev", o.params.error_stddev},
          {"decomposition_bits", o.params.decomposition_bits}};
}

void parse_hello(const std::vector<uint8_t>& payload, ModelConfig& c, ProtocolOptions& o) {
  try {
    const json j = json::parse(payload.begin(), payload.end());
    c.input_dim = j.at("m").get<std::size_t>();
    c.hidden_dim = j.at("n").get<std::size_t>();
    c.time_steps = j.at("T").get<std::size_t>();
    c.classes = j.at("k").get<std::size_t>();
    c.candidate = parse_activation_kind(j.at("activation_kind").get<std::string>());
    c.fp.activation_bits = j.at("activation_bits").get<int>();
    c.fp.plaintext_bits = j.at("plaintext_bits").get<int>();
    c.fp.modulus_p = j.at("p").get<uint64_t>();
    c.fp.weight_scale_log2 = j.at("weight_scale_log2").get<int>();
    c.fp.activation_scale_log2 = j.at("activation_scale_log2").get<int>();
    const auto backend = j.at("backend").get<std::string>();
    if (backend != "bfv" && backend != "debug") throw ProtocolError("unknown backend " + backend);
    o.backend = backend == "bfv" ? Backend::Bfv : Backend::Debug;
    const auto ot = j.at("ot").get<std::string>();
    if (ot != "dealer" && ot != "chou-orlandi") throw ProtocolError("unknown OT mode " + ot);
    o.ot = ot == "dealer" ? OtMode::Dealer : OtMode::ChouOrlandi;
    o.refresh = j.at("refresh").get<bool>();
    o.params.ring_dimension = j.at("ring_dimension").get<std::size_t>();
    o.params.plaintext_modulus = c.fp.modulus_p;
    o.params.ciphertext_modulus = j.at("q").get<uint64_t>();
    o.params.ciphertext_modulus_bits = j.at("q_bits").get<int>();
    o.params.error_stddev = j.at("error_stddev").get<double>();
    o.params.decomposition_bits = j.at("decomposition_bits").get<int>();
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("malformed hello: ") + e.what());
  } catch (const SpecError& e) {
    throw ProtocolError(std::string("malformed hello: ") + e.what());
  }
  c.validate();
  o.params.validate();
}

void check_shapes(const ModelConfig& c, const PaheParams& params) {
  const std::size_t row = params.row_size();
  if (3 * c.hidden_dim > row || next_pow2(c.input_dim) > row || next_pow2(c.hidden_dim) > row || c.classes > row)
    throw DimensionError("model does not fit one slot row of the ring");
  if (c.fp.modulus_p != params.plaintext_modulus) throw ParamError("fixed-point modulus differs from PAHE modulus");
}

std::vector<uint64_t> embed_all(const std::vector<int64_t>& v, uint64_t p) {
  std::vector<uint64_t> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = embed_signed(v[i], p);
  return out;
}

void append_ct(std::vector<uint8_t>& out, const Pahe& he, const Ciphertext& ct) {
  const auto b = he.serialize(ct);
  out.insert(out.end(), b.begin(), b.end());
}

std::vector<Ciphertext> split_cts(const Pahe& he, const std::vector<uint8_t>& payload, std::size_t count,
                                  const int* scales, std::size_t period, std::size_t extent) {
  const std::size_t sz = he.ciphertext_bytes();
  if (payload.size() != count * sz)
    throw ProtocolError("expected " + std::to_string(count) + " ciphertexts, got " + std::to_string(payload.size()) +
                        " bytes");
  std::vector<Ciphertext> out;
  for (std::size_t i = 0; i < count; ++i)
    out.push_back(he.deserialize(std::span<const uint8_t>(payload).subspan(i * sz, sz), scales[i], period, extent));
  return out;
}

std::vector<uint8_t> pack_bits(const std::vector<uint8_t>& bits) {
  std::vector<uint8_t> out((bits.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < bits.size(); ++i) out[i / 8] |= static_cast<uint8_t>((bits[i] & 1) << (i % 8));
  return out;
}

std::size_t ot_count(const ModelConfig& c, const std::array<BlockPlan, 3>& plan) {
  std::size_t per = 0;
  for (const auto& b : plan) per += b.evaluator_bits;
  return per * c.hidden_dim * c.time_steps;
}

uint64_t instance_id(std::size_t t, std::size_t j, std::size_t e, std::size_t n) { return (t * 3 + j) * n + e; }

// Rethrows the active exception as the same type with "<party>, <phase>: " in front.
template <class E, class... Rest>
[[noreturn]] void rethrow_typed(const std::string& ctx) {
  try {
    throw;
  } catch (const E& e) {
    std::string msg = e.what();
    const auto colon = msg.find(": ");
    if (colon != std::string::npos) msg = msg.substr(colon + 2);
    throw E(ctx + msg);
  } catch (...) {
    if constexpr (sizeof...(Rest) > 0)
      rethrow_typed<Rest...>(ctx);
    else
      throw;
  }
}

[[noreturn]] void rethrow_in_phase(const char* party, Phase p) {
  rethrow_typed<ChannelClosed, FrameError, ProtocolError, NoiseExhausted, DecodeError, DimensionError, ParamError,
                RangeViolation, ScaleMismatch, RangeError, SpecError, ShapeError, SchemaError>(
      std::string(party) + ", " + to_string(p) + " phase: ");
}

}  // namespace

// ---------------------------------------------------------------- server

ServerSession::ServerSession(Channel& ch, const Model& model, ProtocolOptions options, uint64_t seed)
    : ch_(ch), model_(model), opt_(options), seed_(seed) {}

ServerReport ServerSession::run() {
  try {
    return run_impl();
  } catch (...) {
    rethrow_in_phase("server", phase_);
  }
}

ServerReport ServerSession::run_impl() {
  const ModelConfig& c = model_.config;
  c.validate();
  opt_.params.validate();
  check_shapes(c, opt_.params);
  const std::size_t n = c.hidden_dim, m = c.input_dim, T = c.time_steps, k = c.classes;
  const uint64_t p = c.fp.modulus_p;
  const int a = c.fp.activation_scale_log2, w = c.fp.weight_scale_log2, wa = c.fp.product_scale_log2();
  const std::size_t slots = opt_.params.slot_count();
  const std::size_t hp = next_pow2(n), xp = next_pow2(m);

  ServerReport rep;
  rep.min_noise_budget = std::numeric_limits<double>::infinity();
  Prg prg(Block::from_u64(0x5345525645520000ull, seed_));

  // ---- setup: announce the shape, receive the client's public keys.
  phase_ = Phase::SETUP;
  auto t_phase = Clock::now();
  const std::string hj = hello(c, opt_).dump();
  ch_.send(MsgType::CONTROL, Phase::SETUP, std::vector<uint8_t>(hj.begin(), hj.end()));
  const Frame pk = ch_.expect(MsgType::PK);
  std::unique_ptr<Pahe> he;
  if (opt_.backend == Backend::Bfv) {
    auto keys = std::make_shared<const PublicKeys>(deserialize_public_keys(pk.payload, opt_.params));
    he = make_bfv_server(opt_.params, keys);
  } else {
    if (!pk.payload.empty()) throw ProtocolError("debug backend expects an empty key frame");
    he = make_debug_pahe(opt_.params);
  }
  const PlainMatrix Wi = he->encode_matrix(embed_all(model_.weights.W_i, p), 3 * n, m, w);
  const PlainMatrix Wh = he->encode_matrix(embed_all(model_.weights.W_h, p), 3 * n, n, w);
  const PlainMatrix Wo = he->encode_matrix(embed_all(model_.weights.W_o, p), k, n, w);
  const QuantizedVector bi{embed_all(model_.weights.b_i, p), wa, true};
  const QuantizedVector bh{embed_all(model_.weights.b_h, p), wa, true};
  const QuantizedVector bo{embed_all(model_.weights.b_o, p), wa, true};
  rep.phase_seconds[0] = seconds_since(t_phase);

  // ---- offline: masks, garbled blocks for every step, random OTs.
  phase_ = Phase::OFFLINE;
  t_phase = Clock::now();
  const auto plan = plan_blocks(c);
  MaskSource masks(p, prg.next_block());
  TicketBook tickets;
  // r (sum) and r' (operand) per (step, block), over all slots.
  std::vector<std::array<std::vector<uint64_t>, 3>> r_sum(T), r_op(T);
  std::vector<std::array<Block, 2>> ot_pairs;
  ot_pairs.reserve(ot_count(c, plan));
  for (std::size_t t = 0; t < T; ++t) {
    std::vector<uint8_t> payload;
    for (std::size_t j = 0; j < 3; ++j) {
      const auto& b = plan[j];
      r_sum[t][j] = masks.draw(slots);
      if (b.spec.fused_product) r_op[t][j] = masks.draw(slots);
      const auto& s = tickets.issue(t * 3 + j, masks.draw(n)).mask;
      ScopeTimer timer(rep.garble_seconds);
      for (std::size_t e = 0; e < n; ++e) {
        const BlockMasks bm{r_sum[t][j][e], b.spec.fused_product ? r_op[t][j][e] : 0, s[e]};
        const auto g = garble(b.circuit, prg.next_block(), instance_id(t, j, e, n));
        g.gc.serialize_into(payload);
        for (const Block& l : encode_inputs(b.circuit, g.secrets, block_garbler_inputs(b.spec, c.fp, bm), Party::Garbler)) {
          const std::size_t at = payload.size();
          payload.resize(at + kLabelBytes);
          l.store(payload.data() + at);
        }
        const auto pairs = input_label_pairs(b.circuit, g.secrets, Party::Evaluator);
        ot_pairs.insert(ot_pairs.end(), pairs.begin(), pairs.end());
        ++rep.gc.instances;
        rep.gc.non_xor += g.gc.non_xor_count;
        rep.gc.table_bytes += g.gc.table_bytes();
      }
    }
    rep.gc.material_bytes += payload.size();
    ch_.send(MsgType::GC_TABLES, Phase::OFFLINE, std::move(payload));
  }

  const std::size_t n_ot = ot_pairs.size();
  rep.gc.ot_transfers = n_ot;
  RandomOtSender ot_sender;
  if (opt_.ot == OtMode::Dealer) {
    // The server stands in for the dealer and ships the receiver's half.
    RandomOtReceiver dealt;
    dealer_random_ot(n_ot, prg.next_block(), ot_sender, dealt);
    std::vector<uint8_t> msg = pack_bits(dealt.choices);
    const std::size_t at = msg.size();
    msg.resize(at + kLabelBytes * n_ot);
    for (std::size_t i = 0; i < n_ot; ++i) dealt.pads[i].store(msg.data() + at + kLabelBytes * i);
    rep.gc.ot_offline_bytes += msg.size();
    ch_.send(MsgType::OT_MSG, Phase::OFFLINE, std::move(msg));
  } else {
    const CoOtSender co(prg.next_block());
    auto A = co.first_message();
    rep.gc.ot_offline_bytes += A.size();
    ch_.send(MsgType::OT_MSG, Phase::OFFLINE, std::move(A));
    const Frame B = ch_.expect(MsgType::OT_MSG);
    rep.gc.ot_offline_bytes += B.payload.size();
    ot_sender = co.finish(B.payload);
    if (ot_sender.pads.size() != n_ot) throw ProtocolError("base OT count differs from the garbled input count");
  }
  rep.phase_seconds[1] = seconds_since(t_phase);

  // ---- online.
  phase_ = Phase::ONLINE;
  const int in_scales[1] = {a};
  Ciphertext h = split_cts(*he, ch_.expect(MsgType::REMASKED_CT).payload, 1, in_scales, hp, opt_.params.row_size())[0];
  t_phase = Clock::now();
  std::vector<Ciphertext> xs;
  for (std::size_t t = 0; t < T; ++t)
    xs.push_back(split_cts(*he, ch_.expect(MsgType::REMASKED_CT).payload, 1, in_scales, xp, opt_.params.row_size())[0]);

  std::size_t ot_offset = 0;
  auto watch = [&](const Ciphertext& ct) {
    rep.min_noise_budget = std::min(rep.min_noise_budget, he->noise_budget(ct));
  };
  // One activation block on n elements: mask, OT, client evaluation, unmask.
  auto run_block = [&](std::size_t t, std::size_t j, const Ciphertext& sum, const Ciphertext* operand) {
    ScopeTimer timer(rep.online_gc_seconds);
    const auto& b = plan[j];
    std::vector<uint8_t> payload;
    watch(sum);
    append_ct(payload, *he, mask_ciphertext(*he, sum, r_sum[t][j], n).ct);
    if (b.spec.fused_product) {
      watch(*operand);
      append_ct(payload, *he, mask_ciphertext(*he, *operand, r_op[t][j], n).ct);
    }
    ch_.send(MsgType::MASKED_CT, Phase::ONLINE, std::move(payload));

    const std::size_t count = n * b.evaluator_bits;
    const Frame flips = ch_.expect(MsgType::OT_MSG);
    auto answer = ot_sender_message(ot_sender, ot_offset,
                                    std::span<const std::array<Block, 2>>(ot_pairs).subspan(ot_offset, count),
                                    flips.payload);
    ot_offset += count;
    rep.gc.ot_online_bytes += flips.payload.size() + answer.size();
    ch_.send(MsgType::OT_MSG, Phase::ONLINE, std::move(answer));

    const Frame back = ch_.expect(MsgType::REMASKED_CT);
    const int sc[1] = {b.out_scale};
    const std::size_t extent = b.out_period ? opt_.params.row_size() : n;
    const Ciphertext y = split_cts(*he, back.payload, 1, sc, b.out_period, extent)[0];
    return gc_to_he(*he, y, tickets, t * 3 + j, b.out_period);
  };

  for (std::size_t t = 0; t < T; ++t) {
    const PaheCounters before = he->counters();
    std::array<Ciphertext, 3> gi, gh;
    {
      ScopeTimer timer(rep.online_linear_seconds);
      gi = he->mult_pc_thirds(Wi, xs[t], bi);
      gh = he->mult_pc_thirds(Wh, h, bh);
    }
    Ciphertext s_r, s_i;
    {
      ScopeTimer timer(rep.online_linear_seconds);
      s_r = he->add_cc(gi[0], gh[0]);
      s_i = he->add_cc(gi[1], gh[1]);
    }
    const Ciphertext rh = run_block(t, 0, s_r, &gh[2]);
    Ciphertext s_n;
    {
      ScopeTimer timer(rep.online_linear_seconds);
      s_n = he->add_cc(gi[2], rh);
    }
    const Ciphertext gn = run_block(t, 1, s_n, nullptr);
    Ciphertext d;
    {
      ScopeTimer timer(rep.online_linear_seconds);
      d = he->add_cc(h, he->negate(gn));
    }
    const Ciphertext upd = run_block(t, 2, s_i, &d);
    {
      ScopeTimer timer(rep.online_linear_seconds);
      h = he->add_cc(gn, upd);
    }
    const PaheCounters after = he->counters();
    OpCensus cs;
    cs.mult_pc = after.mult_pc - before.mult_pc;
    cs.add_cc = after.add_cc - before.add_cc;
    for (const auto& b : plan) cs.fused_products += b.spec.fused_product ? 1 : 0;
    cs.gc_blocks = plan.size();
    rep.negations_per_step = after.negate - before.negate;

    if (opt_.refresh) {
      ScopeTimer timer(rep.online_refresh_seconds);
      watch(h);
      const auto mk = mask_ciphertext(*he, h, masks, n);
      ch_.send(MsgType::MASKED_CT, Phase::ONLINE, he->serialize(mk.ct));
      const int sc[1] = {a};
      const Ciphertext fresh =
          split_cts(*he, ch_.expect(MsgType::REMASKED_CT).payload, 1, sc, hp, opt_.params.row_size())[0];
      h = unmask_ciphertext(*he, fresh, std::span<const uint64_t>(mk.mask).first(n), hp);
      cs.refreshes = 1;
    }
    rep.census.push_back(cs);
    if (opt_.keep_hidden_trace) rep.hidden_trace.push_back(h);
  }

  {
    ScopeTimer timer(rep.online_output_seconds);
    const Ciphertext scores = he->mult_pc(Wo, h, bo);
    watch(scores);
    if (he->noise_budget(scores) <= 0) throw NoiseExhausted("score ciphertext has no noise budget left");
    // The client learns the scores anyway; they travel without a mask.
    ch_.send(MsgType::MASKED_CT, Phase::ONLINE, he->serialize(scores));
  }
  rep.phase_seconds[2] = seconds_since(t_phase);

  const Frame v = ch_.expect(MsgType::CONTROL);
  if (v.payload.size() != 1 || v.payload[0] > kVerdictUnchecked) throw ProtocolError("malformed verdict frame");
  if (v.payload[0] != kVerdictUnchecked) rep.client_verdict = v.payload[0] == kVerdictMatch;
  rep.sent = ch_.sent();
  rep.received = ch_.received();
  return rep;
}

// ---------------------------------------------------------------- client

ClientSession::ClientSession(Channel& ch, std::vector<std::vector<uint64_t>> x, uint64_t seed)
    : ch_(ch), x_(std::move(x)), seed_(seed) {}

ClientReport ClientSession::run() {
  try {
    return run_impl();
  } catch (...) {
    rethrow_in_phase("client", phase_);
  }
}

ClientReport ClientSession::run_impl() {
  ClientReport rep;
  ProtocolOptions opt;
  Prg prg(Block::from_u64(0x434c49454e540000ull, seed_));

  phase_ = Phase::SETUP;
  auto t_phase = Clock::now();
  parse_hello(ch_.expect(MsgType::CONTROL).payload, rep.config, opt);
  const ModelConfig& c = rep.config;
  check_shapes(c, opt.params);
  const std::size_t n = c.hidden_dim, m = c.input_dim, T = c.time_steps, k = c.classes;
  if (x_.size() != T) throw ProtocolError("server expects " + std::to_string(T) + " time steps");
  for (const auto& xt : x_)
    if (xt.size() != m) throw ProtocolError("server expects input vectors of width " + std::to_string(m));
  const int a = c.fp.activation_scale_log2;
  const std::size_t hp = next_pow2(n), xp = next_pow2(m);

  if (opt.backend == Backend::Bfv) {
    keys_ = std::make_shared<const KeyPair>(keygen(opt.params, prg.next_block()));
    pahe_ = make_bfv_client(opt.params, keys_);
    ch_.send(MsgType::PK, Phase::SETUP, serialize_public_keys(keys_->pub, opt.params));
  } else {
    pahe_ = make_debug_pahe(opt.params);
    ch_.send(MsgType::PK, Phase::SETUP, {});
  }
  const Pahe& he = *pahe_;
  rep.phase_seconds[0] = seconds_since(t_phase);

  phase_ = Phase::OFFLINE;
  t_phase = Clock::now();
  const auto plan = plan_blocks(c);
  struct Instance {
    GarbledCircuit gc;
    std::vector<Block> garbler;
  };
  std::vector<Instance> inst(T * 3 * n);
  for (std::size_t t = 0; t < T; ++t) {
    const Frame f = ch_.expect(MsgType::GC_TABLES);
    rep.gc.material_bytes += f.payload.size();
    const std::span<const uint8_t> bytes(f.payload);
    std::size_t off = 0;
    for (std::size_t j = 0; j < 3; ++j) {
      const auto& b = plan[j];
      const std::size_t want_tags = 2 * b.circuit.output_bits();
      for (std::size_t e = 0; e < n; ++e) {
        auto& in = inst[instance_id(t, j, e, n)];
        in.gc = GarbledCircuit::deserialize(bytes, off);
        if (in.gc.circuit_id != instance_id(t, j, e, n) || in.gc.decode_tags.size() != want_tags)
          throw ProtocolError("garbled instance out of order or of the wrong circuit");
        ++rep.gc.instances;
        rep.gc.non_xor += in.gc.non_xor_count;
        rep.gc.table_bytes += in.gc.table_bytes();
        if (off + kLabelBytes * b.garbler_bits > bytes.size()) throw ProtocolError("garbled material truncated");
        in.garbler.resize(b.garbler_bits);
        for (auto& l : in.garbler) {
          l = Block::load(bytes.data() + off);
          off += kLabelBytes;
        }
      }
    }
    if (off != bytes.size()) throw ProtocolError("trailing bytes after garbled material");
  }

  const std::size_t n_ot = ot_count(c, plan);
  rep.gc.ot_transfers = n_ot;
  RandomOtReceiver ot_recv;
  if (opt.ot == OtMode::Dealer) {
    const Frame f = ch_.expect(MsgType::OT_MSG);
    rep.gc.ot_offline_bytes += f.payload.size();
    const std::size_t packed = (n_ot + 7) / 8;
    if (f.payload.size() != packed + kLabelBytes * n_ot) throw ProtocolError("dealer OT message has the wrong size");
    ot_recv.choices.resize(n_ot);
    ot_recv.pads.resize(n_ot);
    for (std::size_t i = 0; i < n_ot; ++i) {
      ot_recv.choices[i] = (f.payload[i / 8] >> (i % 8)) & 1;
      ot_recv.pads[i] = Block::load(f.payload.data() + packed + kLabelBytes * i);
    }
  } else {
    CoOtReceiver co(prg.next_block(), n_ot);
    const Frame A = ch_.expect(MsgType::OT_MSG);
    auto B = co.respond(A.payload);
    rep.gc.ot_offline_bytes += A.payload.size() + B.size();
    ch_.send(MsgType::OT_MSG, Phase::OFFLINE, std::move(B));
    ot_recv = co.result();
  }
  rep.phase_seconds[1] = seconds_since(t_phase);

  phase_ = Phase::ONLINE;
  t_phase = Clock::now();
  {
    ScopeTimer timer(rep.online_encrypt_seconds);
    const std::vector<uint64_t> zero(n, 0);
    ch_.send(MsgType::REMASKED_CT, Phase::ONLINE, he.serialize(he.encrypt_replicated(zero, hp, a, prg)));
    for (const auto& xt : x_)
      ch_.send(MsgType::REMASKED_CT, Phase::ONLINE, he.serialize(he.encrypt_replicated(xt, xp, a, prg)));
  }

  std::size_t ot_offset = 0;
  std::vector<uint8_t> bits;
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t j = 0; j < 3; ++j) {
      const auto& b = plan[j];
      const bool fused = b.spec.fused_product;
      const Frame f = ch_.expect(MsgType::MASKED_CT);
      std::vector<uint64_t> ms, mo;
      {
        ScopeTimer timer(rep.online_decrypt_seconds);
        const int sc[2] = {b.sum_scale, b.operand_scale};
        const auto cts = split_cts(he, f.payload, fused ? 2 : 1, sc, 0, opt.params.slot_count());
        ms = open_masked(he, cts[0], n);
        if (fused) mo = open_masked(he, cts[1], n);
      }
      std::vector<Block> labels;
      {
        ScopeTimer timer(rep.online_ot_seconds);
        bits.clear();
        for (std::size_t e = 0; e < n; ++e) {
          const auto bi = input_bits(b.circuit, block_evaluator_inputs(b.spec, ms[e], fused ? mo[e] : 0), Party::Evaluator);
          bits.insert(bits.end(), bi.begin(), bi.end());
        }
        auto flips = ot_flip_message(ot_recv, ot_offset, bits);
        rep.gc.ot_online_bytes += flips.size();
        ch_.send(MsgType::OT_MSG, Phase::ONLINE, std::move(flips));
        const Frame answer = ch_.expect(MsgType::OT_MSG);
        rep.gc.ot_online_bytes += answer.payload.size();
        labels = ot_receive(ot_recv, ot_offset, bits, answer.payload);
        ot_offset += bits.size();
      }
      std::vector<uint64_t> y(n);
      {
        ScopeTimer timer(rep.online_evaluate_seconds);
        std::vector<Block> el(b.evaluator_bits);
        for (std::size_t e = 0; e < n; ++e) {
          const auto& in = inst[instance_id(t, j, e, n)];
          std::copy_n(labels.begin() + static_cast<std::ptrdiff_t>(e * b.evaluator_bits), b.evaluator_bits, el.begin());
          y[e] = decode_outputs(b.circuit, in.gc, evaluate(b.circuit, in.gc, in.garbler, el)).at("masked_out");
        }
      }
      {
        ScopeTimer timer(rep.online_encrypt_seconds);
        ch_.send(MsgType::REMASKED_CT, Phase::ONLINE,
                 he.serialize(encrypt_masked_outputs(he, y, b.out_scale, prg, b.out_period)));
      }
    }
    if (opt.refresh) {
      const int sc[1] = {a};
      std::vector<uint64_t> v;
      {
        ScopeTimer timer(rep.online_decrypt_seconds);
        v = open_masked(he, split_cts(he, ch_.expect(MsgType::MASKED_CT).payload, 1, sc, 0, opt.params.slot_count())[0], n);
      }
      ScopeTimer timer(rep.online_encrypt_seconds);
      ch_.send(MsgType::REMASKED_CT, Phase::ONLINE, he.serialize(encrypt_masked_outputs(he, v, a, prg, hp)));
    }
  }
  {
    ScopeTimer timer(rep.online_decrypt_seconds);
    const int sc[1] = {c.fp.product_scale_log2()};
    rep.scores = open_masked(he, split_cts(he, ch_.expect(MsgType::MASKED_CT).payload, 1, sc, 0, k)[0], k);
  }
  rep.phase_seconds[2] = seconds_since(t_phase);
  rep.sent = ch_.sent();
  rep.received = ch_.received();
  return rep;
}

void ClientSession::send_verdict(std::optional<bool> match) {
  const uint8_t v = !match ? kVerdictUnchecked : (*match ? kVerdictMatch : kVerdictMismatch);
  ch_.send(MsgType::CONTROL, Phase::ONLINE, {v});
}

// ---------------------------------------------------------------- local runs

namespace {

bool is_channel_closed(const std::exception_ptr& e) {
  try {
    std::rethrow_exception(e);
  } catch (const ChannelClosed&) {
    return true;
  } catch (...) {
    return false;
  }
}

LocalRun run_pair(std::unique_ptr<Channel> server_end, std::function<std::unique_ptr<Channel>()> client_end,
                  const Model& model, const std::vector<std::vector<uint64_t>>& x, const ProtocolOptions& options,
                  uint64_t seed, const VerdictFn& verdict) {
  LocalRun out;
  std::exception_ptr server_err, client_err;
  std::unique_ptr<Channel> sch = std::move(server_end);
  std::thread th([&] {
    try {
      ServerSession s(*sch, model, options, seed);
      out.server = s.run();
    } catch (...) {
      server_err = std::current_exception();
      sch->close();
    }
  });
  std::unique_ptr<Channel> cch;
  std::unique_ptr<ClientSession> client;
  try {
    cch = client_end();
    client = std::make_unique<ClientSession>(*cch, x, seed ^ 0x9e3779b97f4a7c15ull);
    out.client = client->run();
    client->send_verdict(verdict ? verdict(out.client) : std::nullopt);
  } catch (...) {
    client_err = std::current_exception();
    if (cch) cch->close();
  }
  th.join();
  if (server_err && (!client_err || is_channel_closed(client_err) || !is_channel_closed(server_err)))
    std::rethrow_exception(server_err);
  if (client_err) std::rethrow_exception(client_err);
  // Counters are read before the verdict frame on the client side; refresh them.
  out.client.sent = cch->sent();
  out.client.received = cch->received();
  for (const auto& ct : out.server.hidden_trace) {
    auto v = client->pahe().decrypt(ct).values;
    v.resize(model.config.hidden_dim);
    out.hidden.push_back(std::move(v));
  }
  return out;
}

}  // namespace

LocalRun run_local(const Model& model, const std::vector<std::vector<uint64_t>>& x, const ProtocolOptions& options,
                   uint64_t seed, const VerdictFn& verdict) {
  auto [s, c] = make_inprocess_channel_pair();
  auto shared = std::make_shared<std::unique_ptr<Channel>>(std::move(c));
  return run_pair(std::move(s), [shared] { return std::move(*shared); }, model, x, options, seed, verdict);
}

LocalRun run_local_tcp(const Model& model, const std::vector<std::vector<uint64_t>>& x, const ProtocolOptions& options,
                       uint64_t seed, const VerdictFn& verdict) {
  TcpListener listener(0);
  const uint16_t port = listener.port();
  std::unique_ptr<Channel> client_end;
  std::thread connector([&] { client_end = connect_tcp("127.0.0.1", port); });
  auto server_end = listener.accept();
  connector.join();
  auto shared = std::make_shared<std::unique_ptr<Channel>>(std::move(client_end));
  return run_pair(std::move(server_end), [shared] { return std::move(*shared); }, model, x, options, seed, verdict);
}

}  // namespace gru2pc
