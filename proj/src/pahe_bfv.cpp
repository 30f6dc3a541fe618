#include <cmath>
#include <limits>
#include <mutex>

#include "gru2pc/errors.hpp"
#include "gru2pc/pahe.hpp"

namespace gru2pc {

namespace {

struct BfvContext {
  PaheParams params;
  Ntt ntt_q, ntt_p;
  std::vector<uint32_t> slot_pos;
  std::map<uint64_t, std::vector<uint32_t>> perms;  // galois -> NTT-domain gather indices

  explicit BfvContext(const PaheParams& p)
      : params(p), ntt_q(p.ring_dimension, p.ciphertext_modulus), ntt_p(p.ring_dimension, p.plaintext_modulus) {
    const std::size_t n = p.ring_dimension, row = n / 2;
    const uint64_t m = 2 * n;
    slot_pos.resize(n);
    uint64_t e = 1;
    for (std::size_t j = 0; j < row; ++j) {
      slot_pos[j] = static_cast<uint32_t>(ntt_p.position_of_exponent(e));
      slot_pos[row + j] = static_cast<uint32_t>(ntt_p.position_of_exponent(m - e));
      e = e * 3 % m;
    }
    for (std::size_t b = 1; b < row; b <<= 1) {
      for (long s : {static_cast<long>(b), -static_cast<long>(b)}) {
        const uint64_t g = galois(s);
        if (perms.count(g)) continue;
        std::vector<uint32_t> perm(n);
        for (uint64_t ex = 1; ex < m; ex += 2)
          perm[ntt_q.position_of_exponent(ex)] = static_cast<uint32_t>(ntt_q.position_of_exponent(ex * g % m));
        perms.emplace(g, std::move(perm));
      }
    }
  }

  uint64_t galois(long steps) const {
    const long row = static_cast<long>(params.row_size());
    long s = steps % row;
    if (s < 0) s += row;
    return pow_mod(3, static_cast<uint64_t>(s), 2 * params.ring_dimension);
  }

  uint64_t q() const { return params.ciphertext_modulus; }
  uint64_t p() const { return params.plaintext_modulus; }
  std::size_t n() const { return params.ring_dimension; }

  std::vector<uint64_t> slots_to_poly(std::span<const uint64_t> slots) const {
    std::vector<uint64_t> e(n(), 0);
    for (std::size_t k = 0; k < n(); ++k) e[slot_pos[k]] = slots[k];
    ntt_p.inverse(e.data());
    return e;
  }
  std::vector<uint64_t> poly_to_slots(std::vector<uint64_t> coeffs) const {
    ntt_p.forward(coeffs.data());
    std::vector<uint64_t> out(n());
    for (std::size_t k = 0; k < n(); ++k) out[k] = coeffs[slot_pos[k]];
    return out;
  }
  /// Plaintext poly mod p lifted to centered representatives mod q.
  std::vector<uint64_t> lift_to_q(const std::vector<uint64_t>& a) const {
    std::vector<uint64_t> out(a.size());
    const uint64_t half = p() / 2;
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] > half ? q() - (p() - a[i]) : a[i];
    return out;
  }
  std::vector<uint64_t> permute(const std::vector<uint64_t>& a, uint64_t g) const {
    const auto& perm = perms.at(g);
    std::vector<uint64_t> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[perm[i]];
    return out;
  }
};

const BfvContext& context_for(const PaheParams& params) {
  static std::mutex mu;
  static std::map<uint32_t, std::unique_ptr<BfvContext>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto& slot = cache[params.id()];
  if (!slot) {
    params.validate();
    slot = std::make_unique<BfvContext>(params);
  }
  return *slot;
}

std::vector<uint64_t> sample_uniform(Prg& rng, std::size_t n, uint64_t q) {
  std::vector<uint64_t> a(n);
  for (auto& v : a) v = rng.uniform(q);
  return a;
}
std::vector<uint64_t> sample_gaussian(Prg& rng, std::size_t n, uint64_t q, double sigma) {
  std::vector<uint64_t> a(n);
  for (auto& v : a) {
    double x = std::nearbyint(rng.gaussian(sigma));
    x = std::clamp(x, -6.0 * sigma - 1, 6.0 * sigma + 1);
    const auto xi = static_cast<int64_t>(x);
    v = xi < 0 ? q - static_cast<uint64_t>(-xi) : static_cast<uint64_t>(xi);
  }
  return a;
}
std::vector<uint64_t> sample_ternary(Prg& rng, std::size_t n, uint64_t q, std::vector<int8_t>* raw = nullptr) {
  std::vector<uint64_t> a(n);
  if (raw) raw->resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto t = static_cast<int>(rng.uniform(3)) - 1;
    if (raw) (*raw)[i] = static_cast<int8_t>(t);
    a[i] = t < 0 ? q - 1 : static_cast<uint64_t>(t);
  }
  return a;
}

void add_into(std::vector<uint64_t>& a, const std::vector<uint64_t>& b, uint64_t q) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = add_mod(a[i], b[i], q);
}
std::vector<uint64_t> pointwise(const std::vector<uint64_t>& a, const std::vector<uint64_t>& b, uint64_t q) {
  std::vector<uint64_t> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = mul_mod(a[i], b[i], q);
  return out;
}
std::vector<uint64_t> pointwise(const std::vector<uint64_t>& a, const ShoupPoly& b, uint64_t q) {
  std::vector<uint64_t> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = mul_shoup(a[i], b.value[i], b.shoup[i], q);
  return out;
}
void fma_shoup(std::vector<uint64_t>& acc, const std::vector<uint64_t>& a, const ShoupPoly& b, uint64_t q) {
  for (std::size_t i = 0; i < a.size(); ++i) acc[i] = add_mod(acc[i], mul_shoup(a[i], b.value[i], b.shoup[i], q), q);
}

/// c0 + c1 * s in coefficient form.
std::vector<uint64_t> phase(const BfvContext& ctx, const SecretKey& sk, const Ciphertext& ct) {
  std::vector<uint64_t> c1 = ct.c1;
  ctx.ntt_q.forward(c1.data());
  std::vector<uint64_t> x = pointwise(c1, sk.ntt, ctx.q());
  ctx.ntt_q.inverse(x.data());
  add_into(x, ct.c0, ctx.q());
  return x;
}

uint64_t round_to_plain(uint64_t x, uint64_t p, uint64_t q) {
  const unsigned __int128 num = static_cast<unsigned __int128>(x) * p + q / 2;
  return static_cast<uint64_t>(num / q) % p;
}

class BfvPahe final : public Pahe {
 public:
  BfvPahe(const PaheParams& params, std::shared_ptr<const PublicKeys> pub, std::shared_ptr<const KeyPair> keys)
      : Pahe(params), ctx_(context_for(params)), pub_(std::move(pub)), keys_(std::move(keys)) {}

  bool is_debug() const override { return false; }
  bool has_secret_key() const override { return keys_ != nullptr; }

  Ciphertext encrypt(const QuantizedVector& m, Prg& rng) const override {
    if (!keys_) return encrypt_public(m, rng);
    const uint64_t q = ctx_.q();
    const std::size_t n = ctx_.n();
    std::vector<uint64_t> a = sample_uniform(rng, n, q);  // read as NTT form
    std::vector<uint64_t> as = pointwise(a, keys_->secret.ntt, q);
    for (auto& v : as) v = neg_mod(v, q);
    ctx_.ntt_q.inverse(as.data());
    ctx_.ntt_q.inverse(a.data());
    Ciphertext ct;
    ct.c0 = std::move(as);
    add_into(ct.c0, sample_gaussian(rng, n, q, params_.error_stddev), q);
    add_message(ct.c0, m);
    ct.c1 = std::move(a);
    finish_fresh(ct, m, params_.error_stddev * params_.error_stddev);
    return ct;
  }

  Ciphertext encrypt_public(const QuantizedVector& m, Prg& rng) const override {
    if (!pub_) throw ParamError("no public key loaded");
    const uint64_t q = ctx_.q();
    const std::size_t n = ctx_.n();
    std::vector<uint64_t> u = sample_ternary(rng, n, q);
    ctx_.ntt_q.forward(u.data());
    Ciphertext ct;
    ct.c0 = pointwise(pub_->pk0, u, q);
    ct.c1 = pointwise(pub_->pk1, u, q);
    ctx_.ntt_q.inverse(ct.c0.data());
    ctx_.ntt_q.inverse(ct.c1.data());
    add_into(ct.c0, sample_gaussian(rng, n, q, params_.error_stddev), q);
    add_into(ct.c1, sample_gaussian(rng, n, q, params_.error_stddev), q);
    add_message(ct.c0, m);
    const double s2 = params_.error_stddev * params_.error_stddev;
    finish_fresh(ct, m, s2 * (1.0 + 4.0 * static_cast<double>(n) / 3.0));
    return ct;
  }

  QuantizedVector decrypt(const Ciphertext& ct) const override {
    if (!keys_) throw ParamError("decryption needs the secret key");
    if (ct.params_id != params_.id()) throw ParamError("ciphertext belongs to a different parameter set");
    if (noise_budget(ct) <= 0.0) throw NoiseExhausted("tracked noise budget exhausted before decryption");
    ++counters_.decryptions;
    const std::vector<uint64_t> x = phase(ctx_, keys_->secret, ct);
    const uint64_t p = ctx_.p(), q = ctx_.q(), delta = params_.delta();
    std::vector<uint64_t> m(x.size());
    uint64_t worst = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      m[i] = round_to_plain(x[i], p, q);
      const uint64_t v = sub_mod(x[i], mul_mod(delta, m[i], q), q);
      worst = std::max(worst, std::min(v, q - v));
    }
    if (worst >= delta / 4) throw NoiseExhausted("measured noise exceeds the decryption margin");
    return QuantizedVector{ctx_.poly_to_slots(std::move(m)), ct.scale_log2, true};
  }

 protected:
  void add_message(std::vector<uint64_t>& c0, const QuantizedVector& m) const {
    const std::size_t n = ctx_.n();
    if (m.values.size() > n) throw DimensionError("plaintext longer than slot count");
    std::vector<uint64_t> slots(n, 0);
    for (std::size_t i = 0; i < m.values.size(); ++i) {
      if (m.values[i] >= ctx_.p()) throw RangeError("plaintext value not reduced mod p");
      slots[i] = m.values[i];
    }
    add_slots(c0, slots);
  }
  void add_slots(std::vector<uint64_t>& c0, std::span<const uint64_t> slots) const {
    const std::vector<uint64_t> poly = ctx_.slots_to_poly(slots);
    const uint64_t delta = params_.delta(), q = ctx_.q();
    const uint64_t delta_shoup = shoup_precompute(delta, q);
    for (std::size_t i = 0; i < c0.size(); ++i) c0[i] = add_mod(c0[i], mul_shoup(poly[i], delta, delta_shoup, q), q);
  }
  void finish_fresh(Ciphertext& ct, const QuantizedVector& m, double var) const {
    ct.params_id = params_.id();
    ct.scale_log2 = m.scale_log2;
    ct.period = 0;
    ct.extent = m.values.size();
    ct.noise_log2_std = 0.5 * std::log2(var);
    ++counters_.encryptions;
  }

  void add_raw(Ciphertext& a, const Ciphertext& b) const override {
    add_into(a.c0, b.c0, ctx_.q());
    add_into(a.c1, b.c1, ctx_.q());
  }
  void add_plain_raw(Ciphertext& a, std::span<const uint64_t> slots) const override { add_slots(a.c0, slots); }
  void negate_raw(Ciphertext& a) const override {
    for (auto& v : a.c0) v = neg_mod(v, ctx_.q());
    for (auto& v : a.c1) v = neg_mod(v, ctx_.q());
  }
  void mul_plain_raw(Ciphertext& a, std::span<const uint64_t> slots) const override {
    std::vector<uint64_t> pt = ctx_.lift_to_q(ctx_.slots_to_poly(slots));
    ctx_.ntt_q.forward(pt.data());
    for (auto* c : {&a.c0, &a.c1}) {
      ctx_.ntt_q.forward(c->data());
      *c = pointwise(*c, pt, ctx_.q());
      ctx_.ntt_q.inverse(c->data());
    }
  }

  const RotationKey& key_for(long steps) const {
    if (!pub_) throw ParamError("no rotation keys loaded");
    const uint64_t g = ctx_.galois(steps);
    auto it = pub_->rotation_keys.find(g);
    if (it == pub_->rotation_keys.end()) throw ParamError("missing rotation key");
    return it->second;
  }

  /// Key-switched automorphism of an NTT-form ciphertext, in place.
  void rotate_ntt(std::vector<uint64_t>& c0, std::vector<uint64_t>& c1, long steps) const {
    const RotationKey& key = key_for(steps);
    const uint64_t q = ctx_.q();
    std::vector<uint64_t> t0 = ctx_.permute(c0, key.galois);
    std::vector<uint64_t> t1 = ctx_.permute(c1, key.galois);
    ctx_.ntt_q.inverse(t1.data());
    std::vector<uint64_t> acc1(ctx_.n(), 0);
    const int w = params_.decomposition_bits;
    const uint64_t mask = (uint64_t{1} << w) - 1;
    std::vector<uint64_t> d(ctx_.n());
    for (std::size_t l = 0; l < key.k0.size(); ++l) {
      for (std::size_t i = 0; i < d.size(); ++i) d[i] = (t1[i] >> (w * l)) & mask;
      ctx_.ntt_q.forward(d.data());
      fma_shoup(t0, d, key.k0[l], q);
      fma_shoup(acc1, d, key.k1[l], q);
    }
    c0.swap(t0);
    c1.swap(acc1);
  }

  void rotate_raw(Ciphertext& a, long steps) const override {
    ctx_.ntt_q.forward(a.c0.data());
    ctx_.ntt_q.forward(a.c1.data());
    rotate_ntt(a.c0, a.c1, steps);
    ctx_.ntt_q.inverse(a.c0.data());
    ctx_.ntt_q.inverse(a.c1.data());
  }

  void encode_diagonals(DiagonalSet& set, const std::vector<std::vector<uint64_t>>& diags) const override {
    set.ntt.assign(diags.size(), ShoupPoly{});
    for (std::size_t l = 0; l < diags.size(); ++l) {
      if (!set.nonzero[l]) continue;
      std::vector<uint64_t> pt = ctx_.lift_to_q(ctx_.slots_to_poly(diags[l]));
      ctx_.ntt_q.forward(pt.data());
      set.ntt[l] = ShoupPoly(std::move(pt), ctx_.q());
    }
  }

  void matvec_raw(const DiagonalSet& w, Ciphertext& x) const override {
    const uint64_t q = ctx_.q();
    std::vector<uint64_t> x0 = x.c0, x1 = x.c1;
    ctx_.ntt_q.forward(x0.data());
    ctx_.ntt_q.forward(x1.data());
    std::vector<uint64_t> acc0(ctx_.n(), 0), acc1(ctx_.n(), 0);
    bool started = false;
    for (std::size_t l = w.nonzero.size(); l-- > 0;) {
      if (started) {
        rotate_ntt(acc0, acc1, 1);
        ++counters_.rotations;
      }
      if (!w.nonzero[l]) continue;
      fma_shoup(acc0, x0, w.ntt[l], q);
      fma_shoup(acc1, x1, w.ntt[l], q);
      started = true;
    }
    ctx_.ntt_q.inverse(acc0.data());
    ctx_.ntt_q.inverse(acc1.data());
    x.c0.swap(acc0);
    x.c1.swap(acc1);
  }

 private:
  const BfvContext& ctx_;
  std::shared_ptr<const PublicKeys> pub_;
  std::shared_ptr<const KeyPair> keys_;
};

}  // namespace

KeyPair keygen(const PaheParams& params, Block seed) {
  const BfvContext& ctx = context_for(params);
  const uint64_t q = ctx.q();
  const std::size_t n = ctx.n();
  Prg rng(seed);
  KeyPair kp;
  std::vector<uint64_t> s = sample_ternary(rng, n, q, &kp.secret.coeffs);
  ctx.ntt_q.forward(s.data());
  kp.secret.ntt = ShoupPoly(s, q);

  auto rlwe = [&](const std::vector<uint64_t>& extra) {
    std::vector<uint64_t> a = sample_uniform(rng, n, q);
    std::vector<uint64_t> e = sample_gaussian(rng, n, q, params.error_stddev);
    ctx.ntt_q.forward(e.data());
    std::vector<uint64_t> b = pointwise(a, kp.secret.ntt, q);
    for (std::size_t i = 0; i < n; ++i) b[i] = add_mod(sub_mod(e[i], b[i], q), extra[i], q);
    return std::make_pair(std::move(b), std::move(a));
  };

  auto [pk0, pk1] = rlwe(std::vector<uint64_t>(n, 0));
  kp.pub.pk0 = std::move(pk0);
  kp.pub.pk1 = std::move(pk1);

  const int w = params.decomposition_bits;
  for (const auto& [g, perm] : ctx.perms) {
    RotationKey key;
    key.galois = g;
    const std::vector<uint64_t> sg = ctx.permute(s, g);
    for (int l = 0; l < params.decomposition_count(); ++l) {
      const uint64_t f = (uint64_t{1} << (w * l)) % q;
      std::vector<uint64_t> extra(n);
      for (std::size_t i = 0; i < n; ++i) extra[i] = mul_mod(sg[i], f, q);
      auto [k0, k1] = rlwe(extra);
      key.k0.emplace_back(std::move(k0), q);
      key.k1.emplace_back(std::move(k1), q);
    }
    kp.pub.rotation_keys.emplace(g, std::move(key));
  }
  return kp;
}

namespace {
void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}
void put_poly(std::vector<uint8_t>& out, const std::vector<uint64_t>& a) {
  const std::size_t at = out.size();
  out.resize(at + 8 * a.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (int b = 0; b < 8; ++b) out[at + 8 * i + b] = static_cast<uint8_t>(a[i] >> (8 * b));
}

struct Reader {
  std::span<const uint8_t> data;
  std::size_t pos = 0;
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(data[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  std::vector<uint64_t> poly(std::size_t n, uint64_t q) {
    need(8 * n);
    std::vector<uint64_t> a(n);
    for (std::size_t i = 0; i < n; ++i) {
      uint64_t v = 0;
      for (int b = 0; b < 8; ++b) v |= static_cast<uint64_t>(data[pos + 8 * i + b]) << (8 * b);
      if (v >= q) throw DecodeError("key coefficient out of range");
      a[i] = v;
    }
    pos += 8 * n;
    return a;
  }
  void need(std::size_t k) const {
    if (pos + k > data.size()) throw DecodeError("public key blob truncated");
  }
};
}  // namespace

std::vector<uint8_t> serialize_public_keys(const PublicKeys& keys, const PaheParams& params) {
  std::vector<uint8_t> out;
  put_u32(out, params.id());
  put_poly(out, keys.pk0);
  put_poly(out, keys.pk1);
  put_u32(out, static_cast<uint32_t>(keys.rotation_keys.size()));
  for (const auto& [g, key] : keys.rotation_keys) {
    put_u32(out, static_cast<uint32_t>(g));
    put_u32(out, static_cast<uint32_t>(key.k0.size()));
    for (std::size_t l = 0; l < key.k0.size(); ++l) {
      put_poly(out, key.k0[l].value);
      put_poly(out, key.k1[l].value);
    }
  }
  return out;
}

PublicKeys deserialize_public_keys(std::span<const uint8_t> bytes, const PaheParams& params) {
  Reader r{bytes};
  if (r.u32() != params.id()) throw ParamError("public key parameter id mismatch");
  const std::size_t n = params.ring_dimension;
  const uint64_t q = params.ciphertext_modulus;
  PublicKeys keys;
  keys.pk0 = r.poly(n, q);
  keys.pk1 = r.poly(n, q);
  const uint32_t count = r.u32();
  if (count > 2 * n) throw DecodeError("too many rotation keys");
  for (uint32_t k = 0; k < count; ++k) {
    RotationKey key;
    key.galois = r.u32();
    const uint32_t levels = r.u32();
    if (levels != static_cast<uint32_t>(params.decomposition_count())) throw DecodeError("bad key level count");
    for (uint32_t l = 0; l < levels; ++l) {
      key.k0.emplace_back(r.poly(n, q), q);
      key.k1.emplace_back(r.poly(n, q), q);
    }
    keys.rotation_keys.emplace(key.galois, std::move(key));
  }
  if (r.pos != bytes.size()) throw DecodeError("trailing bytes after public key");
  return keys;
}

std::unique_ptr<Pahe> make_bfv_client(const PaheParams& params, std::shared_ptr<const KeyPair> keys) {
  auto pub = std::shared_ptr<const PublicKeys>(keys, &keys->pub);
  return std::make_unique<BfvPahe>(params, std::move(pub), std::move(keys));
}

std::unique_ptr<Pahe> make_bfv_server(const PaheParams& params, std::shared_ptr<const PublicKeys> keys) {
  return std::make_unique<BfvPahe>(params, std::move(keys), nullptr);
}

double measured_noise_budget(const PaheParams& params, const SecretKey& sk, const Ciphertext& ct) {
  const BfvContext& ctx = context_for(params);
  const std::vector<uint64_t> x = phase(ctx, sk, ct);
  const uint64_t p = ctx.p(), q = ctx.q(), delta = params.delta();
  uint64_t worst = 1;
  for (uint64_t xi : x) {
    const uint64_t m = round_to_plain(xi, p, q);
    const uint64_t v = sub_mod(xi, mul_mod(delta, m, q), q);
    worst = std::max(worst, std::min(v, q - v));
  }
  return std::log2(static_cast<double>(delta) / 2.0) - std::log2(static_cast<double>(worst));
}

}  // namespace gru2pc
