#include "gru2pc/bridge.hpp"

#include <cstdlib>

#include "gru2pc/errors.hpp"

namespace gru2pc {

namespace {

uint64_t mix(uint64_t h, uint64_t v) {
  h ^= v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  h ^= h >> 31;
  h *= 0xbf58476d1ce4e5b9ull;
  return h ^ (h >> 29);
}

}  // namespace

MaskSource::MaskSource(uint64_t modulus, Block seed) : p_(modulus), prg_(seed) {}

std::vector<uint64_t> MaskSource::draw(std::size_t count) {
  std::vector<uint64_t> m(count);
  for (;;) {
    uint64_t h = count;
    for (auto& v : m) {
      v = prg_.uniform(p_);
      h = mix(h, v);
    }
    if (seen_.insert(h).second) break;
  }
  ++drawn_;
  return m;
}

MaskedCiphertext mask_ciphertext(const Pahe& server, const Ciphertext& ct, std::vector<uint64_t> mask,
                                 std::size_t count, uint64_t magnitude_bound) {
  const uint64_t p = server.params().plaintext_modulus;
  if (count > server.params().slot_count()) throw DimensionError("more values than slots");
  if (mask.size() != server.params().slot_count()) throw DimensionError("mask must cover every slot");
  // The client cannot judge noise from the wire; the server holds the estimate.
  if (server.noise_budget(ct) <= 0) throw NoiseExhausted("ciphertext budget exhausted before conversion");
  if (magnitude_bound != 0 && server.is_debug()) {
    for (std::size_t i = 0; i < count; ++i) {
      const int64_t v = lift_signed(ct.c0[i], p);
      if (static_cast<uint64_t>(std::llabs(v)) > magnitude_bound)
        throw RangeViolation("slot " + std::to_string(i) + " holds " + std::to_string(v) + ", bound is " +
                             std::to_string(magnitude_bound));
    }
  }
  MaskedCiphertext out;
  out.ct = server.add_cp(ct, QuantizedVector{mask, ct.scale_log2, false});
  out.mask = std::move(mask);
  return out;
}

MaskedCiphertext mask_ciphertext(const Pahe& server, const Ciphertext& ct, MaskSource& masks, std::size_t count,
                                 uint64_t magnitude_bound) {
  if (masks.modulus() != server.params().plaintext_modulus)
    throw ParamError("mask modulus differs from the plaintext modulus");
  return mask_ciphertext(server, ct, masks.draw(server.params().slot_count()), count, magnitude_bound);
}

std::vector<uint64_t> open_masked(const Pahe& client, const Ciphertext& masked, std::size_t count) {
  auto v = client.decrypt(masked).values;
  if (v.size() < count) throw DimensionError("ciphertext holds fewer slots than requested");
  v.resize(count);
  return v;
}

MaskedShare he_to_gc(const Pahe& server, const Pahe& client, const Ciphertext& ct, std::size_t count,
                     MaskSource& masks, uint64_t magnitude_bound) {
  auto m = mask_ciphertext(server, ct, masks, count, magnitude_bound);
  MaskedShare s;
  s.client_value = open_masked(client, m.ct, count);
  m.mask.resize(count);
  s.server_mask = std::move(m.mask);
  s.modulus = server.params().plaintext_modulus;
  s.scale_log2 = ct.scale_log2;
  return s;
}

const RemaskTicket& TicketBook::issue(uint64_t instance_id, std::vector<uint64_t> mask) {
  if (spent_.count(instance_id) || live_.count(instance_id))
    throw ProtocolError("ticket " + std::to_string(instance_id) + " issued twice");
  auto [it, ok] = live_.emplace(instance_id, RemaskTicket{instance_id, std::move(mask)});
  return it->second;
}

std::vector<uint64_t> TicketBook::redeem(uint64_t instance_id) {
  auto it = live_.find(instance_id);
  if (it == live_.end()) {
    if (spent_.count(instance_id)) throw ProtocolError("ticket " + std::to_string(instance_id) + " reused");
    throw ProtocolError("unknown ticket " + std::to_string(instance_id));
  }
  auto mask = std::move(it->second.mask);
  live_.erase(it);
  spent_.insert(instance_id);
  return mask;
}

Ciphertext encrypt_masked_outputs(const Pahe& client, std::span<const uint64_t> y_plus_s, int scale_log2, Prg& rng,
                                  std::size_t period) {
  if (period != 0) return client.encrypt_replicated(y_plus_s, period, scale_log2, rng);
  return client.encrypt(QuantizedVector{{y_plus_s.begin(), y_plus_s.end()}, scale_log2, false}, rng);
}

Ciphertext unmask_ciphertext(const Pahe& server, const Ciphertext& ct, std::span<const uint64_t> mask,
                             std::size_t period) {
  const uint64_t p = server.params().plaintext_modulus;
  std::vector<uint64_t> neg(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) neg[i] = mask[i] % p == 0 ? 0 : p - mask[i] % p;
  if (period != 0) neg = replicate_slots(neg, period, server.params().slot_count());
  return server.add_cp(ct, QuantizedVector{std::move(neg), ct.scale_log2, false});
}

Ciphertext gc_to_he(const Pahe& server, const Ciphertext& client_ct, TicketBook& tickets, uint64_t instance_id,
                    std::size_t period) {
  const auto s = tickets.redeem(instance_id);
  return unmask_ciphertext(server, client_ct, s, period);
}

Ciphertext refresh(const Pahe& server, const Pahe& client, const Ciphertext& ct, std::size_t count, std::size_t period,
                   MaskSource& masks, Prg& client_rng) {
  auto m = mask_ciphertext(server, ct, masks, count);
  const auto opened = open_masked(client, m.ct, count);
  const Ciphertext fresh = encrypt_masked_outputs(client, opened, ct.scale_log2, client_rng, period);
  m.mask.resize(count);
  return unmask_ciphertext(server, fresh, m.mask, period);
}

}  // namespace gru2pc
