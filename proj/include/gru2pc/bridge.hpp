#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <unordered_set>
#include <vector>

#include "gru2pc/pahe.hpp"

namespace gru2pc {

/// Server-side source of uniform masks mod p. A mask vector never repeats
/// within a session (a repeat is redrawn; with vectors of more than a few
/// slots this never happens in practice, but the property is enforced).
class MaskSource {
 public:
  MaskSource(uint64_t modulus, Block seed);
  std::vector<uint64_t> draw(std::size_t count);
  std::size_t drawn() const { return drawn_; }
  uint64_t modulus() const { return p_; }

 private:
  uint64_t p_;
  Prg prg_;
  std::unordered_set<uint64_t> seen_;
  std::size_t drawn_ = 0;
};

/// An additive sharing of `count` values: client_value - server_mask = value (mod modulus).
struct MaskedShare {
  std::vector<uint64_t> client_value;
  std::vector<uint64_t> server_mask;
  uint64_t modulus = 0;
  int scale_log2 = 0;
};

struct MaskedCiphertext {
  Ciphertext ct;
  /// One mask per slot. Every slot is masked so that slots the client does not
  /// need (other matrix thirds, rotation leftovers) stay hidden too.
  std::vector<uint64_t> mask;
};

/// Server half of he_to_gc: ct + r for a fresh uniform r over all slots.
/// With a non-zero magnitude_bound the debug backend checks |value| <= bound on
/// the first `count` slots and raises RangeViolation otherwise. NoiseExhausted if
/// the tracked budget of ct is already used up.
MaskedCiphertext mask_ciphertext(const Pahe& server, const Ciphertext& ct, MaskSource& masks, std::size_t count,
                                 uint64_t magnitude_bound = 0);
/// Same with a mask drawn ahead of time (the protocol fixes masks offline).
MaskedCiphertext mask_ciphertext(const Pahe& server, const Ciphertext& ct, std::vector<uint64_t> mask,
                                 std::size_t count, uint64_t magnitude_bound = 0);
/// Client half of he_to_gc: decrypts and keeps the first `count` masked values.
std::vector<uint64_t> open_masked(const Pahe& client, const Ciphertext& masked, std::size_t count);
/// Both halves in one place (tests and local runs).
MaskedShare he_to_gc(const Pahe& server, const Pahe& client, const Ciphertext& ct, std::size_t count,
                     MaskSource& masks, uint64_t magnitude_bound = 0);

/// Output mask s for one garbled output group, bound to a circuit instance.
struct RemaskTicket {
  uint64_t instance_id = 0;
  std::vector<uint64_t> mask;
};

/// Issued tickets of a session; each can be redeemed once.
class TicketBook {
 public:
  const RemaskTicket& issue(uint64_t instance_id, std::vector<uint64_t> mask);
  /// Returns the mask and retires the ticket; ProtocolError on reuse or an unknown id.
  std::vector<uint64_t> redeem(uint64_t instance_id);
  std::size_t outstanding() const { return live_.size(); }

 private:
  std::map<uint64_t, RemaskTicket> live_;
  std::unordered_set<uint64_t> spent_;
};

/// Client: encrypts y + s (compact, or replicated with `period` when non-zero).
Ciphertext encrypt_masked_outputs(const Pahe& client, std::span<const uint64_t> y_plus_s, int scale_log2, Prg& rng,
                                  std::size_t period = 0);
/// Server: ct - s, with s replicated like the ciphertext when period is non-zero.
Ciphertext unmask_ciphertext(const Pahe& server, const Ciphertext& ct, std::span<const uint64_t> mask,
                             std::size_t period = 0);
/// Server half of gc_to_he: redeems the ticket and removes its mask.
Ciphertext gc_to_he(const Pahe& server, const Ciphertext& client_ct, TicketBook& tickets, uint64_t instance_id,
                    std::size_t period = 0);

/// Interactive noise refresh of the first `count` slots: mask, client decrypts and
/// re-encrypts (replicated with `period` when non-zero), server unmasks. The
/// identity circuit needs no garbling, so none is performed.
Ciphertext refresh(const Pahe& server, const Pahe& client, const Ciphertext& ct, std::size_t count, std::size_t period,
                   MaskSource& masks, Prg& client_rng);

}  // namespace gru2pc
