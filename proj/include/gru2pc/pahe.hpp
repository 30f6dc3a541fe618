#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <vector>

#include "gru2pc/aes.hpp"
#include "gru2pc/fixedpoint.hpp"
#include "gru2pc/modarith.hpp"

namespace gru2pc {

/// Largest 60-bit prime q with q = 1 (mod 2 * 2048 * p). q = 1 (mod p) keeps the
/// plaintext-multiplication rounding term at one unit.
inline constexpr uint64_t kDefaultCiphertextModulus = 1152921500113727489ull;

struct PaheParams {
  std::size_t ring_dimension = 2048;
  uint64_t plaintext_modulus = kDefaultPlaintextModulus;
  int ciphertext_modulus_bits = 60;
  uint64_t ciphertext_modulus = kDefaultCiphertextModulus;
  double error_stddev = 3.2;
  /// Base-2^w digit width used by rotation key switching.
  int decomposition_bits = 15;

  void validate() const;
  uint32_t id() const;
  std::size_t slot_count() const { return ring_dimension; }
  std::size_t row_size() const { return ring_dimension / 2; }
  int decomposition_count() const {
    return (ciphertext_modulus_bits + decomposition_bits - 1) / decomposition_bits;
  }
  /// floor(q / p), the plaintext scaling factor.
  uint64_t delta() const { return ciphertext_modulus / plaintext_modulus; }
};

/// Largest prime below 2^bits congruent to 1 modulo 2 * n * p.
uint64_t find_ciphertext_modulus(std::size_t n, uint64_t p, int bits);

struct SecretKey {
  std::vector<int8_t> coeffs;  // ternary
  ShoupPoly ntt;
};

/// Key-switching material for one Galois automorphism, in NTT form.
struct RotationKey {
  uint64_t galois = 0;
  std::vector<ShoupPoly> k0, k1;
};

struct PublicKeys {
  std::vector<uint64_t> pk0, pk1;  // NTT form
  std::map<uint64_t, RotationKey> rotation_keys;
};

struct KeyPair {
  SecretKey secret;
  PublicKeys pub;
};

KeyPair keygen(const PaheParams& params, Block seed);

std::vector<uint8_t> serialize_public_keys(const PublicKeys& keys, const PaheParams& params);
PublicKeys deserialize_public_keys(std::span<const uint8_t> bytes, const PaheParams& params);

/// An encrypted slot vector.
///
/// Row 0 (slots [0, N/2)) carries data; rotations act cyclically inside each row.
/// When `period` is non-zero, row 0 holds the live vector replicated with that
/// period, which is the input layout mult_pc consumes without extra rotations.
struct Ciphertext {
  std::vector<uint64_t> c0, c1;
  uint32_t params_id = 0;
  int scale_log2 = 0;
  std::size_t period = 0;
  /// Every slot at index >= extent (in both rows) is known to be zero; slot_count when unknown.
  std::size_t extent = 0;
  /// log2 of the tracked noise standard deviation; -inf for the debug backend.
  double noise_log2_std = 0.0;
};

/// One Horner-ordered set of pre-rotated diagonals; the accumulated result is rotated
/// by final_rotation at the end.
struct DiagonalSet {
  long final_rotation = 0;
  std::vector<bool> nonzero;
  std::vector<ShoupPoly> ntt;                 // BFV backend
  std::vector<std::vector<uint64_t>> slot;    // debug backend
  bool available() const { return !nonzero.empty(); }
};

/// A plaintext matrix pre-encoded for mult_pc.
///
/// `replicated` consumes inputs replicated with `period` (period diagonals);
/// `compact` consumes inputs that are zero past `cols` (rows + cols - 1 diagonals, only
/// available when that fits in one slot row).
struct PlainMatrix {
  std::size_t rows = 0, cols = 0;
  std::size_t period = 0;  // next power of two >= cols
  int scale_log2 = 0;
  DiagonalSet replicated, compact;
};

/// Per-operation counters, read by the operation census.
struct PaheCounters {
  std::size_t add_cc = 0, add_cp = 0, negate = 0, mult_pc = 0, rotations = 0;
  std::size_t encryptions = 0, decryptions = 0;
};

/// Packed additive homomorphic encryption: the operations the GRU linear stages need.
///
/// Two backends implement this: BFV over Z_q[X]/(X^N+1) and a clear-text debug
/// backend with identical slot semantics.
class Pahe {
 public:
  virtual ~Pahe() = default;

  const PaheParams& params() const { return params_; }
  virtual bool is_debug() const = 0;
  virtual bool has_secret_key() const = 0;

  /// Encrypts a slot vector (zero padded to slot_count). Uses the secret key when
  /// held, otherwise the public key.
  virtual Ciphertext encrypt(const QuantizedVector& m, Prg& rng) const = 0;
  virtual Ciphertext encrypt_public(const QuantizedVector& m, Prg& rng) const = 0;
  /// Encrypts `values` replicated across row 0 with the given power-of-two period.
  Ciphertext encrypt_replicated(std::span<const uint64_t> values, std::size_t period, int scale_log2,
                                Prg& rng) const;
  /// Throws NoiseExhausted if the tracked budget is not positive.
  virtual QuantizedVector decrypt(const Ciphertext& ct) const = 0;

  Ciphertext add_cc(const Ciphertext& a, const Ciphertext& b) const;
  Ciphertext add_cp(const Ciphertext& a, const QuantizedVector& b) const;
  Ciphertext negate(const Ciphertext& a) const;
  /// Rotates both rows left by `steps` (negative rotates right).
  Ciphertext rotate(const Ciphertext& a, long steps) const;

  PlainMatrix encode_matrix(std::span<const uint64_t> w, std::size_t rows, std::size_t cols,
                            int scale_log2) const;
  /// W x + bias; the result sits at x.scale + W.scale and holds W x in slots [0, rows).
  Ciphertext mult_pc(const PlainMatrix& w, const Ciphertext& x, const QuantizedVector& bias) const;
  Ciphertext mult_pc(std::span<const uint64_t> w, std::size_t rows, std::size_t cols, const Ciphertext& x,
                     const QuantizedVector& bias, int w_scale_log2) const;
  /// Splits a 3n x m product into its three n-row blocks, each moved to slot 0.
  std::array<Ciphertext, 3> mult_pc_thirds(const PlainMatrix& w, const Ciphertext& x,
                                           const QuantizedVector& bias) const;

  /// Remaining noise headroom in bits, from the tracked estimate.
  double noise_budget(const Ciphertext& ct) const;
  double fresh_budget() const;

  std::vector<uint8_t> serialize(const Ciphertext& ct) const;
  /// The wire carries no layout metadata; the receiver supplies it from protocol state.
  Ciphertext deserialize(std::span<const uint8_t> bytes, int scale_log2, std::size_t period,
                         std::size_t extent) const;
  std::size_t ciphertext_bytes() const { return 4 + 16 * params_.ring_dimension; }

  PaheCounters& counters() const { return counters_; }

 protected:
  explicit Pahe(PaheParams params);

  // Backend primitives on raw ciphertexts; layout and bookkeeping live in the base class.
  virtual void add_raw(Ciphertext& a, const Ciphertext& b) const = 0;
  virtual void add_plain_raw(Ciphertext& a, std::span<const uint64_t> slots) const = 0;
  virtual void negate_raw(Ciphertext& a) const = 0;
  /// Applies one key: steps is +-2^i.
  virtual void rotate_raw(Ciphertext& a, long steps) const = 0;
  virtual void mul_plain_raw(Ciphertext& a, std::span<const uint64_t> slots) const = 0;
  /// x <- sum_k rot_k(d_k * x), k over the set in Horner order (no final rotation).
  virtual void matvec_raw(const DiagonalSet& d, Ciphertext& x) const = 0;
  virtual void encode_diagonals(DiagonalSet& d, const std::vector<std::vector<uint64_t>>& diags) const = 0;

  // Noise variance model, in units of q-coefficients squared.
  double var_rotation() const;
  double var_plain_product(double var_in) const;
  /// Split of a left rotation (mod row size) into +-2^i single-key steps.
  std::vector<long> rotation_plan(long steps) const;
  void rotate_steps(Ciphertext& a, long steps) const;
  /// Replicates row 0 with the given period; slots past the period must already be zero.
  void replicate_in_place(Ciphertext& x, std::size_t period) const;

  PaheParams params_;
  mutable PaheCounters counters_;
};

std::unique_ptr<Pahe> make_bfv_client(const PaheParams& params, std::shared_ptr<const KeyPair> keys);
std::unique_ptr<Pahe> make_bfv_server(const PaheParams& params, std::shared_ptr<const PublicKeys> keys);
std::unique_ptr<Pahe> make_debug_pahe(const PaheParams& params);

/// Noise actually present in ct, measured with the secret key: log2(delta/2) - log2(max |v|).
double measured_noise_budget(const PaheParams& params, const SecretKey& sk, const Ciphertext& ct);

/// Builds the replicated row-0 slot vector for `values` with the given period.
std::vector<uint64_t> replicate_slots(std::span<const uint64_t> values, std::size_t period,
                                      std::size_t slot_count);

std::size_t next_pow2(std::size_t x);

}  // namespace gru2pc
