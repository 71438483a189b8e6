#pragma once

#include "pcn/types.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string_view>

namespace pcn {

Digest sha256(std::span<const std::uint8_t> data);
Digest sha256(std::string_view data);

/// H from the protocol: image of a payment secret.
HashImage hash_preimage(const Preimage& x);

/// Seeded source for every secret in a run (preimages, key material).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    Digest next_digest();
    std::uint64_t next_u64() { return engine_(); }

private:
    std::mt19937_64 engine_;
};

struct KeyPair {
    PubKey pub;
    SecretKey secret;
};

enum class KeyRole : std::uint8_t { Wallet, Channel, Revocation };

class SignatureScheme {
public:
    virtual ~SignatureScheme() = default;
    virtual Signature sign(const SecretKey& secret, const TxId& message) const = 0;
    virtual bool verify(const PubKey& key, const TxId& message, const Signature& sig) const = 0;
};

// Keyed-hash signatures: sig = H("sig" || secret || txid). Verification recomputes the
// signature through the registry, so only keys generated here can ever verify.
class KeyRing final : public SignatureScheme {
public:
    KeyPair generate(UserId owner, KeyRole role, Rng& rng);

    std::optional<UserId> owner_of(const PubKey& key) const;
    std::optional<KeyRole> role_of(const PubKey& key) const;
    bool contains(const PubKey& key) const { return keys_.contains(key); }

    Signature sign(const SecretKey& secret, const TxId& message) const override;
    bool verify(const PubKey& key, const TxId& message, const Signature& sig) const override;

    static PubKey derive_public(const SecretKey& secret);

private:
    struct Entry {
        SecretKey secret;
        UserId owner;
        KeyRole role;
    };
    std::map<PubKey, Entry> keys_;
};

} // namespace pcn
