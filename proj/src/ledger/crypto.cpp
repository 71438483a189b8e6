#include "pcn/crypto.hpp"

#include <openssl/sha.h>

#include <stdexcept>
#include <vector>

namespace pcn {

namespace {

constexpr char kHexDigits[] = "0123456789abcdef";

Digest hash_parts(std::string_view tag, const Digest& a, const Digest* b = nullptr)
{
    std::vector<std::uint8_t> buf(tag.begin(), tag.end());
    buf.insert(buf.end(), a.bytes.begin(), a.bytes.end());
    if (b) buf.insert(buf.end(), b->bytes.begin(), b->bytes.end());
    return sha256(std::span<const std::uint8_t>(buf));
}

} // namespace

std::string Digest::hex() const
{
    std::string out;
    out.reserve(64);
    for (auto b : bytes) {
        out.push_back(kHexDigits[b >> 4]);
        out.push_back(kHexDigits[b & 0xf]);
    }
    return out;
}

std::string Digest::short_hex() const { return hex().substr(0, 16); }

Digest Digest::from_hex(const std::string& hex)
{
    if (hex.size() != 64) throw std::invalid_argument("digest hex must be 64 characters");
    auto nibble = [](char c) -> std::uint8_t {
        if (c >= '0' && c <= '9') return static_cast<std::uint8_t>(c - '0');
        if (c >= 'a' && c <= 'f') return static_cast<std::uint8_t>(c - 'a' + 10);
        if (c >= 'A' && c <= 'F') return static_cast<std::uint8_t>(c - 'A' + 10);
        throw std::invalid_argument("bad hex digit");
    };
    Digest d;
    for (std::size_t i = 0; i < 32; ++i)
        d.bytes[i] = static_cast<std::uint8_t>(nibble(hex[2 * i]) << 4 | nibble(hex[2 * i + 1]));
    return d;
}

Digest sha256(std::span<const std::uint8_t> data)
{
    Digest d;
    SHA256(data.data(), data.size(), d.bytes.data());
    return d;
}

Digest sha256(std::string_view data)
{
    return sha256(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(data.data()), data.size()));
}

HashImage hash_preimage(const Preimage& x) { return HashImage{hash_parts("preimage", x.value)}; }

Digest Rng::next_digest()
{
    Digest d;
    for (std::size_t i = 0; i < d.bytes.size(); i += 8) {
        std::uint64_t v = engine_();
        for (std::size_t j = 0; j < 8; ++j) d.bytes[i + j] = static_cast<std::uint8_t>(v >> (8 * j));
    }
    return d;
}

PubKey KeyRing::derive_public(const SecretKey& secret) { return PubKey{hash_parts("pubkey", secret.value)}; }

KeyPair KeyRing::generate(UserId owner, KeyRole role, Rng& rng)
{
    SecretKey secret{rng.next_digest()};
    PubKey pub = derive_public(secret);
    keys_[pub] = Entry{secret, owner, role};
    return KeyPair{pub, secret};
}

std::optional<UserId> KeyRing::owner_of(const PubKey& key) const
{
    auto it = keys_.find(key);
    if (it == keys_.end()) return std::nullopt;
    return it->second.owner;
}

std::optional<KeyRole> KeyRing::role_of(const PubKey& key) const
{
    auto it = keys_.find(key);
    if (it == keys_.end()) return std::nullopt;
    return it->second.role;
}

Signature KeyRing::sign(const SecretKey& secret, const TxId& message) const
{
    return Signature{hash_parts("sig", secret.value, &message.value)};
}

bool KeyRing::verify(const PubKey& key, const TxId& message, const Signature& sig) const
{
    auto it = keys_.find(key);
    if (it == keys_.end()) return false;
    return sign(it->second.secret, message) == sig;
}

} // namespace pcn
