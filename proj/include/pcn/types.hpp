#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <string>

namespace pcn {

/// Discrete simulation time. All Δ parameters are tick counts.
using Tick = std::uint64_t;
/// Fee-free coin amounts.
using Coins = std::uint64_t;

struct Digest {
    std::array<std::uint8_t, 32> bytes{};

    auto operator<=>(const Digest&) const = default;

    std::string hex() const;
    /// First 8 bytes as hex; what traces print.
    std::string short_hex() const;
    static Digest from_hex(const std::string& hex);
};

/// A digest with a role attached so that a txid cannot be passed where a key is expected.
template <typename Tag>
struct Tagged {
    Digest value;

    auto operator<=>(const Tagged&) const = default;
    std::string hex() const { return value.hex(); }
    std::string short_hex() const { return value.short_hex(); }
};

struct TxIdTag;
struct PubKeyTag;
struct SecretKeyTag;
struct SignatureTag;
struct PreimageTag;
struct HashImageTag;

using TxId = Tagged<TxIdTag>;
using PubKey = Tagged<PubKeyTag>;
using SecretKey = Tagged<SecretKeyTag>;
using Signature = Tagged<SignatureTag>;
using Preimage = Tagged<PreimageTag>;
using HashImage = Tagged<HashImageTag>;

struct UserId {
    std::uint32_t value = 0;
    auto operator<=>(const UserId&) const = default;
};

struct ChannelId {
    std::uint32_t value = 0;
    auto operator<=>(const ChannelId&) const = default;
};

} // namespace pcn
