#pragma once

#include "pcn/condition.hpp"

#include <string>
#include <vector>

namespace pcn {

struct OutPoint {
    TxId tx;
    std::uint32_t index = 0;
    auto operator<=>(const OutPoint&) const = default;
};

struct TxIn {
    OutPoint prevout;
    Witness witness;
};

struct TxOut {
    Coins amount = 0;
    Condition condition;
};

struct Transaction {
    std::vector<TxIn> inputs;
    std::vector<TxOut> outputs;
    /// Earliest tick at which the transaction may confirm. Part of the id, so signatures commit to it.
    Tick lock_time = 0;

    /// Content hash over prevouts and outputs. Witnesses are excluded, so the id is known before signing.
    TxId id() const;
    Coins output_total() const;
};

/// Canonical structured-text form of a transaction body (no witnesses).
std::string canonical_body(const Transaction& tx);

/// Appends a signature over `tx.id()` by `key` to the witness of input `input`.
void add_signature(Transaction& tx, std::size_t input, const KeyPair& key, const SignatureScheme& scheme);
void add_preimage(Transaction& tx, std::size_t input, const Preimage& x);

} // namespace pcn
