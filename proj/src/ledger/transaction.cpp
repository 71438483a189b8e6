#include "pcn/transaction.hpp"

#include <numeric>
#include <stdexcept>

namespace pcn {

std::string canonical_body(const Transaction& tx)
{
    std::string s = "tx{in[";
    for (std::size_t i = 0; i < tx.inputs.size(); ++i) {
        if (i) s += ';';
        s += tx.inputs[i].prevout.tx.hex();
        s += ':';
        s += std::to_string(tx.inputs[i].prevout.index);
    }
    s += "]out[";
    for (std::size_t i = 0; i < tx.outputs.size(); ++i) {
        if (i) s += ';';
        s += std::to_string(tx.outputs[i].amount);
        s += '@';
        s += to_string(tx.outputs[i].condition);
    }
    s += ']';
    if (tx.lock_time) s += "lock[" + std::to_string(tx.lock_time) + ']';
    s += '}';
    return s;
}

TxId Transaction::id() const { return TxId{sha256(canonical_body(*this))}; }

Coins Transaction::output_total() const
{
    return std::accumulate(outputs.begin(), outputs.end(), Coins{0},
                           [](Coins acc, const TxOut& o) { return acc + o.amount; });
}

void add_signature(Transaction& tx, std::size_t input, const KeyPair& key, const SignatureScheme& scheme)
{
    if (input >= tx.inputs.size()) throw std::out_of_range("add_signature: no such input");
    tx.inputs[input].witness.signatures.emplace_back(key.pub, scheme.sign(key.secret, tx.id()));
}

void add_preimage(Transaction& tx, std::size_t input, const Preimage& x)
{
    if (input >= tx.inputs.size()) throw std::out_of_range("add_preimage: no such input");
    tx.inputs[input].witness.preimages.push_back(x);
}

} // namespace pcn
