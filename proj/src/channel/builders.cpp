#include "pcn/channel.hpp"

namespace pcn {

namespace {

Condition hash_lock(const Htlc& h)
{
    return h.lock == HtlcLock::Registry ? Condition::registered_before(h.image, h.timeout)
                                        : Condition::preimage(h.image);
}

const PubKey& require_revocation(const CommitmentParams& p)
{
    if (!p.holder_revocation) throw ChannelError(ChannelErrc::UnknownState, "commitment needs a revocation key");
    return *p.holder_revocation;
}

Condition output_condition(const CommitmentParams& p, const CommitmentOutput& o)
{
    const auto& H = p.holder_key;
    const auto& O = p.other_key;
    switch (o.role) {
    case OutputRole::HolderStable: {
        const auto& R = require_revocation(p);
        return Condition::any_of({
            Condition::all_of({Condition::sig(O), Condition::sig(R)}),
            Condition::all_of({Condition::sig(H), Condition::relative_delay(p.to_self_delay)}),
        });
    }
    case OutputRole::OtherStable: return Condition::sig(O);
    case OutputRole::HtlcOutput: break;
    }
    const auto& h = p.htlcs.at(o.htlc);
    const auto& R = require_revocation(p);
    auto revoke = Condition::all_of({Condition::sig(O), Condition::sig(R)});
    if (h.direction == Direction::Outgoing) {
        return Condition::any_of({
            Condition::all_of({Condition::sig(O), hash_lock(h)}),
            std::move(revoke),
            Condition::all_of({Condition::sig(H), Condition::sig(O), Condition::absolute_time(h.timeout)}),
        });
    }
    return Condition::any_of({
        Condition::all_of({Condition::sig(O), Condition::absolute_time(h.timeout)}),
        std::move(revoke),
        Condition::all_of({Condition::sig(H), Condition::sig(O), hash_lock(h)}),
    });
}

Coins output_amount(const CommitmentParams& p, const CommitmentOutput& o)
{
    switch (o.role) {
    case OutputRole::HolderStable: return p.holder_stable;
    case OutputRole::OtherStable: return p.other_stable;
    case OutputRole::HtlcOutput: return p.htlcs.at(o.htlc).amount;
    }
    return 0;
}

} // namespace

Htlc flipped(const Htlc& h)
{
    Htlc f = h;
    f.direction = h.direction == Direction::Outgoing ? Direction::Incoming : Direction::Outgoing;
    return f;
}

std::vector<CommitmentOutput> commitment_layout(const CommitmentParams& p)
{
    std::vector<CommitmentOutput> out;
    if (p.holder_stable > 0) out.push_back({OutputRole::HolderStable, 0});
    if (p.other_stable > 0) out.push_back({OutputRole::OtherStable, 0});
    for (std::size_t i = 0; i < p.htlcs.size(); ++i) out.push_back({OutputRole::HtlcOutput, i});
    return out;
}

Transaction build_commitment(const CommitmentParams& p)
{
    Coins sum = p.holder_stable + p.other_stable;
    for (const auto& h : p.htlcs) sum += h.amount;
    if (sum != p.capacity) throw ChannelError(ChannelErrc::UnknownState, "commitment balances do not sum to capacity");

    Transaction tx;
    tx.inputs.push_back(TxIn{p.funding, {}});
    for (const auto& o : commitment_layout(p)) tx.outputs.push_back(TxOut{output_amount(p, o), output_condition(p, o)});
    return tx;
}

Condition second_stage_condition(const PubKey& holder, const PubKey& other, const PubKey& holder_revocation,
                                 Tick delay)
{
    return Condition::any_of({
        Condition::all_of({Condition::sig(holder), Condition::relative_delay(delay)}),
        Condition::all_of({Condition::sig(other), Condition::sig(holder_revocation)}),
    });
}

Transaction build_htlc_transaction(const CommitmentParams& p, const TxId& commitment, std::size_t htlc_index)
{
    if (htlc_index >= p.htlcs.size()) throw ChannelError(ChannelErrc::UnknownHtlc, "no HTLC at that index");
    auto layout = commitment_layout(p);
    std::uint32_t out_index = 0;
    for (std::uint32_t i = 0; i < layout.size(); ++i)
        if (layout[i].role == OutputRole::HtlcOutput && layout[i].htlc == htlc_index) out_index = i;

    Transaction tx;
    tx.inputs.push_back(TxIn{OutPoint{commitment, out_index}, {}});
    if (p.htlcs[htlc_index].direction == Direction::Outgoing) tx.lock_time = p.htlcs[htlc_index].timeout;
    tx.outputs.push_back(TxOut{p.htlcs[htlc_index].amount,
                               second_stage_condition(p.holder_key, p.other_key, require_revocation(p),
                                                      p.to_self_delay)});
    return tx;
}

Transaction build_funding(const OutPoint& input, Coins input_amount, Coins capacity, const PubKey& a,
                          const PubKey& b, const PubKey& change)
{
    if (capacity == 0 || input_amount < capacity)
        throw ChannelError(ChannelErrc::InsufficientBalance, "funding input smaller than capacity");
    Transaction tx;
    tx.inputs.push_back(TxIn{input, {}});
    tx.outputs.push_back(TxOut{capacity, Condition::all_of({Condition::sig(a), Condition::sig(b)})});
    if (input_amount > capacity) tx.outputs.push_back(TxOut{input_amount - capacity, Condition::sig(change)});
    return tx;
}

} // namespace pcn
