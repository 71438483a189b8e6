#include "pcn/channel.hpp"

#include <algorithm>

namespace pcn {

std::string to_string(MessageKind k)
{
    switch (k) {
    case MessageKind::OpenRequest: return "OpenRequest";
    case MessageKind::OpenAccept: return "OpenAccept";
    case MessageKind::FundingCreated: return "FundingCreated";
    case MessageKind::FundingSigned: return "FundingSigned";
    case MessageKind::NextRevocationKey: return "NextRevocationKey";
    case MessageKind::UpdateAdd: return "UpdateAdd";
    case MessageKind::UpdateRedeem: return "UpdateRedeem";
    case MessageKind::CommitmentSigned: return "CommitmentSigned";
    case MessageKind::RevokeAndAck: return "RevokeAndAck";
    }
    return "?";
}

std::optional<MessageKind> message_kind_from_string(const std::string& s)
{
    for (int i = 0; i <= static_cast<int>(MessageKind::RevokeAndAck); ++i) {
        auto k = static_cast<MessageKind>(i);
        if (to_string(k) == s) return k;
    }
    return std::nullopt;
}

std::string to_string(ChannelErrc c)
{
    switch (c) {
    case ChannelErrc::UnknownState: return "UnknownState";
    case ChannelErrc::UnknownHtlc: return "UnknownHtlc";
    case ChannelErrc::DuplicateHtlc: return "DuplicateHtlc";
    case ChannelErrc::UnexpectedMessage: return "UnexpectedMessage";
    case ChannelErrc::BadSignature: return "BadSignature";
    case ChannelErrc::BadRevocation: return "BadRevocation";
    case ChannelErrc::InsufficientBalance: return "InsufficientBalance";
    case ChannelErrc::WrongPreimage: return "WrongPreimage";
    case ChannelErrc::NotOpen: return "NotOpen";
    case ChannelErrc::UpdateInFlight: return "UpdateInFlight";
    }
    return "?";
}

ChannelError::ChannelError(ChannelErrc code, const std::string& what)
    : std::runtime_error(to_string(code) + ": " + what), code_(code)
{
}

std::string to_string(Phase p)
{
    switch (p) {
    case Phase::Opening: return "Opening";
    case Phase::Operational: return "Operational";
    case Phase::Updating: return "Updating";
    case Phase::Closing: return "Closing";
    case Phase::Closed: return "Closed";
    }
    return "?";
}

Coins StateTerms::total() const
{
    Coins sum = stable_self + stable_other;
    for (const auto& h : htlcs) sum += h.amount;
    return sum;
}

const Htlc* StateTerms::find(const HashImage& y) const
{
    auto it = std::find_if(htlcs.begin(), htlcs.end(), [&](const Htlc& h) { return h.image == y; });
    return it == htlcs.end() ? nullptr : &*it;
}

UpdateInput UpdateInput::add(const HashImage& y, Coins c, Tick t, HtlcLock lock)
{
    UpdateInput in;
    in.kind = UpdateKind::Add;
    in.image = y;
    in.amount = c;
    in.timeout = t;
    in.lock = lock;
    return in;
}

UpdateInput UpdateInput::redeem(const Preimage& x)
{
    UpdateInput in;
    in.kind = UpdateKind::Redeem;
    in.preimage = x;
    in.image = hash_preimage(x);
    return in;
}

std::uint64_t ChannelState::latest_held_state() const
{
    if (held.empty()) throw ChannelError(ChannelErrc::NotOpen, "no signed commitment held");
    return held.rbegin()->first;
}

const StateTerms& ChannelState::terms_of(std::uint64_t s) const
{
    if (auto it = terms.find(s); it != terms.end()) return it->second;
    if (pending && s == n + 1) return pending->next;
    throw ChannelError(ChannelErrc::UnknownState, "no terms for state " + std::to_string(s));
}

CommitmentParams commitment_params(const ChannelState& ch, const StateTerms& t, std::uint64_t n, Holder holder)
{
    CommitmentParams p;
    p.funding = ch.funding;
    p.capacity = ch.capacity;
    p.to_self_delay = ch.to_self_delay;
    if (holder == Holder::Self) {
        p.holder_key = ch.key.pub;
        p.other_key = ch.other_key;
        if (auto it = ch.own_revocation.find(n); it != ch.own_revocation.end()) p.holder_revocation = it->second.pub;
        p.holder_stable = t.stable_self;
        p.other_stable = t.stable_other;
        p.htlcs = t.htlcs;
    } else {
        p.holder_key = ch.other_key;
        p.other_key = ch.key.pub;
        if (auto it = ch.other_revocation.find(n); it != ch.other_revocation.end()) p.holder_revocation = it->second;
        p.holder_stable = t.stable_other;
        p.other_stable = t.stable_self;
        for (const auto& h : t.htlcs) p.htlcs.push_back(flipped(h));
    }
    return p;
}

CommitmentParams commitment_params(const ChannelState& ch, std::uint64_t n, Holder holder)
{
    return commitment_params(ch, ch.terms_of(n), n, holder);
}

Transaction build_commitment_transaction(const ChannelState& ch, std::uint64_t n, Holder holder)
{
    return build_commitment(commitment_params(ch, n, holder));
}

Transaction build_htlc_transactions(const ChannelState& ch, std::uint64_t n, const HashImage& y)
{
    const auto& t = ch.terms_of(n);
    auto it = std::find_if(t.htlcs.begin(), t.htlcs.end(), [&](const Htlc& h) { return h.image == y; });
    if (it == t.htlcs.end()) throw ChannelError(ChannelErrc::UnknownHtlc, "no HTLC with that image in state");
    auto p = commitment_params(ch, t, n, Holder::Self);
    return build_htlc_transaction(p, build_commitment(p).id(), static_cast<std::size_t>(it - t.htlcs.begin()));
}

bool learn_preimage(ChannelState& ch, const Preimage& x)
{
    const auto y = hash_preimage(x);
    bool found = false;
    auto mark = [&](StateTerms& t) {
        for (auto& h : t.htlcs)
            if (h.image == y) {
                h.known_preimage = x;
                found = true;
            }
    };
    for (auto& [_, t] : ch.terms) mark(t);
    if (ch.pending) mark(ch.pending->next);
    if (found) ch.preimages.emplace(y, x);
    return found;
}

bool deadline_reached(const ChannelState& ch, const TimingParams& timing, Tick now)
{
    if (ch.phase != Phase::Operational && ch.phase != Phase::Updating) return false;
    const Tick margin = timing.conf + timing.sync;
    auto near = [&](const StateTerms& t) {
        return std::any_of(t.htlcs.begin(), t.htlcs.end(), [&](const Htlc& h) { return h.timeout < now + margin; });
    };
    return near(ch.current()) || (ch.pending && near(ch.pending->next));
}

Coins correct_balance(const ChannelState& ch)
{
    const auto& t = ch.current();
    Coins sum = t.stable_self;
    for (const auto& h : t.htlcs) {
        const bool known = h.known_preimage.has_value() || ch.preimages.contains(h.image);
        if (h.direction == Direction::Outgoing && !known) sum += h.amount;
        if (h.direction == Direction::Incoming && known) sum += h.amount;
    }
    return sum;
}

} // namespace pcn
