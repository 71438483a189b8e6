#include "pcn/channel.hpp"

#include <algorithm>

namespace pcn {

namespace {

ChannelMessage make(const ChannelState& ch, ChannelMessage::Body body)
{
    return ChannelMessage{ch.id, ch.self, ch.other, std::move(body)};
}

[[noreturn]] void unexpected(const ChannelState& ch, const ChannelMessage& m)
{
    throw ChannelError(ChannelErrc::UnexpectedMessage,
                       to_string(m.kind()) + " while " + to_string(ch.phase) + " on channel " +
                           std::to_string(ch.id.value));
}

/// Applies an update to `t`. `ours` is true when this endpoint initiated it.
StateTerms apply(const StateTerms& t, const UpdateInput& in, bool ours)
{
    StateTerms next = t;
    Coins& payer = ours ? next.stable_self : next.stable_other;
    Coins& payee = ours ? next.stable_self : next.stable_other;
    if (in.kind == UpdateKind::Add) {
        if (in.amount == 0) throw ChannelError(ChannelErrc::InsufficientBalance, "HTLC amount must be positive");
        if (t.find(in.image)) throw ChannelError(ChannelErrc::DuplicateHtlc, "image already in channel");
        if (payer < in.amount)
            throw ChannelError(ChannelErrc::InsufficientBalance,
                               "stable balance " + std::to_string(payer) + " < " + std::to_string(in.amount));
        payer -= in.amount;
        next.htlcs.push_back(Htlc{in.amount, in.image, in.timeout, ours ? Direction::Outgoing : Direction::Incoming,
                                  std::nullopt, in.lock});
        return next;
    }
    const auto y = hash_preimage(in.preimage);
    auto it = std::find_if(next.htlcs.begin(), next.htlcs.end(), [&](const Htlc& h) { return h.image == y; });
    if (it == next.htlcs.end()) throw ChannelError(ChannelErrc::WrongPreimage, "preimage matches no HTLC");
    // The redeemer is always the receiving side of the HTLC.
    const Direction want = ours ? Direction::Incoming : Direction::Outgoing;
    if (it->direction != want) throw ChannelError(ChannelErrc::UnknownHtlc, "HTLC runs the other way");
    payee += it->amount;
    next.htlcs.erase(it);
    return next;
}

ChannelMessage::Body announce(const UpdateInput& in)
{
    if (in.kind == UpdateKind::Add) return msg::UpdateAdd{in.image, in.amount, in.timeout, in.lock};
    return msg::UpdateRedeem{in.preimage};
}

/// Signs the counterparty's commitment for state m and its HTLC transactions.
msg::CommitmentSigned sign_theirs(ChannelState& ch, ProtocolContext& ctx, const StateTerms& next, std::uint64_t m)
{
    auto p = commitment_params(ch, next, m, Holder::Counterparty);
    auto c = build_commitment(p);
    const auto cid = c.id();
    ch.other_commitments[cid] = m;
    msg::CommitmentSigned cs;
    cs.commitment_sig = ctx.keys.sign(ch.key.secret, cid);
    for (std::size_t i = 0; i < p.htlcs.size(); ++i)
        cs.htlc_sigs.push_back(ctx.keys.sign(ch.key.secret, build_htlc_transaction(p, cid, i).id()));
    return cs;
}

/// Verifies the counterparty's signatures on our commitment for state m; stores it on success.
bool accept_ours(ChannelState& ch, ProtocolContext& ctx, const StateTerms& next, std::uint64_t m,
                 const msg::CommitmentSigned& cs)
{
    auto p = commitment_params(ch, next, m, Holder::Self);
    auto c = build_commitment(p);
    const auto cid = c.id();
    if (!ctx.keys.verify(ch.other_key, cid, cs.commitment_sig)) return false;
    if (cs.htlc_sigs.size() != p.htlcs.size()) return false;
    HeldCommitment held;
    for (std::size_t i = 0; i < p.htlcs.size(); ++i) {
        auto tx = build_htlc_transaction(p, cid, i);
        if (!ctx.keys.verify(ch.other_key, tx.id(), cs.htlc_sigs[i])) return false;
        tx.inputs[0].witness.signatures.emplace_back(ch.other_key, cs.htlc_sigs[i]);
        held.htlc_txs.push_back(std::move(tx));
    }
    c.inputs[0].witness.signatures.emplace_back(ch.other_key, cs.commitment_sig);
    held.commitment = std::move(c);
    ch.own_commitments[cid] = m;
    ch.held[m] = std::move(held);
    return true;
}

msg::RevokeAndAck revoke_current(ChannelState& ch, ProtocolContext& ctx)
{
    const auto o = ch.n + 2;
    ch.own_revocation[o] = ctx.keys.generate(ch.self, KeyRole::Revocation, ctx.rng);
    ch.revealed.insert(ch.n);
    return msg::RevokeAndAck{ch.own_revocation.at(ch.n).secret, ch.own_revocation[o].pub};
}

void take_revocation(ChannelState& ch, const msg::RevokeAndAck& r)
{
    if (auto it = ch.other_revocation.find(ch.n); it != ch.other_revocation.end()) {
        if (KeyRing::derive_public(r.revealed) != it->second)
            throw ChannelError(ChannelErrc::BadRevocation, "revealed secret does not match state " + std::to_string(ch.n));
    }
    ch.other_revocation_secret[ch.n] = r.revealed;
    ch.other_revocation[ch.n + 2] = r.next;
}

void finish(ChannelState& ch, StepResult& out)
{
    const auto m = ch.n + 1;
    ch.terms[m] = ch.pending->next;
    out.completed = ch.pending->input;
    ch.n = m;
    ch.pending.reset();
    ch.phase = Phase::Operational;
}

} // namespace

StepResult begin_update(ChannelState& ch, ProtocolContext& ctx, const UpdateInput& in, Tick now)
{
    if (ch.phase == Phase::Updating) throw ChannelError(ChannelErrc::UpdateInFlight, "one update at a time");
    if (ch.phase != Phase::Operational) throw ChannelError(ChannelErrc::NotOpen, "channel is " + to_string(ch.phase));

    StateTerms next = apply(ch.current(), in, true);
    const auto m = ch.n + 1;
    StepResult out;
    out.send.push_back(make(ch, announce(in)));
    out.send.push_back(make(ch, sign_theirs(ch, ctx, next, m)));
    ch.pending = PendingUpdate{true, in, std::move(next), PendingUpdate::Step::AwaitCommitmentSigned, now};
    if (in.kind == UpdateKind::Redeem) learn_preimage(ch, in.preimage);
    ch.phase = Phase::Updating;
    return out;
}

StepResult step_update(ChannelState& ch, ProtocolContext& ctx, const ChannelMessage& m, Tick now)
{
    StepResult out;
    switch (m.kind()) {
    case MessageKind::UpdateAdd:
    case MessageKind::UpdateRedeem: {
        if (ch.phase == Phase::Updating && ch.pending && ch.pending->initiator &&
            ch.pending->step == PendingUpdate::Step::AwaitCommitmentSigned) {
            if (ch.self < ch.other) {
                // We win the tie; the peer's update and its signature are dropped.
                ch.skip_commitment_signed++;
                return out;
            }
            out.yielded = ch.pending->input;
            ch.pending.reset();
            ch.phase = Phase::Operational;
        }
        if (ch.phase != Phase::Operational) unexpected(ch, m);
        UpdateInput in;
        if (const auto* add = std::get_if<msg::UpdateAdd>(&m.body))
            in = UpdateInput::add(add->image, add->amount, add->timeout, add->lock);
        else
            in = UpdateInput::redeem(std::get<msg::UpdateRedeem>(m.body).preimage);
        StateTerms next = apply(ch.current(), in, false);
        ch.pending = PendingUpdate{false, in, std::move(next), PendingUpdate::Step::AwaitCommitmentSigned, now};
        if (in.kind == UpdateKind::Redeem) learn_preimage(ch, in.preimage);
        ch.phase = Phase::Updating;
        return out;
    }
    case MessageKind::CommitmentSigned: {
        if (ch.skip_commitment_signed > 0) {
            ch.skip_commitment_signed--;
            return out;
        }
        if (ch.phase != Phase::Updating || !ch.pending ||
            ch.pending->step != PendingUpdate::Step::AwaitCommitmentSigned)
            unexpected(ch, m);
        const auto next_state = ch.n + 1;
        if (!accept_ours(ch, ctx, ch.pending->next, next_state, std::get<msg::CommitmentSigned>(m.body))) {
            ch.pending.reset();
            ch.phase = Phase::Operational;
            throw ChannelError(ChannelErrc::BadSignature, "commitment for state " + std::to_string(next_state));
        }
        if (ch.pending->initiator) {
            out.send.push_back(make(ch, revoke_current(ch, ctx)));
            ch.pending->step = PendingUpdate::Step::AwaitResponderRevoke;
        } else {
            out.send.push_back(make(ch, sign_theirs(ch, ctx, ch.pending->next, next_state)));
            ch.pending->step = PendingUpdate::Step::AwaitInitiatorRevoke;
        }
        return out;
    }
    case MessageKind::RevokeAndAck: {
        if (ch.phase != Phase::Updating || !ch.pending) unexpected(ch, m);
        const auto& r = std::get<msg::RevokeAndAck>(m.body);
        if (ch.pending->initiator && ch.pending->step == PendingUpdate::Step::AwaitResponderRevoke) {
            take_revocation(ch, r);
            finish(ch, out);
            return out;
        }
        if (!ch.pending->initiator && ch.pending->step == PendingUpdate::Step::AwaitInitiatorRevoke) {
            take_revocation(ch, r);
            out.send.push_back(make(ch, revoke_current(ch, ctx)));
            finish(ch, out);
            return out;
        }
        unexpected(ch, m);
    }
    default: unexpected(ch, m);
    }
}

std::vector<Transaction> close_channel(ChannelState& ch, const SignatureScheme& scheme, Tick)
{
    if (ch.phase != Phase::Operational && ch.phase != Phase::Updating)
        throw ChannelError(ChannelErrc::NotOpen, "channel is " + to_string(ch.phase));
    const auto s = ch.latest_held_state();
    const auto& held = ch.held.at(s);
    const auto& t = ch.terms_of(s);

    std::vector<Transaction> out;
    Transaction c = held.commitment;
    c.inputs[0].witness.signatures.emplace_back(ch.key.pub, scheme.sign(ch.key.secret, c.id()));
    out.push_back(std::move(c));
    for (std::size_t i = 0; i < t.htlcs.size(); ++i) {
        const auto& h = t.htlcs[i];
        if (h.direction != Direction::Incoming) continue;
        auto x = ch.preimages.find(h.image);
        if (x == ch.preimages.end()) continue;
        Transaction tx = held.htlc_txs.at(i);
        tx.inputs[0].witness.signatures.emplace_back(ch.key.pub, scheme.sign(ch.key.secret, tx.id()));
        tx.inputs[0].witness.preimages.push_back(x->second);
        out.push_back(std::move(tx));
    }
    ch.phase = Phase::Closing;
    return out;
}

std::vector<Transaction> timeout_transactions(const ChannelState& ch, std::uint64_t state,
                                              const SignatureScheme& scheme)
{
    std::vector<Transaction> out;
    auto hit = ch.held.find(state);
    if (hit == ch.held.end()) return out;
    const auto& t = ch.terms_of(state);
    for (std::size_t i = 0; i < t.htlcs.size(); ++i) {
        if (t.htlcs[i].direction != Direction::Outgoing) continue;
        Transaction tx = hit->second.htlc_txs.at(i);
        tx.inputs[0].witness.signatures.emplace_back(ch.key.pub, scheme.sign(ch.key.secret, tx.id()));
        out.push_back(std::move(tx));
    }
    return out;
}

} // namespace pcn
