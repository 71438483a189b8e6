#include "pcn/channel.hpp"

namespace pcn {

namespace {

ChannelMessage make(const ChannelState& ch, ChannelMessage::Body body)
{
    return ChannelMessage{ch.id, ch.self, ch.other, std::move(body)};
}

[[noreturn]] void unexpected(ChannelState& ch, const ChannelMessage& m)
{
    // Nothing is on the ledger before the funder submits t_F, so aborting is free.
    if (ch.open_step == OpenStep::AwaitAccept || ch.open_step == OpenStep::AwaitFundingCreated ||
        ch.open_step == OpenStep::AwaitFundingSigned)
        ch.phase = Phase::Closed;
    throw ChannelError(ChannelErrc::UnexpectedMessage,
                       to_string(m.kind()) + " while " + to_string(ch.phase) + " on channel " +
                           std::to_string(ch.id.value));
}

void attach_signature(Transaction& tx, const PubKey& key, const Signature& sig)
{
    tx.inputs.at(0).witness.signatures.emplace_back(key, sig);
}

void maybe_operational(ChannelState& ch)
{
    if (ch.sent_next_key && ch.other_revocation.contains(2)) {
        ch.open_step = OpenStep::Done;
        ch.phase = Phase::Operational;
    } else if (ch.sent_next_key) {
        ch.open_step = OpenStep::AwaitNextKey;
    }
}

} // namespace

ChannelState open_channel(ProtocolContext& ctx, ChannelId id, UserId self, UserId peer, Coins capacity,
                          const FundingSource& source, StepResult& out)
{
    if (capacity == 0 || source.amount < capacity)
        throw ChannelError(ChannelErrc::InsufficientBalance, "funding source smaller than capacity");
    ChannelState ch;
    ch.id = id;
    ch.self = self;
    ch.other = peer;
    ch.funder = true;
    ch.capacity = capacity;
    ch.to_self_delay = ctx.timing.comm;
    ch.phase = Phase::Opening;
    ch.open_step = OpenStep::AwaitAccept;
    ch.key = ctx.keys.generate(self, KeyRole::Channel, ctx.rng);
    ch.own_revocation[1] = ctx.keys.generate(self, KeyRole::Revocation, ctx.rng);
    ch.funding_source = source;
    ch.terms[1] = StateTerms{capacity, 0, {}};
    out.send.push_back(make(ch, msg::OpenRequest{ch.key.pub, capacity, ch.own_revocation[1].pub}));
    return ch;
}

ChannelState accept_channel(ProtocolContext& ctx, const ChannelMessage& request, StepResult& out)
{
    const auto* req = std::get_if<msg::OpenRequest>(&request.body);
    if (!req) throw ChannelError(ChannelErrc::UnexpectedMessage, "channel must start with OpenRequest");
    ChannelState ch;
    ch.id = request.channel;
    ch.self = request.to;
    ch.other = request.from;
    ch.capacity = req->capacity;
    ch.to_self_delay = ctx.timing.comm;
    ch.phase = Phase::Opening;
    ch.open_step = OpenStep::AwaitFundingCreated;
    ch.key = ctx.keys.generate(ch.self, KeyRole::Channel, ctx.rng);
    ch.other_key = req->funder_key;
    ch.other_revocation[1] = req->first_revocation;
    // Our state-1 commitment has no output of ours, so its revocation key is never shared.
    ch.own_revocation[1] = ctx.keys.generate(ch.self, KeyRole::Revocation, ctx.rng);
    ch.terms[1] = StateTerms{0, req->capacity, {}};
    out.send.push_back(make(ch, msg::OpenAccept{ch.key.pub}));
    return ch;
}

StepResult step_open(ChannelState& ch, ProtocolContext& ctx, const ChannelMessage& m, Tick)
{
    StepResult out;
    if (ch.phase != Phase::Opening && m.kind() != MessageKind::NextRevocationKey) unexpected(ch, m);

    switch (m.kind()) {
    case MessageKind::OpenAccept: {
        if (!ch.funder || ch.open_step != OpenStep::AwaitAccept) unexpected(ch, m);
        ch.other_key = std::get<msg::OpenAccept>(m.body).key;
        const auto& src = *ch.funding_source;
        ch.funding_tx = build_funding(src.input, src.amount, ch.capacity, ch.key.pub, ch.other_key, src.change);
        ch.funding = OutPoint{ch.funding_tx->id(), 0};
        auto theirs = build_commitment_transaction(ch, 1, Holder::Counterparty);
        ch.other_commitments[theirs.id()] = 1;
        out.send.push_back(make(ch, msg::FundingCreated{ctx.keys.sign(ch.key.secret, theirs.id()), ch.funding.tx}));
        ch.open_step = OpenStep::AwaitFundingSigned;
        return out;
    }
    case MessageKind::FundingCreated: {
        if (ch.funder || ch.open_step != OpenStep::AwaitFundingCreated) unexpected(ch, m);
        const auto& fc = std::get<msg::FundingCreated>(m.body);
        ch.funding = OutPoint{fc.funding_txid, 0};
        auto mine = build_commitment_transaction(ch, 1, Holder::Self);
        if (!ctx.keys.verify(ch.other_key, mine.id(), fc.commitment_sig)) {
            ch.phase = Phase::Closed;
            throw ChannelError(ChannelErrc::BadSignature, "initial commitment signature");
        }
        attach_signature(mine, ch.other_key, fc.commitment_sig);
        ch.own_commitments[mine.id()] = 1;
        ch.held[1] = HeldCommitment{std::move(mine), {}};
        auto theirs = build_commitment_transaction(ch, 1, Holder::Counterparty);
        ch.other_commitments[theirs.id()] = 1;
        out.send.push_back(make(ch, msg::FundingSigned{ctx.keys.sign(ch.key.secret, theirs.id())}));
        ch.open_step = OpenStep::AwaitFunding;
        return out;
    }
    case MessageKind::FundingSigned: {
        if (!ch.funder || ch.open_step != OpenStep::AwaitFundingSigned) unexpected(ch, m);
        const auto& fs = std::get<msg::FundingSigned>(m.body);
        auto mine = build_commitment_transaction(ch, 1, Holder::Self);
        if (!ctx.keys.verify(ch.other_key, mine.id(), fs.commitment_sig)) {
            ch.phase = Phase::Closed;
            throw ChannelError(ChannelErrc::BadSignature, "initial commitment signature");
        }
        attach_signature(mine, ch.other_key, fs.commitment_sig);
        ch.own_commitments[mine.id()] = 1;
        ch.held[1] = HeldCommitment{std::move(mine), {}};
        // Only now is it safe to fund: we can always get our coins back with t_C1.
        Transaction tf = *ch.funding_tx;
        add_signature(tf, 0, ch.funding_source->owner, ctx.keys);
        ch.funding_tx = tf;
        out.submit.push_back(std::move(tf));
        ch.open_step = OpenStep::AwaitFunding;
        return out;
    }
    case MessageKind::NextRevocationKey: {
        if (ch.other_revocation.contains(2)) unexpected(ch, m);
        if (ch.open_step != OpenStep::AwaitFunding && ch.open_step != OpenStep::AwaitNextKey) unexpected(ch, m);
        ch.other_revocation[2] = std::get<msg::NextRevocationKey>(m.body).key;
        maybe_operational(ch);
        return out;
    }
    default: unexpected(ch, m);
    }
}

StepResult funding_confirmed(ChannelState& ch, ProtocolContext& ctx, Tick)
{
    StepResult out;
    if (ch.phase != Phase::Opening || ch.open_step != OpenStep::AwaitFunding || ch.sent_next_key) return out;
    ch.own_revocation[2] = ctx.keys.generate(ch.self, KeyRole::Revocation, ctx.rng);
    ch.sent_next_key = true;
    out.send.push_back(make(ch, msg::NextRevocationKey{ch.own_revocation[2].pub}));
    maybe_operational(ch);
    return out;
}

StepResult handle_message(ChannelState& ch, ProtocolContext& ctx, const ChannelMessage& m, Tick now)
{
    switch (m.kind()) {
    case MessageKind::OpenRequest:
    case MessageKind::OpenAccept:
    case MessageKind::FundingCreated:
    case MessageKind::FundingSigned:
    case MessageKind::NextRevocationKey: return step_open(ch, ctx, m, now);
    default: return step_update(ch, ctx, m, now);
    }
}

} // namespace pcn
