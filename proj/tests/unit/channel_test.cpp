#include "doctest.h"

#include "channel_fixture.hpp"

#include <algorithm>
#include <random>

using namespace pcn;
using pcn::testing::ChannelPair;

namespace {

std::string describe(const Transaction& tx) { return canonical_body(tx); }

Coins sum_outputs(const Transaction& tx) { return tx.output_total(); }

bool has_revocation_escape(const Condition& c, const PubKey& rev)
{
    std::set<PubKey> keys;
    collect_sig_keys(c, keys);
    return keys.contains(rev);
}

} // namespace

TEST_CASE("fresh channel commitment returns everything to the funder")
{
    ChannelPair p;
    p.open();
    REQUIRE(p.a.phase == Phase::Operational);
    REQUIRE(p.b.phase == Phase::Operational);
    auto t = build_commitment_transaction(p.a, 1, Holder::Self);
    REQUIRE(t.outputs.size() == 1);
    CHECK(t.outputs[0].amount == 100);
    CHECK(has_revocation_escape(t.outputs[0].condition, p.a.own_revocation.at(1).pub));
    auto tb = build_commitment_transaction(p.b, 1, Holder::Self);
    REQUIRE(tb.outputs.size() == 1);
    CHECK(tb.outputs[0].condition == Condition::sig(p.a.key.pub));
}

TEST_CASE("open happy path")
{
    ChannelPair p;
    p.open();
    CHECK(p.a.n == 1);
    CHECK(p.a.current().stable_self == 100);
    CHECK(p.a.current().stable_other == 0);
    CHECK(p.b.current().stable_self == 0);
    CHECK(p.b.current().stable_other == 100);
    CHECK(p.a.held.contains(1));
    CHECK(p.b.held.contains(1));
    CHECK(p.ledger.confirmation_tick(p.a.funding.tx).has_value());
    CHECK(p.a.funding == p.b.funding);
}

TEST_CASE("funder never submits before holding the initial commitment signature")
{
    ChannelPair p;
    std::size_t submitted_at_signed = 0;
    p.drop = [&](const ChannelMessage& m) {
        if (m.kind() == MessageKind::FundingSigned) submitted_at_signed = p.ledger.pending_count();
        return false;
    };
    p.open();
    CHECK(submitted_at_signed == 0);
}

TEST_CASE("aborting before FundingCreated leaves the ledger untouched")
{
    ChannelPair p;
    p.drop = [](const ChannelMessage& m) { return m.kind() == MessageKind::FundingCreated; };
    p.open();
    CHECK(p.ledger.confirmed_log().size() == 1);
    CHECK(p.ledger.pending_count() == 0);
    CHECK(p.a.phase == Phase::Opening);
}

TEST_CASE("duplicate OpenAccept is rejected")
{
    ChannelPair p;
    std::optional<ChannelMessage> accept;
    p.drop = [&](const ChannelMessage& m) {
        if (m.kind() == MessageKind::OpenAccept) accept = m;
        return false;
    };
    p.open();
    REQUIRE(accept);
    try {
        step_open(p.a, p.ctx, *accept, p.now);
        FAIL("expected UnexpectedMessage");
    } catch (const ChannelError& e) {
        CHECK(e.code() == ChannelErrc::UnexpectedMessage);
    }
}

TEST_CASE("add and redeem move balances")
{
    ChannelPair p;
    p.open(90);
    p.pay(p.alice, 30, 40);
    REQUIRE(p.a.current().stable_self == 60);
    REQUIRE(p.a.current().stable_other == 30);
    const auto n0 = p.a.n;

    auto [x, y] = p.secret();
    p.update(p.alice, UpdateInput::add(y, 10, 150));
    CHECK(p.a.n == n0 + 1);
    CHECK(p.b.n == n0 + 1);
    CHECK(p.a.current().stable_self == 50);
    CHECK(p.a.current().stable_other == 30);
    REQUIRE(p.a.current().htlcs.size() == 1);
    CHECK(p.a.current().htlcs[0].direction == Direction::Outgoing);
    CHECK(p.b.current().htlcs[0].direction == Direction::Incoming);
    CHECK(p.b.other_revocation_secret.contains(n0));
    CHECK(p.a.other_revocation_secret.contains(n0));

    auto t = build_commitment_transaction(p.a, p.a.n, Holder::Self);
    CHECK(t.outputs.size() == 3);
    CHECK(sum_outputs(t) == 90);

    p.update(p.bob, UpdateInput::redeem(x));
    CHECK(p.a.current().stable_self == 50);
    CHECK(p.a.current().stable_other == 40);
    CHECK(p.a.current().htlcs.empty());
    CHECK(p.b.current().stable_self == 40);
}

TEST_CASE("redeem with an unknown preimage")
{
    ChannelPair p;
    p.open();
    auto [x, y] = p.secret();
    p.update(p.alice, UpdateInput::add(y, 10, 150));
    const auto before = p.b.n;
    auto [wrong, _] = p.secret();
    try {
        begin_update(p.b, p.ctx, UpdateInput::redeem(wrong), p.now);
        FAIL("expected WrongPreimage");
    } catch (const ChannelError& e) {
        CHECK(e.code() == ChannelErrc::WrongPreimage);
    }
    CHECK(p.b.n == before);
    CHECK(p.b.phase == Phase::Operational);
    CHECK(p.b.current().htlcs.size() == 1);
}

TEST_CASE("add beyond stable balance")
{
    ChannelPair p;
    p.open();
    auto [x, y] = p.secret();
    try {
        begin_update(p.b, p.ctx, UpdateInput::add(y, 1, 150), p.now);
        FAIL("expected InsufficientBalance");
    } catch (const ChannelError& e) {
        CHECK(e.code() == ChannelErrc::InsufficientBalance);
    }
}

TEST_CASE("redeem of an outgoing HTLC by its sender")
{
    ChannelPair p;
    p.open();
    auto [x, y] = p.secret();
    p.update(p.alice, UpdateInput::add(y, 10, 150));
    try {
        begin_update(p.a, p.ctx, UpdateInput::redeem(x), p.now);
        FAIL("expected UnknownHtlc");
    } catch (const ChannelError& e) {
        CHECK(e.code() == ChannelErrc::UnknownHtlc);
    }
}

TEST_CASE("bad commitment signature aborts and keeps state n")
{
    ChannelPair p;
    p.open();
    auto [x, y] = p.secret();
    p.drop = [&](const ChannelMessage& m) {
        if (m.kind() != MessageKind::CommitmentSigned || m.to != p.bob) return false;
        auto forged = m;
        std::get<msg::CommitmentSigned>(forged.body).commitment_sig = Signature{p.rng.next_digest()};
        CHECK_THROWS_AS(handle_message(p.b, p.ctx, forged, p.now), ChannelError);
        return true;
    };
    p.update(p.alice, UpdateInput::add(y, 10, 150));
    CHECK(p.b.n == 1);
    CHECK(p.b.phase == Phase::Operational);
    CHECK(p.b.current().htlcs.empty());
    CHECK(p.b.revealed.empty());
}

TEST_CASE("update aborted at any message keeps both sides on a mutually signed state")
{
    for (auto stop : {MessageKind::UpdateAdd, MessageKind::CommitmentSigned, MessageKind::RevokeAndAck}) {
        for (int occurrence = 0; occurrence < 2; ++occurrence) {
            ChannelPair p;
            p.open();
            p.pay(p.alice, 20, 40);
            const auto n = p.a.n;
            int seen = 0;
            bool dropping = false;
            p.drop = [&](const ChannelMessage& m) {
                if (m.kind() == stop && seen++ == occurrence) dropping = true;
                return dropping;
            };
            auto [x, y] = p.secret();
            p.update(p.alice, UpdateInput::add(y, 10, 150));
            // Both still hold signed commitments for state n.
            CHECK(p.a.held.contains(n));
            CHECK(p.b.held.contains(n));
            const bool a_revoked = p.a.revealed.contains(n);
            const bool b_revoked = p.b.revealed.contains(n);
            // Whoever revoked n must hold a signed commitment for n + 1.
            if (a_revoked) CHECK(p.a.held.contains(n + 1));
            if (b_revoked) CHECK(p.b.held.contains(n + 1));
            if (!a_revoked) CHECK_FALSE(p.b.other_revocation_secret.contains(n));
            if (!b_revoked) CHECK_FALSE(p.a.other_revocation_secret.contains(n));
        }
    }
}

TEST_CASE("concurrent updates resolve to the smaller user id")
{
    ChannelPair p;
    p.open();
    p.pay(p.alice, 50, 40);
    auto [x1, y1] = p.secret();
    auto [x2, y2] = p.secret();
    auto ra = begin_update(p.a, p.ctx, UpdateInput::add(y1, 5, 150), p.now);
    auto rb = begin_update(p.b, p.ctx, UpdateInput::add(y2, 7, 150), p.now);
    for (auto& m : rb.send) p.wire.push_back(m);
    for (auto& m : ra.send) p.wire.push_back(m);
    std::optional<UpdateInput> yielded;
    while (!p.wire.empty()) {
        auto m = p.wire.front();
        p.wire.pop_front();
        auto r = handle_message(p.endpoint(m.to), p.ctx, m, p.now);
        if (r.yielded) yielded = r.yielded;
        for (auto& s : r.send) p.wire.push_back(s);
    }
    REQUIRE(yielded);
    CHECK(yielded->image == y2);
    CHECK(p.a.phase == Phase::Operational);
    CHECK(p.b.phase == Phase::Operational);
    CHECK(p.a.current().find(y1) != nullptr);
    CHECK(p.b.current().find(y1) != nullptr);
    CHECK(p.a.current().find(y2) == nullptr);
    p.update(p.bob, *yielded);
    CHECK(p.a.current().find(y2) != nullptr);
}

TEST_CASE("holder symmetry: Bob's own commitment equals Alice's view of it")
{
    ChannelPair p;
    p.open();
    p.pay(p.alice, 30, 40);
    auto [x, y] = p.secret();
    p.update(p.alice, UpdateInput::add(y, 10, 150));
    auto [x2, y2] = p.secret();
    p.update(p.bob, UpdateInput::add(y2, 5, 140));
    const auto n = p.a.n;

    // Oracle: take Alice's own parameters and swap every role by hand.
    auto mine = commitment_params(p.a, n, Holder::Self);
    CommitmentParams swapped = mine;
    std::swap(swapped.holder_key, swapped.other_key);
    std::swap(swapped.holder_stable, swapped.other_stable);
    swapped.holder_revocation = p.a.other_revocation.at(n);
    for (auto& h : swapped.htlcs) h.direction = h.direction == Direction::Outgoing ? Direction::Incoming : Direction::Outgoing;

    auto from_bob = build_commitment_transaction(p.b, n, Holder::Self);
    CHECK(describe(build_commitment(swapped)) == describe(from_bob));
    CHECK(describe(build_commitment_transaction(p.a, n, Holder::Counterparty)) == describe(from_bob));
    CHECK(describe(build_commitment_transaction(p.b, n, Holder::Counterparty)) ==
          describe(build_commitment_transaction(p.a, n, Holder::Self)));
}

TEST_CASE("second-stage transactions on the ledger")
{
    ChannelPair p;
    p.open();
    p.pay(p.alice, 30, 40);
    auto [x, y] = p.secret();
    p.update(p.alice, UpdateInput::add(y, 10, 150));
    p.update(p.bob, UpdateInput::add(p.secret().second, 1, 150));
    auto [x3, y3] = p.secret();
    p.update(p.bob, UpdateInput::add(y3, 4, 150));

    auto txs = close_channel(p.a, p.ctx.keys, p.now);
    REQUIRE(txs.size() == 1);
    p.ledger.submit(txs[0], p.alice, p.now, 1);
    p.advance(p.now + 1);
    const auto n = p.a.n;
    const auto& held = p.a.held.at(n);
    const auto& terms = p.a.terms_of(n);

    std::size_t out_i = 0, in_i = 0;
    for (std::size_t i = 0; i < terms.htlcs.size(); ++i) {
        if (terms.htlcs[i].image == y) out_i = i;
        if (terms.htlcs[i].image == y3) in_i = i;
    }

    SUBCASE("timeout transaction becomes valid exactly at the timeout")
    {
        auto tt = held.htlc_txs.at(out_i);
        add_signature(tt, 0, p.a.key, p.ctx.keys);
        CHECK(p.ledger.validate(tt, 149).reason == InvalidReason::LockTime);
        CHECK(p.ledger.validate(tt, 150).valid());
    }
    SUBCASE("success transaction needs the preimage")
    {
        auto ts = held.htlc_txs.at(in_i);
        add_signature(ts, 0, p.a.key, p.ctx.keys);
        CHECK(p.ledger.validate(ts, p.now).reason == InvalidReason::ConditionUnsatisfied);
        add_preimage(ts, 0, x3);
        CHECK(p.ledger.validate(ts, p.now).valid());
    }
    SUBCASE("success transaction cannot borrow the counterparty's timeout branch")
    {
        // Bob's signature on t_S must not count for his own "after T" branch of the same output.
        auto ts = held.htlc_txs.at(in_i);
        add_signature(ts, 0, p.a.key, p.ctx.keys);
        const Tick t = terms.htlcs[in_i].timeout;
        CHECK(p.ledger.validate(ts, t).reason == InvalidReason::ConditionUnsatisfied);
        CHECK(p.ledger.validate(ts, t + 100).reason == InvalidReason::ConditionUnsatisfied);
    }
    SUBCASE("revocation branch of a timeout output")
    {
        auto tt = held.htlc_txs.at(out_i);
        add_signature(tt, 0, p.a.key, p.ctx.keys);
        p.advance(150);
        p.ledger.submit(tt, p.alice, 150, 1);
        p.advance(151);
        REQUIRE(p.ledger.status(tt.id()).status == TxStatus::Confirmed);
        // Pretend Alice had revoked state n.
        const auto& rev = p.a.own_revocation.at(n);
        Transaction punish;
        punish.inputs.push_back(TxIn{OutPoint{tt.id(), 0}, {}});
        punish.outputs.push_back(TxOut{10, Condition::sig(p.b.key.pub)});
        add_signature(punish, 0, p.b.key, p.ctx.keys);
        add_signature(punish, 0, rev, p.ctx.keys);
        CHECK(p.ledger.validate(punish, 151).valid());
    }
}

TEST_CASE("close without HTLCs submits one transaction")
{
    ChannelPair p;
    p.open();
    auto txs = close_channel(p.a, p.ctx.keys, p.now);
    CHECK(txs.size() == 1);
    CHECK(p.a.phase == Phase::Closing);
    CHECK(p.ledger.validate(txs[0], p.now).valid());
    CHECK_THROWS_AS(close_channel(p.a, p.ctx.keys, p.now), ChannelError);
}

TEST_CASE("close includes success transactions with known preimages")
{
    ChannelPair p;
    p.open();
    auto [x, y] = p.secret();
    p.update(p.alice, UpdateInput::add(y, 10, 150));
    learn_preimage(p.b, x);
    auto txs = close_channel(p.b, p.ctx.keys, p.now);
    REQUIRE(txs.size() == 2);
    p.ledger.submit(txs[0], p.bob, p.now, 1);
    p.ledger.submit(txs[1], p.bob, p.now, 1);
    p.advance(p.now + 3);
    CHECK(p.ledger.status(txs[1].id()).status == TxStatus::Confirmed);
}

TEST_CASE("deadline rule")
{
    ChannelPair p;
    p.open();
    auto [x, y] = p.secret();
    p.update(p.alice, UpdateInput::add(y, 10, 100));
    CHECK_FALSE(deadline_reached(p.a, p.timing, 93));
    CHECK(deadline_reached(p.a, p.timing, 94));
    CHECK(deadline_reached(p.b, p.timing, 94));
}

TEST_CASE("correct balance")
{
    ChannelPair p;
    p.open();
    p.pay(p.alice, 40, 40);
    auto [x, y] = p.secret();
    p.update(p.alice, UpdateInput::add(y, 10, 150));
    CHECK(p.a.current().stable_self == 50);
    CHECK(correct_balance(p.a) == 60);
    CHECK(correct_balance(p.b) == 40);
    learn_preimage(p.a, x);
    learn_preimage(p.b, x);
    CHECK(correct_balance(p.a) == 50);
    CHECK(correct_balance(p.b) == 50);

    ChannelPair q;
    q.open();
    CHECK(correct_balance(q.a) == 100);
    CHECK(correct_balance(q.b) == 0);
}

namespace {

std::vector<Transaction> run_watch(ChannelPair& p, ChannelState& ch, UserId who)
{
    std::set<OutPoint> reserved;
    auto visible = p.ledger.visible_transactions(who, p.now);
    auto out = watch_ledger(ch, p.ctx, WatchInput{visible, p.now, reserved, nullptr});
    std::vector<Transaction> txs;
    for (auto& c : out.claims) txs.push_back(c.tx);
    return txs;
}

} // namespace

TEST_CASE("outdated counterparty commitment is revoked in one transaction")
{
    ChannelPair p;
    p.open();
    p.pay(p.alice, 40, 40);
    auto outdated = p.b.held.at(3).commitment;
    add_signature(outdated, 0, p.b.key, p.ctx.keys);
    auto [x, y] = p.secret();
    p.update(p.alice, UpdateInput::add(y, 10, 150));

    p.ledger.submit(outdated, p.bob, p.now, 1);
    p.advance(p.now + 1 + p.timing.sync);
    auto claims = run_watch(p, p.a, p.alice);
    REQUIRE(claims.size() == 1);
    CHECK(claims[0].inputs.size() == outdated.outputs.size());
    CHECK(claims[0].output_total() == 100);
    CHECK(p.ledger.validate(claims[0], p.now).valid());
}

TEST_CASE("latest counterparty commitment: stable claimed immediately")
{
    ChannelPair p;
    p.open();
    p.pay(p.alice, 40, 40);
    auto latest = p.b.held.at(p.b.n).commitment;
    add_signature(latest, 0, p.b.key, p.ctx.keys);
    p.ledger.submit(latest, p.bob, p.now, 1);
    p.advance(p.now + 1 + p.timing.sync);
    auto claims = run_watch(p, p.a, p.alice);
    REQUIRE(claims.size() == 1);
    CHECK(claims[0].output_total() == 60);
    CHECK(p.ledger.validate(claims[0], p.now).valid());
}

TEST_CASE("preimage extracted from a counterparty success transaction")
{
    ChannelPair p;
    p.open();
    auto [x, y] = p.secret();
    p.update(p.alice, UpdateInput::add(y, 10, 150));
    learn_preimage(p.b, x);
    auto txs = close_channel(p.b, p.ctx.keys, p.now);
    for (auto& t : txs) p.ledger.submit(t, p.bob, p.now, 1);
    p.advance(p.now + 4);
    std::set<OutPoint> reserved;
    auto visible = p.ledger.visible_transactions(p.alice, p.now);
    auto out = watch_ledger(p.a, p.ctx, WatchInput{visible, p.now, reserved, nullptr});
    REQUIRE(out.learned.size() == 1);
    CHECK(out.learned[0] == x);
    CHECK(p.a.preimages.contains(y));
    CHECK(correct_balance(p.a) == 90);
}

TEST_CASE("property: random update sequences keep the channel invariants")
{
    std::mt19937_64 gen(2024);
    for (int round = 0; round < 20; ++round) {
        ChannelPair p;
        p.open();
        std::vector<std::pair<Preimage, UserId>> open_htlcs; // (x, sender)
        for (int step = 0; step < 12; ++step) {
            const bool redeem = !open_htlcs.empty() && gen() % 2;
            try {
                if (redeem) {
                    auto idx = gen() % open_htlcs.size();
                    auto [x, sender] = open_htlcs[idx];
                    p.update(sender == p.alice ? p.bob : p.alice, UpdateInput::redeem(x));
                    open_htlcs.erase(open_htlcs.begin() + static_cast<long>(idx));
                } else {
                    UserId from = gen() % 2 ? p.alice : p.bob;
                    Coins stable = p.endpoint(from).current().stable_self;
                    if (stable == 0) continue;
                    auto [x, y] = p.secret();
                    p.update(from, UpdateInput::add(y, 1 + gen() % stable, 500));
                    open_htlcs.emplace_back(x, from);
                }
            } catch (const ChannelError&) {
                FAIL("honest update failed");
            }
            for (auto* ch : {&p.a, &p.b}) {
                // Capacity conservation.
                CHECK(ch->current().total() == 100);
                // Revocation exclusivity.
                CHECK_FALSE(ch->revealed.contains(ch->n));
                for (std::uint64_t i = 1; i < ch->n; ++i) CHECK(ch->revealed.contains(i));
                // Well-formed commitment with an escape hatch on every holder output.
                for (auto holder : {Holder::Self, Holder::Counterparty}) {
                    auto params = commitment_params(*ch, ch->n, holder);
                    auto tx = build_commitment(params);
                    CHECK(tx.output_total() == 100);
                    auto layout = commitment_layout(params);
                    for (std::size_t j = 0; j < layout.size(); ++j) {
                        CHECK(well_formed(tx.outputs[j].condition));
                        if (layout[j].role != OutputRole::OtherStable && params.holder_revocation)
                            CHECK(has_revocation_escape(tx.outputs[j].condition, *params.holder_revocation));
                    }
                }
            }
            // Held commitment carries a valid counterparty signature.
            auto held = p.a.held.at(p.a.n).commitment;
            CHECK(p.ring->verify(p.b.key.pub, held.id(), held.inputs[0].witness.signatures.at(0).second));
        }
    }
}

TEST_CASE("property: every outdated counterparty commitment is punishable")
{
    ChannelPair p;
    p.open();
    p.pay(p.alice, 30, 40);
    auto [x, y] = p.secret();
    p.update(p.alice, UpdateInput::add(y, 10, 150));
    p.pay(p.bob, 5, 140);
    auto [x2, y2] = p.secret();
    p.update(p.bob, UpdateInput::add(y2, 3, 150));
    const auto n = p.a.n;
    for (std::uint64_t i = 1; i < n; ++i) {
        CHECK(p.a.other_revocation_secret.contains(i));
        ChannelPair q = p; // fresh ledger view per attempt
        auto old = q.b.held.at(i).commitment;
        add_signature(old, 0, q.b.key, q.ctx.keys);
        q.ledger.submit(old, q.bob, q.now, 1);
        q.advance(q.now + 1 + q.timing.sync);
        auto claims = run_watch(q, q.a, q.alice);
        REQUIRE(claims.size() == 1);
        CHECK(claims[0].output_total() == 100);
        CHECK(q.ledger.validate(claims[0], q.now).valid());
    }
}
