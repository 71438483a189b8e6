#include "doctest.h"

#include "pcn/ledger.hpp"

#include <algorithm>

using namespace pcn;

namespace {

struct Fixture {
    std::shared_ptr<KeyRing> ring = std::make_shared<KeyRing>();
    Rng rng{7};
    UserId alice{0}, bob{1}, carol{2};
    KeyPair ka = ring->generate(alice, KeyRole::Wallet, rng);
    KeyPair kb = ring->generate(bob, KeyRole::Wallet, rng);
    KeyPair kc = ring->generate(carol, KeyRole::Wallet, rng);

    Ledger make(LedgerMode mode = LedgerMode::AffectedUserSync)
    {
        Ledger l(TimingParams{}, mode, ring);
        l.register_user(alice);
        l.register_user(bob);
        l.register_user(carol);
        return l;
    }

    Transaction spend(const OutPoint& op, Coins amount, const Condition& to, const KeyPair& signer)
    {
        Transaction tx;
        tx.inputs.push_back(TxIn{op, {}});
        tx.outputs.push_back(TxOut{amount, to});
        add_signature(tx, 0, signer, *ring);
        return tx;
    }
};

bool visible(const Ledger& l, UserId u, Tick now, const TxId& id)
{
    auto v = l.visible_transactions(u, now);
    return std::any_of(v.begin(), v.end(), [&](const VisibleTx& x) { return x.txid == id; });
}

} // namespace

TEST_CASE("relative delay boundary")
{
    Fixture f;
    Transaction dummy;
    Witness w;
    w.signatures.emplace_back(f.ka.pub, f.ring->sign(f.ka.secret, dummy.id()));
    auto c = Condition::all_of({Condition::sig(f.ka.pub), Condition::relative_delay(20)});
    const TxId id = dummy.id();
    CHECK_FALSE(evaluate_condition(c, SpendContext{w, id, 30, 30, nullptr, *f.ring}));
    CHECK_FALSE(evaluate_condition(c, SpendContext{w, id, 30, 49, nullptr, *f.ring}));
    CHECK(evaluate_condition(c, SpendContext{w, id, 30, 50, nullptr, *f.ring}));
}

TEST_CASE("empty witness does not satisfy a signature")
{
    Fixture f;
    Witness w;
    TxId id;
    CHECK_FALSE(evaluate_condition(Condition::sig(f.ka.pub), SpendContext{w, id, 0, 0, nullptr, *f.ring}));
}

TEST_CASE("signature over a different transaction is rejected")
{
    Fixture f;
    Transaction a, b;
    a.outputs.push_back(TxOut{1, Condition::sig(f.ka.pub)});
    b.outputs.push_back(TxOut{2, Condition::sig(f.ka.pub)});
    Witness w;
    w.signatures.emplace_back(f.ka.pub, f.ring->sign(f.ka.secret, a.id()));
    const TxId bid = b.id();
    CHECK_FALSE(evaluate_condition(Condition::sig(f.ka.pub), SpendContext{w, bid, 0, 0, nullptr, *f.ring}));
}

TEST_CASE("preimage branch with signature")
{
    Fixture f;
    Preimage x{f.rng.next_digest()};
    auto y = hash_preimage(x);
    auto c = Condition::any_of({Condition::all_of({Condition::sig(f.kb.pub), Condition::preimage(y)}),
                                Condition::all_of({Condition::sig(f.ka.pub), Condition::absolute_time(100)})});
    TxId id;
    Witness w;
    w.signatures.emplace_back(f.kb.pub, f.ring->sign(f.kb.secret, id));
    w.preimages.push_back(x);
    CHECK(evaluate_condition(c, SpendContext{w, id, 0, 0, nullptr, *f.ring}));
    w.preimages = {Preimage{f.rng.next_digest()}};
    CHECK_FALSE(evaluate_condition(c, SpendContext{w, id, 0, 0, nullptr, *f.ring}));
}

TEST_CASE("absolute time is judged by the spending transaction's lock time")
{
    Fixture f;
    auto c = Condition::all_of({Condition::sig(f.ka.pub), Condition::absolute_time(100)});
    TxId id;
    Witness w;
    w.signatures.emplace_back(f.ka.pub, f.ring->sign(f.ka.secret, id));
    CHECK_FALSE(evaluate_condition(c, SpendContext{w, id, 0, 500, nullptr, *f.ring, 0}));
    CHECK_FALSE(evaluate_condition(c, SpendContext{w, id, 0, 500, nullptr, *f.ring, 99}));
    CHECK(evaluate_condition(c, SpendContext{w, id, 0, 100, nullptr, *f.ring, 100}));
    CHECK_FALSE(evaluate_condition(c, SpendContext{w, id, 0, 99, nullptr, *f.ring, 100}));
}

TEST_CASE("lock time is part of the id and gates confirmation")
{
    Transaction a;
    a.outputs.push_back(TxOut{1, Condition::absolute_time(0)});
    Transaction b = a;
    b.lock_time = 7;
    CHECK(a.id() != b.id());
}

TEST_CASE("txid ignores witnesses")
{
    Fixture f;
    auto l = f.make();
    auto g = l.mint({TxOut{50, Condition::sig(f.ka.pub)}});
    Transaction tx;
    tx.inputs.push_back(TxIn{OutPoint{g, 0}, {}});
    tx.outputs.push_back(TxOut{50, Condition::sig(f.kb.pub)});
    auto before = tx.id();
    add_signature(tx, 0, f.ka, *f.ring);
    CHECK(tx.id() == before);
}

TEST_CASE("submission schedules at now plus conf delay")
{
    Fixture f;
    auto l = f.make();
    auto g = l.mint({TxOut{50, Condition::sig(f.ka.pub)}});
    l.advance(10);
    auto tx = f.spend({g, 0}, 50, Condition::sig(f.kb.pub), f.ka);
    auto r = l.submit(tx, f.alice, 10, 5);
    CHECK(r.scheduled == 15);
    CHECK_THROWS_AS(l.submit(tx, f.alice, 10, 0), std::invalid_argument);
    CHECK_THROWS_AS(l.submit(tx, f.alice, 10, 6), std::invalid_argument);
    l.advance(14);
    CHECK(l.status(r.txid).status == TxStatus::Pending);
    l.advance(15);
    CHECK(l.confirmation_tick(r.txid) == 15);
}

TEST_CASE("funding transaction confirms and reaches both parties within sync bound")
{
    Fixture f;
    auto l = f.make();
    auto g = l.mint({TxOut{100, Condition::sig(f.ka.pub)}});
    l.advance(10);
    auto multisig = Condition::all_of({Condition::sig(f.ka.pub), Condition::sig(f.kb.pub)});
    auto tf = f.spend({g, 0}, 100, multisig, f.ka);
    CHECK(l.validate(tf, 10).valid());
    CHECK(l.affected_users(tf) == std::set<UserId>{f.alice, f.bob});
    auto r = l.submit(tf, f.alice, 10, 5);
    l.advance(15);
    CHECK(l.confirmation_tick(r.txid) == 15);
    CHECK_FALSE(visible(l, f.bob, 16, r.txid));
    l.advance(17);
    CHECK(visible(l, f.alice, 17, r.txid));
    CHECK(visible(l, f.bob, 17, r.txid));
    CHECK_FALSE(visible(l, f.carol, 500, r.txid));
    l.advance(1017);
    CHECK(l.confirmation_tick(r.txid) == 15);
}

TEST_CASE("global mode delivers to every user")
{
    Fixture f;
    auto l = f.make(LedgerMode::GlobalSync);
    auto g = l.mint({TxOut{5, Condition::sig(f.ka.pub)}});
    auto tx = f.spend({g, 0}, 5, Condition::sig(f.ka.pub), f.ka);
    CHECK(l.affected_users(tx) == std::set<UserId>{f.alice});
    auto r = l.submit(tx, f.alice, 0, 1);
    l.advance(3);
    CHECK(visible(l, f.alice, 3, r.txid));
    CHECK(visible(l, f.bob, 3, r.txid));
    CHECK(visible(l, f.carol, 3, r.txid));
}

TEST_CASE("visibility boundary and determinism")
{
    Fixture f;
    auto l = f.make();
    l.set_sync_delay_policy([](UserId, const TxId&) { return Tick{2}; });
    auto g = l.mint({TxOut{5, Condition::sig(f.ka.pub)}});
    auto tx = f.spend({g, 0}, 5, Condition::sig(f.kb.pub), f.ka);
    auto r = l.submit(tx, f.alice, 0, 3);
    l.advance(20);
    CHECK_FALSE(visible(l, f.bob, 4, r.txid));
    CHECK(visible(l, f.bob, 5, r.txid));
    auto a = l.visible_transactions(f.bob, 20);
    auto b = l.visible_transactions(f.bob, 20);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].txid == b[i].txid);
}

TEST_CASE("conflicting submissions: exactly one confirms in either order")
{
    // Both submission orders on a two-transaction ledger.
    for (int order = 0; order < 2; ++order) {
        Fixture f;
        auto l = f.make();
        auto g = l.mint({TxOut{10, Condition::sig(f.ka.pub)}});
        auto t1 = f.spend({g, 0}, 10, Condition::sig(f.kb.pub), f.ka);
        auto t2 = f.spend({g, 0}, 10, Condition::sig(f.kc.pub), f.ka);
        l.advance(10);
        const auto& first = order == 0 ? t1 : t2;
        const auto& second = order == 0 ? t2 : t1;
        auto r1 = l.submit(first, f.alice, 10, 5);
        l.advance(11);
        auto r2 = l.submit(second, f.alice, 11, 5);
        l.advance(30);
        CHECK(l.status(r1.txid).status == TxStatus::Confirmed);
        CHECK(l.status(r2.txid).status == TxStatus::Rejected);
        CHECK(l.status(r2.txid).result.reason == InvalidReason::AlreadySpent);
        CHECK(l.status(r2.txid).tick == 16);
    }
}

TEST_CASE("same-tick conflict resolves by submission order")
{
    Fixture f;
    auto l = f.make();
    auto g = l.mint({TxOut{10, Condition::sig(f.ka.pub)}});
    auto t1 = f.spend({g, 0}, 10, Condition::sig(f.kb.pub), f.ka);
    auto t2 = f.spend({g, 0}, 10, Condition::sig(f.kc.pub), f.ka);
    auto r2 = l.submit(t2, f.alice, 0, 3);
    auto r1 = l.submit(t1, f.alice, 0, 3);
    l.advance(5);
    CHECK(l.status(r2.txid).status == TxStatus::Confirmed);
    CHECK(l.status(r1.txid).status == TxStatus::Rejected);
}

TEST_CASE("double submission of the same transaction")
{
    Fixture f;
    auto l = f.make();
    auto g = l.mint({TxOut{10, Condition::sig(f.ka.pub)}});
    auto t = f.spend({g, 0}, 10, Condition::sig(f.kb.pub), f.ka);
    l.submit(t, f.alice, 0, 1);
    l.submit(t, f.alice, 0, 2);
    auto ev = l.advance(5);
    auto rejected = std::count_if(ev.begin(), ev.end(), [](const LedgerEvent& e) {
        return e.kind == LedgerEvent::Kind::Rejected && e.result.reason == InvalidReason::AlreadySpent;
    });
    CHECK(rejected == 1);
    CHECK(l.status(t.id()).status == TxStatus::Confirmed);
}

TEST_CASE("child of a pending parent waits for it")
{
    Fixture f;
    auto l = f.make();
    auto g = l.mint({TxOut{10, Condition::sig(f.ka.pub)}});
    auto parent = f.spend({g, 0}, 10, Condition::sig(f.kb.pub), f.ka);
    auto child = f.spend({parent.id(), 0}, 10, Condition::sig(f.kc.pub), f.kb);
    auto rp = l.submit(parent, f.alice, 0, 5);
    auto rc = l.submit(child, f.bob, 0, 1);
    CHECK(rc.scheduled == 6);
    l.advance(10);
    CHECK(l.confirmation_tick(rp.txid) == 5);
    CHECK(l.confirmation_tick(rc.txid) == 6);
}

TEST_CASE("child of a rejected parent is rejected as unknown outpoint")
{
    Fixture f;
    auto l = f.make();
    auto g = l.mint({TxOut{10, Condition::sig(f.ka.pub)}});
    auto parent = f.spend({g, 0}, 10, Condition::sig(f.kb.pub), f.kb); // wrong signer
    auto child = f.spend({parent.id(), 0}, 10, Condition::sig(f.kc.pub), f.kb);
    l.submit(parent, f.alice, 0, 2);
    l.submit(child, f.bob, 0, 1);
    l.advance(10);
    CHECK(l.status(parent.id()).result.reason == InvalidReason::ConditionUnsatisfied);
    CHECK(l.status(child.id()).result.reason == InvalidReason::UnknownOutpoint);
}

TEST_CASE("validity reasons")
{
    Fixture f;
    auto l = f.make();
    auto g = l.mint({TxOut{10, Condition::sig(f.ka.pub)}});

    Transaction unknown;
    unknown.inputs.push_back(TxIn{OutPoint{TxId{}, 0}, {}});
    unknown.outputs.push_back(TxOut{10, Condition::sig(f.ka.pub)});
    CHECK(l.validate(unknown, 0).reason == InvalidReason::UnknownOutpoint);

    Transaction bad_index;
    bad_index.inputs.push_back(TxIn{OutPoint{g, 3}, {}});
    CHECK(l.validate(bad_index, 0).reason == InvalidReason::UnknownOutpoint);

    auto mismatch = f.spend({g, 0}, 11, Condition::sig(f.kb.pub), f.ka);
    CHECK(l.validate(mismatch, 0).reason == InvalidReason::ValueMismatch);

    auto unsigned_tx = f.spend({g, 0}, 10, Condition::sig(f.kb.pub), f.kb);
    auto v = l.validate(unsigned_tx, 0);
    CHECK(v.reason == InvalidReason::ConditionUnsatisfied);
    CHECK(v.describe() == "ConditionUnsatisfied(0)");

    Transaction twice;
    twice.inputs.push_back(TxIn{OutPoint{g, 0}, {}});
    twice.inputs.push_back(TxIn{OutPoint{g, 0}, {}});
    twice.outputs.push_back(TxOut{20, Condition::sig(f.kb.pub)});
    add_signature(twice, 0, f.ka, *f.ring);
    add_signature(twice, 1, f.ka, *f.ring);
    auto d = l.validate(twice, 0);
    CHECK(d.reason == InvalidReason::AlreadySpent);
    CHECK(d.input_index == 1);
}

TEST_CASE("affected users throws on unresolvable input")
{
    Fixture f;
    auto l = f.make();
    Transaction tx;
    tx.inputs.push_back(TxIn{OutPoint{TxId{}, 0}, {}});
    CHECK_THROWS_AS(l.affected_users(tx), std::out_of_range);
}

TEST_CASE("preimage registry")
{
    Fixture f;
    Preimage x{f.rng.next_digest()};
    auto y = hash_preimage(x);

    auto local = f.make();
    CHECK_THROWS_AS(local.register_preimage(x, 1), std::logic_error);

    auto check = [&](Tick registered, Tick deadline) {
        auto l = f.make(LedgerMode::GlobalSync);
        l.register_preimage(x, registered);
        Witness w;
        TxId id;
        return evaluate_condition(Condition::registered_before(y, deadline),
                                  SpendContext{w, id, 0, 70, &l.preimage_registry(), *f.ring});
    };
    CHECK(check(50, 60));
    CHECK_FALSE(check(60, 60));

    auto l = f.make(LedgerMode::GlobalSync);
    CHECK(l.register_preimage(x, 40) == 40);
    CHECK(l.register_preimage(x, 55) == 40);
    CHECK(l.register_preimage(x, 30) == 30);
}

TEST_CASE("registered-before is never satisfiable without a registry")
{
    Fixture f;
    auto y = hash_preimage(Preimage{f.rng.next_digest()});
    Witness w;
    TxId id;
    CHECK_FALSE(evaluate_condition(Condition::registered_before(y, 100), SpendContext{w, id, 0, 0, nullptr, *f.ring}));
}

TEST_CASE("timing parameter checks")
{
    TimingParams p;
    CHECK_FALSE(p.violation());
    p.user = 13;
    REQUIRE(p.violation());
    CHECK(p.violation()->find("0 < delta_user < delta_comm - delta_sync - delta_conf") != std::string::npos);
    p = TimingParams{};
    p.forw = 7;
    CHECK(p.structural_violation());
    p = TimingParams{};
    p.conf = 0;
    CHECK(p.structural_violation());
}
