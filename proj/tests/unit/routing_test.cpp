#include "../support/scenario_builders.hpp"

#include <doctest.h>

#include <random>

using namespace pcn;
using namespace pcn::testing;

namespace {

struct Line {
    Simulation sim;
    explicit Line(std::size_t users, Coins capacity = 100, LedgerMode mode = LedgerMode::AffectedUserSync)
        : sim(line_config(users, 100, capacity, 300, mode))
    {
        step_until(sim, 15);
    }
    PaymentPlan plan(std::size_t users, Coins amount, Tick now, TimeoutMode mode)
    {
        Rng rng(3);
        return plan_payment(path_ids(users), amount, now, mode, TimingParams{}, rng, sim_lookup(sim));
    }
};

} // namespace

TEST_CASE("per-hop timeouts")
{
    Line l(3);
    SUBCASE("two hops at 100")
    {
        const auto p = l.plan(3, 10, 100, TimeoutMode::Staggered);
        REQUIRE(p.timeouts.size() == 2);
        CHECK(p.timeouts[0] == 116);
        CHECK(p.timeouts[1] == 108);
        CHECK(hash_preimage(p.secret) == p.image);
        CHECK(p.lock() == HtlcLock::Hash);
    }
    SUBCASE("direct payment is one HTLC")
    {
        const auto p = l.plan(2, 10, 100, TimeoutMode::Staggered);
        REQUIRE(p.timeouts.size() == 1);
        CHECK(p.timeouts[0] == 108);
    }
    SUBCASE("constant mode shares the deadline")
    {
        const auto p = l.plan(3, 10, 100, TimeoutMode::ConstantTimeout);
        CHECK(p.timeouts == std::vector<Tick>{116, 116});
        CHECK(p.lock() == HtlcLock::Registry);
    }
}

TEST_CASE("staggered timeouts fall by exactly forw toward the receiver")
{
    Line l(6);
    std::mt19937_64 gen(11);
    for (int round = 0; round < 200; ++round) {
        const std::size_t users = 2 + gen() % 5;
        const Tick now = gen() % 1000;
        TimingParams t;
        t.forw = 8 + gen() % 20;
        Rng rng(gen());
        const auto p = plan_payment(path_ids(users), 1 + gen() % 50, now, TimeoutMode::Staggered, t, rng, sim_lookup(l.sim));
        REQUIRE(p.timeouts.size() == users - 1);
        CHECK(p.timeouts.back() == now + t.forw);
        for (std::size_t i = 0; i + 1 < p.timeouts.size(); ++i) CHECK(p.timeouts[i] - p.timeouts[i + 1] == t.forw);
        CHECK(t.forw > t.sync + t.conf);
    }
}

TEST_CASE("planning errors name the hop")
{
    Line l(3, 40);
    SUBCASE("insufficient capacity")
    {
        try {
            l.plan(3, 41, 20, TimeoutMode::Staggered);
            FAIL("no error");
        } catch (const RoutingError& e) {
            CHECK(e.code() == RoutingErrc::InsufficientCapacity);
            CHECK(e.hop() == 0);
        }
    }
    SUBCASE("missing channel")
    {
        Rng rng(1);
        const std::vector<UserId> path{UserId{0}, UserId{2}};
        try {
            plan_payment(path, 1, 20, TimeoutMode::Staggered, TimingParams{}, rng, sim_lookup(l.sim));
            FAIL("no error");
        } catch (const RoutingError& e) {
            CHECK(e.code() == RoutingErrc::PathBroken);
            CHECK(e.hop() == 0);
        }
    }
    SUBCASE("reverse direction has no stable balance")
    {
        Rng rng(1);
        const std::vector<UserId> path{UserId{2}, UserId{1}, UserId{0}};
        try {
            plan_payment(path, 1, 20, TimeoutMode::Staggered, TimingParams{}, rng, sim_lookup(l.sim));
            FAIL("no error");
        } catch (const RoutingError& e) {
            CHECK(e.code() == RoutingErrc::InsufficientCapacity);
            CHECK(e.hop() == 0);
        }
    }
    SUBCASE("too short")
    {
        Rng rng(1);
        CHECK_THROWS_AS(plan_payment({UserId{0}}, 1, 20, TimeoutMode::Staggered, TimingParams{}, rng, sim_lookup(l.sim)),
                        RoutingError);
    }
}

TEST_CASE("honest payments lock each hop for 2(N-i) updates in either mode")
{
    for (auto mode : {TimeoutMode::Staggered, TimeoutMode::ConstantTimeout}) {
        CAPTURE(to_string(mode));
        Line l(4, 100, LedgerMode::GlobalSync);
        const auto out = drive_payment(l.sim, path_ids(4), 10, mode);
        CHECK(out.kind == PaymentOutcome::Kind::Completed);
        const auto run = l.sim.result();
        REQUIRE(run.payments.size() == 1);
        const auto& pr = run.payments[0];
        const auto locks = collateral_lock_time(run.trace, *pr.plan, pr.hops);
        REQUIRE(locks.size() == 3);
        const auto& ev = run.trace.events();
        for (std::size_t i = 0; i < 3; ++i) {
            // Count completed updates carrying y on any path channel, from this hop's add to its removal.
            std::size_t first = ev.size(), last = 0;
            for (std::size_t k = 0; k < ev.size(); ++k) {
                const auto& e = ev[k];
                if (e.channel != pr.hops[i] || e.image != pr.plan->image) continue;
                if (e.kind == EventKind::UpdateDone && e.detail == "add") first = std::min(first, k);
                if (e.kind == EventKind::HtlcResolved) last = std::max(last, k);
            }
            REQUIRE(first < last);
            std::size_t counted = 0;
            for (std::size_t k = first; k <= last; ++k)
                if (ev[k].kind == EventKind::UpdateDone && ev[k].image == pr.plan->image) ++counted;
            CHECK(counted == 2 * (3 - i));
            CHECK(locks[i].round_trips == counted);
            REQUIRE(locks[i].added);
            REQUIRE(locks[i].resolved);
            CHECK(locks[i].ticks == *locks[i].resolved - *locks[i].added);
            CHECK(locks[i].ticks <= 1);
        }
    }
}

TEST_CASE("payment outcome read from the trace")
{
    Line l(3);
    SUBCASE("completed")
    {
        CHECK(drive_payment(l.sim, path_ids(3), 10, TimeoutMode::Staggered).kind == PaymentOutcome::Kind::Completed);
    }
    SUBCASE("unknown first hop is a failure")
    {
        const auto run = l.sim.result();
        const auto p = l.plan(3, 10, 20, TimeoutMode::Staggered);
        const auto o = payment_outcome(run.trace, p, {ChannelId{0}, ChannelId{1}});
        CHECK(o.kind == PaymentOutcome::Kind::Failed);
    }
    SUBCASE("planning failure")
    {
        const auto k = l.sim.start_payment(path_ids(3), 1000, TimeoutMode::Staggered);
        CHECK(l.sim.outcome(k).kind == PaymentOutcome::Kind::Failed);
    }
}

TEST_CASE("timeout mode names")
{
    CHECK(timeout_mode_from_string(to_string(TimeoutMode::Staggered)) == TimeoutMode::Staggered);
    CHECK(timeout_mode_from_string(to_string(TimeoutMode::ConstantTimeout)) == TimeoutMode::ConstantTimeout);
    CHECK_FALSE(timeout_mode_from_string("linear"));
}
