#pragma once

#include "pcn/sim.hpp"

#include <string>
#include <vector>

namespace pcn::testing {

// Users u0..un-1 along a line; each funds a channel to the next one.
inline ScenarioConfig line_config(std::size_t users, Coins funds, Coins capacity, Tick horizon,
                                  LedgerMode mode = LedgerMode::AffectedUserSync)
{
    ScenarioConfig c;
    c.ledger_mode = mode;
    c.horizon = horizon;
    for (std::size_t i = 0; i < users; ++i) c.users.push_back({"u" + std::to_string(i), funds});
    for (std::size_t i = 0; i + 1 < users; ++i)
        c.channels.push_back({"u" + std::to_string(i), "u" + std::to_string(i + 1), capacity, 0, std::nullopt});
    return c;
}

inline std::vector<UserId> path_ids(std::size_t users)
{
    std::vector<UserId> p;
    for (std::size_t i = 0; i < users; ++i) p.push_back(UserId{static_cast<std::uint32_t>(i)});
    return p;
}

inline ChannelLookup sim_lookup(const Simulation& sim)
{
    return [&sim](UserId from, UserId to) -> const ChannelState* {
        const auto& chans = sim.config().channels;
        for (std::size_t i = 0; i < chans.size(); ++i) {
            const auto f = sim.config().user_id(chans[i].funder);
            const auto p = sim.config().user_id(chans[i].peer);
            if ((f == from && p == to) || (f == to && p == from))
                return sim.endpoint(from, ChannelId{static_cast<std::uint32_t>(i)});
        }
        return nullptr;
    };
}

inline void step_until(Simulation& sim, Tick t)
{
    while (sim.now() < t && sim.step()) {
    }
}

inline Coins sum_amounts(const RunResult& run, EventKind kind, UserId user)
{
    Coins s = 0;
    for (const auto& e : run.trace.events())
        if (e.kind == kind && e.user == user) s += e.amount.value_or(0);
    return s;
}

} // namespace pcn::testing
