#include "pcn/sim.hpp"

#include <algorithm>

namespace pcn {

Tick security_deadline(const TimingParams& timing, Tick t_close, std::optional<Tick> htlc_max)
{
    return std::max(htlc_max.value_or(t_close), t_close) + 2 * timing.conf + timing.comm;
}

namespace {

std::optional<Tick> first_close(const RunResult& run, UserId user, UserId other, ChannelId channel)
{
    std::optional<Tick> t;
    for (const auto& e : run.trace.events()) {
        if (!e.channel || *e.channel != channel || !e.user) continue;
        const bool own_close = e.kind == EventKind::CloseInitiated && *e.user == user;
        const bool their_commitment =
            e.kind == EventKind::Submitted && *e.user == other && e.detail == "commitment";
        if (own_close || their_commitment) {
            t = e.tick;
            break;
        }
    }
    return t;
}

const EndpointSnapshot* snapshot_at(const ChannelRecord& rec, UserId user, Tick t)
{
    auto it = rec.snapshots.find(user);
    if (it == rec.snapshots.end() || it->second.empty()) return nullptr;
    auto s = it->second.upper_bound(t);
    if (s == it->second.begin()) return nullptr;
    return &std::prev(s)->second;
}

bool learned_by(const RunResult& run, UserId user, ChannelId channel, const HashImage& y, Tick by)
{
    for (const auto& e : run.trace.events()) {
        if (e.tick > by) break;
        if (!e.image || *e.image != y) continue;
        if (e.kind == EventKind::PreimageLearned && e.user && *e.user == user) return true;
        if (e.kind == EventKind::HtlcResolved && e.channel && *e.channel == channel &&
            (e.detail == "success" || e.detail == "redeemed"))
            return true;
    }
    return false;
}

} // namespace

Verdict check_security(const RunResult& run, const ScenarioConfig& cfg, UserId user, ChannelId channel,
                       std::optional<Tick> t_close)
{
    if (channel.value >= run.channels.size())
        throw SecurityError(SecurityErrc::ChannelUnknown, "no channel " + std::to_string(channel.value));
    const ChannelRecord& rec = run.channels[channel.value];
    if (user != rec.funder && user != rec.peer)
        throw SecurityError(SecurityErrc::ChannelUnknown,
                            "user " + std::to_string(user.value) + " is not an endpoint of channel " +
                                std::to_string(channel.value));
    if (!cfg.honest(user))
        throw SecurityError(SecurityErrc::NotHonest, "user " + std::to_string(user.value) + " is not honest");
    const UserId other = user == rec.funder ? rec.peer : rec.funder;

    Verdict v;
    if (!t_close) t_close = first_close(run, user, other, channel);
    if (!t_close) return v;
    const EndpointSnapshot* snap = snapshot_at(rec, user, *t_close);
    if (!snap || snap->phase == Phase::Opening) return v;
    v.closed = true;
    v.t_close = *t_close;

    std::optional<Tick> htlc_max;
    for (const auto* list : {&snap->terms.htlcs, &snap->pending_htlcs})
        for (const auto& h : *list) htlc_max = std::max(htlc_max.value_or(0), h.timeout);
    v.deadline = security_deadline(cfg.timing, v.t_close, htlc_max);

    v.correct_balance = snap->terms.stable_self;
    for (const auto& h : snap->terms.htlcs) {
        if (h.direction == Direction::Outgoing) {
            if (!h.known_preimage && !learned_by(run, user, channel, h.image, v.deadline))
                v.correct_balance += h.amount;
        } else if (h.known_preimage) {
            v.correct_balance += h.amount;
        }
    }

    for (const auto& e : run.trace.events()) {
        if (e.kind != EventKind::Sweep || !e.user || *e.user != user || !e.channel || *e.channel != channel) continue;
        v.last_sweep = e.tick;
        if (e.tick <= v.deadline) v.received += e.amount.value_or(0);
        v.evidence.push_back(format_event(e));
    }
    if (v.received < v.correct_balance) {
        v.secure = false;
        v.shortfall = v.correct_balance - v.received;
    }
    return v;
}

std::vector<std::pair<UserId, Verdict>> check_all(const RunResult& run, const ScenarioConfig& cfg,
                                                  std::vector<ChannelId>* channels)
{
    std::vector<std::pair<UserId, Verdict>> out;
    for (const auto& rec : run.channels)
        for (UserId u : {rec.funder, rec.peer}) {
            if (!cfg.honest(u)) continue;
            out.emplace_back(u, check_security(run, cfg, u, rec.id));
            if (channels) channels->push_back(rec.id);
        }
    return out;
}

} // namespace pcn
