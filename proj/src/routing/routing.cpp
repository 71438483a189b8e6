#include "pcn/routing.hpp"

#include <algorithm>

namespace pcn {

std::string to_string(TimeoutMode m)
{
    return m == TimeoutMode::Staggered ? "staggered" : "constant";
}

std::optional<TimeoutMode> timeout_mode_from_string(const std::string& s)
{
    if (s == "staggered") return TimeoutMode::Staggered;
    if (s == "constant") return TimeoutMode::ConstantTimeout;
    return std::nullopt;
}

std::string to_string(PaymentOutcome::Kind k)
{
    switch (k) {
    case PaymentOutcome::Kind::Completed: return "completed";
    case PaymentOutcome::Kind::PartiallyLocked: return "partially_locked";
    case PaymentOutcome::Kind::Failed: return "failed";
    }
    return "?";
}

RoutingError::RoutingError(RoutingErrc code, std::size_t hop, const std::string& what)
    : std::runtime_error(what), code_(code), hop_(hop)
{
}

UpdateInput PaymentPlan::add_input(std::size_t hop) const
{
    return UpdateInput::add(image, amount, timeouts.at(hop), lock());
}

std::optional<std::size_t> PaymentPlan::position(UserId u) const
{
    auto it = std::find(path.begin(), path.end(), u);
    if (it == path.end()) return std::nullopt;
    return static_cast<std::size_t>(it - path.begin());
}

PaymentPlan plan_payment(const std::vector<UserId>& path, Coins amount, Tick now, TimeoutMode mode,
                         const TimingParams& timing, Rng& rng, const ChannelLookup& lookup)
{
    if (path.size() < 2) throw RoutingError(RoutingErrc::PathBroken, 0, "path needs at least two users");
    if (auto v = timing.structural_violation()) throw RoutingError(RoutingErrc::InvalidTiming, 0, *v);
    const std::size_t n = path.size() - 1;
    for (std::size_t i = 0; i < n; ++i) {
        const ChannelState* ch = lookup(path[i], path[i + 1]);
        if (!ch || ch->phase != Phase::Operational)
            throw RoutingError(RoutingErrc::PathBroken, i, "no operational channel at hop " + std::to_string(i));
        if (ch->current().stable_self < amount)
            throw RoutingError(RoutingErrc::InsufficientCapacity, i,
                               "hop " + std::to_string(i) + " has " + std::to_string(ch->current().stable_self));
    }

    PaymentPlan p;
    p.path = path;
    p.amount = amount;
    p.secret = Preimage{rng.next_digest()};
    p.image = hash_preimage(p.secret);
    p.mode = mode;
    p.start = now;
    for (std::size_t i = 0; i < n; ++i)
        p.timeouts.push_back(mode == TimeoutMode::Staggered ? now + (n - i) * timing.forw : now + n * timing.forw);
    return p;
}

namespace {

bool on_hop(const Event& e, const ChannelId& c, const HashImage& y)
{
    return e.channel && *e.channel == c && e.image && *e.image == y;
}

std::optional<std::size_t> find_index(const EventTrace& trace, EventKind kind, const ChannelId& c, const HashImage& y,
                                      const std::string& detail = {})
{
    const auto& ev = trace.events();
    for (std::size_t i = 0; i < ev.size(); ++i)
        if (ev[i].kind == kind && on_hop(ev[i], c, y) && (detail.empty() || ev[i].detail == detail)) return i;
    return std::nullopt;
}

} // namespace

PaymentOutcome payment_outcome(const EventTrace& trace, const PaymentPlan& plan,
                               const std::vector<ChannelId>& channels)
{
    PaymentOutcome out;
    for (const auto& e : trace.events())
        if (e.kind == EventKind::Payment && e.image && *e.image == plan.image && e.detail == "failed") {
            out.kind = PaymentOutcome::Kind::Failed;
            out.reason = "planning failed";
            return out;
        }
    if (channels.empty() || !find_index(trace, EventKind::HtlcAdded, channels[0], plan.image)) {
        out.kind = PaymentOutcome::Kind::Failed;
        out.reason = "first hop never added";
        return out;
    }
    if (auto r = find_index(trace, EventKind::HtlcResolved, channels[0], plan.image)) {
        const auto& d = trace.events()[*r].detail;
        if (d == "redeemed" || d == "success") {
            out.kind = PaymentOutcome::Kind::Completed;
            return out;
        }
    }
    out.kind = PaymentOutcome::Kind::PartiallyLocked;
    for (std::size_t i = 0; i < channels.size(); ++i)
        if (!find_index(trace, EventKind::HtlcAdded, channels[i], plan.image)) {
            out.stalled_hop = i;
            out.reason = "add stalled";
            return out;
        }
    for (std::size_t i = channels.size(); i-- > 0;)
        if (!find_index(trace, EventKind::HtlcResolved, channels[i], plan.image, "redeemed")) {
            out.stalled_hop = i;
            out.reason = "redeem stalled";
            return out;
        }
    return out;
}

std::vector<HopLockTime> collateral_lock_time(const EventTrace& trace, const PaymentPlan& plan,
                                              const std::vector<ChannelId>& channels)
{
    const auto& ev = trace.events();
    std::vector<HopLockTime> out;
    for (std::size_t i = 0; i < channels.size(); ++i) {
        HopLockTime h;
        h.hop = i;
        auto a = find_index(trace, EventKind::UpdateDone, channels[i], plan.image, "add");
        auto r = find_index(trace, EventKind::HtlcResolved, channels[i], plan.image);
        if (a) h.added = ev[*a].tick;
        if (r) h.resolved = ev[*r].tick;
        if (a && r) {
            h.ticks = *h.resolved - *h.added;
            for (std::size_t k = *a; k <= *r; ++k)
                if (ev[k].kind == EventKind::UpdateDone && ev[k].image && *ev[k].image == plan.image) ++h.round_trips;
        }
        out.push_back(h);
    }
    return out;
}

} // namespace pcn
