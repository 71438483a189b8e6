#pragma once

#include "pcn/channel.hpp"
#include "pcn/trace.hpp"

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace pcn {

enum class TimeoutMode : std::uint8_t {
    Staggered,       ///< T_i = now + (N - i) * Δ_forw
    ConstantTimeout, ///< every hop expires at now + N * Δ_forw; needs the preimage manager
};

std::string to_string(TimeoutMode m);
std::optional<TimeoutMode> timeout_mode_from_string(const std::string& s);

struct PaymentPlan {
    std::vector<UserId> path; ///< I_0 .. I_N
    Coins amount = 0;
    HashImage image;
    Preimage secret; ///< known to the receiver only until it redeems
    std::vector<Tick> timeouts; ///< one per hop (I_i, I_{i+1})
    TimeoutMode mode = TimeoutMode::Staggered;
    Tick start = 0;

    std::size_t hops() const { return path.size() - 1; }
    HtlcLock lock() const { return mode == TimeoutMode::ConstantTimeout ? HtlcLock::Registry : HtlcLock::Hash; }
    UpdateInput add_input(std::size_t hop) const;
    /// Position of `u` on the path, if any.
    std::optional<std::size_t> position(UserId u) const;
};

enum class RoutingErrc : std::uint8_t { InsufficientCapacity, PathBroken, InvalidTiming };

class RoutingError : public std::runtime_error {
public:
    RoutingError(RoutingErrc code, std::size_t hop, const std::string& what);
    RoutingErrc code() const { return code_; }
    std::size_t hop() const { return hop_; }

private:
    RoutingErrc code_;
    std::size_t hop_;
};

/// The sender's endpoint of the channel between `from` and `to`, or null.
using ChannelLookup = std::function<const ChannelState*(UserId from, UserId to)>;

/// Draws x for the receiver and fixes the per-hop timeouts.
PaymentPlan plan_payment(const std::vector<UserId>& path, Coins amount, Tick now, TimeoutMode mode,
                         const TimingParams& timing, Rng& rng, const ChannelLookup& lookup);

struct PaymentOutcome {
    enum class Kind : std::uint8_t { Completed, PartiallyLocked, Failed };
    Kind kind = Kind::Failed;
    std::optional<std::size_t> stalled_hop;
    std::string reason;
};

std::string to_string(PaymentOutcome::Kind k);

/// Reads the outcome of `plan` off a finished trace. `channels[i]` is the channel of hop i.
PaymentOutcome payment_outcome(const EventTrace& trace, const PaymentPlan& plan,
                               const std::vector<ChannelId>& channels);

struct HopLockTime {
    std::size_t hop = 0;
    std::optional<Tick> added;
    std::optional<Tick> resolved;
    Tick ticks = 0;             ///< resolved - added
    std::size_t round_trips = 0; ///< completed updates on the path from this add to this removal, inclusive
};

/// Ticks each hop's HTLC stayed locked: from its add to its off-ledger removal or on-ledger resolution.
std::vector<HopLockTime> collateral_lock_time(const EventTrace& trace, const PaymentPlan& plan,
                                              const std::vector<ChannelId>& channels);

} // namespace pcn
