#pragma once

#include "pcn/types.hpp"

#include <optional>
#include <string>
#include <vector>

namespace pcn {

enum class EventKind : std::uint8_t {
    Submitted,
    Confirmed,
    Rejected,
    Delivered,
    MsgSent,
    Watch,
    WatcherAction,
    Sweep,
    UpdateDone,
    CloseInitiated,
    PreimageLearned,
    HtlcAdded,
    HtlcResolved,
    Adversary,
    Payment,
    ProtocolError,
};

std::string to_string(EventKind k);
std::optional<EventKind> event_kind_from_string(const std::string& s);

// One trace line. Unused fields stay empty and are not printed.
struct Event {
    Tick tick = 0;
    EventKind kind = EventKind::Submitted;
    std::optional<UserId> user;
    std::optional<UserId> peer;
    std::optional<ChannelId> channel;
    std::optional<TxId> txid;
    std::optional<HashImage> image;
    std::optional<Coins> amount;
    std::optional<Tick> at; ///< scheduled tick, timeout, or similar
    std::string detail;     ///< single token, no spaces

    bool operator==(const Event&) const = default;
};

/// `<tick> <KIND> [user=U] [peer=U] [channel=C] [tx=HEX16] [image=HEX16] [amount=N] [at=N] [detail=TOKEN]`
std::string format_event(const Event& e);

class EventTrace {
public:
    void push(Event e) { events_.push_back(std::move(e)); }
    const std::vector<Event>& events() const { return events_; }
    std::size_t size() const { return events_.size(); }

    std::string to_text() const;

    template <class Pred>
    std::vector<const Event*> select(Pred&& p) const
    {
        std::vector<const Event*> out;
        for (const auto& e : events_)
            if (p(e)) out.push_back(&e);
        return out;
    }

private:
    std::vector<Event> events_;
};

} // namespace pcn
