#include "pcn/trace.hpp"

#include <array>
#include <sstream>

namespace pcn {

namespace {

constexpr std::array<const char*, 16> kNames = {
    "SUBMITTED", "CONFIRMED",   "REJECTED",         "DELIVERED",  "MSG_SENT",     "WATCH",     "WATCHER_ACTION", "SWEEP",
    "UPDATE_DONE", "CLOSE_INITIATED", "PREIMAGE_LEARNED", "HTLC_ADDED", "HTLC_RESOLVED", "ADVERSARY", "PAYMENT", "PROTOCOL_ERROR",
};

} // namespace

std::string to_string(EventKind k) { return kNames.at(static_cast<std::size_t>(k)); }

std::optional<EventKind> event_kind_from_string(const std::string& s)
{
    for (std::size_t i = 0; i < kNames.size(); ++i)
        if (s == kNames[i]) return static_cast<EventKind>(i);
    return std::nullopt;
}

std::string format_event(const Event& e)
{
    std::ostringstream os;
    os << e.tick << ' ' << to_string(e.kind);
    if (e.user) os << " user=" << e.user->value;
    if (e.peer) os << " peer=" << e.peer->value;
    if (e.channel) os << " channel=" << e.channel->value;
    if (e.txid) os << " tx=" << e.txid->short_hex();
    if (e.image) os << " image=" << e.image->short_hex();
    if (e.amount) os << " amount=" << *e.amount;
    if (e.at) os << " at=" << *e.at;
    if (!e.detail.empty()) os << " detail=" << e.detail;
    return os.str();
}

std::string EventTrace::to_text() const
{
    std::string out;
    for (const auto& e : events_) {
        out += format_event(e);
        out += '\n';
    }
    return out;
}

} // namespace pcn
