#pragma once

#include "pcn/crypto.hpp"
#include "pcn/types.hpp"

#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

namespace pcn {

struct Condition;

namespace cond {

struct Sig {
    PubKey key;
};
struct Preimage {
    HashImage image;
};
/// Satisfied once `ticks` have passed since the spent output confirmed.
struct RelativeDelay {
    Tick ticks = 0;
};
struct AbsoluteTime {
    Tick at = 0;
};
/// Satisfied iff the preimage of `image` was registered strictly before `deadline`.
struct PreimageRegisteredBefore {
    HashImage image;
    Tick deadline = 0;
};
struct And {
    std::vector<Condition> children;
};
struct Or {
    std::vector<Condition> children;
};

} // namespace cond

/// Spending rule attached to an output: a finite tree over signatures, hash locks and time locks.
struct Condition {
    using Node = std::variant<cond::Sig, cond::Preimage, cond::RelativeDelay, cond::AbsoluteTime,
                              cond::PreimageRegisteredBefore, cond::And, cond::Or>;
    Node node;

    static Condition sig(const PubKey& key) { return {cond::Sig{key}}; }
    static Condition preimage(const HashImage& image) { return {cond::Preimage{image}}; }
    static Condition relative_delay(Tick ticks) { return {cond::RelativeDelay{ticks}}; }
    static Condition absolute_time(Tick at) { return {cond::AbsoluteTime{at}}; }
    static Condition registered_before(const HashImage& image, Tick deadline)
    {
        return {cond::PreimageRegisteredBefore{image, deadline}};
    }
    static Condition all_of(std::vector<Condition> children) { return {cond::And{std::move(children)}}; }
    static Condition any_of(std::vector<Condition> children) { return {cond::Or{std::move(children)}}; }
};

bool operator==(const Condition& a, const Condition& b);

/// Every Or has at least two children, every And at least one.
bool well_formed(const Condition& c);

/// Canonical text form; also the input to transaction ids.
std::string to_string(const Condition& c);

void collect_sig_keys(const Condition& c, std::set<PubKey>& out);

/// The preimage manager: image -> first registration tick.
class PreimageRegistry {
public:
    Tick record(const HashImage& image, Tick now);
    std::optional<Tick> registered_at(const HashImage& image) const;
    std::size_t size() const { return entries_.size(); }

private:
    std::map<HashImage, Tick> entries_;
};

struct Witness {
    std::vector<std::pair<PubKey, Signature>> signatures;
    std::vector<Preimage> preimages;
};

struct SpendContext {
    const Witness& witness;
    const TxId& spending_tx;
    Tick spent_conf_tick = 0;
    Tick now = 0;
    /// Null when the ledger does not offer a preimage manager.
    const PreimageRegistry* registry = nullptr;
    const SignatureScheme& scheme;
    /// Lock time of the spending transaction; AbsoluteTime(at) needs lock_time >= at.
    Tick lock_time = 0;
};

/// Malformed or missing witness material counts as unsatisfied; never throws.
bool evaluate_condition(const Condition& c, const SpendContext& ctx);

} // namespace pcn
