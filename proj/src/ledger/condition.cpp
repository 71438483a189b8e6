#include "pcn/condition.hpp"

#include <algorithm>

namespace pcn {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

bool same_children(const std::vector<Condition>& a, const std::vector<Condition>& b)
{
    return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin());
}

} // namespace

bool operator==(const Condition& a, const Condition& b)
{
    if (a.node.index() != b.node.index()) return false;
    return std::visit(
        overloaded{
            [&](const cond::Sig& x) { return x.key == std::get<cond::Sig>(b.node).key; },
            [&](const cond::Preimage& x) { return x.image == std::get<cond::Preimage>(b.node).image; },
            [&](const cond::RelativeDelay& x) { return x.ticks == std::get<cond::RelativeDelay>(b.node).ticks; },
            [&](const cond::AbsoluteTime& x) { return x.at == std::get<cond::AbsoluteTime>(b.node).at; },
            [&](const cond::PreimageRegisteredBefore& x) {
                const auto& y = std::get<cond::PreimageRegisteredBefore>(b.node);
                return x.image == y.image && x.deadline == y.deadline;
            },
            [&](const cond::And& x) { return same_children(x.children, std::get<cond::And>(b.node).children); },
            [&](const cond::Or& x) { return same_children(x.children, std::get<cond::Or>(b.node).children); },
        },
        a.node);
}

bool well_formed(const Condition& c)
{
    return std::visit(overloaded{
                          [](const cond::And& x) {
                              return !x.children.empty() &&
                                     std::all_of(x.children.begin(), x.children.end(),
                                                 [](const Condition& k) { return well_formed(k); });
                          },
                          [](const cond::Or& x) {
                              return x.children.size() >= 2 &&
                                     std::all_of(x.children.begin(), x.children.end(),
                                                 [](const Condition& k) { return well_formed(k); });
                          },
                          [](const auto&) { return true; },
                      },
                      c.node);
}

std::string to_string(const Condition& c)
{
    auto list = [](const char* name, const std::vector<Condition>& kids) {
        std::string s = name;
        s += '(';
        for (std::size_t i = 0; i < kids.size(); ++i) {
            if (i) s += ',';
            s += to_string(kids[i]);
        }
        s += ')';
        return s;
    };
    return std::visit(overloaded{
                          [](const cond::Sig& x) { return "sig:" + x.key.hex(); },
                          [](const cond::Preimage& x) { return "hash:" + x.image.hex(); },
                          [](const cond::RelativeDelay& x) { return "older:" + std::to_string(x.ticks); },
                          [](const cond::AbsoluteTime& x) { return "after:" + std::to_string(x.at); },
                          [](const cond::PreimageRegisteredBefore& x) {
                              return "registered:" + x.image.hex() + "<" + std::to_string(x.deadline);
                          },
                          [&](const cond::And& x) { return list("and", x.children); },
                          [&](const cond::Or& x) { return list("or", x.children); },
                      },
                      c.node);
}

void collect_sig_keys(const Condition& c, std::set<PubKey>& out)
{
    std::visit(overloaded{
                   [&](const cond::Sig& x) { out.insert(x.key); },
                   [&](const cond::And& x) {
                       for (const auto& k : x.children) collect_sig_keys(k, out);
                   },
                   [&](const cond::Or& x) {
                       for (const auto& k : x.children) collect_sig_keys(k, out);
                   },
                   [](const auto&) {},
               },
               c.node);
}

Tick PreimageRegistry::record(const HashImage& image, Tick now)
{
    auto [it, inserted] = entries_.emplace(image, now);
    if (!inserted) it->second = std::min(it->second, now);
    return it->second;
}

std::optional<Tick> PreimageRegistry::registered_at(const HashImage& image) const
{
    auto it = entries_.find(image);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

bool evaluate_condition(const Condition& c, const SpendContext& ctx)
{
    return std::visit(
        overloaded{
            [&](const cond::Sig& x) {
                return std::any_of(ctx.witness.signatures.begin(), ctx.witness.signatures.end(), [&](const auto& s) {
                    return s.first == x.key && ctx.scheme.verify(x.key, ctx.spending_tx, s.second);
                });
            },
            [&](const cond::Preimage& x) {
                return std::any_of(ctx.witness.preimages.begin(), ctx.witness.preimages.end(),
                                   [&](const Preimage& p) { return hash_preimage(p) == x.image; });
            },
            [&](const cond::RelativeDelay& x) {
                return ctx.now >= ctx.spent_conf_tick && ctx.now - ctx.spent_conf_tick >= x.ticks;
            },
            [&](const cond::AbsoluteTime& x) { return ctx.lock_time >= x.at && ctx.now >= ctx.lock_time; },
            [&](const cond::PreimageRegisteredBefore& x) {
                if (!ctx.registry) return false;
                auto at = ctx.registry->registered_at(x.image);
                return at.has_value() && *at < x.deadline;
            },
            [&](const cond::And& x) {
                return !x.children.empty() && std::all_of(x.children.begin(), x.children.end(),
                                                          [&](const Condition& k) { return evaluate_condition(k, ctx); });
            },
            [&](const cond::Or& x) {
                return std::any_of(x.children.begin(), x.children.end(),
                                   [&](const Condition& k) { return evaluate_condition(k, ctx); });
            },
        },
        c.node);
}

} // namespace pcn
