#include "pcn/channel.hpp"

#include <algorithm>

namespace pcn {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void merge(SpendPlan& into, const SpendPlan& from)
{
    for (const auto& k : from.signers)
        if (std::find(into.signers.begin(), into.signers.end(), k) == into.signers.end()) into.signers.push_back(k);
    for (const auto& x : from.preimages)
        if (std::find(into.preimages.begin(), into.preimages.end(), x) == into.preimages.end())
            into.preimages.push_back(x);
    into.lock_time = std::max(into.lock_time, from.lock_time);
}

void sign_input(Transaction& tx, std::size_t input, const SpendPlan& plan, const std::map<PubKey, SecretKey>& secrets,
                const SignatureScheme& scheme)
{
    for (const auto& k : plan.signers) add_signature(tx, input, KeyPair{k, secrets.at(k)}, scheme);
    for (const auto& x : plan.preimages) add_preimage(tx, input, x);
}

struct Spendable {
    OutPoint op;
    Coins amount = 0;
    const Condition* condition = nullptr;
    Tick confirmed_at = 0;
    bool htlc_output = false;
};

} // namespace

std::string to_string(ClaimKind k)
{
    switch (k) {
    case ClaimKind::Sweep: return "sweep";
    case ClaimKind::Timeout: return "timeout";
    case ClaimKind::Success: return "success";
    case ClaimKind::Revocation: return "revocation";
    }
    return "?";
}

std::optional<SpendPlan> plan_spend(const Condition& c, const std::map<PubKey, SecretKey>& secrets,
                                    const std::map<HashImage, Preimage>& preimages, Tick spent_conf_tick, Tick now,
                                    const PreimageRegistry* registry)
{
    using R = std::optional<SpendPlan>;
    return std::visit(
        overloaded{
            [&](const cond::Sig& x) -> R {
                if (!secrets.contains(x.key)) return std::nullopt;
                return SpendPlan{{x.key}, {}};
            },
            [&](const cond::Preimage& x) -> R {
                auto it = preimages.find(x.image);
                if (it == preimages.end()) return std::nullopt;
                return SpendPlan{{}, {it->second}};
            },
            [&](const cond::RelativeDelay& x) -> R {
                if (now < spent_conf_tick || now - spent_conf_tick < x.ticks) return std::nullopt;
                return SpendPlan{};
            },
            [&](const cond::AbsoluteTime& x) -> R {
                if (now < x.at) return std::nullopt;
                return SpendPlan{{}, {}, x.at};
            },
            [&](const cond::PreimageRegisteredBefore& x) -> R {
                if (!registry) return std::nullopt;
                auto at = registry->registered_at(x.image);
                if (!at || *at >= x.deadline) return std::nullopt;
                return SpendPlan{};
            },
            [&](const cond::And& x) -> R {
                if (x.children.empty()) return std::nullopt;
                SpendPlan all;
                for (const auto& k : x.children) {
                    auto p = plan_spend(k, secrets, preimages, spent_conf_tick, now, registry);
                    if (!p) return std::nullopt;
                    merge(all, *p);
                }
                return all;
            },
            [&](const cond::Or& x) -> R {
                for (const auto& k : x.children)
                    if (auto p = plan_spend(k, secrets, preimages, spent_conf_tick, now, registry)) return p;
                return std::nullopt;
            },
        },
        c.node);
}

std::map<PubKey, SecretKey> signing_keys(const ChannelState& ch)
{
    std::map<PubKey, SecretKey> keys;
    keys.emplace(ch.key.pub, ch.key.secret);
    for (const auto& [_, s] : ch.other_revocation_secret) keys.emplace(KeyRing::derive_public(s), s);
    return keys;
}

std::optional<CommitmentClass> classify_commitment(const ChannelState& ch, const TxId& txid)
{
    if (auto it = ch.own_commitments.find(txid); it != ch.own_commitments.end())
        return CommitmentClass{Holder::Self, it->second, ch.revealed.contains(it->second)};
    if (auto it = ch.other_commitments.find(txid); it != ch.other_commitments.end())
        return CommitmentClass{Holder::Counterparty, it->second, ch.other_revocation_secret.contains(it->second)};
    return std::nullopt;
}

WatchOutput watch_ledger(ChannelState& ch, ProtocolContext& ctx, const WatchInput& in)
{
    WatchOutput out;

    std::map<TxId, const VisibleTx*> by_id;
    std::map<OutPoint, TxId> spent;
    for (const auto& v : in.visible) {
        by_id[v.txid] = &v;
        for (const auto& i : v.tx->inputs) spent[i.prevout] = v.txid;
    }

    for (const auto& v : in.visible)
        for (const auto& i : v.tx->inputs)
            for (const auto& x : i.witness.preimages) {
                const bool fresh = !ch.preimages.contains(hash_preimage(x));
                if (learn_preimage(ch, x) && fresh) out.learned.push_back(x);
            }

    auto cit = spent.find(ch.funding);
    if (cit == spent.end()) return out;
    const TxId cid = cit->second;
    out.commitment_seen = cid;
    auto cls = classify_commitment(ch, cid);
    if (!cls) return out;
    if (ch.phase == Phase::Operational || ch.phase == Phase::Updating || ch.phase == Phase::Opening) {
        ch.phase = Phase::Closing;
        ch.pending.reset();
    }

    const VisibleTx& commitment = *by_id.at(cid);
    std::set<OutPoint> taken = in.reserved;
    auto open_outputs = [&](const VisibleTx& v, bool htlc_outputs) {
        std::vector<Spendable> outs;
        for (std::uint32_t j = 0; j < v.tx->outputs.size(); ++j) {
            OutPoint op{v.txid, j};
            if (spent.contains(op) || taken.contains(op)) continue;
            const bool is_htlc = htlc_outputs && std::holds_alternative<cond::Or>(v.tx->outputs[j].condition.node) &&
                                 std::get<cond::Or>(v.tx->outputs[j].condition.node).children.size() == 3;
            outs.push_back(Spendable{op, v.tx->outputs[j].amount, &v.tx->outputs[j].condition, v.confirmed_at, is_htlc});
        }
        return outs;
    };
    std::vector<Spendable> candidates = open_outputs(commitment, true);
    for (const auto& v : in.visible) {
        if (v.txid == cid) continue;
        const bool second_stage = std::any_of(v.tx->inputs.begin(), v.tx->inputs.end(),
                                              [&](const TxIn& i) { return i.prevout.tx == cid; });
        if (!second_stage) continue;
        // Only outputs still guarded by the channel keys; plain sweeps are already home.
        for (auto& s : open_outputs(v, false))
            if (std::holds_alternative<cond::Or>(s.condition->node)) candidates.push_back(s);
    }

    const auto secrets = signing_keys(ch);
    auto fresh_key = [&] { return ctx.keys.generate(ch.self, KeyRole::Wallet, ctx.rng); };

    if (cls->holder == Holder::Counterparty && cls->revoked) {
        out.revoked_commitment_seen = true;
        Transaction tx;
        std::vector<SpendPlan> plans;
        Coins total = 0;
        for (const auto& s : candidates) {
            auto plan = plan_spend(*s.condition, secrets, ch.preimages, s.confirmed_at, in.now, in.registry);
            if (!plan) continue;
            tx.inputs.push_back(TxIn{s.op, {}});
            plans.push_back(*plan);
            total += s.amount;
        }
        if (tx.inputs.empty()) return out;
        tx.outputs.push_back(TxOut{total, Condition::sig(fresh_key().pub)});
        for (const auto& p : plans) tx.lock_time = std::max(tx.lock_time, p.lock_time);
        for (std::size_t i = 0; i < plans.size(); ++i) sign_input(tx, i, plans[i], secrets, ctx.keys);
        out.claims.push_back(Claim{ClaimKind::Revocation, std::move(tx)});
        return out;
    }

    if (cls->holder == Holder::Self) {
        if (auto hit = ch.held.find(cls->state); hit != ch.held.end()) {
            const auto& t = ch.terms_of(cls->state);
            for (std::size_t i = 0; i < hit->second.htlc_txs.size(); ++i) {
                Transaction tx = hit->second.htlc_txs[i];
                const OutPoint op = tx.inputs[0].prevout;
                if (spent.contains(op) || taken.contains(op)) continue;
                const auto& h = t.htlcs.at(i);
                tx.inputs[0].witness.signatures.emplace_back(ch.key.pub, ctx.keys.sign(ch.key.secret, tx.id()));
                if (h.direction == Direction::Incoming) {
                    auto x = ch.preimages.find(h.image);
                    if (x != ch.preimages.end()) tx.inputs[0].witness.preimages.push_back(x->second);
                }
                const auto& cond = commitment.tx->outputs.at(op.index).condition;
                SpendContext sc{tx.inputs[0].witness, tx.id(), commitment.confirmed_at, in.now, in.registry, ctx.keys,
                                tx.lock_time};
                if (!evaluate_condition(cond, sc)) continue;
                taken.insert(op);
                out.claims.push_back(
                    Claim{h.direction == Direction::Outgoing ? ClaimKind::Timeout : ClaimKind::Success, std::move(tx)});
            }
        }
    }

    for (const auto& s : candidates) {
        if (taken.contains(s.op)) continue;
        auto plan = plan_spend(*s.condition, secrets, ch.preimages, s.confirmed_at, in.now, in.registry);
        if (!plan) continue;
        Transaction tx;
        tx.inputs.push_back(TxIn{s.op, {}});
        tx.outputs.push_back(TxOut{s.amount, Condition::sig(fresh_key().pub)});
        tx.lock_time = plan->lock_time;
        sign_input(tx, 0, *plan, secrets, ctx.keys);
        taken.insert(s.op);
        ClaimKind kind = ClaimKind::Sweep;
        if (!plan->preimages.empty()) kind = ClaimKind::Success;
        else if (s.htlc_output) kind = ClaimKind::Timeout;
        out.claims.push_back(Claim{kind, std::move(tx)});
    }
    return out;
}

} // namespace pcn
