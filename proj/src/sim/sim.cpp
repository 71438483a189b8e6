#include "pcn/sim.hpp"

#include <algorithm>
#include <deque>

namespace pcn {

namespace {

constexpr std::array<const char*, 7> kStrategyNames = {
    "honest",      "silent_after", "publish_outdated",       "publish_latest_and_race",
    "withhold_preimage", "stall_update", "withhold_redeem_forward",
};

} // namespace

std::string to_string(StrategyKind k) { return kStrategyNames.at(static_cast<std::size_t>(k)); }

std::optional<StrategyKind> strategy_from_string(const std::string& s)
{
    for (std::size_t i = 0; i < kStrategyNames.size(); ++i)
        if (s == kStrategyNames[i]) return static_cast<StrategyKind>(i);
    return std::nullopt;
}

std::optional<UserId> ScenarioConfig::user_id(const std::string& name) const
{
    for (std::size_t i = 0; i < users.size(); ++i)
        if (users[i].name == name) return UserId{static_cast<std::uint32_t>(i)};
    return std::nullopt;
}

AdversaryStrategy ScenarioConfig::strategy_of(UserId u) const
{
    for (const auto& a : adversaries)
        if (u.value < users.size() && a.user == users[u.value].name) return a.strategy;
    return {};
}

namespace {

std::optional<std::size_t> channel_index(const ScenarioConfig& cfg, const std::string& a, const std::string& b)
{
    for (std::size_t i = 0; i < cfg.channels.size(); ++i) {
        const auto& c = cfg.channels[i];
        if ((c.funder == a && c.peer == b) || (c.funder == b && c.peer == a)) return i;
    }
    return std::nullopt;
}

Tick max_payment_timeout(const ScenarioConfig& cfg)
{
    Tick t = 0;
    for (const auto& p : cfg.payments)
        if (p.path.size() >= 2) t = std::max<Tick>(t, p.start + (p.path.size() - 1) * cfg.timing.forw);
    return t;
}

} // namespace

void validate_config(const ScenarioConfig& cfg)
{
    const auto fail = [](const std::string& why) { throw ConfigError(why); };
    const auto& t = cfg.timing;
    if (auto v = cfg.knobs.enforce_watch_precondition ? t.violation() : t.structural_violation()) fail(*v);
    if (cfg.users.empty()) fail("no users");
    std::set<std::string> names;
    for (const auto& u : cfg.users) {
        if (u.name.empty()) fail("user with empty name");
        if (!names.insert(u.name).second) fail("duplicate user " + u.name);
    }
    std::map<std::string, Coins> committed;
    for (std::size_t i = 0; i < cfg.channels.size(); ++i) {
        const auto& c = cfg.channels[i];
        const std::string where = "channel " + std::to_string(i) + ": ";
        if (!names.contains(c.funder) || !names.contains(c.peer)) fail(where + "unknown user");
        if (c.funder == c.peer) fail(where + "funder and peer coincide");
        if (c.capacity == 0) fail(where + "capacity must be positive");
        if (channel_index(cfg, c.funder, c.peer) != i) fail(where + "duplicate channel between the same users");
        if (c.close && c.close->by != c.funder && c.close->by != c.peer) fail(where + "close.by is not an endpoint");
        committed[c.funder] += c.capacity;
    }
    for (const auto& u : cfg.users)
        if (committed[u.name] > u.initial_funds)
            fail("user " + u.name + " funds " + std::to_string(committed[u.name]) + " but owns " +
                 std::to_string(u.initial_funds));
    for (std::size_t i = 0; i < cfg.payments.size(); ++i) {
        const auto& p = cfg.payments[i];
        const std::string where = "payment " + std::to_string(i) + ": ";
        if (p.path.size() < 2) fail(where + "path needs at least two users");
        if (p.amount == 0) fail(where + "amount must be positive");
        for (const auto& n : p.path)
            if (!names.contains(n)) fail(where + "unknown user " + n);
        for (std::size_t k = 0; k + 1 < p.path.size(); ++k)
            if (!channel_index(cfg, p.path[k], p.path[k + 1]))
                fail(where + "no channel between " + p.path[k] + " and " + p.path[k + 1]);
        if (p.mode == TimeoutMode::ConstantTimeout && cfg.ledger_mode != LedgerMode::GlobalSync)
            fail(where + "constant timeouts need the global ledger mode");
    }
    std::set<std::string> adversaries;
    for (const auto& a : cfg.adversaries) {
        if (!names.contains(a.user)) fail("adversary: unknown user " + a.user);
        if (!adversaries.insert(a.user).second) fail("adversary: two strategies for " + a.user);
    }
    if (cfg.knobs.conf_delay && (*cfg.knobs.conf_delay < 1 || *cfg.knobs.conf_delay > t.conf))
        fail("knobs.conf_delay must lie in [1, conf]");
    if (cfg.knobs.sync_delay && *cfg.knobs.sync_delay > t.sync) fail("knobs.sync_delay must not exceed sync");
    if (cfg.knobs.watch_phase >= t.user) fail("knobs.watch_phase must be below user");
    if (cfg.horizon == 0) fail("horizon must be positive");
    if (!cfg.payments.empty()) {
        const Tick need = max_payment_timeout(cfg) + 2 * t.conf + t.comm + t.user;
        if (cfg.horizon <= need)
            fail("horizon " + std::to_string(cfg.horizon) + " must exceed max HTLC timeout + 2 conf + comm + user = " +
                 std::to_string(need));
    }
}

// ---------------------------------------------------------------------------

namespace {

struct Submission {
    TxId txid;
    std::vector<OutPoint> spends;
    ChannelId channel;
};

struct QueuedUpdate {
    ChannelId channel;
    UpdateInput input;
};

struct WalletCoin {
    OutPoint op;
    Coins amount = 0;
    KeyPair key;
};

struct Agent {
    UserId id;
    AdversaryStrategy strategy;
    std::optional<WalletCoin> coin;
    std::map<ChannelId, ChannelState> channels;
    std::map<ChannelId, KeyPair> change_keys;
    std::set<ChannelId> coin_taken;
    std::set<ChannelId> disputed;
    std::vector<Submission> submissions;
    std::set<OutPoint> reserved;
    std::deque<QueuedUpdate> queue;
    std::multimap<Tick, std::size_t> release_at; ///< receiver: payment index
    std::map<HashImage, Preimage> secrets;
    std::set<HashImage> announced;
    std::set<std::pair<ChannelId, HashImage>> redeem_started;
    std::set<ChannelId> offchain_stopped;
    std::multimap<Tick, std::pair<ChannelId, Transaction>> timeouts_due; ///< t_T of own published commitments
    std::set<std::size_t> opened;
    std::set<std::size_t> closed_on_schedule;
    bool all_stopped = false;
    bool acted = false;
    bool stalled = false;
};

bool is_htlc_output(const Condition& c)
{
    const auto* o = std::get_if<cond::Or>(&c.node);
    return o && o->children.size() == 3;
}

struct LockInfo {
    HashImage image;
    std::optional<Tick> registry_deadline;
};

std::optional<LockInfo> find_lock(const Condition& c)
{
    if (const auto* p = std::get_if<cond::Preimage>(&c.node)) return LockInfo{p->image, std::nullopt};
    if (const auto* r = std::get_if<cond::PreimageRegisteredBefore>(&c.node)) return LockInfo{r->image, r->deadline};
    const std::vector<Condition>* kids = nullptr;
    if (const auto* a = std::get_if<cond::And>(&c.node)) kids = &a->children;
    if (const auto* o = std::get_if<cond::Or>(&c.node)) kids = &o->children;
    if (kids)
        for (const auto& k : *kids)
            if (auto l = find_lock(k)) return l;
    return std::nullopt;
}

// Revoked own state with the largest own stable balance; the lowest such state on ties. 0 if none.
std::uint64_t richest_revoked_state(const ChannelState& ch)
{
    std::uint64_t best = 0;
    for (const auto& [s, _] : ch.held) {
        if (s >= ch.n || !ch.revealed.contains(s)) continue;
        if (best == 0 || ch.terms_of(s).stable_self > ch.terms_of(best).stable_self) best = s;
    }
    return best;
}

} // namespace

struct Simulation::Impl {
    ScenarioConfig cfg;
    std::shared_ptr<KeyRing> ring = std::make_shared<KeyRing>();
    Rng rng;
    Ledger ledger;
    ProtocolContext ctx;
    EventTrace trace;
    std::vector<Agent> agents;
    std::vector<ChannelRecord> records;
    std::map<OutPoint, ChannelId> funding_index;
    std::map<TxId, ChannelId> derived;
    std::set<TxId> commitments;
    std::map<ChannelId, std::set<HashImage>> open_htlcs;
    std::map<TxId, std::string> submitted_kind;
    std::map<TxId, ChannelId> submitted_channel;
    std::vector<PaymentRun> payments;
    std::map<HashImage, std::size_t> payment_by_image;
    std::set<std::size_t> started_specs;
    std::deque<ChannelMessage> wire;
    Tick now = 0;
    bool started = false;
    bool done = false;
    Coins minted = 0;
    std::map<UserId, Coins> initial;

    explicit Impl(ScenarioConfig c)
        : cfg(std::move(c)), rng(cfg.seed), ledger(cfg.timing, cfg.ledger_mode, ring), ctx{*ring, cfg.timing, rng}
    {
        validate_config(cfg);
        for (std::size_t i = 0; i < cfg.users.size(); ++i) {
            Agent a;
            a.id = UserId{static_cast<std::uint32_t>(i)};
            a.strategy = cfg.strategy_of(a.id);
            ledger.register_user(a.id);
            agents.push_back(std::move(a));
        }
        ledger.set_sync_delay_policy([this](UserId r, const TxId&) -> Tick {
            return agents.at(r.value).strategy.kind == StrategyKind::Honest ? cfg.sync_delay() : 0;
        });
        for (auto& a : agents) {
            const Coins funds = cfg.users[a.id.value].initial_funds;
            initial[a.id] = funds;
            if (funds == 0) continue;
            KeyPair k = ring->generate(a.id, KeyRole::Wallet, rng);
            TxId id = ledger.mint({TxOut{funds, Condition::sig(k.pub)}});
            a.coin = WalletCoin{OutPoint{id, 0}, funds, k};
            minted += funds;
            emit({.tick = 0, .kind = EventKind::Confirmed, .user = a.id, .txid = id, .amount = funds, .detail = "mint"});
        }
        for (std::size_t i = 0; i < cfg.channels.size(); ++i) {
            ChannelRecord r;
            r.id = ChannelId{static_cast<std::uint32_t>(i)};
            r.funder = *cfg.user_id(cfg.channels[i].funder);
            r.peer = *cfg.user_id(cfg.channels[i].peer);
            r.capacity = cfg.channels[i].capacity;
            records.push_back(std::move(r));
        }
    }

    void emit(Event e) { trace.push(std::move(e)); }

    bool silent(const Agent& a) const { return a.strategy.kind == StrategyKind::SilentAfter && now >= a.strategy.tick; }
    bool active(const Agent& a, StrategyKind k) const { return a.strategy.kind == k && now >= a.strategy.tick; }
    bool honest(const Agent& a) const { return a.strategy.kind == StrategyKind::Honest; }
    Tick conf_for(const Agent& a) const { return honest(a) ? cfg.conf_delay() : 1; }
    const PreimageRegistry* registry() const
    {
        return cfg.ledger_mode == LedgerMode::GlobalSync ? &ledger.preimage_registry() : nullptr;
    }

    std::optional<ChannelId> channel_between(UserId a, UserId b) const
    {
        auto i = channel_index(cfg, cfg.users[a.value].name, cfg.users[b.value].name);
        if (!i) return std::nullopt;
        return ChannelId{static_cast<std::uint32_t>(*i)};
    }

    // --- ledger side -------------------------------------------------------

    void submit(Agent& a, const Transaction& tx, ChannelId c, const std::string& kind)
    {
        auto r = ledger.submit(tx, a.id, now, conf_for(a));
        Submission s{r.txid, {}, c};
        for (const auto& in : tx.inputs) {
            s.spends.push_back(in.prevout);
            a.reserved.insert(in.prevout);
        }
        a.submissions.push_back(std::move(s));
        submitted_kind[r.txid] = kind;
        submitted_channel[r.txid] = c;
        emit({.tick = now,
              .kind = EventKind::Submitted,
              .user = a.id,
              .channel = c,
              .txid = r.txid,
              .amount = tx.output_total(),
              .at = r.scheduled,
              .detail = kind});
    }

    std::optional<ChannelId> attribute(const Transaction& tx, const TxId& txid)
    {
        for (const auto& in : tx.inputs) {
            if (auto f = funding_index.find(in.prevout); f != funding_index.end()) {
                commitments.insert(txid);
                derived[txid] = f->second;
                return f->second;
            }
            if (auto d = derived.find(in.prevout.tx); d != derived.end()) {
                derived[txid] = d->second;
                return d->second;
            }
        }
        return std::nullopt;
    }

    std::string resolution_kind(const Transaction& tx, std::size_t input, const Condition& spent)
    {
        const auto& w = tx.inputs[input].witness;
        for (const auto& [k, _] : w.signatures)
            if (ring->role_of(k) == KeyRole::Revocation) return "revoked";
        if (!w.preimages.empty()) return "success";
        auto lock = find_lock(spent);
        if (lock && lock->registry_deadline) {
            auto at = ledger.preimage_registry().registered_at(lock->image);
            if (at && *at < *lock->registry_deadline) return "success";
        }
        return "timeout";
    }

    void on_confirmed(const LedgerEvent& ev)
    {
        const Transaction* tx = ledger.find_confirmed(ev.txid);
        auto c = attribute(*tx, ev.txid);
        auto kind = submitted_kind.find(ev.txid);
        emit({.tick = ev.tick,
              .kind = EventKind::Confirmed,
              .user = ev.user,
              .channel = c,
              .txid = ev.txid,
              .amount = tx->output_total(),
              .detail = kind == submitted_kind.end() ? "" : kind->second});
        if (!c) return;

        if (commitments.contains(ev.txid)) {
            std::set<HashImage> present;
            for (const auto& o : tx->outputs)
                if (is_htlc_output(o.condition))
                    if (auto l = find_lock(o.condition)) present.insert(l->image);
            auto& open = open_htlcs[*c];
            for (auto it = open.begin(); it != open.end();) {
                if (present.contains(*it)) {
                    ++it;
                    continue;
                }
                emit({.tick = ev.tick, .kind = EventKind::HtlcResolved, .channel = c, .txid = ev.txid, .image = *it,
                      .detail = "absent"});
                it = open.erase(it);
            }
        }
        for (std::size_t i = 0; i < tx->inputs.size(); ++i) {
            const auto& op = tx->inputs[i].prevout;
            if (!commitments.contains(op.tx)) continue;
            const auto& spent = ledger.find_confirmed(op.tx)->outputs.at(op.index);
            if (!is_htlc_output(spent.condition)) continue;
            auto l = find_lock(spent.condition);
            if (!l) continue;
            emit({.tick = ev.tick,
                  .kind = EventKind::HtlcResolved,
                  .channel = c,
                  .txid = ev.txid,
                  .image = l->image,
                  .amount = spent.amount,
                  .detail = resolution_kind(*tx, i, spent.condition)});
            open_htlcs[*c].erase(l->image);
        }
        for (const auto& o : tx->outputs) {
            const auto* s = std::get_if<cond::Sig>(&o.condition.node);
            if (!s || ring->role_of(s->key) != KeyRole::Wallet) continue;
            emit({.tick = ev.tick,
                  .kind = EventKind::Sweep,
                  .user = ring->owner_of(s->key),
                  .channel = c,
                  .txid = ev.txid,
                  .amount = o.amount});
        }
    }

    void process_ledger(const std::vector<LedgerEvent>& events)
    {
        for (const auto& ev : events) {
            switch (ev.kind) {
            case LedgerEvent::Kind::Confirmed: on_confirmed(ev); break;
            case LedgerEvent::Kind::Rejected: {
                std::optional<ChannelId> c;
                if (auto it = submitted_channel.find(ev.txid); it != submitted_channel.end()) c = it->second;
                emit({.tick = ev.tick, .kind = EventKind::Rejected, .user = ev.user, .channel = c, .txid = ev.txid,
                      .detail = ev.result.describe()});
                break;
            }
            case LedgerEvent::Kind::Delivered:
                emit({.tick = ev.tick, .kind = EventKind::Delivered, .user = ev.user, .txid = ev.txid});
                break;
            }
        }
    }

    // --- agent side --------------------------------------------------------

    void send_all(Agent& a, ChannelId c, const std::vector<ChannelMessage>& msgs)
    {
        for (const auto& m : msgs) {
            const bool update_msg = m.kind() >= MessageKind::UpdateAdd;
            if (update_msg && !a.stalled && active(a, StrategyKind::StallUpdate) && m.kind() == a.strategy.stall_at) {
                a.stalled = true;
                a.offchain_stopped.insert(c);
                emit({.tick = now, .kind = EventKind::Adversary, .user = a.id, .channel = c,
                      .detail = "stall:" + to_string(m.kind())});
                return;
            }
            if (a.all_stopped || a.offchain_stopped.contains(c)) return;
            wire.push_back(m);
            emit({.tick = now, .kind = EventKind::MsgSent, .user = m.from, .peer = m.to, .channel = c,
                  .detail = to_string(m.kind())});
        }
    }

    void dispatch(Agent& a, ChannelId c, const StepResult& r, bool was_initiator)
    {
        send_all(a, c, r.send);
        for (const auto& tx : r.submit) submit(a, tx, c, "funding");
        if (r.yielded) a.queue.push_front(QueuedUpdate{c, *r.yielded});
        if (r.completed) on_completed(a, c, *r.completed, was_initiator);
    }

    void on_completed(Agent& a, ChannelId c, const UpdateInput& in, bool initiator)
    {
        const bool add = in.kind == UpdateKind::Add;
        const HashImage y = add ? in.image : hash_preimage(in.preimage);
        if (initiator) {
            const auto& ch = a.channels.at(c);
            emit({.tick = now, .kind = EventKind::UpdateDone, .user = a.id, .peer = ch.other, .channel = c, .image = y,
                  .amount = add ? std::optional<Coins>(in.amount) : std::nullopt, .detail = add ? "add" : "redeem"});
            if (add) {
                emit({.tick = now, .kind = EventKind::HtlcAdded, .user = a.id, .peer = ch.other, .channel = c,
                      .image = y, .amount = in.amount, .at = in.timeout});
                open_htlcs[c].insert(y);
            } else if (open_htlcs[c].erase(y)) {
                emit({.tick = now, .kind = EventKind::HtlcResolved, .user = ch.other, .peer = a.id, .channel = c,
                      .image = y, .detail = "redeemed"});
            }
        } else {
            auto p = payment_by_image.find(y);
            if (p != payment_by_image.end() && payments[p->second].plan) {
                const auto& run = payments[p->second];
                const auto& plan = *run.plan;
                auto pos = plan.position(a.id);
                if (add && pos && *pos == plan.hops()) {
                    a.release_at.emplace(now + 1, p->second);
                } else if (add && pos && *pos > 0 && !a.all_stopped) {
                    a.queue.push_back(QueuedUpdate{run.hops[*pos], plan.add_input(*pos)});
                }
            }
            if (!add) learn(a, in.preimage);
        }
        try_queue(a);
    }

    void learn(Agent& a, const Preimage& x)
    {
        if (active(a, StrategyKind::WithholdPreimage)) return;
        const HashImage y = hash_preimage(x);
        a.secrets[y] = x;
        if (a.announced.insert(y).second)
            emit({.tick = now, .kind = EventKind::PreimageLearned, .user = a.id, .image = y});
        for (auto& [_, ch] : a.channels) learn_preimage(ch, x);

        auto p = payment_by_image.find(y);
        if (p == payment_by_image.end() || !payments[p->second].plan) return;
        const auto& run = payments[p->second];
        const auto& plan = *run.plan;
        if (plan.lock() == HtlcLock::Registry && cfg.ledger_mode == LedgerMode::GlobalSync &&
            !ledger.preimage_registry().registered_at(y)) {
            ledger.register_preimage(x, now);
            emit({.tick = now, .kind = EventKind::Payment, .user = a.id, .image = y, .detail = "registered"});
        }
        auto pos = plan.position(a.id);
        if (!pos || *pos == 0 || active(a, StrategyKind::WithholdRedeemForward) || a.all_stopped) return;
        const ChannelId in = run.hops[*pos - 1];
        if (!a.redeem_started.insert({in, y}).second) return;
        a.queue.push_back(QueuedUpdate{in, UpdateInput::redeem(x)});
        try_queue(a);
    }

    void try_queue(Agent& a)
    {
        if (silent(a) || a.all_stopped) return;
        std::deque<QueuedUpdate> keep;
        while (!a.queue.empty()) {
            QueuedUpdate q = a.queue.front();
            a.queue.pop_front();
            auto it = a.channels.find(q.channel);
            if (it == a.channels.end() || a.offchain_stopped.contains(q.channel)) continue;
            ChannelState& ch = it->second;
            if (ch.phase == Phase::Updating || ch.phase == Phase::Opening) {
                keep.push_back(q);
                continue;
            }
            if (ch.phase != Phase::Operational) {
                emit({.tick = now, .kind = EventKind::ProtocolError, .user = a.id, .channel = q.channel,
                      .detail = "update_dropped:" + to_string(ch.phase)});
                continue;
            }
            try {
                auto r = begin_update(ch, ctx, q.input, now);
                dispatch(a, q.channel, r, true);
            } catch (const ChannelError& e) {
                emit({.tick = now, .kind = EventKind::ProtocolError, .user = a.id, .channel = q.channel,
                      .detail = to_string(e.code())});
            }
        }
        for (auto& q : keep) a.queue.push_back(std::move(q));
    }

    void close(Agent& a, ChannelId c, const std::string& reason)
    {
        auto& ch = a.channels.at(c);
        const auto state = ch.latest_held_state();
        auto txs = close_channel(ch, *ring, now);
        // The commitment is confirmed before any of these locks expire, so they can go out blind.
        for (auto& tt : timeout_transactions(ch, state, *ring))
            a.timeouts_due.emplace(tt.lock_time, std::pair{c, std::move(tt)});
        emit({.tick = now, .kind = EventKind::CloseInitiated, .user = a.id, .peer = ch.other, .channel = c,
              .detail = reason});
        for (std::size_t i = 0; i < txs.size(); ++i) submit(a, txs[i], c, i == 0 ? "commitment" : "success");
        a.disputed.insert(c);
    }

    void poll_submissions(Agent& a)
    {
        std::vector<Submission> keep;
        for (auto& s : a.submissions) {
            auto st = ledger.status(s.txid).status;
            if (st == TxStatus::Pending) {
                keep.push_back(std::move(s));
                continue;
            }
            // Confirmed spends stay reserved: the ledger view may lag behind the confirmation.
            if (st != TxStatus::Rejected) continue;
            for (const auto& op : s.spends) a.reserved.erase(op);
            a.disputed.insert(s.channel);
        }
        a.submissions = std::move(keep);
    }

    void submit_timeouts(Agent& a)
    {
        auto end = a.timeouts_due.upper_bound(now);
        for (auto it = a.timeouts_due.begin(); it != end; ++it) {
            const auto& [c, tx] = it->second;
            if (a.reserved.contains(tx.inputs[0].prevout)) continue;
            submit(a, tx, c, "timeout");
        }
        a.timeouts_due.erase(a.timeouts_due.begin(), end);
    }

    bool watch_due(const Agent& a) const
    {
        if (!honest(a)) return true;
        if (!a.disputed.empty()) return true;
        for (const auto& [_, ch] : a.channels)
            if (ch.phase == Phase::Opening) return true;
        const Tick u = cfg.timing.user;
        return now % u == cfg.knobs.watch_phase % u;
    }

    void watch(Agent& a)
    {
        if (honest(a)) emit({.tick = now, .kind = EventKind::Watch, .user = a.id});
        const auto visible = ledger.visible_transactions(a.id, now);
        std::set<TxId> ids;
        for (const auto& v : visible) ids.insert(v.txid);
        for (auto& [cid, ch] : a.channels) {
            if (ch.phase == Phase::Opening) {
                if (ch.open_step == OpenStep::AwaitFunding && ids.contains(ch.funding.tx))
                    dispatch(a, cid, funding_confirmed(ch, ctx, now), false);
                continue;
            }
            auto out = watch_ledger(ch, ctx, WatchInput{visible, now, a.reserved, registry()});
            if (out.commitment_seen && classify_commitment(ch, *out.commitment_seen)) a.disputed.insert(cid);
            for (const auto& claim : out.claims) {
                emit({.tick = now, .kind = EventKind::WatcherAction, .user = a.id, .channel = cid,
                      .txid = claim.tx.id(), .amount = claim.tx.output_total(), .detail = to_string(claim.kind)});
                submit(a, claim.tx, cid, to_string(claim.kind));
            }
            for (const auto& x : out.learned) learn(a, x);
        }
    }

    void open_channels(Agent& a)
    {
        for (const auto& [_, ch] : a.channels)
            if (ch.funder && ch.phase == Phase::Opening && !ch.funding_tx) return;
        for (std::size_t i = 0; i < cfg.channels.size(); ++i) {
            const auto& spec = cfg.channels[i];
            if (spec.funder != cfg.users[a.id.value].name || spec.open_at > now || a.opened.contains(i)) continue;
            a.opened.insert(i);
            const ChannelId cid{static_cast<std::uint32_t>(i)};
            if (!a.coin || a.coin->amount < spec.capacity) {
                emit({.tick = now, .kind = EventKind::ProtocolError, .user = a.id, .channel = cid,
                      .detail = "no_funds"});
                continue;
            }
            KeyPair change = ring->generate(a.id, KeyRole::Wallet, rng);
            a.change_keys[cid] = change;
            FundingSource src{a.coin->op, a.coin->amount, a.coin->key, change.pub};
            StepResult r;
            a.channels[cid] = open_channel(ctx, cid, a.id, records[i].peer, spec.capacity, src, r);
            dispatch(a, cid, r, false);
            return;
        }
    }

    void scheduled_closes(Agent& a)
    {
        for (std::size_t i = 0; i < cfg.channels.size(); ++i) {
            const auto& spec = cfg.channels[i];
            if (!spec.close || spec.close->by != cfg.users[a.id.value].name || spec.close->at > now) continue;
            if (a.closed_on_schedule.contains(i)) continue;
            auto it = a.channels.find(ChannelId{static_cast<std::uint32_t>(i)});
            if (it == a.channels.end()) continue;
            if (it->second.phase != Phase::Operational && it->second.phase != Phase::Updating) continue;
            a.closed_on_schedule.insert(i);
            close(a, it->first, "scheduled");
        }
    }

    void adversary_action(Agent& a)
    {
        if (a.acted || now < a.strategy.tick) return;
        if (a.strategy.kind == StrategyKind::PublishOutdated) {
            a.acted = true;
            a.all_stopped = true;
            for (auto& [cid, ch] : a.channels) {
                if (ch.phase == Phase::Opening || ch.phase == Phase::Closing || ch.phase == Phase::Closed) continue;
                const auto s = a.strategy.state ? a.strategy.state : richest_revoked_state(ch);
                if (s >= ch.n || !ch.held.contains(s)) {
                    emit({.tick = now, .kind = EventKind::Adversary, .user = a.id, .channel = cid, .at = s,
                          .detail = "publish_outdated_skipped"});
                    continue;
                }
                Transaction tx = ch.held.at(s).commitment;
                add_signature(tx, 0, ch.key, *ring);
                ch.phase = Phase::Closing;
                ch.pending.reset();
                emit({.tick = now, .kind = EventKind::Adversary, .user = a.id, .channel = cid, .at = s,
                      .detail = "publish_outdated"});
                submit(a, tx, cid, "commitment");
            }
        } else if (a.strategy.kind == StrategyKind::PublishLatestAndRace) {
            a.acted = true;
            a.all_stopped = true;
            for (auto& [cid, ch] : a.channels) {
                if (ch.phase != Phase::Operational && ch.phase != Phase::Updating) continue;
                emit({.tick = now, .kind = EventKind::Adversary, .user = a.id, .channel = cid,
                      .detail = "publish_latest"});
                close(a, cid, "adversary");
            }
        }
    }

    void release_secrets(Agent& a)
    {
        auto end = a.release_at.upper_bound(now);
        std::vector<std::size_t> due;
        for (auto it = a.release_at.begin(); it != end; ++it) due.push_back(it->second);
        a.release_at.erase(a.release_at.begin(), end);
        for (auto k : due) {
            const auto& plan = *payments[k].plan;
            if (active(a, StrategyKind::WithholdPreimage) || active(a, StrategyKind::WithholdRedeemForward))
                emit({.tick = now, .kind = EventKind::Adversary, .user = a.id, .image = plan.image,
                      .detail = "withhold"});
            learn(a, plan.secret);
        }
    }

    std::size_t begin_payment(const std::vector<UserId>& path, Coins amount, TimeoutMode mode, std::size_t spec)
    {
        PaymentRun run;
        run.spec_index = spec;
        for (std::size_t i = 0; i + 1 < path.size(); ++i)
            if (auto c = channel_between(path[i], path[i + 1])) run.hops.push_back(*c);
        Agent& sender = agents.at(path.at(0).value);
        ChannelLookup lookup = [&](UserId from, UserId to) -> const ChannelState* {
            auto c = channel_between(from, to);
            if (!c) return nullptr;
            const auto& chans = agents.at(from.value).channels;
            auto it = chans.find(*c);
            return it == chans.end() ? nullptr : &it->second;
        };
        try {
            run.plan = plan_payment(path, amount, now, mode, cfg.timing, rng, lookup);
        } catch (const RoutingError& e) {
            run.outcome = PaymentOutcome{PaymentOutcome::Kind::Failed, e.hop(), e.what()};
            payments.push_back(std::move(run));
            emit({.tick = now, .kind = EventKind::Payment, .user = sender.id, .amount = amount, .detail = "failed"});
            return payments.size() - 1;
        }
        payments.push_back(std::move(run));
        const std::size_t idx = payments.size() - 1;
        const PaymentPlan& plan = *payments[idx].plan;
        payment_by_image[plan.image] = idx;
        emit({.tick = now, .kind = EventKind::Payment, .user = sender.id, .peer = plan.path.back(),
              .image = plan.image, .amount = amount, .at = plan.timeouts.front(), .detail = "start"});
        sender.queue.push_back(QueuedUpdate{payments[idx].hops[0], plan.add_input(0)});
        return idx;
    }

    void start_payments(Agent& a)
    {
        for (std::size_t k = 0; k < cfg.payments.size(); ++k) {
            const auto& p = cfg.payments[k];
            if (p.start != now || p.path.front() != cfg.users[a.id.value].name || started_specs.contains(k)) continue;
            started_specs.insert(k);
            std::vector<UserId> path;
            for (const auto& n : p.path) path.push_back(*cfg.user_id(n));
            begin_payment(path, p.amount, p.mode, k);
        }
    }

    void agent_step(Agent& a)
    {
        if (silent(a)) return;
        poll_submissions(a);
        submit_timeouts(a);
        if (watch_due(a)) watch(a);
        for (auto& [cid, ch] : a.channels)
            if ((ch.phase == Phase::Operational || ch.phase == Phase::Updating) && deadline_reached(ch, cfg.timing, now))
                close(a, cid, "deadline");
        open_channels(a);
        scheduled_closes(a);
        adversary_action(a);
        start_payments(a);
        release_secrets(a);
        try_queue(a);
    }

    void deliver(const ChannelMessage& m)
    {
        Agent& r = agents.at(m.to.value);
        if (silent(r) || r.all_stopped || r.offchain_stopped.contains(m.channel)) return;
        if (m.kind() == MessageKind::OpenRequest) {
            if (r.channels.contains(m.channel)) return;
            StepResult res;
            try {
                r.channels[m.channel] = accept_channel(ctx, m, res);
            } catch (const ChannelError& e) {
                emit({.tick = now, .kind = EventKind::ProtocolError, .user = r.id, .channel = m.channel,
                      .detail = to_string(e.code())});
                return;
            }
            dispatch(r, m.channel, res, false);
            return;
        }
        auto it = r.channels.find(m.channel);
        if (it == r.channels.end()) return;
        const bool initiator = it->second.pending && it->second.pending->initiator;
        StepResult res;
        try {
            res = handle_message(it->second, ctx, m, now);
        } catch (const ChannelError& e) {
            emit({.tick = now, .kind = EventKind::ProtocolError, .user = r.id, .channel = m.channel,
                  .detail = to_string(e.code())});
            return;
        }
        dispatch(r, m.channel, res, initiator);
    }

    void end_of_tick()
    {
        for (auto& a : agents) {
            for (auto& [cid, ch] : a.channels) {
                if (ch.funder && ch.funding_tx && !a.coin_taken.contains(cid)) {
                    a.coin_taken.insert(cid);
                    const auto& tf = *ch.funding_tx;
                    if (tf.outputs.size() > 1)
                        a.coin = WalletCoin{OutPoint{tf.id(), 1}, tf.outputs[1].amount, a.change_keys.at(cid)};
                    else
                        a.coin.reset();
                }
                if (ch.funding_tx || ch.open_step != OpenStep::AwaitFundingCreated) {
                    if (ch.funding.tx != TxId{} && !funding_index.contains(ch.funding)) {
                        funding_index[ch.funding] = cid;
                        records[cid.value].funding = ch.funding;
                    }
                }
                EndpointSnapshot s;
                s.phase = ch.phase;
                const bool moved_on = ch.pending && ch.revealed.contains(ch.n);
                s.n = moved_on ? ch.n + 1 : ch.n;
                s.terms = moved_on ? ch.pending->next : ch.current();
                if (ch.pending) s.pending_htlcs = ch.pending->next.htlcs;
                for (auto& h : s.terms.htlcs)
                    if (auto x = ch.preimages.find(h.image); x != ch.preimages.end()) h.known_preimage = x->second;
                records[cid.value].snapshots[a.id][now] = std::move(s);
            }
        }
    }

    void drain_wire()
    {
        std::size_t guard = 0;
        while (!wire.empty()) {
            if (++guard > 1000000) throw std::logic_error("message storm");
            ChannelMessage m = wire.front();
            wire.pop_front();
            deliver(m);
        }
    }

    bool step()
    {
        if (done) return false;
        if (started) ++now;
        started = true;
        process_ledger(ledger.advance(now));
        for (auto& a : agents) agent_step(a);
        drain_wire();
        end_of_tick();
        if (now >= cfg.horizon) done = true;
        return true;
    }

    PaymentOutcome outcome(std::size_t k) const
    {
        const auto& run = payments.at(k);
        if (!run.plan) return run.outcome;
        return payment_outcome(trace, *run.plan, run.hops);
    }

    RunResult result() const
    {
        RunResult r;
        r.trace = trace;
        r.channels = records;
        r.payments = payments;
        for (std::size_t k = 0; k < r.payments.size(); ++k) r.payments[k].outcome = outcome(k);
        for (const auto& u : cfg.users) r.user_names.push_back(u.name);
        r.initial_funds = initial;
        r.minted_total = minted;
        for (const auto& a : agents) r.final_wallet[a.id] = 0;
        for (const auto& op : ledger.utxo_set()) {
            const auto& out = ledger.find_confirmed(op.tx)->outputs.at(op.index);
            r.final_utxo_total += out.amount;
            const auto* s = std::get_if<cond::Sig>(&out.condition.node);
            if (!s || ring->role_of(s->key) != KeyRole::Wallet) continue;
            if (auto owner = ring->owner_of(s->key)) r.final_wallet[*owner] += out.amount;
        }
        r.end_tick = now;
        return r;
    }
};

Simulation::Simulation(ScenarioConfig cfg) : impl_(std::make_unique<Impl>(std::move(cfg))) {}
Simulation::~Simulation() = default;

bool Simulation::step() { return impl_->step(); }
void Simulation::run()
{
    while (impl_->step()) {
    }
}
Tick Simulation::now() const { return impl_->now; }
bool Simulation::finished() const { return impl_->done; }
const ScenarioConfig& Simulation::config() const { return impl_->cfg; }
const Ledger& Simulation::ledger() const { return impl_->ledger; }
const EventTrace& Simulation::trace() const { return impl_->trace; }

const ChannelState* Simulation::endpoint(UserId user, ChannelId channel) const
{
    if (user.value >= impl_->agents.size()) return nullptr;
    const auto& chans = impl_->agents[user.value].channels;
    auto it = chans.find(channel);
    return it == chans.end() ? nullptr : &it->second;
}

std::size_t Simulation::start_payment(const std::vector<UserId>& path, Coins amount, TimeoutMode mode)
{
    if (path.empty() || path[0].value >= impl_->agents.size()) throw std::invalid_argument("bad payment path");
    auto k = impl_->begin_payment(path, amount, mode, impl_->cfg.payments.size());
    impl_->try_queue(impl_->agents[path[0].value]);
    // Between steps the current tick is already processed; its messages still belong to it.
    if (impl_->started) {
        impl_->drain_wire();
        impl_->end_of_tick();
    }
    return k;
}

PaymentOutcome Simulation::outcome(std::size_t payment) const { return impl_->outcome(payment); }

RunResult Simulation::result() const { return impl_->result(); }

RunResult run_scenario(const ScenarioConfig& cfg)
{
    Simulation sim(cfg);
    sim.run();
    return sim.result();
}

PaymentOutcome drive_payment(Simulation& sim, const std::vector<UserId>& path, Coins amount, TimeoutMode mode)
{
    const auto k = sim.start_payment(path, amount, mode);
    auto settled = [&] {
        auto o = sim.outcome(k);
        if (o.kind != PaymentOutcome::Kind::PartiallyLocked) return true;
        return false;
    };
    if (sim.outcome(k).kind == PaymentOutcome::Kind::Failed && sim.result().payments[k].plan == std::nullopt)
        return sim.outcome(k);
    while (sim.step())
        if (settled() && sim.outcome(k).kind == PaymentOutcome::Kind::Completed) break;
    return sim.outcome(k);
}

} // namespace pcn
