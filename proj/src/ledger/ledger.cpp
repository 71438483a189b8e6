#include "pcn/ledger.hpp"

#include <algorithm>
#include <stdexcept>
#include <tuple>

namespace pcn {

std::optional<std::string> TimingParams::structural_violation() const
{
    if (conf == 0 || sync == 0 || comm == 0 || forw == 0 || user == 0)
        return "all timing parameters must be strictly positive";
    if (forw <= sync + conf)
        return "delta_forw (" + std::to_string(forw) + ") must exceed delta_sync + delta_conf (" +
               std::to_string(sync + conf) + ")";
    return std::nullopt;
}

std::optional<std::string> TimingParams::watch_precondition_violation() const
{
    // Signed arithmetic: the bound may be negative for silly inputs.
    long long bound = static_cast<long long>(comm) - static_cast<long long>(sync) - static_cast<long long>(conf);
    if (user == 0 || static_cast<long long>(user) >= bound)
        return "watch interval violates 0 < delta_user < delta_comm - delta_sync - delta_conf (delta_user=" +
               std::to_string(user) + ", bound=" + std::to_string(bound) + ")";
    return std::nullopt;
}

std::optional<std::string> TimingParams::violation() const
{
    if (auto v = structural_violation()) return v;
    return watch_precondition_violation();
}

std::string to_string(InvalidReason r)
{
    switch (r) {
    case InvalidReason::None: return "Valid";
    case InvalidReason::UnknownOutpoint: return "UnknownOutpoint";
    case InvalidReason::AlreadySpent: return "AlreadySpent";
    case InvalidReason::ConditionUnsatisfied: return "ConditionUnsatisfied";
    case InvalidReason::ValueMismatch: return "ValueMismatch";
    case InvalidReason::LockTime: return "LockTime";
    }
    return "?";
}

std::string ValidityResult::describe() const
{
    switch (reason) {
    case InvalidReason::UnknownOutpoint:
    case InvalidReason::AlreadySpent:
    case InvalidReason::ConditionUnsatisfied:
        return to_string(reason) + "(" + std::to_string(input_index) + ")";
    default: return to_string(reason);
    }
}

Ledger::Ledger(TimingParams params, LedgerMode mode, std::shared_ptr<const KeyRing> keys)
    : params_(params), mode_(mode), keys_(std::move(keys))
{
    if (!keys_) throw std::invalid_argument("Ledger requires a key ring");
    sync_policy_ = [this](UserId, const TxId&) { return params_.sync; };
}

void Ledger::register_user(UserId user) { users_.insert(user); }

TxId Ledger::mint(std::vector<TxOut> outputs)
{
    Transaction tx;
    tx.outputs = std::move(outputs);
    const TxId txid = tx.id();
    if (confirmed_index_.contains(txid)) throw std::invalid_argument("mint: identical outputs already minted");
    ++next_sequence_;
    ConfirmedRecord rec{std::move(tx), txid, now_, now_, log_.size(), UserId{}, true, {}};
    for (const auto& out : rec.tx.outputs) {
        std::set<PubKey> ks;
        collect_sig_keys(out.condition, ks);
        for (const auto& k : ks)
            if (auto owner = keys_->owner_of(k)) rec.affected.insert(*owner);
    }
    for (std::uint32_t i = 0; i < rec.tx.outputs.size(); ++i) utxo_.insert(OutPoint{rec.txid, i});
    confirmed_index_[rec.txid] = log_.size();
    status_[rec.txid] = TxStatusInfo{TxStatus::Confirmed, now_, {}};
    for (auto u : rec.affected) visible_[u].emplace_back(now_, log_.size());
    log_.push_back(std::move(rec));
    return txid;
}

SubmissionReceipt Ledger::submit(const Transaction& tx, UserId submitter, Tick now, Tick conf_delay)
{
    if (now < now_) throw std::invalid_argument("submit: time went backwards");
    if (conf_delay < 1 || conf_delay > params_.conf)
        throw std::invalid_argument("submit: conf_delay must lie in [1, delta_conf]");

    Pending p{tx, tx.id(), submitter, now, now + conf_delay, next_sequence_++};
    for (const auto& in : tx.inputs) {
        for (const auto& parent : pending_)
            if (parent.txid == in.prevout.tx) p.scheduled = std::max(p.scheduled, parent.scheduled + 1);
    }
    auto& st = status_[p.txid];
    if (st.status != TxStatus::Confirmed) st = TxStatusInfo{TxStatus::Pending, p.scheduled, {}};
    SubmissionReceipt receipt{p.txid, now, p.scheduled, p.sequence};
    pending_.push_back(std::move(p));
    return receipt;
}

ValidityResult Ledger::validate(const Transaction& tx, Tick now) const
{
    if (tx.inputs.empty()) return {InvalidReason::ValueMismatch, 0};
    if (now < tx.lock_time) return {InvalidReason::LockTime, 0};
    const TxId txid = tx.id();
    std::set<OutPoint> seen;
    Coins in_total = 0;
    for (std::size_t i = 0; i < tx.inputs.size(); ++i) {
        const auto& op = tx.inputs[i].prevout;
        auto it = confirmed_index_.find(op.tx);
        if (it == confirmed_index_.end() || op.index >= log_[it->second].tx.outputs.size())
            return {InvalidReason::UnknownOutpoint, i};
        if (!seen.insert(op).second || !utxo_.contains(op)) return {InvalidReason::AlreadySpent, i};
        in_total += log_[it->second].tx.outputs[op.index].amount;
    }
    const PreimageRegistry* reg = mode_ == LedgerMode::GlobalSync ? &registry_ : nullptr;
    for (std::size_t i = 0; i < tx.inputs.size(); ++i) {
        const auto& op = tx.inputs[i].prevout;
        const auto& parent = log_[confirmed_index_.at(op.tx)];
        SpendContext ctx{tx.inputs[i].witness, txid, parent.confirmed_at, now, reg, *keys_, tx.lock_time};
        if (!evaluate_condition(parent.tx.outputs[op.index].condition, ctx))
            return {InvalidReason::ConditionUnsatisfied, i};
    }
    if (in_total != tx.output_total()) return {InvalidReason::ValueMismatch, 0};
    return {};
}

std::set<UserId> Ledger::affected_users(const Transaction& tx) const
{
    std::set<PubKey> keys;
    for (const auto& out : tx.outputs) collect_sig_keys(out.condition, keys);
    for (const auto& in : tx.inputs) {
        auto it = confirmed_index_.find(in.prevout.tx);
        if (it == confirmed_index_.end() || in.prevout.index >= log_[it->second].tx.outputs.size())
            throw std::out_of_range("affected_users: unknown outpoint " + in.prevout.tx.short_hex());
        collect_sig_keys(log_[it->second].tx.outputs[in.prevout.index].condition, keys);
    }
    std::set<UserId> users;
    for (const auto& k : keys)
        if (auto owner = keys_->owner_of(k)) users.insert(*owner);
    return users;
}

void Ledger::confirm(Pending&& p, std::vector<LedgerEvent>& events)
{
    ValidityResult v = validate(p.tx, now_);
    if (!v) {
        auto& st = status_[p.txid];
        if (st.status != TxStatus::Confirmed) st = TxStatusInfo{TxStatus::Rejected, now_, v};
        events.push_back(LedgerEvent{LedgerEvent::Kind::Rejected, now_, p.txid, p.submitter, v});
        return;
    }
    ConfirmedRecord rec{std::move(p.tx), p.txid, now_, p.submitted, log_.size(), p.submitter, false, {}};
    rec.affected = affected_users(rec.tx);
    for (const auto& in : rec.tx.inputs) {
        utxo_.erase(in.prevout);
        spent_by_[in.prevout] = rec.txid;
    }
    for (std::uint32_t i = 0; i < rec.tx.outputs.size(); ++i) utxo_.insert(OutPoint{rec.txid, i});
    confirmed_index_[rec.txid] = log_.size();
    status_[rec.txid] = TxStatusInfo{TxStatus::Confirmed, now_, {}};
    events.push_back(LedgerEvent{LedgerEvent::Kind::Confirmed, now_, rec.txid, p.submitter, {}});
    log_.push_back(std::move(rec));
    enqueue_visibility(log_.back(), events);
}

void Ledger::enqueue_visibility(const ConfirmedRecord& rec, std::vector<LedgerEvent>&)
{
    const std::set<UserId>& recipients = mode_ == LedgerMode::GlobalSync ? users_ : rec.affected;
    auto add = [&](UserId u) {
        Tick delay = sync_policy_(u, rec.txid);
        if (delay > params_.sync) throw std::logic_error("sync delay policy exceeded delta_sync");
        deliveries_.insert(Delivery{rec.confirmed_at + delay, rec.order, u, rec.txid});
    };
    for (auto u : recipients) add(u);
    if (mode_ == LedgerMode::GlobalSync) {
        // Affected users that were never registered still get their copy.
        for (auto u : rec.affected)
            if (!users_.contains(u)) add(u);
    }
}

std::vector<LedgerEvent> Ledger::advance(Tick to_tick)
{
    if (to_tick < now_) throw std::invalid_argument("advance: to_tick precedes current tick");
    std::vector<LedgerEvent> events;
    for (Tick t = now_; t <= to_tick; ++t) {
        now_ = t;
        std::vector<Pending> due;
        for (auto it = pending_.begin(); it != pending_.end();) {
            if (it->scheduled <= t) {
                due.push_back(std::move(*it));
                it = pending_.erase(it);
            } else {
                ++it;
            }
        }
        std::sort(due.begin(), due.end(), [](const Pending& a, const Pending& b) {
            return std::tie(a.scheduled, a.sequence, a.txid) < std::tie(b.scheduled, b.sequence, b.txid);
        });
        for (auto& p : due) confirm(std::move(p), events);

        while (!deliveries_.empty() && deliveries_.begin()->due <= t) {
            Delivery d = *deliveries_.begin();
            deliveries_.erase(deliveries_.begin());
            visible_[d.user].emplace_back(d.due, static_cast<std::size_t>(d.order));
            events.push_back(LedgerEvent{LedgerEvent::Kind::Delivered, d.due, d.txid, d.user, {}});
        }
        if (t == to_tick) break;
    }
    now_ = to_tick;
    return events;
}

std::vector<VisibleTx> Ledger::visible_transactions(UserId user, Tick now) const
{
    std::vector<VisibleTx> out;
    auto it = visible_.find(user);
    if (it == visible_.end()) return out;
    std::vector<std::pair<Tick, std::size_t>> entries;
    for (const auto& e : it->second)
        if (e.first <= now) entries.push_back(e);
    std::sort(entries.begin(), entries.end(),
              [](const auto& a, const auto& b) { return a.second < b.second; });
    for (const auto& [delivered, idx] : entries)
        out.push_back(VisibleTx{&log_[idx].tx, log_[idx].txid, log_[idx].confirmed_at, delivered});
    return out;
}

Tick Ledger::register_preimage(const Preimage& x, Tick now)
{
    if (mode_ != LedgerMode::GlobalSync) throw std::logic_error("ModeUnsupported: preimage manager requires GlobalSync");
    return registry_.record(hash_preimage(x), now);
}

std::optional<Tick> Ledger::confirmation_tick(const TxId& txid) const
{
    auto it = confirmed_index_.find(txid);
    if (it == confirmed_index_.end()) return std::nullopt;
    return log_[it->second].confirmed_at;
}

TxStatusInfo Ledger::status(const TxId& txid) const
{
    auto it = status_.find(txid);
    return it == status_.end() ? TxStatusInfo{} : it->second;
}

const Transaction* Ledger::find_confirmed(const TxId& txid) const
{
    auto it = confirmed_index_.find(txid);
    return it == confirmed_index_.end() ? nullptr : &log_[it->second].tx;
}

std::optional<TxId> Ledger::spender_of(const OutPoint& op) const
{
    auto it = spent_by_.find(op);
    if (it == spent_by_.end()) return std::nullopt;
    return it->second;
}

Coins Ledger::utxo_total() const
{
    Coins total = 0;
    for (const auto& op : utxo_) total += log_[confirmed_index_.at(op.tx)].tx.outputs[op.index].amount;
    return total;
}

} // namespace pcn
