#pragma once

#include "pcn/transaction.hpp"

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace pcn {

enum class LedgerMode : std::uint8_t {
    /// Confirmed transactions reach only their affected users.
    AffectedUserSync,
    /// Confirmed transactions reach every registered user; enables the preimage manager.
    GlobalSync,
};

struct TimingParams {
    Tick conf = 5;  ///< Δl_conf: confirmation bound
    Tick sync = 2;  ///< Δl_sync: delivery bound after confirmation
    Tick comm = 20; ///< Δt_comm: to-self delay on own commitment outputs
    Tick forw = 8;  ///< Δ_forw: per-hop HTLC timeout stagger
    Tick user = 10; ///< Δ_user: honest ledger check interval

    /// Positivity and the Δ_forw constraint. Empty when satisfied.
    std::optional<std::string> structural_violation() const;
    /// 0 < Δ_user < Δt_comm - Δl_sync - Δl_conf. Empty when satisfied.
    std::optional<std::string> watch_precondition_violation() const;
    /// Both of the above.
    std::optional<std::string> violation() const;

    auto operator<=>(const TimingParams&) const = default;
};

enum class InvalidReason : std::uint8_t {
    None,
    UnknownOutpoint,
    AlreadySpent,
    ConditionUnsatisfied,
    ValueMismatch,
    LockTime, ///< confirmation tick before the transaction's lock time
};

std::string to_string(InvalidReason r);

struct ValidityResult {
    InvalidReason reason = InvalidReason::None;
    /// Offending input for UnknownOutpoint / AlreadySpent / ConditionUnsatisfied.
    std::size_t input_index = 0;

    bool valid() const { return reason == InvalidReason::None; }
    explicit operator bool() const { return valid(); }
    std::string describe() const;
};

struct SubmissionReceipt {
    TxId txid;
    Tick submitted = 0;
    Tick scheduled = 0;
    std::uint64_t sequence = 0;
};

struct LedgerEvent {
    enum class Kind : std::uint8_t { Confirmed, Rejected, Delivered };
    Kind kind = Kind::Confirmed;
    Tick tick = 0;
    TxId txid;
    UserId user;           ///< recipient for Delivered, submitter otherwise
    ValidityResult result; ///< reason for Rejected
};

enum class TxStatus : std::uint8_t { Unknown, Pending, Confirmed, Rejected };

struct TxStatusInfo {
    TxStatus status = TxStatus::Unknown;
    /// Scheduled tick while pending, confirmation/rejection tick afterwards.
    Tick tick = 0;
    ValidityResult result;
};

struct VisibleTx {
    const Transaction* tx = nullptr;
    TxId txid;
    Tick confirmed_at = 0;
    Tick delivered_at = 0;
};

struct ConfirmedRecord {
    Transaction tx;
    TxId txid;
    Tick confirmed_at = 0;
    Tick submitted_at = 0;
    std::uint64_t order = 0; ///< global confirmation order
    UserId submitter;
    bool minted = false;
    std::set<UserId> affected;
};

/// Picks the delivery delay in [0, Δl_sync] for one (recipient, transaction) pair.
using SyncDelayPolicy = std::function<Tick(UserId recipient, const TxId& txid)>;

// In-memory first layer. Single owner, deterministic; all mutation goes through
// submit / advance / register_preimage.
class Ledger {
public:
    Ledger(TimingParams params, LedgerMode mode, std::shared_ptr<const KeyRing> keys);

    void register_user(UserId user);
    void set_sync_delay_policy(SyncDelayPolicy policy) { sync_policy_ = std::move(policy); }

    /// Creates already-confirmed coins (no inputs) at the current tick; delivered immediately to owners.
    TxId mint(std::vector<TxOut> outputs);

    /// conf_delay must lie in [1, Δl_conf]. Validity is judged at the scheduled tick.
    SubmissionReceipt submit(const Transaction& tx, UserId submitter, Tick now, Tick conf_delay);

    /// Processes every confirmation and delivery due up to and including `to_tick`.
    std::vector<LedgerEvent> advance(Tick to_tick);

    ValidityResult validate(const Transaction& tx, Tick now) const;

    /// Ω_t: owners of Sig keys in the outputs of `tx` and in the outputs it spends.
    /// Throws std::out_of_range if a spent output is not confirmed.
    std::set<UserId> affected_users(const Transaction& tx) const;

    /// Everything delivered to `user` by `now`, ordered by confirmation.
    std::vector<VisibleTx> visible_transactions(UserId user, Tick now) const;

    /// Preimage manager write. Throws std::logic_error outside GlobalSync mode.
    Tick register_preimage(const Preimage& x, Tick now);
    const PreimageRegistry& preimage_registry() const { return registry_; }

    std::optional<Tick> confirmation_tick(const TxId& txid) const;
    TxStatusInfo status(const TxId& txid) const;
    const Transaction* find_confirmed(const TxId& txid) const;
    bool is_unspent(const OutPoint& op) const { return utxo_.contains(op); }
    std::optional<TxId> spender_of(const OutPoint& op) const;

    const std::vector<ConfirmedRecord>& confirmed_log() const { return log_; }
    const std::set<OutPoint>& utxo_set() const { return utxo_; }
    Coins utxo_total() const;
    std::size_t pending_count() const { return pending_.size(); }

    Tick now() const { return now_; }
    LedgerMode mode() const { return mode_; }
    const TimingParams& params() const { return params_; }
    const KeyRing& keys() const { return *keys_; }

private:
    struct Pending {
        Transaction tx;
        TxId txid;
        UserId submitter;
        Tick submitted = 0;
        Tick scheduled = 0;
        std::uint64_t sequence = 0;
    };
    struct Delivery {
        Tick due = 0;
        std::uint64_t order = 0;
        UserId user;
        TxId txid;
        auto operator<=>(const Delivery&) const = default;
    };

    void confirm(Pending&& p, std::vector<LedgerEvent>& events);
    void enqueue_visibility(const ConfirmedRecord& rec, std::vector<LedgerEvent>& events);

    TimingParams params_;
    LedgerMode mode_;
    std::shared_ptr<const KeyRing> keys_;
    SyncDelayPolicy sync_policy_;
    Tick now_ = 0;
    std::uint64_t next_sequence_ = 0;

    std::set<UserId> users_;
    std::vector<ConfirmedRecord> log_;
    std::map<TxId, std::size_t> confirmed_index_;
    std::set<OutPoint> utxo_;
    std::map<OutPoint, TxId> spent_by_;
    std::vector<Pending> pending_;
    std::map<TxId, TxStatusInfo> status_;
    std::set<Delivery> deliveries_;
    std::map<UserId, std::vector<std::pair<Tick, std::size_t>>> visible_; // (delivery tick, log index)
    PreimageRegistry registry_;
};

} // namespace pcn
