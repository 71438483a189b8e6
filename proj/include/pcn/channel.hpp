#pragma once

#include "pcn/ledger.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace pcn {

enum class Direction : std::uint8_t { Outgoing, Incoming };

/// How the hash branch of an HTLC output is unlocked.
enum class HtlcLock : std::uint8_t {
    Hash,     ///< witness carries x with H(x) = y
    Registry, ///< x registered with the preimage manager before the timeout
};

struct Htlc {
    Coins amount = 0;
    HashImage image;
    Tick timeout = 0;
    Direction direction = Direction::Outgoing;
    std::optional<Preimage> known_preimage;
    HtlcLock lock = HtlcLock::Hash;
};

Htlc flipped(const Htlc& h);

// ---------------------------------------------------------------------------
// Transaction builders

/// Everything needed to build one holder's commitment for one state.
/// Balances and HTLC directions are from the holder's point of view.
struct CommitmentParams {
    OutPoint funding;
    Coins capacity = 0;
    PubKey holder_key;
    PubKey other_key;
    std::optional<PubKey> holder_revocation;
    Coins holder_stable = 0;
    Coins other_stable = 0;
    std::vector<Htlc> htlcs;
    Tick to_self_delay = 0;
};

enum class OutputRole : std::uint8_t { HolderStable, OtherStable, HtlcOutput };

struct CommitmentOutput {
    OutputRole role = OutputRole::HolderStable;
    std::size_t htlc = 0; ///< index into CommitmentParams::htlcs for HtlcOutput
};

/// Output order: holder stable, other stable, HTLCs in list order. Zero stable outputs are omitted.
std::vector<CommitmentOutput> commitment_layout(const CommitmentParams& p);
Transaction build_commitment(const CommitmentParams& p);

/// The single output of every second-stage HTLC transaction.
Condition second_stage_condition(const PubKey& holder, const PubKey& other, const PubKey& holder_revocation,
                                 Tick delay);

/// t_T for an outgoing HTLC, t_S for an incoming one. Spends the HTLC output of `commitment`.
/// Throws ChannelError(UnknownHtlc) for an index outside the HTLC list.
Transaction build_htlc_transaction(const CommitmentParams& p, const TxId& commitment, std::size_t htlc_index);

Transaction build_funding(const OutPoint& input, Coins input_amount, Coins capacity, const PubKey& a,
                          const PubKey& b, const PubKey& change);

// ---------------------------------------------------------------------------
// Messages

namespace msg {

struct OpenRequest {
    PubKey funder_key;
    Coins capacity = 0;
    PubKey first_revocation;
};
struct OpenAccept {
    PubKey key;
};
struct FundingCreated {
    Signature commitment_sig;
    TxId funding_txid;
};
struct FundingSigned {
    Signature commitment_sig;
};
struct NextRevocationKey {
    PubKey key;
};
struct UpdateAdd {
    HashImage image;
    Coins amount = 0;
    Tick timeout = 0;
    HtlcLock lock = HtlcLock::Hash;
};
struct UpdateRedeem {
    Preimage preimage;
};
struct CommitmentSigned {
    Signature commitment_sig;
    std::vector<Signature> htlc_sigs;
};
struct RevokeAndAck {
    SecretKey revealed;
    PubKey next;
};

} // namespace msg

enum class MessageKind : std::uint8_t {
    OpenRequest,
    OpenAccept,
    FundingCreated,
    FundingSigned,
    NextRevocationKey,
    UpdateAdd,
    UpdateRedeem,
    CommitmentSigned,
    RevokeAndAck,
};

std::string to_string(MessageKind k);
std::optional<MessageKind> message_kind_from_string(const std::string& s);

struct ChannelMessage {
    using Body = std::variant<msg::OpenRequest, msg::OpenAccept, msg::FundingCreated, msg::FundingSigned,
                              msg::NextRevocationKey, msg::UpdateAdd, msg::UpdateRedeem, msg::CommitmentSigned,
                              msg::RevokeAndAck>;
    ChannelId channel;
    UserId from;
    UserId to;
    Body body;

    MessageKind kind() const { return static_cast<MessageKind>(body.index()); }
};

// ---------------------------------------------------------------------------
// Errors

enum class ChannelErrc : std::uint8_t {
    UnknownState,
    UnknownHtlc,
    DuplicateHtlc,
    UnexpectedMessage,
    BadSignature,
    BadRevocation,
    InsufficientBalance,
    WrongPreimage,
    NotOpen,
    UpdateInFlight,
};

std::string to_string(ChannelErrc c);

class ChannelError : public std::runtime_error {
public:
    ChannelError(ChannelErrc code, const std::string& what);
    ChannelErrc code() const { return code_; }

private:
    ChannelErrc code_;
};

// ---------------------------------------------------------------------------
// Channel endpoint state

enum class Phase : std::uint8_t { Opening, Operational, Updating, Closing, Closed };
std::string to_string(Phase p);

enum class Holder : std::uint8_t { Self, Counterparty };

/// Balances of one state from the owner's point of view.
struct StateTerms {
    Coins stable_self = 0;
    Coins stable_other = 0;
    std::vector<Htlc> htlcs;

    Coins total() const;
    const Htlc* find(const HashImage& y) const;
};

/// Own commitment for one state plus its HTLC transactions, all carrying the counterparty's signatures.
struct HeldCommitment {
    Transaction commitment;
    std::vector<Transaction> htlc_txs; ///< parallel to StateTerms::htlcs
};

enum class OpenStep : std::uint8_t {
    AwaitAccept,         // funder
    AwaitFundingCreated, // peer
    AwaitFundingSigned,  // funder
    AwaitFunding,        // both: t_F not yet visible
    AwaitNextKey,        // both: t_F seen, peer's next revocation key outstanding
    Done,
};

enum class UpdateKind : std::uint8_t { Add, Redeem };

struct UpdateInput {
    UpdateKind kind = UpdateKind::Add;
    HashImage image;
    Coins amount = 0;
    Tick timeout = 0;
    HtlcLock lock = HtlcLock::Hash;
    Preimage preimage; ///< for Redeem

    static UpdateInput add(const HashImage& y, Coins c, Tick t, HtlcLock lock = HtlcLock::Hash);
    static UpdateInput redeem(const Preimage& x);
};

struct PendingUpdate {
    enum class Step : std::uint8_t {
        AwaitCommitmentSigned, ///< both roles, before the peer's signature arrived
        AwaitInitiatorRevoke,  ///< responder, after sending its signature
        AwaitResponderRevoke,  ///< initiator, after revoking state n
    };
    bool initiator = false;
    UpdateInput input;
    StateTerms next;
    Step step = Step::AwaitCommitmentSigned;
    Tick started = 0;
};

struct FundingSource {
    OutPoint input;
    Coins amount = 0;
    KeyPair owner;
    PubKey change;
};

struct ChannelState {
    ChannelId id;
    UserId self;
    UserId other;
    bool funder = false;
    Coins capacity = 0;
    Tick to_self_delay = 0;
    Phase phase = Phase::Opening;
    OpenStep open_step = OpenStep::Done;
    bool sent_next_key = false;

    KeyPair key;
    PubKey other_key;
    OutPoint funding;
    std::optional<Transaction> funding_tx; ///< funder only
    std::optional<FundingSource> funding_source;

    std::uint64_t n = 1;
    std::map<std::uint64_t, StateTerms> terms;
    std::map<std::uint64_t, HeldCommitment> held;
    std::map<std::uint64_t, KeyPair> own_revocation;
    std::map<std::uint64_t, PubKey> other_revocation;
    std::map<std::uint64_t, SecretKey> other_revocation_secret;
    std::set<std::uint64_t> revealed; ///< own states whose secret was sent

    /// Every commitment ever signed, by txid, so that any of them can be classified on sight.
    std::map<TxId, std::uint64_t> own_commitments;
    std::map<TxId, std::uint64_t> other_commitments;

    std::map<HashImage, Preimage> preimages;
    std::optional<PendingUpdate> pending;
    int skip_commitment_signed = 0;

    const StateTerms& current() const { return terms.at(n); }
    /// Terms of state `s`, including the in-flight state n+1.
    const StateTerms& terms_of(std::uint64_t s) const;
    /// Newest own commitment with the counterparty's signature.
    std::uint64_t latest_held_state() const;
};

struct ProtocolContext {
    KeyRing& keys;
    TimingParams timing;
    Rng& rng;
};

struct StepResult {
    std::vector<ChannelMessage> send;
    std::vector<Transaction> submit;
    /// Set when an update completed on this step.
    std::optional<UpdateInput> completed;
    /// Set when our own update lost a concurrent-update tie and should be retried later.
    std::optional<UpdateInput> yielded;
};

/// Commitment parameters of state `n` for either holder.
CommitmentParams commitment_params(const ChannelState& ch, std::uint64_t n, Holder holder);
CommitmentParams commitment_params(const ChannelState& ch, const StateTerms& t, std::uint64_t n, Holder holder);
Transaction build_commitment_transaction(const ChannelState& ch, std::uint64_t n, Holder holder);
/// Own-holder HTLC transaction of state `n` for image `y`.
Transaction build_htlc_transactions(const ChannelState& ch, std::uint64_t n, const HashImage& y);

// Opening
ChannelState open_channel(ProtocolContext& ctx, ChannelId id, UserId self, UserId peer, Coins capacity,
                          const FundingSource& source, StepResult& out);
ChannelState accept_channel(ProtocolContext& ctx, const ChannelMessage& request, StepResult& out);
StepResult step_open(ChannelState& ch, ProtocolContext& ctx, const ChannelMessage& m, Tick now);
/// Called once t_F is visible to this endpoint.
StepResult funding_confirmed(ChannelState& ch, ProtocolContext& ctx, Tick now);

// Updating
StepResult begin_update(ChannelState& ch, ProtocolContext& ctx, const UpdateInput& in, Tick now);
StepResult step_update(ChannelState& ch, ProtocolContext& ctx, const ChannelMessage& m, Tick now);

/// Dispatches to step_open or step_update by message kind.
StepResult handle_message(ChannelState& ch, ProtocolContext& ctx, const ChannelMessage& m, Tick now);

/// Records x everywhere its image appears. Returns true if the image belongs to this channel.
bool learn_preimage(ChannelState& ch, const Preimage& x);

// Closing
/// Own latest commitment (both signatures) plus success transactions whose preimage is known.
std::vector<Transaction> close_channel(ChannelState& ch, const SignatureScheme& scheme, Tick now);

/// Signed t_T of every outgoing HTLC of own state `state`. Each becomes valid at its lock time, once the
/// commitment of that state is confirmed.
std::vector<Transaction> timeout_transactions(const ChannelState& ch, std::uint64_t state,
                                              const SignatureScheme& scheme);

/// Some HTLC, committed or in flight, is within Δl_conf + Δl_sync of its timeout.
bool deadline_reached(const ChannelState& ch, const TimingParams& timing, Tick now);

Coins correct_balance(const ChannelState& ch);

// ---------------------------------------------------------------------------
// Watching and claiming

struct SpendPlan {
    std::vector<PubKey> signers;
    std::vector<Preimage> preimages;
    Tick lock_time = 0; ///< the spending transaction must carry at least this lock time
};

/// A branch of `c` that the holder of `secrets` and `preimages` can satisfy at `now`, if any.
std::optional<SpendPlan> plan_spend(const Condition& c, const std::map<PubKey, SecretKey>& secrets,
                                    const std::map<HashImage, Preimage>& preimages, Tick spent_conf_tick, Tick now,
                                    const PreimageRegistry* registry);

enum class ClaimKind : std::uint8_t { Sweep, Timeout, Success, Revocation };
std::string to_string(ClaimKind k);

struct Claim {
    ClaimKind kind = ClaimKind::Sweep;
    Transaction tx;
};

struct WatchInput {
    const std::vector<VisibleTx>& visible;
    Tick now = 0;
    /// Outpoints already targeted by this user's own pending submissions.
    const std::set<OutPoint>& reserved;
    const PreimageRegistry* registry = nullptr;
};

struct WatchOutput {
    std::vector<Claim> claims;
    std::vector<Preimage> learned;
    /// Some commitment spending the funding output is visible.
    std::optional<TxId> commitment_seen;
    bool revoked_commitment_seen = false;
};

/// Which commitment a transaction is, if any.
struct CommitmentClass {
    Holder holder = Holder::Self;
    std::uint64_t state = 0;
    bool revoked = false;
};
std::optional<CommitmentClass> classify_commitment(const ChannelState& ch, const TxId& txid);

/// Reads the visible ledger, extracts preimages and emits every claim currently possible.
/// Each claim pays a fresh wallet key of the owner.
WatchOutput watch_ledger(ChannelState& ch, ProtocolContext& ctx, const WatchInput& in);

/// Signing keys this endpoint can use on-ledger: its channel key and every counterparty revocation secret.
std::map<PubKey, SecretKey> signing_keys(const ChannelState& ch);

} // namespace pcn
