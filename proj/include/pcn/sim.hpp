#pragma once

#include "pcn/routing.hpp"

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace pcn {

// ---------------------------------------------------------------------------
// Scenario description

enum class StrategyKind : std::uint8_t {
    Honest,
    SilentAfter,           ///< offline from `tick` on: no messages, no ledger access
    PublishOutdated,       ///< at `tick`, publishes its commitment for `state` (0: the revoked state paying it most)
    PublishLatestAndRace,  ///< at `tick`, publishes its latest commitment and claims every output as early as possible
    WithholdPreimage,      ///< from `tick` on, never uses a payment secret it holds or learns
    StallUpdate,           ///< from `tick` on, stops the next update instead of sending `stall_at`
    WithholdRedeemForward, ///< from `tick` on, keeps x off-ledger but still claims with it on-ledger
};

std::string to_string(StrategyKind k);
std::optional<StrategyKind> strategy_from_string(const std::string& s);

struct AdversaryStrategy {
    StrategyKind kind = StrategyKind::Honest;
    Tick tick = 0;
    std::uint64_t state = 0;
    MessageKind stall_at = MessageKind::RevokeAndAck;

    bool operator==(const AdversaryStrategy&) const = default;
};

struct UserSpec {
    std::string name;
    Coins initial_funds = 0;
    bool operator==(const UserSpec&) const = default;
};

struct CloseSpec {
    std::string by;
    Tick at = 0;
    bool operator==(const CloseSpec&) const = default;
};

struct ChannelSpec {
    std::string funder;
    std::string peer;
    Coins capacity = 0;
    Tick open_at = 0;
    std::optional<CloseSpec> close;
    bool operator==(const ChannelSpec&) const = default;
};

struct PaymentSpec {
    std::vector<std::string> path;
    Coins amount = 0;
    Tick start = 0;
    TimeoutMode mode = TimeoutMode::Staggered;
    bool operator==(const PaymentSpec&) const = default;
};

struct AdversarySpec {
    std::string user;
    AdversaryStrategy strategy;
    bool operator==(const AdversarySpec&) const = default;
};

// Adversarial timing applied to the honest parties. Adversaries always confirm in one
// tick and see deliveries at once.
struct TimingKnobs {
    std::optional<Tick> conf_delay; ///< default Δl_conf
    std::optional<Tick> sync_delay; ///< default Δl_sync
    Tick watch_phase = 0;           ///< honest ledger checks at ticks ≡ phase (mod Δ_user)
    bool enforce_watch_precondition = true;
    bool operator==(const TimingKnobs&) const = default;
};

inline constexpr std::uint64_t kDefaultSeed = 0x5eed;

struct ScenarioConfig {
    TimingParams timing;
    LedgerMode ledger_mode = LedgerMode::AffectedUserSync;
    std::vector<UserSpec> users;
    std::vector<ChannelSpec> channels;
    std::vector<PaymentSpec> payments;
    std::vector<AdversarySpec> adversaries;
    Tick horizon = 0;
    std::uint64_t seed = kDefaultSeed;
    TimingKnobs knobs;

    bool operator==(const ScenarioConfig&) const = default;

    std::optional<UserId> user_id(const std::string& name) const;
    AdversaryStrategy strategy_of(UserId u) const;
    bool honest(UserId u) const { return strategy_of(u).kind == StrategyKind::Honest; }
    Tick conf_delay() const { return knobs.conf_delay.value_or(timing.conf); }
    Tick sync_delay() const { return knobs.sync_delay.value_or(timing.sync); }
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Throws ConfigError naming the first violated rule.
void validate_config(const ScenarioConfig& cfg);

// ---------------------------------------------------------------------------
// Running

/// End-of-tick view of one endpoint, enough to evaluate the correct balance afterwards.
struct EndpointSnapshot {
    Phase phase = Phase::Opening;
    /// Newest state this endpoint has not revoked: n, or n+1 once n was revoked mid-update.
    std::uint64_t n = 1;
    StateTerms terms;
    std::vector<Htlc> pending_htlcs;
};

struct ChannelRecord {
    ChannelId id;
    UserId funder;
    UserId peer;
    Coins capacity = 0;
    std::optional<OutPoint> funding;
    std::map<UserId, std::map<Tick, EndpointSnapshot>> snapshots;
};

struct PaymentRun {
    std::size_t spec_index = 0;
    std::optional<PaymentPlan> plan;
    std::vector<ChannelId> hops;
    PaymentOutcome outcome;
};

struct RunResult {
    EventTrace trace;
    std::vector<ChannelRecord> channels;
    std::vector<PaymentRun> payments;
    std::vector<std::string> user_names;
    std::map<UserId, Coins> initial_funds;
    /// Wallet-key holdings at the end of the run.
    std::map<UserId, Coins> final_wallet;
    Coins minted_total = 0;
    Coins final_utxo_total = 0;
    Tick end_tick = 0;
};

class Simulation {
public:
    explicit Simulation(ScenarioConfig cfg);
    ~Simulation();
    Simulation(const Simulation&) = delete;
    Simulation& operator=(const Simulation&) = delete;

    /// Runs tick now()+1 (tick 0 on the first call). Returns false once the horizon has been processed.
    bool step();
    void run();

    Tick now() const;
    bool finished() const;
    const ScenarioConfig& config() const;
    const Ledger& ledger() const;
    const EventTrace& trace() const;
    const ChannelState* endpoint(UserId user, ChannelId channel) const;

    /// Starts a payment from its sender at the current tick. Returns the index into RunResult::payments.
    std::size_t start_payment(const std::vector<UserId>& path, Coins amount, TimeoutMode mode);
    PaymentOutcome outcome(std::size_t payment) const;

    RunResult result() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

RunResult run_scenario(const ScenarioConfig& cfg);

/// Starts `path`/`amount` at the current tick and steps until the sender holds x or every hop is resolved.
PaymentOutcome drive_payment(Simulation& sim, const std::vector<UserId>& path, Coins amount, TimeoutMode mode);

// ---------------------------------------------------------------------------
// Security checking

enum class SecurityErrc : std::uint8_t { NotHonest, ChannelUnknown };

class SecurityError : public std::runtime_error {
public:
    SecurityError(SecurityErrc code, const std::string& what) : std::runtime_error(what), code_(code) {}
    SecurityErrc code() const { return code_; }

private:
    SecurityErrc code_;
};

struct Verdict {
    bool secure = true;
    bool closed = false; ///< false when the channel never went on-ledger; nothing to check
    Tick t_close = 0;
    Tick deadline = 0;
    Coins correct_balance = 0;
    Coins received = 0; ///< swept into the user's wallet keys by `deadline`
    Coins shortfall = 0;
    std::optional<Tick> last_sweep;
    std::vector<std::string> evidence;
};

/// max(T_htlc_max, t_close) + 2 Δl_conf + Δt_comm
Tick security_deadline(const TimingParams& timing, Tick t_close, std::optional<Tick> htlc_max);

/// Whether `user` received its correct balance of `channel` in time. Without `t_close`, the first
/// close by the user or commitment submission by the counterparty is used.
Verdict check_security(const RunResult& run, const ScenarioConfig& cfg, UserId user, ChannelId channel,
                       std::optional<Tick> t_close = std::nullopt);

// ---------------------------------------------------------------------------
// Adversary grid

struct GridDims {
    std::string adversary; ///< user the strategies are assigned to
    std::vector<AdversaryStrategy> strategies; ///< ticks are overridden by action_ticks when given
    std::vector<Tick> action_ticks;
    std::vector<Tick> conf_delays;
    std::vector<Tick> sync_delays;
    std::vector<Tick> watch_phases;

    bool empty() const;
};

/// 7 strategies x {50, 51, 53} x conf {1, Δl_conf} x sync {0, Δl_sync} x phase {0, Δ_user - 1}.
GridDims default_grid_dims(const ScenarioConfig& base, const std::string& adversary);

inline constexpr std::size_t kDefaultGridCap = 100000;

class GridTooLarge : public std::runtime_error {
public:
    GridTooLarge(std::size_t count, std::size_t cap);
    std::size_t count() const { return count_; }

private:
    std::size_t count_;
};

/// Cartesian product of `dims` applied to `base`, duplicates removed by configuration hash.
std::vector<ScenarioConfig> enumerate_adversary_grid(const ScenarioConfig& base, const GridDims& dims,
                                                     std::size_t cap = kDefaultGridCap);

struct GridCell {
    ScenarioConfig config;
    std::vector<std::pair<UserId, Verdict>> verdicts; ///< honest endpoints of every channel
    bool secure() const;
};

/// Runs every config on `workers` threads. Result order matches `configs`.
std::vector<GridCell> run_grid(const std::vector<ScenarioConfig>& configs, unsigned workers = 1);

/// Verdicts for every honest endpoint of every channel in one run.
std::vector<std::pair<UserId, Verdict>> check_all(const RunResult& run, const ScenarioConfig& cfg,
                                                  std::vector<ChannelId>* channels = nullptr);

// ---------------------------------------------------------------------------
// Scenario files

class ScenarioParseError : public std::runtime_error {
public:
    ScenarioParseError(const std::string& what, std::size_t line, std::size_t column)
        : std::runtime_error(what), line_(line), column_(column)
    {
    }
    std::size_t line() const { return line_; }
    std::size_t column() const { return column_; }

private:
    std::size_t line_;
    std::size_t column_;
};

/// Parses and validates. Syntax errors carry line/column; unknown keys and bad values are reported
/// with their JSON path and the position of the enclosing document (line 1, column 1).
ScenarioConfig parse_scenario(const std::string& text);
std::string emit_scenario(const ScenarioConfig& cfg);
/// Hex digest of the canonical emitted form.
std::string config_hash(const ScenarioConfig& cfg);

GridDims parse_grid_dims(const std::string& text, const ScenarioConfig& base);

} // namespace pcn
