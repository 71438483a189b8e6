#include "pcn/cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

namespace pcn::cli {

namespace {

std::string read_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
}

struct Loaded {
    std::optional<ScenarioConfig> cfg;
    int code = Ok;
};

Loaded load(const std::string& path, std::ostream& err, const std::function<void(ScenarioConfig&)>& adjust = {})
{
    Loaded l;
    try {
        std::string text = read_file(path);
        if (adjust) {
            // Adjustments may legalise an otherwise rejected file, so validate after applying them.
            ScenarioConfig cfg = parse_scenario(text);
            adjust(cfg);
            validate_config(cfg);
            l.cfg = std::move(cfg);
        } else {
            l.cfg = parse_scenario(text);
        }
    } catch (const ScenarioParseError& e) {
        err << path << ":" << e.line() << ":" << e.column() << ": " << e.what() << "\n";
        l.code = BadInput;
    } catch (const ConfigError& e) {
        err << path << ": invalid scenario: " << e.what() << "\n";
        l.code = BadInput;
    } catch (const std::runtime_error& e) {
        err << e.what() << "\n";
        l.code = BadInput;
    }
    return l;
}

std::string strategy_label(const AdversaryStrategy& s)
{
    std::string out = to_string(s.kind);
    if (s.kind != StrategyKind::Honest) out += "@" + std::to_string(s.tick);
    if (s.kind == StrategyKind::PublishOutdated) out += "(state " + std::to_string(s.state) + ")";
    if (s.kind == StrategyKind::StallUpdate) out += "(" + to_string(s.stall_at) + ")";
    return out;
}

std::string verdict_line(const Verdict& v)
{
    std::ostringstream os;
    if (!v.closed) return "Secure (never closed)";
    os << (v.secure ? "Secure" : "Violation") << " correct=" << v.correct_balance << " received=" << v.received
       << " t_close=" << v.t_close << " deadline=" << v.deadline;
    if (v.last_sweep) os << " last_sweep=" << *v.last_sweep;
    if (!v.secure) os << " shortfall=" << v.shortfall;
    return os.str();
}

int cmd_run(const std::string& path, const std::string& trace_out, const std::string& report_out, bool seedless,
            std::ostream& out, std::ostream& err)
{
    auto l = load(path, err, [&](ScenarioConfig& c) {
        if (seedless) c.seed = kDefaultSeed;
    });
    if (!l.cfg) return l.code;
    const ScenarioConfig& cfg = *l.cfg;
    RunResult run = run_scenario(cfg);
    std::vector<ChannelId> chans;
    auto verdicts = check_all(run, cfg, &chans);
    const std::string report = format_report(run, cfg, verdicts, chans);
    try {
        if (!trace_out.empty()) write_file(trace_out, run.trace.to_text());
        if (report_out.empty())
            out << report;
        else
            write_file(report_out, report);
    } catch (const std::runtime_error& e) {
        err << e.what() << "\n";
        return BadInput;
    }
    for (const auto& [_, v] : verdicts)
        if (!v.secure) return Violation;
    return Ok;
}

int cmd_grid(const std::string& path, const std::string& dims_path, std::string adversary, std::size_t cap,
             unsigned parallel, std::optional<Tick> mutate_user, std::ostream& out, std::ostream& err)
{
    auto l = load(path, err, [&](ScenarioConfig& c) {
        if (mutate_user) {
            c.timing.user = *mutate_user;
            c.knobs.enforce_watch_precondition = false;
            c.knobs.watch_phase = 0;
        }
    });
    if (!l.cfg) return l.code;
    const ScenarioConfig& base = *l.cfg;
    if (adversary.empty() && !base.adversaries.empty()) adversary = base.adversaries.front().user;

    GridDims dims;
    try {
        if (!dims_path.empty()) {
            dims = parse_grid_dims(read_file(dims_path), base);
            if (dims.adversary.empty()) dims.adversary = adversary;
        } else {
            if (adversary.empty()) {
                err << "grid: no adversary; name one with --adversary or in the scenario\n";
                return BadInput;
            }
            dims = default_grid_dims(base, adversary);
        }
    } catch (const ScenarioParseError& e) {
        err << dims_path << ":" << e.line() << ":" << e.column() << ": " << e.what() << "\n";
        return BadInput;
    } catch (const std::runtime_error& e) {
        err << e.what() << "\n";
        return BadInput;
    }

    std::vector<ScenarioConfig> configs;
    try {
        configs = enumerate_adversary_grid(base, dims, cap);
    } catch (const GridTooLarge& e) {
        err << "grid too large: " << e.what() << "\n";
        return TooLarge;
    } catch (const ConfigError& e) {
        err << e.what() << "\n";
        return BadInput;
    }

    std::vector<GridCell> cells;
    try {
        cells = run_grid(configs, parallel);
    } catch (const ConfigError& e) {
        err << "invalid grid config: " << e.what() << "\n";
        return BadInput;
    }

    std::size_t secure = 0;
    out << "strategy conf sync phase | verdicts\n";
    for (const auto& cell : cells) {
        const auto& c = cell.config;
        const UserId adv = c.user_id(dims.adversary).value_or(UserId{});
        out << strategy_label(c.strategy_of(adv)) << " conf=" << c.conf_delay() << " sync=" << c.sync_delay()
            << " phase=" << c.knobs.watch_phase << " |";
        for (const auto& [u, v] : cell.verdicts) {
            out << " " << c.users[u.value].name << ":" << (v.secure ? "Secure" : "Violation");
            if (!v.secure) out << "(shortfall=" << v.shortfall << ")";
        }
        out << "\n";
        if (cell.secure()) ++secure;
    }
    out << secure << "/" << cells.size() << " Secure\n";
    if (secure != cells.size()) out << "violations: " << cells.size() - secure << "\n";
    return secure == cells.size() ? Ok : Violation;
}

int cmd_collateral(const std::string& path, std::size_t payment, bool honest, std::ostream& out, std::ostream& err)
{
    auto l = load(path, err);
    if (!l.cfg) return l.code;
    std::vector<CollateralRow> rows;
    try {
        rows = compare_collateral(*l.cfg, payment, honest);
    } catch (const ConfigError& e) {
        err << path << ": " << e.what() << "\n";
        return BadInput;
    }
    const auto cell = [](const std::optional<Tick>& t) { return t ? std::to_string(*t) : std::string("-"); };
    out << "hop  T_staggered  T_constant  lock_staggered  lock_constant\n";
    for (const auto& r : rows)
        out << std::setw(3) << r.hop << "  " << std::setw(11) << r.timeout_staggered << "  " << std::setw(10)
            << r.timeout_constant << "  " << std::setw(14) << cell(r.staggered) << "  " << std::setw(13)
            << cell(r.constant) << "\n";
    return Ok;
}

} // namespace

std::string format_report(const RunResult& run, const ScenarioConfig& cfg,
                          const std::vector<std::pair<UserId, Verdict>>& verdicts,
                          const std::vector<ChannelId>& verdict_channels)
{
    std::ostringstream os;
    os << "seed: " << cfg.seed << "\n";
    os << "end tick: " << run.end_tick << "\n";
    os << "balances:\n";
    for (std::size_t i = 0; i < run.user_names.size(); ++i) {
        const UserId u{static_cast<std::uint32_t>(i)};
        os << "  " << run.user_names[i] << " initial=" << run.initial_funds.at(u)
           << " final=" << run.final_wallet.at(u) << " (" << strategy_label(cfg.strategy_of(u)) << ")\n";
    }
    os << "total: minted=" << run.minted_total << " final=" << run.final_utxo_total << "\n";
    os << "conservation: " << (run.minted_total == run.final_utxo_total ? "ok" : "BROKEN") << "\n";
    for (const auto& e : run.trace.events())
        if (e.kind == EventKind::Confirmed && e.detail == "revocation")
            os << "revocation claimed: " << e.amount.value_or(0) << "\n";
    os << "payments:\n";
    for (const auto& p : run.payments) {
        os << "  #" << p.spec_index << " " << to_string(p.outcome.kind);
        if (p.outcome.stalled_hop) os << " stalled_hop=" << *p.outcome.stalled_hop;
        if (!p.outcome.reason.empty()) os << " (" << p.outcome.reason << ")";
        os << "\n";
    }
    os << "verdicts:\n";
    for (std::size_t i = 0; i < verdicts.size(); ++i) {
        const auto& [u, v] = verdicts[i];
        os << "  channel " << verdict_channels.at(i).value << " " << run.user_names[u.value] << ": " << verdict_line(v)
           << "\n";
    }
    return os.str();
}

std::vector<CollateralRow> compare_collateral(const ScenarioConfig& cfg, std::size_t payment, bool honest)
{
    if (cfg.ledger_mode != LedgerMode::GlobalSync)
        throw ConfigError("collateral comparison needs ledger_mode \"global\" for constant timeouts");
    if (payment >= cfg.payments.size()) throw ConfigError("no payment #" + std::to_string(payment));

    std::vector<CollateralRow> rows;
    for (TimeoutMode mode : {TimeoutMode::Staggered, TimeoutMode::ConstantTimeout}) {
        ScenarioConfig c = cfg;
        c.payments = {cfg.payments[payment]};
        c.payments[0].mode = mode;
        if (!honest) {
            const std::string receiver = c.payments[0].path.back();
            std::erase_if(c.adversaries, [&](const AdversarySpec& a) { return a.user == receiver; });
            c.adversaries.push_back(AdversarySpec{receiver, AdversaryStrategy{.kind = StrategyKind::WithholdPreimage}});
        }
        validate_config(c);
        const RunResult run = run_scenario(c);
        const PaymentRun& p = run.payments.at(0);
        if (!p.plan) throw ConfigError("payment could not be planned: " + p.outcome.reason);
        const auto locks = collateral_lock_time(run.trace, *p.plan, p.hops);
        rows.resize(locks.size());
        for (std::size_t i = 0; i < locks.size(); ++i) {
            rows[i].hop = i;
            const std::optional<Tick> t =
                locks[i].added && locks[i].resolved ? std::optional<Tick>(locks[i].ticks) : std::nullopt;
            if (mode == TimeoutMode::Staggered) {
                rows[i].staggered = t;
                rows[i].timeout_staggered = p.plan->timeouts[i];
            } else {
                rows[i].constant = t;
                rows[i].timeout_constant = p.plan->timeouts[i];
            }
        }
    }
    return rows;
}

int main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Payment channel network simulator"};
    app.require_subcommand(1);

    std::string scenario, trace_out, report_out, dims_path, adversary;
    bool seedless = false, honest = false;
    std::size_t cap = kDefaultGridCap, payment = 0;
    unsigned parallel = std::max(1u, std::thread::hardware_concurrency());
    std::optional<Tick> mutate_user;

    auto* run = app.add_subcommand("run", "Run one scenario and check every honest channel endpoint");
    run->add_option("scenario", scenario, "Scenario file")->required();
    run->add_option("--trace", trace_out, "Write the event trace here");
    run->add_option("--report", report_out, "Write the report here instead of stdout");
    run->add_flag("--seedless", seedless, "Ignore the scenario seed and use the default one");

    auto* grid = app.add_subcommand("grid", "Run the adversary grid over a base scenario");
    grid->add_option("scenario", scenario, "Base scenario file")->required();
    grid->add_option("--dims", dims_path, "Grid dimensions file (default: the standard grid)");
    grid->add_option("--adversary", adversary, "User the strategies are assigned to");
    grid->add_option("--max-configs", cap, "Refuse grids larger than this");
    grid->add_option("--parallel", parallel, "Worker threads")->check(CLI::PositiveNumber);
    grid->add_option("--mutate-watch-interval", mutate_user,
                     "Set delta_user to this value and drop the watch-interval precondition");

    auto* coll = app.add_subcommand("collateral", "Compare per-hop lock times of staggered and constant timeouts");
    coll->add_option("scenario", scenario, "Scenario file (ledger_mode global)")->required();
    coll->add_option("--payment", payment, "Index of the payment to measure");
    coll->add_flag("--honest", honest, "Let the receiver release x normally");

    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        app.parse(rev);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? Ok : BadInput;
    }

    if (run->parsed()) return cmd_run(scenario, trace_out, report_out, seedless, out, err);
    if (grid->parsed()) return cmd_grid(scenario, dims_path, adversary, cap, parallel, mutate_user, out, err);
    return cmd_collateral(scenario, payment, honest, out, err);
}

} // namespace pcn::cli
