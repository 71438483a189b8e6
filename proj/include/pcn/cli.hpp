#pragma once

#include "pcn/sim.hpp"

#include <ostream>
#include <string>
#include <vector>

namespace pcn::cli {

/// Exit codes of the command-line tool.
enum Exit : int { Ok = 0, Violation = 1, BadInput = 2, TooLarge = 3 };

/// `args` excludes the program name.
int main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Final balances, verdicts, seed and revocation claims of one run, as written by `run --report`.
std::string format_report(const RunResult& run, const ScenarioConfig& cfg,
                          const std::vector<std::pair<UserId, Verdict>>& verdicts,
                          const std::vector<ChannelId>& verdict_channels);

struct CollateralRow {
    std::size_t hop = 0;
    Tick timeout_staggered = 0;
    Tick timeout_constant = 0;
    std::optional<Tick> staggered;
    std::optional<Tick> constant;
};

/// Runs payment `payment` of `cfg` once per timeout mode. Unless `honest`, the receiver withholds x.
/// Throws ConfigError when the ledger mode is not global.
std::vector<CollateralRow> compare_collateral(const ScenarioConfig& cfg, std::size_t payment, bool honest);

} // namespace pcn::cli
