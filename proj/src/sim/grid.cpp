#include "pcn/sim.hpp"

#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <unordered_set>

namespace pcn {

bool GridDims::empty() const
{
    return strategies.empty() && action_ticks.empty() && conf_delays.empty() && sync_delays.empty() &&
           watch_phases.empty();
}

GridDims default_grid_dims(const ScenarioConfig& base, const std::string& adversary)
{
    GridDims d;
    d.adversary = adversary;
    for (auto k : {StrategyKind::Honest, StrategyKind::SilentAfter, StrategyKind::PublishOutdated,
                   StrategyKind::PublishLatestAndRace, StrategyKind::WithholdPreimage, StrategyKind::StallUpdate,
                   StrategyKind::WithholdRedeemForward})
        d.strategies.push_back(AdversaryStrategy{.kind = k});
    d.action_ticks = {50, 51, 53};
    d.conf_delays = {1, base.timing.conf};
    d.sync_delays = {0, base.timing.sync};
    d.watch_phases = {0, base.timing.user - 1};
    return d;
}

GridTooLarge::GridTooLarge(std::size_t count, std::size_t cap)
    : std::runtime_error("grid has " + std::to_string(count) + " configs, cap is " + std::to_string(cap)),
      count_(count)
{
}

namespace {

template <class T>
std::vector<std::optional<T>> axis(const std::vector<T>& values)
{
    if (values.empty()) return {std::nullopt};
    return {values.begin(), values.end()};
}

} // namespace

std::vector<ScenarioConfig> enumerate_adversary_grid(const ScenarioConfig& base, const GridDims& dims, std::size_t cap)
{
    if (dims.empty()) return {base};
    const auto strategies = axis(dims.strategies);
    const auto ticks = axis(dims.action_ticks);
    const auto confs = axis(dims.conf_delays);
    const auto syncs = axis(dims.sync_delays);
    const auto phases = axis(dims.watch_phases);
    const std::size_t count = strategies.size() * ticks.size() * confs.size() * syncs.size() * phases.size();
    if (count > cap) throw GridTooLarge(count, cap);
    if (!dims.strategies.empty() && !base.user_id(dims.adversary))
        throw ConfigError("grid adversary " + dims.adversary + " is not a user");

    std::vector<ScenarioConfig> out;
    std::unordered_set<std::string> seen;
    for (const auto& s : strategies)
        for (const auto& t : ticks)
            for (const auto& c : confs)
                for (const auto& y : syncs)
                    for (const auto& p : phases) {
                        ScenarioConfig cfg = base;
                        if (s) {
                            AdversaryStrategy st = *s;
                            if (t) st.tick = *t;
                            std::erase_if(cfg.adversaries,
                                          [&](const AdversarySpec& a) { return a.user == dims.adversary; });
                            cfg.adversaries.push_back(AdversarySpec{dims.adversary, st});
                        } else if (t) {
                            for (auto& a : cfg.adversaries) a.strategy.tick = *t;
                        }
                        if (c) cfg.knobs.conf_delay = *c;
                        if (y) cfg.knobs.sync_delay = *y;
                        if (p) cfg.knobs.watch_phase = *p;
                        if (seen.insert(config_hash(cfg)).second) out.push_back(std::move(cfg));
                    }
    return out;
}

bool GridCell::secure() const
{
    for (const auto& [_, v] : verdicts)
        if (!v.secure) return false;
    return true;
}

std::vector<GridCell> run_grid(const std::vector<ScenarioConfig>& configs, unsigned workers)
{
    std::vector<GridCell> cells(configs.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mu;
    auto work = [&] {
        for (std::size_t i = next++; i < configs.size(); i = next++) {
            try {
                cells[i].config = configs[i];
                cells[i].verdicts = check_all(run_scenario(configs[i]), configs[i]);
            } catch (...) {
                std::lock_guard lock(error_mu);
                if (!error) error = std::current_exception();
            }
        }
    };
    workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(configs.size())));
    if (workers == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }
    if (error) std::rethrow_exception(error);
    return cells;
}

} // namespace pcn
