#include "pcn/sim.hpp"

#include <json.hpp>

#include <set>

namespace pcn {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

[[noreturn]] void bad(const std::string& path, const std::string& why)
{
    throw ScenarioParseError(path + ": " + why, 1, 1);
}

void only_keys(const json& obj, const std::string& path, std::initializer_list<const char*> allowed)
{
    if (!obj.is_object()) bad(path, "expected an object");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [k, _] : obj.items())
        if (!ok.contains(k)) bad(path + "." + k, "unknown key");
}

const json& need(const json& obj, const std::string& path, const char* key)
{
    auto it = obj.find(key);
    if (it == obj.end()) bad(path + "." + key, "missing");
    return *it;
}

std::uint64_t uint_at(const json& v, const std::string& path)
{
    if (!v.is_number_unsigned()) bad(path, "expected a non-negative integer");
    return v.get<std::uint64_t>();
}

std::string string_at(const json& v, const std::string& path)
{
    if (!v.is_string()) bad(path, "expected a string");
    return v.get<std::string>();
}

const json& array_at(const json& v, const std::string& path)
{
    if (!v.is_array()) bad(path, "expected an array");
    return v;
}

std::pair<std::size_t, std::size_t> line_column(const std::string& text, std::size_t byte)
{
    std::size_t line = 1, column = 1;
    for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            column = 1;
        } else {
            ++column;
        }
    }
    return {line, column};
}

json parse_text(const std::string& text)
{
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        auto [line, column] = line_column(text, e.byte);
        throw ScenarioParseError("syntax error at line " + std::to_string(line) + ", column " +
                                     std::to_string(column) + ": " + e.what(),
                                 line, column);
    }
}

AdversaryStrategy parse_strategy(const json& j, const std::string& path)
{
    AdversaryStrategy s;
    const json* name = &j;
    const json* params = nullptr;
    if (j.is_object()) {
        only_keys(j, path, {"strategy", "params"});
        name = &need(j, path, "strategy");
        if (auto it = j.find("params"); it != j.end()) params = &*it;
    }
    auto kind = strategy_from_string(string_at(*name, path + ".strategy"));
    if (!kind) bad(path + ".strategy", "unknown strategy " + name->dump());
    s.kind = *kind;
    if (params) {
        const std::string pp = path + ".params";
        only_keys(*params, pp, {"tick", "state", "at"});
        if (auto it = params->find("tick"); it != params->end()) s.tick = uint_at(*it, pp + ".tick");
        if (auto it = params->find("state"); it != params->end()) s.state = uint_at(*it, pp + ".state");
        if (auto it = params->find("at"); it != params->end()) {
            auto k = message_kind_from_string(string_at(*it, pp + ".at"));
            if (!k) bad(pp + ".at", "unknown message kind " + it->dump());
            s.stall_at = *k;
        }
    }
    return s;
}

ordered_json emit_strategy_params(const AdversaryStrategy& s)
{
    ordered_json p;
    p["tick"] = s.tick;
    const AdversaryStrategy d;
    if (s.kind == StrategyKind::PublishOutdated || s.state != d.state) p["state"] = s.state;
    if (s.kind == StrategyKind::StallUpdate || s.stall_at != d.stall_at) p["at"] = to_string(s.stall_at);
    return p;
}

std::vector<Tick> tick_list(const json& obj, const char* key)
{
    std::vector<Tick> out;
    auto it = obj.find(key);
    if (it == obj.end()) return out;
    const std::string path = std::string("dims.") + key;
    for (std::size_t i = 0; i < array_at(*it, path).size(); ++i)
        out.push_back(uint_at((*it)[i], path + "[" + std::to_string(i) + "]"));
    return out;
}

} // namespace

ScenarioConfig parse_scenario(const std::string& text)
{
    const json doc = parse_text(text);
    only_keys(doc, "$", {"timing", "ledger_mode", "users", "channels", "payments", "adversaries", "horizon", "seed",
                         "knobs"});
    ScenarioConfig cfg;

    const json& t = need(doc, "$", "timing");
    only_keys(t, "$.timing", {"conf", "sync", "comm", "forw", "user"});
    cfg.timing.conf = uint_at(need(t, "$.timing", "conf"), "$.timing.conf");
    cfg.timing.sync = uint_at(need(t, "$.timing", "sync"), "$.timing.sync");
    cfg.timing.comm = uint_at(need(t, "$.timing", "comm"), "$.timing.comm");
    cfg.timing.forw = uint_at(need(t, "$.timing", "forw"), "$.timing.forw");
    cfg.timing.user = uint_at(need(t, "$.timing", "user"), "$.timing.user");

    if (auto it = doc.find("ledger_mode"); it != doc.end()) {
        const auto m = string_at(*it, "$.ledger_mode");
        if (m == "affected_user")
            cfg.ledger_mode = LedgerMode::AffectedUserSync;
        else if (m == "global")
            cfg.ledger_mode = LedgerMode::GlobalSync;
        else
            bad("$.ledger_mode", "expected \"affected_user\" or \"global\"");
    }

    const json& users = array_at(need(doc, "$", "users"), "$.users");
    for (std::size_t i = 0; i < users.size(); ++i) {
        const std::string p = "$.users[" + std::to_string(i) + "]";
        only_keys(users[i], p, {"name", "initial_funds"});
        cfg.users.push_back(UserSpec{string_at(need(users[i], p, "name"), p + ".name"),
                                     uint_at(need(users[i], p, "initial_funds"), p + ".initial_funds")});
    }

    if (auto it = doc.find("channels"); it != doc.end()) {
        const json& chans = array_at(*it, "$.channels");
        for (std::size_t i = 0; i < chans.size(); ++i) {
            const std::string p = "$.channels[" + std::to_string(i) + "]";
            const json& c = chans[i];
            only_keys(c, p, {"funder", "peer", "capacity", "open_at", "close"});
            ChannelSpec s;
            s.funder = string_at(need(c, p, "funder"), p + ".funder");
            s.peer = string_at(need(c, p, "peer"), p + ".peer");
            s.capacity = uint_at(need(c, p, "capacity"), p + ".capacity");
            if (auto o = c.find("open_at"); o != c.end()) s.open_at = uint_at(*o, p + ".open_at");
            if (auto cl = c.find("close"); cl != c.end()) {
                only_keys(*cl, p + ".close", {"by", "at"});
                s.close = CloseSpec{string_at(need(*cl, p + ".close", "by"), p + ".close.by"),
                                    uint_at(need(*cl, p + ".close", "at"), p + ".close.at")};
            }
            cfg.channels.push_back(std::move(s));
        }
    }

    if (auto it = doc.find("payments"); it != doc.end()) {
        const json& pays = array_at(*it, "$.payments");
        for (std::size_t i = 0; i < pays.size(); ++i) {
            const std::string p = "$.payments[" + std::to_string(i) + "]";
            const json& j = pays[i];
            only_keys(j, p, {"path", "amount", "start", "mode"});
            PaymentSpec s;
            const json& path = array_at(need(j, p, "path"), p + ".path");
            for (std::size_t k = 0; k < path.size(); ++k)
                s.path.push_back(string_at(path[k], p + ".path[" + std::to_string(k) + "]"));
            s.amount = uint_at(need(j, p, "amount"), p + ".amount");
            s.start = uint_at(need(j, p, "start"), p + ".start");
            if (auto m = j.find("mode"); m != j.end()) {
                auto mode = timeout_mode_from_string(string_at(*m, p + ".mode"));
                if (!mode) bad(p + ".mode", "expected \"staggered\" or \"constant\"");
                s.mode = *mode;
            }
            cfg.payments.push_back(std::move(s));
        }
    }

    if (auto it = doc.find("adversaries"); it != doc.end()) {
        const json& advs = array_at(*it, "$.adversaries");
        for (std::size_t i = 0; i < advs.size(); ++i) {
            const std::string p = "$.adversaries[" + std::to_string(i) + "]";
            const json& a = advs[i];
            only_keys(a, p, {"user", "strategy", "params"});
            json strat = {{"strategy", need(a, p, "strategy")}};
            if (auto pr = a.find("params"); pr != a.end()) strat["params"] = *pr;
            cfg.adversaries.push_back(AdversarySpec{string_at(need(a, p, "user"), p + ".user"), parse_strategy(strat, p)});
        }
    }

    cfg.horizon = uint_at(need(doc, "$", "horizon"), "$.horizon");
    if (auto it = doc.find("seed"); it != doc.end()) cfg.seed = uint_at(*it, "$.seed");

    if (auto it = doc.find("knobs"); it != doc.end()) {
        const std::string p = "$.knobs";
        only_keys(*it, p, {"conf_delay", "sync_delay", "watch_phase", "enforce_watch_precondition"});
        if (auto v = it->find("conf_delay"); v != it->end()) cfg.knobs.conf_delay = uint_at(*v, p + ".conf_delay");
        if (auto v = it->find("sync_delay"); v != it->end()) cfg.knobs.sync_delay = uint_at(*v, p + ".sync_delay");
        if (auto v = it->find("watch_phase"); v != it->end()) cfg.knobs.watch_phase = uint_at(*v, p + ".watch_phase");
        if (auto v = it->find("enforce_watch_precondition"); v != it->end()) {
            if (!v->is_boolean()) bad(p + ".enforce_watch_precondition", "expected true or false");
            cfg.knobs.enforce_watch_precondition = v->get<bool>();
        }
    }

    validate_config(cfg);
    return cfg;
}

std::string emit_scenario(const ScenarioConfig& cfg)
{
    ordered_json doc;
    doc["timing"] = {{"conf", cfg.timing.conf},
                     {"sync", cfg.timing.sync},
                     {"comm", cfg.timing.comm},
                     {"forw", cfg.timing.forw},
                     {"user", cfg.timing.user}};
    doc["ledger_mode"] = cfg.ledger_mode == LedgerMode::GlobalSync ? "global" : "affected_user";
    doc["users"] = ordered_json::array();
    for (const auto& u : cfg.users) doc["users"].push_back({{"name", u.name}, {"initial_funds", u.initial_funds}});
    doc["channels"] = ordered_json::array();
    for (const auto& c : cfg.channels) {
        ordered_json j = {{"funder", c.funder}, {"peer", c.peer}, {"capacity", c.capacity}, {"open_at", c.open_at}};
        if (c.close) j["close"] = {{"by", c.close->by}, {"at", c.close->at}};
        doc["channels"].push_back(std::move(j));
    }
    doc["payments"] = ordered_json::array();
    for (const auto& p : cfg.payments)
        doc["payments"].push_back(
            {{"path", p.path}, {"amount", p.amount}, {"start", p.start}, {"mode", to_string(p.mode)}});
    doc["adversaries"] = ordered_json::array();
    for (const auto& a : cfg.adversaries)
        doc["adversaries"].push_back(
            {{"user", a.user}, {"strategy", to_string(a.strategy.kind)}, {"params", emit_strategy_params(a.strategy)}});
    doc["horizon"] = cfg.horizon;
    doc["seed"] = cfg.seed;
    ordered_json knobs;
    if (cfg.knobs.conf_delay) knobs["conf_delay"] = *cfg.knobs.conf_delay;
    if (cfg.knobs.sync_delay) knobs["sync_delay"] = *cfg.knobs.sync_delay;
    knobs["watch_phase"] = cfg.knobs.watch_phase;
    knobs["enforce_watch_precondition"] = cfg.knobs.enforce_watch_precondition;
    doc["knobs"] = std::move(knobs);
    return doc.dump(2) + "\n";
}

std::string config_hash(const ScenarioConfig& cfg) { return sha256(emit_scenario(cfg)).hex(); }

GridDims parse_grid_dims(const std::string& text, const ScenarioConfig& base)
{
    const json doc = parse_text(text);
    only_keys(doc, "dims", {"adversary", "default", "strategies", "action_ticks", "conf_delays", "sync_delays",
                            "watch_phases"});
    GridDims d;
    if (auto it = doc.find("adversary"); it != doc.end()) d.adversary = string_at(*it, "dims.adversary");
    if (auto it = doc.find("default"); it != doc.end()) {
        if (!it->is_boolean()) bad("dims.default", "expected true or false");
        if (it->get<bool>()) {
            if (d.adversary.empty()) bad("dims.adversary", "required with default dims");
            d = default_grid_dims(base, d.adversary);
        }
    }
    if (auto it = doc.find("strategies"); it != doc.end()) {
        d.strategies.clear();
        for (std::size_t i = 0; i < array_at(*it, "dims.strategies").size(); ++i)
            d.strategies.push_back(parse_strategy((*it)[i], "dims.strategies[" + std::to_string(i) + "]"));
    }
    if (doc.contains("action_ticks")) d.action_ticks = tick_list(doc, "action_ticks");
    if (doc.contains("conf_delays")) d.conf_delays = tick_list(doc, "conf_delays");
    if (doc.contains("sync_delays")) d.sync_delays = tick_list(doc, "sync_delays");
    if (doc.contains("watch_phases")) d.watch_phases = tick_list(doc, "watch_phases");
    if (!d.strategies.empty() && d.adversary.empty()) bad("dims.adversary", "required when strategies are given");
    return d;
}

} // namespace pcn
