/*
 * Copyright (c) 2026, The vetgate Authors.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#include <vetgate/hostlist.hpp>
#include <vetgate/rules.hpp>

#include "yaml_util.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <array>
#include <charconv>
#include <fstream>

namespace vetgate::rules
{

namespace
{

template <typename Enum, std::size_t N>
std::optional<Enum> parse_enum(std::string_view text, const std::array<Enum, N> &values)
{
    for (auto v : values)
    {
        if (to_string(v) == text)
        {
            return v;
        }
    }
    return std::nullopt;
}

constexpr std::int64_t kSecond = 1000;
constexpr std::int64_t kMinute = 60 * kSecond;
constexpr std::int64_t kHour   = 60 * kMinute;
constexpr std::int64_t kDay    = 24 * kHour;

bool applicable(Action action, const NodeHealthRecord &r, const Catalog &c)
{
    switch (action)
    {
        case Action::MarkSuspect:
            return r.state == NodeState::Active;
        case Action::Drain:
            return r.state == NodeState::Active || r.state == NodeState::Suspect;
        case Action::AttemptRecovery:
            return r.state == NodeState::Drained && r.recovery_attempts < c.max_recovery_attempts;
        case Action::OpenTicket:
            return r.state == NodeState::Drained && r.recovery_attempts >= c.max_recovery_attempts;
    }
    return false;
}

std::string render(std::string text, const std::string &node)
{
    const std::string marker = "{node}";
    for (auto pos = text.find(marker); pos != std::string::npos; pos = text.find(marker, pos + node.size()))
    {
        text.replace(pos, marker.size(), node);
    }
    return text;
}

[[noreturn]] void bad(const YAML::Node &node, const std::string &message)
{
    throw InvalidCatalog(fmt::format("rules catalog ({}): {}", yaml::where(node), message));
}

std::int64_t duration_of(const YAML::Node &node, std::string_view context)
{
    if (!node.IsScalar())
    {
        bad(node, fmt::format("{} must be a duration", context));
    }
    return parse_duration_ms(node.Scalar());
}

} // namespace

std::string_view to_string(NodeState state)
{
    switch (state)
    {
        case NodeState::Active:
            return "Active";
        case NodeState::Suspect:
            return "Suspect";
        case NodeState::Drained:
            return "Drained";
        case NodeState::Ticketed:
            return "Ticketed";
    }
    return "Active";
}

std::optional<NodeState> parse_node_state(std::string_view text)
{
    return parse_enum(text, std::array {NodeState::Active, NodeState::Suspect, NodeState::Drained, NodeState::Ticketed});
}

std::string_view to_string(Action action)
{
    switch (action)
    {
        case Action::MarkSuspect:
            return "MarkSuspect";
        case Action::Drain:
            return "Drain";
        case Action::AttemptRecovery:
            return "AttemptRecovery";
        case Action::OpenTicket:
            return "OpenTicket";
    }
    return "MarkSuspect";
}

std::optional<Action> parse_action(std::string_view text)
{
    return parse_enum(text, std::array {Action::MarkSuspect, Action::Drain, Action::AttemptRecovery, Action::OpenTicket});
}

std::string_view to_string(EventKind kind)
{
    switch (kind)
    {
        case EventKind::Failure:
            return "Failure";
        case EventKind::Success:
            return "Success";
        case EventKind::Release:
            return "Release";
    }
    return "Failure";
}

std::optional<EventKind> parse_event_kind(std::string_view text)
{
    return parse_enum(text, std::array {EventKind::Failure, EventKind::Success, EventKind::Release});
}

std::string_view to_string(EffectKind kind)
{
    switch (kind)
    {
        case EffectKind::StateChange:
            return "StateChange";
        case EffectKind::DrainListUpdate:
            return "DrainListUpdate";
        case EffectKind::RecoveryCommand:
            return "RecoveryCommand";
        case EffectKind::TicketRecord:
            return "TicketRecord";
    }
    return "StateChange";
}

std::int64_t parse_duration_ms(std::string_view text)
{
    if (text.empty())
    {
        throw InvalidCatalog("empty duration");
    }
    std::int64_t unit = kSecond;
    auto digits       = text;
    switch (text.back())
    {
        case 's':
            unit = kSecond;
            digits.remove_suffix(1);
            break;
        case 'm':
            unit = kMinute;
            digits.remove_suffix(1);
            break;
        case 'h':
            unit = kHour;
            digits.remove_suffix(1);
            break;
        case 'd':
            unit = kDay;
            digits.remove_suffix(1);
            break;
        default:
            break;
    }
    std::int64_t value = 0;
    auto [ptr, ec]     = std::from_chars(digits.data(), digits.data() + digits.size(), value);
    if (ec != std::errc() || ptr != digits.data() + digits.size() || digits.empty() || value <= 0 ||
        value > (std::int64_t {1} << 40))
    {
        throw InvalidCatalog(fmt::format("'{}' is not a positive duration (e.g. 90s, 30m, 6h, 2d)", text));
    }
    return value * unit;
}

std::string format_duration(std::int64_t ms)
{
    if (ms > 0 && ms % kDay == 0)
    {
        return fmt::format("{}d", ms / kDay);
    }
    if (ms > 0 && ms % kHour == 0)
    {
        return fmt::format("{}h", ms / kHour);
    }
    if (ms > 0 && ms % kMinute == 0)
    {
        return fmt::format("{}m", ms / kMinute);
    }
    return fmt::format("{}s", ms / kSecond);
}

void Catalog::validate()
{
    if (max_recovery_attempts < 0)
    {
        throw InvalidCatalog("max_recovery_attempts must be >= 0");
    }
    if (recovery_window_ms <= 0)
    {
        throw InvalidCatalog("recovery_window must be > 0");
    }
    std::set<int> priorities;
    std::set<std::string> names;
    for (const auto &r : rules)
    {
        if (r.name.empty())
        {
            throw InvalidCatalog("rule without a name");
        }
        if (!names.insert(r.name).second)
        {
            throw InvalidCatalog(fmt::format("rule '{}' defined twice", r.name));
        }
        if (r.count < 1 || r.count > static_cast<int>(kFailureHistory))
        {
            throw InvalidCatalog(fmt::format("rule '{}': count must be in [1, {}]", r.name, kFailureHistory));
        }
        if (r.window_ms <= 0)
        {
            throw InvalidCatalog(fmt::format("rule '{}': window must be > 0", r.name));
        }
        if (!priorities.insert(r.priority).second)
        {
            throw InvalidCatalog(fmt::format("rule '{}': priority {} is already taken", r.name, r.priority));
        }
    }
    std::stable_sort(rules.begin(), rules.end(), [](const Rule &a, const Rule &b) { return a.priority < b.priority; });
}

Catalog default_catalog()
{
    Catalog c;
    c.rules = {
        {"suspect-on-repeat", 2, 6 * kHour, std::nullopt, Action::MarkSuspect, 10},
        {"drain-on-persistent", 3, 24 * kHour, std::nullopt, Action::Drain, 20},
        {"recover-drained", 1, 24 * kHour, std::nullopt, Action::AttemptRecovery, 30},
        {"ticket-when-exhausted", 1, 24 * kHour, std::nullopt, Action::OpenTicket, 40},
    };
    c.validate();
    return c;
}

Catalog parse_catalog(std::string_view document)
{
    auto root = yaml::load(document);
    if (!root.IsMap())
    {
        throw InvalidCatalog("rules catalog must be a mapping");
    }
    Catalog c;
    bool have_rules = false;
    for (const auto &key : yaml::keys(root, "catalog"))
    {
        const auto node = root[key];
        if (key == "rules")
        {
            have_rules = true;
            if (!node.IsSequence())
            {
                bad(node, "rules must be a list");
            }
            for (const auto &item : node)
            {
                if (!item.IsMap())
                {
                    bad(item, "each rule must be a mapping");
                }
                Rule r;
                bool have_action = false, have_trigger = false, have_priority = false;
                for (const auto &rk : yaml::keys(item, "rule"))
                {
                    const auto v = item[rk];
                    if (rk == "name")
                    {
                        r.name = yaml::require_string(v, "rule name");
                    }
                    else if (rk == "action")
                    {
                        auto text = yaml::require_string(v, "rule action");
                        auto a    = parse_action(text);
                        if (!a)
                        {
                            bad(v, fmt::format("unknown action '{}' (MarkSuspect, Drain, AttemptRecovery, OpenTicket)", text));
                        }
                        r.action    = *a;
                        have_action = true;
                    }
                    else if (rk == "priority")
                    {
                        r.priority    = static_cast<int>(yaml::require_integer(v, "rule priority"));
                        have_priority = true;
                    }
                    else if (rk == "trigger")
                    {
                        if (!v.IsMap())
                        {
                            bad(v, "trigger must be a mapping");
                        }
                        bool have_count = false, have_window = false;
                        for (const auto &tk : yaml::keys(v, "trigger"))
                        {
                            if (tk == "count")
                            {
                                r.count    = static_cast<int>(yaml::require_integer(v[tk], "trigger count"));
                                have_count = true;
                            }
                            else if (tk == "window")
                            {
                                r.window_ms = duration_of(v[tk], "trigger window");
                                have_window = true;
                            }
                            else if (tk == "eval")
                            {
                                r.eval = yaml::require_string(v[tk], "trigger eval");
                            }
                            else
                            {
                                bad(v[tk], fmt::format("unknown trigger key '{}'", tk));
                            }
                        }
                        if (!have_count || !have_window)
                        {
                            bad(v, "trigger needs count and window");
                        }
                        have_trigger = true;
                    }
                    else
                    {
                        bad(v, fmt::format("unknown rule key '{}'", rk));
                    }
                }
                if (!have_action || !have_trigger || !have_priority)
                {
                    bad(item, "a rule needs name, trigger, action and priority");
                }
                c.rules.push_back(std::move(r));
            }
        }
        else if (key == "max_recovery_attempts")
        {
            c.max_recovery_attempts = static_cast<int>(yaml::require_integer(node, key));
        }
        else if (key == "recovery_window")
        {
            c.recovery_window_ms = duration_of(node, key);
        }
        else if (key == "recovery_command")
        {
            c.recovery_command = yaml::require_string(node, key);
        }
        else if (key == "ticket_webhook")
        {
            c.ticket_webhook = yaml::require_string(node, key);
        }
        else
        {
            bad(node, fmt::format("unknown key '{}'", key));
        }
    }
    if (!have_rules)
    {
        throw InvalidCatalog("rules catalog has no 'rules' list");
    }
    c.validate();
    return c;
}

Catalog load_catalog(const std::filesystem::path &path)
{
    return parse_catalog(yaml::read_file(path));
}

std::string serialize_catalog(const Catalog &catalog)
{
    std::string out;
    out += fmt::format("max_recovery_attempts: {}\n", catalog.max_recovery_attempts);
    out += fmt::format("recovery_window: {}\n", format_duration(catalog.recovery_window_ms));
    if (!catalog.recovery_command.empty())
    {
        out += fmt::format("recovery_command: {}\n", yaml::quote(catalog.recovery_command));
    }
    if (!catalog.ticket_webhook.empty())
    {
        out += fmt::format("ticket_webhook: {}\n", yaml::quote(catalog.ticket_webhook));
    }
    out += "rules:\n";
    for (const auto &r : catalog.rules)
    {
        out += fmt::format("  - name: {}\n", yaml::quote(r.name));
        out += fmt::format("    trigger: {{count: {}, window: {}", r.count, format_duration(r.window_ms));
        if (r.eval)
        {
            out += fmt::format(", eval: {}", yaml::quote(*r.eval));
        }
        out += "}\n";
        out += fmt::format("    action: {}\n", to_string(r.action));
        out += fmt::format("    priority: {}\n", r.priority);
    }
    return out;
}

int count_failures(const NodeHealthRecord &record, std::int64_t now_ms, std::int64_t window_ms, const std::optional<std::string> &eval)
{
    int n = 0;
    for (const auto &f : record.failure_events)
    {
        if (f.timestamp_ms < now_ms - window_ms || f.timestamp_ms > now_ms)
        {
            continue;
        }
        if (eval && std::find(f.evals.begin(), f.evals.end(), *eval) == f.evals.end())
        {
            continue;
        }
        ++n;
    }
    return n;
}

Applied apply_event(const NodeHealthRecord &record, const Event &event, const Catalog &catalog)
{
    Applied out {record, {}};
    auto &r = out.record;
    if (r.node.empty())
    {
        r.node = event.node;
    }
    const auto now = event.timestamp_ms;
    auto effect    = [&](std::optional<Action> action, std::string rule, EffectKind kind, std::string detail) {
        out.effects.push_back({r.node, action, std::move(rule), r.state, kind, std::move(detail), now});
    };

    switch (event.kind)
    {
        case EventKind::Release:
        {
            // The operator vouches for the node: history starts over.
            r.failure_events.clear();
            r.recovery_attempts = 0;
            if (r.state != NodeState::Active)
            {
                bool was_drained = r.state == NodeState::Drained || r.state == NodeState::Ticketed;
                r.state              = NodeState::Active;
                r.last_transition_ms = now;
                effect(std::nullopt, "release", was_drained ? EffectKind::DrainListUpdate : EffectKind::StateChange,
                       was_drained ? fmt::format("remove {} from drain list", r.node) : "released by operator");
            }
            return out;
        }

        case EventKind::Success:
            if (r.state == NodeState::Suspect && count_failures(r, now, catalog.recovery_window_ms, std::nullopt) == 0)
            {
                r.state              = NodeState::Active;
                r.recovery_attempts  = 0;
                r.last_transition_ms = now;
                effect(std::nullopt, "recovered", EffectKind::StateChange,
                       fmt::format("no failures within {}", format_duration(catalog.recovery_window_ms)));
            }
            return out;

        case EventKind::Failure:
            break;
    }

    r.failure_events.push_back({now, event.evals});
    while (r.failure_events.size() > kFailureHistory)
    {
        r.failure_events.pop_front();
    }

    for (const auto &rule : catalog.rules)
    {
        if (!applicable(rule.action, r, catalog))
        {
            continue;
        }
        int n = count_failures(r, now, rule.window_ms, rule.eval);
        if (n < rule.count)
        {
            continue;
        }
        auto why = fmt::format("{} failures within {}", n, format_duration(rule.window_ms));
        switch (rule.action)
        {
            case Action::MarkSuspect:
                r.state              = NodeState::Suspect;
                r.last_transition_ms = now;
                effect(rule.action, rule.name, EffectKind::StateChange, why);
                break;
            case Action::Drain:
                r.state              = NodeState::Drained;
                r.last_transition_ms = now;
                effect(rule.action, rule.name, EffectKind::DrainListUpdate, fmt::format("add {} to drain list ({})", r.node, why));
                break;
            case Action::AttemptRecovery:
                ++r.recovery_attempts;
                effect(rule.action, rule.name, EffectKind::RecoveryCommand,
                       catalog.recovery_command.empty()
                           ? fmt::format("recovery attempt {}/{}", r.recovery_attempts, catalog.max_recovery_attempts)
                           : render(catalog.recovery_command, r.node));
                break;
            case Action::OpenTicket:
            {
                r.state              = NodeState::Ticketed;
                r.last_transition_ms = now;
                nlohmann::ordered_json ticket {{"node", r.node},
                                               {"opened_ms", now},
                                               {"rule", rule.name},
                                               {"recovery_attempts", r.recovery_attempts},
                                               {"recent_failures", n}};
                effect(rule.action, rule.name, EffectKind::TicketRecord, ticket.dump());
                break;
            }
        }
        break;
    }
    return out;
}

Engine::Engine(Catalog catalog)
    : m_catalog(std::move(catalog))
{
    m_catalog.validate();
}

std::vector<ActionEffect> Engine::apply(const Event &event)
{
    if (event.node.empty())
    {
        throw PreconditionError("event without a node");
    }
    auto [last, fresh] = m_last_seen.try_emplace(event.node, event.timestamp_ms);
    if (!fresh && event.timestamp_ms < last->second)
    {
        throw OutOfOrderEvent(fmt::format("event for {} at {} follows one at {}", event.node, event.timestamp_ms, last->second));
    }
    last->second = event.timestamp_ms;

    auto &record = m_records[event.node];
    auto applied = apply_event(record, event, m_catalog);
    record       = std::move(applied.record);
    return applied.effects;
}

std::set<std::string> Engine::drain_list() const
{
    std::set<std::string> out;
    for (const auto &[node, r] : m_records)
    {
        if (r.state == NodeState::Drained || r.state == NodeState::Ticketed)
        {
            out.insert(node);
        }
    }
    return out;
}

std::optional<NodeState> Engine::state_of(std::string_view node) const
{
    auto it = m_records.find(std::string(node));
    if (it == m_records.end())
    {
        return std::nullopt;
    }
    return it->second.state;
}

std::optional<std::int64_t> Engine::last_event_ms(std::string_view node) const
{
    auto it = m_last_seen.find(std::string(node));
    if (it == m_last_seen.end())
    {
        return std::nullopt;
    }
    return it->second;
}

std::map<std::string, NodeHealthRecord> replay(const std::vector<Event> &events, const Catalog &catalog)
{
    Catalog c = catalog;
    c.validate();
    std::map<std::string, NodeHealthRecord> records;
    std::map<std::string, std::int64_t> last;
    for (const auto &e : events)
    {
        auto [it, fresh] = last.try_emplace(e.node, e.timestamp_ms);
        if (!fresh)
        {
            if (e.timestamp_ms < it->second)
            {
                throw OutOfOrderEvent(fmt::format("event for {} at {} follows one at {}", e.node, e.timestamp_ms, it->second));
            }
            it->second = e.timestamp_ms;
        }
        auto &rec = records[e.node];
        rec       = apply_event(rec, e, c).record;
    }
    return records;
}

std::vector<Event> events_from_round(const executor::Verdict &verdict,
                                     const std::vector<executor::NodeReport> &reports,
                                     std::int64_t fallback_ms)
{
    std::vector<Event> events;
    for (const auto &report : reports)
    {
        Event e;
        e.node         = report.node;
        e.timestamp_ms = report.finished_ms > 0 ? report.finished_ms : fallback_ms;
        auto it        = verdict.per_node.find(report.node);
        bool healthy   = it == verdict.per_node.end() || it->second.health == executor::NodeHealth::Healthy;
        e.kind         = healthy ? EventKind::Success : EventKind::Failure;
        if (!healthy)
        {
            if (report.agent_status != executor::AgentStatus::Reported)
            {
                e.evals.emplace_back(fmt::format("agent:{}", executor::to_string(report.agent_status)));
            }
            for (const auto &r : report.results)
            {
                if (r.status == evaluations::Status::Pass)
                {
                    continue;
                }
                for (const auto *name : {&r.eval_name, &r.kind})
                {
                    if (std::find(e.evals.begin(), e.evals.end(), *name) == e.evals.end())
                    {
                        e.evals.push_back(*name);
                    }
                }
            }
        }
        events.push_back(std::move(e));
    }
    std::stable_sort(events.begin(), events.end(), [](const Event &a, const Event &b) {
        return std::tie(a.timestamp_ms, a.node) < std::tie(b.timestamp_ms, b.node);
    });
    return events;
}

std::string encode_event(const Event &event)
{
    nlohmann::ordered_json j {{"kind", to_string(event.kind)},
                              {"node", event.node},
                              {"timestamp_ms", event.timestamp_ms},
                              {"evals", event.evals}};
    return j.dump();
}

Event decode_event(std::string_view line)
{
    try
    {
        auto j = nlohmann::json::parse(line);
        Event e;
        auto kind = parse_event_kind(j.at("kind").get<std::string>());
        if (!kind)
        {
            throw SyntaxError(fmt::format("unknown event kind '{}'", j.at("kind").get<std::string>()), 0, 0);
        }
        e.kind         = *kind;
        e.node         = j.at("node").get<std::string>();
        e.timestamp_ms = j.at("timestamp_ms").get<std::int64_t>();
        if (j.contains("evals"))
        {
            e.evals = j.at("evals").get<std::vector<std::string>>();
        }
        return e;
    }
    catch (const nlohmann::json::exception &ex)
    {
        throw SyntaxError(fmt::format("malformed event: {}", ex.what()), 0, 0);
    }
}

std::vector<Event> read_event_log(const std::filesystem::path &path)
{
    std::vector<Event> events;
    if (!std::filesystem::exists(path))
    {
        return events;
    }
    std::ifstream in(path);
    if (!in)
    {
        throw IoError(fmt::format("cannot read event log '{}'", path.string()));
    }
    std::string line;
    while (std::getline(in, line))
    {
        if (!line.empty())
        {
            events.push_back(decode_event(line));
        }
    }
    return events;
}

void append_event_log(const std::filesystem::path &path, const std::vector<Event> &events)
{
    std::ofstream out(path, std::ios::app);
    for (const auto &e : events)
    {
        out << encode_event(e) << '\n';
    }
    out.flush();
    if (!out)
    {
        throw IoError(fmt::format("cannot append to event log '{}'", path.string()));
    }
}

void write_drain_list(const std::set<std::string> &nodes, const std::filesystem::path &path)
{
    std::vector<std::string> list(nodes.begin(), nodes.end());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << (list.empty() ? std::string() : hostlist::compress(list));
    out.close();
    if (!out)
    {
        throw IoError(fmt::format("cannot write drain list '{}'", path.string()));
    }
}

} // namespace vetgate::rules
