/*
 * Copyright (c) 2026, The vetgate Authors.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <vetgate/error.hpp>
#include <vetgate/executor.hpp>

#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

// Per-node health tracking with an escalation catalog: suspect, drain,
// recovery attempts and finally a ticket.
namespace vetgate::rules
{

VETGATE_DEFINE_ERROR(InvalidCatalog);
VETGATE_DEFINE_ERROR(OutOfOrderEvent);

enum class NodeState
{
    Active,
    Suspect,
    Drained,
    Ticketed,
};

std::string_view to_string(NodeState state);
std::optional<NodeState> parse_node_state(std::string_view text);

enum class Action
{
    MarkSuspect,
    Drain,
    AttemptRecovery,
    OpenTicket,
};

std::string_view to_string(Action action);
std::optional<Action> parse_action(std::string_view text);

/// "90s", "30m", "6h", "2d" or a bare number of seconds. Throws InvalidCatalog.
std::int64_t parse_duration_ms(std::string_view text);
std::string format_duration(std::int64_t ms);

struct Rule
{
    std::string name;
    int count              = 1;
    std::int64_t window_ms = 0;
    std::optional<std::string> eval; ///< matches a failing eval's name or kind
    Action action          = Action::MarkSuspect;
    int priority           = 0;

    bool operator==(const Rule &) const = default;
};

struct Catalog
{
    std::vector<Rule> rules; ///< ascending priority once validated
    int max_recovery_attempts      = 2;
    std::int64_t recovery_window_ms = 6LL * 3600 * 1000; ///< failure-free span a Suspect node needs
    std::string recovery_command;   ///< template, "{node}" is substituted
    std::string ticket_webhook;

    /// Sorts by priority. Throws InvalidCatalog.
    void validate();

    bool operator==(const Catalog &) const = default;
};

/// MarkSuspect 2/6h (10), Drain 3/24h (20), AttemptRecovery 1/24h (30),
/// OpenTicket 1/24h (40), two recovery attempts.
Catalog default_catalog();

/// Throws InvalidCatalog or SyntaxError.
Catalog parse_catalog(std::string_view document);
Catalog load_catalog(const std::filesystem::path &path);
std::string serialize_catalog(const Catalog &catalog);

enum class EventKind
{
    Failure,
    Success,
    Release, ///< operator returns the node to service
};

std::string_view to_string(EventKind kind);
std::optional<EventKind> parse_event_kind(std::string_view text);

struct Event
{
    EventKind kind = EventKind::Failure;
    std::string node;
    std::int64_t timestamp_ms = 0;
    std::vector<std::string> evals; ///< names and kinds of the failing evals

    bool operator==(const Event &) const = default;
};

struct FailureRecord
{
    std::int64_t timestamp_ms = 0;
    std::vector<std::string> evals;

    bool operator==(const FailureRecord &) const = default;
};

inline constexpr std::size_t kFailureHistory = 256;

struct NodeHealthRecord
{
    std::string node;
    NodeState state = NodeState::Active;
    std::deque<FailureRecord> failure_events; ///< oldest first, bounded
    std::int64_t last_transition_ms = 0;
    int recovery_attempts           = 0;

    bool operator==(const NodeHealthRecord &) const = default;
};

enum class EffectKind
{
    StateChange,
    DrainListUpdate,
    RecoveryCommand,
    TicketRecord,
};

std::string_view to_string(EffectKind kind);

struct ActionEffect
{
    std::string node;
    std::optional<Action> action; ///< empty for recovery/release transitions
    std::string rule;
    NodeState resulting_state = NodeState::Active;
    EffectKind kind           = EffectKind::StateChange;
    std::string detail;
    std::int64_t timestamp_ms = 0;

    bool operator==(const ActionEffect &) const = default;
};

struct Applied
{
    NodeHealthRecord record;
    std::vector<ActionEffect> effects;
};

/// Pure transition for one node. The catalog must be validated.
Applied apply_event(const NodeHealthRecord &record, const Event &event, const Catalog &catalog);

/// Failures in [now - window, now] matching the filter.
int count_failures(const NodeHealthRecord &record, std::int64_t now_ms, std::int64_t window_ms, const std::optional<std::string> &eval);

/// Incrementally maintained state for many nodes.
class Engine
{
public:
    explicit Engine(Catalog catalog = default_catalog());

    /// Throws OutOfOrderEvent when the event is older than the last one seen.
    std::vector<ActionEffect> apply(const Event &event);

    std::set<std::string> drain_list() const;
    const std::map<std::string, NodeHealthRecord> &records() const
    {
        return m_records;
    }
    std::optional<NodeState> state_of(std::string_view node) const;
    /// Timestamp of the newest event applied for `node`.
    std::optional<std::int64_t> last_event_ms(std::string_view node) const;
    const Catalog &catalog() const
    {
        return m_catalog;
    }

private:
    Catalog m_catalog;
    std::map<std::string, NodeHealthRecord> m_records;
    std::map<std::string, std::int64_t> m_last_seen;
};

/// Full reconstruction from a time-ordered log. Throws OutOfOrderEvent.
std::map<std::string, NodeHealthRecord> replay(const std::vector<Event> &events, const Catalog &catalog);

/// One event per node of a vetting round: Failure for non-healthy nodes,
/// Success otherwise. Stamped with the report's finish time (or `fallback_ms`).
std::vector<Event> events_from_round(const executor::Verdict &verdict,
                                     const std::vector<executor::NodeReport> &reports,
                                     std::int64_t fallback_ms);

// JSON-lines event log.
std::string encode_event(const Event &event);
Event decode_event(std::string_view line);
std::vector<Event> read_event_log(const std::filesystem::path &path);
void append_event_log(const std::filesystem::path &path, const std::vector<Event> &events);

/// Compressed hostlist of the drain list, no trailing newline.
void write_drain_list(const std::set<std::string> &nodes, const std::filesystem::path &path);

} // namespace vetgate::rules
