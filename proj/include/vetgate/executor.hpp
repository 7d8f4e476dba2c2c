/*
 * Copyright (c) 2026, The vetgate Authors.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <vetgate/evaluations.hpp>
#include <vetgate/probe.hpp>
#include <vetgate/protocol.hpp>
#include <vetgate/ring.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

// Coordinator/agent orchestration of a vetting protocol across an allocation
// and the continue / exclude / abort decision.
namespace vetgate::executor
{

VETGATE_DEFINE_ERROR(MissingEnvironment);
VETGATE_DEFINE_ERROR(CoordinatorFailure);

enum class AgentStatus
{
    Reported,
    TimedOut,
    Unreachable,
};

std::string_view to_string(AgentStatus status);
std::optional<AgentStatus> parse_agent_status(std::string_view text);

struct NodeReport
{
    std::string node;
    std::vector<evaluations::EvalResult> results;
    std::int64_t started_ms  = 0; ///< wall clock, ms since the Unix epoch
    std::int64_t finished_ms = 0;
    AgentStatus agent_status = AgentStatus::Reported;

    bool operator==(const NodeReport &) const = default;
};

struct JobContext
{
    std::string job_id;
    std::vector<std::string> nodes;
    int tasks_per_node = 1;
    int gpus_per_task  = 1;
    bool flexible      = false;
    int min_nodes      = 0;

    /// Throws PreconditionError.
    void validate() const;

    /// Lexicographically first node.
    const std::string &coordinator() const;

    bool operator==(const JobContext &) const = default;
};

using Environment = std::map<std::string, std::string, std::less<>>;

/// Snapshot of the process environment.
Environment current_environment();

struct EnvNames
{
    std::string nodelist       = "SLURM_JOB_NODELIST";
    std::string job_id         = "SLURM_JOB_ID";
    std::string tasks_per_node = "SLURM_NTASKS_PER_NODE";
    std::string gpus_per_task  = "SLURM_GPUS_PER_TASK";

    /// Defaults overridden by VETGATE_NODELIST_VAR / VETGATE_JOBID_VAR.
    static EnvNames from(const Environment &env);
};

struct ContextOptions
{
    bool flexible = false;
    std::optional<int> min_nodes;
};

/// Build the job context from scheduler variables. A non-flexible context
/// always has min_nodes == |nodes|; a flexible one defaults to the same.
/// Throws MissingEnvironment, MalformedHostlist or PreconditionError.
JobContext discover_context(const Environment &env, const ContextOptions &options = {});

enum class Decision
{
    Continue,
    ContinueExcluding,
    Abort,
};

std::string_view to_string(Decision decision);
std::optional<Decision> parse_decision(std::string_view text);

enum class NodeHealth
{
    Healthy,
    Unhealthy,
    Unresponsive,
};

std::string_view to_string(NodeHealth health);
std::optional<NodeHealth> parse_node_health(std::string_view text);

struct NodeVerdict
{
    NodeHealth health = NodeHealth::Healthy;
    std::vector<std::string> reasons;

    bool operator==(const NodeVerdict &) const = default;
};

enum class UnknownPolicy
{
    Fail,
    Pass,
    FailIfStrict,
};

std::string_view to_string(UnknownPolicy policy);
std::optional<UnknownPolicy> parse_unknown_policy(std::string_view text);

struct Policy
{
    double max_exclusion_fraction = 0.1;
    UnknownPolicy treat_unknown_as = UnknownPolicy::FailIfStrict;
    bool strict                    = false; ///< arms FailIfStrict

    /// Throws PreconditionError.
    void validate() const;

    bool unknown_fails() const;

    bool operator==(const Policy &) const = default;
};

struct Verdict
{
    Decision decision = Decision::Continue;
    std::vector<std::string> reasons;  ///< set when Abort
    std::vector<std::string> excluded; ///< canonical order, set when ContinueExcluding
    std::map<std::string, NodeVerdict> per_node;
    std::string protocol_name;
    JobContext job_context;

    bool operator==(const Verdict &) const = default;
};

/// Classify one node on its own.
NodeVerdict classify(const NodeReport &report, const Policy &policy);

/// Throws PreconditionError unless there is exactly one report per node.
Verdict decide_verdict(const std::vector<NodeReport> &reports,
                       const JobContext &ctx,
                       const Policy &policy,
                       const std::string &protocol_name = {});

/// 0 Continue, 3 ContinueExcluding, 4 Abort.
int exit_code(Decision decision);

inline constexpr int kExitUsage   = 2;
inline constexpr int kExitRuntime = 1;

/// Compressed hostlist of the excluded nodes, written to `path` (when
/// given) and printed on `out`. Throws PreconditionError unless the verdict
/// is ContinueExcluding, IoError on write failure.
std::string emit_exclusion(const Verdict &verdict, const std::optional<std::filesystem::path> &path, std::ostream &out);

/// Run every eval of the protocol on one node, in order.
NodeReport run_protocol_on_node(const protocol::VettingProtocol &protocol,
                                evaluations::NodeEnvironment &env,
                                std::int64_t epoch_ms);

/// One inbox entry at the coordinator.
struct AgentMessage
{
    std::string node;
    double arrival_ms = 0.0; ///< coordinator clock
    NodeReport report;
};

/// Message passing between the coordinator and one agent per node.
class AgentTransport
{
public:
    virtual ~AgentTransport() = default;

    /// Fan the protocol out to every node. Throws CoordinatorFailure when
    /// the coordinator itself cannot operate.
    virtual void dispatch(const protocol::VettingProtocol &protocol, const JobContext &ctx, double deadline_ms) = 0;

    /// Next message arriving no later than `deadline_ms`, ordered by
    /// (arrival, node). Nothing once the inbox is drained up to the deadline.
    virtual std::optional<AgentMessage> next(double deadline_ms) = 0;

    /// Coordinator clock in ms.
    virtual double now_ms() = 0;

    /// Wall-clock ms since the Unix epoch at coordinator time 0.
    virtual std::int64_t epoch_ms() const = 0;
};

struct VettingOutcome
{
    Verdict verdict;
    std::vector<NodeReport> reports; ///< one per node, in context order
    double elapsed_ms = 0.0;         ///< coordinator clock
};

inline constexpr double kDefaultDeadlineS = 120.0;

/// Coordinator side of a vetting run. Nodes missing the deadline are
/// TimedOut; reports arriving later are ignored.
VettingOutcome run_vetting(const protocol::VettingProtocol &protocol,
                           const JobContext &ctx,
                           AgentTransport &transport,
                           const Policy &policy,
                           double deadline_s = kDefaultDeadlineS);

/// How a simulated agent misbehaves.
struct AgentBehaviour
{
    /// Extra delay before the report leaves the node; nullopt with `hang`
    /// set means it never does.
    double reply_delay_ms = 0.0;
    bool hang             = false;
    bool unreachable      = false;
    double clock_offset_s = 0.0;
};

/// In-process transport: one thread per agent, each with its own simulated
/// clock. Ordering is resolved by simulated time, never by thread timing.
class LocalTransport final : public AgentTransport
{
public:
    struct Options
    {
        std::int64_t epoch_ms = 1735689600000;
        double base_latency_ms = 0.1;   ///< per message
        double message_bytes   = 4096;  ///< modelled size of a control message
        std::map<std::string, AgentBehaviour> behaviour;
    };

    LocalTransport(std::shared_ptr<const probe::Probe> probe,
                   ring::LinkModel links,
                   evaluations::RequirementManifest manifest,
                   Options options);
    ~LocalTransport() override;

    void dispatch(const protocol::VettingProtocol &protocol, const JobContext &ctx, double deadline_ms) override;
    std::optional<AgentMessage> next(double deadline_ms) override;
    double now_ms() override;
    std::int64_t epoch_ms() const override;

    /// Modelled one-way latency between the coordinator and `node`.
    double latency_ms(const std::string &coordinator, const std::string &node) const;

private:
    void join();

    std::shared_ptr<const probe::Probe> m_probe;
    ring::LinkModel m_links;
    evaluations::RequirementManifest m_manifest;
    Options m_options;

    std::unique_ptr<ring::InProcessRing> m_ring;
    std::vector<std::thread> m_threads;
    std::vector<std::optional<AgentMessage>> m_outbox;
    std::vector<AgentMessage> m_inbox;
    std::size_t m_cursor = 0;
    bool m_joined        = true;
    double m_now         = 0.0;
};

} // namespace vetgate::executor
