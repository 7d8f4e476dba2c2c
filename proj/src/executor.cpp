/*
 * Copyright (c) 2026, The vetgate Authors.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#include <vetgate/executor.hpp>
#include <vetgate/hostlist.hpp>

#include "yaml_util.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>

extern char **environ;

namespace vetgate::executor
{

using evaluations::Status;

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

int parse_positive(std::string_view text, std::string_view var)
{
    // Schedulers may write "4(x2)"; the leading count is what matters.
    int value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr == text.data() || value < 1)
    {
        throw PreconditionError(fmt::format("{}='{}' is not a positive count", var, text));
    }
    return value;
}

std::string violation_text(const evaluations::EvalResult &r, const evaluations::Violation &v)
{
    auto text = fmt::format("{}: {} threshold {} violated, measured {}", r.eval_name, v.param,
                            yaml::format_number(v.threshold), yaml::format_number(v.measured));
    if (!v.subject.empty())
    {
        text += fmt::format(" ({})", v.subject);
    }
    return text;
}

std::int64_t to_wall(std::int64_t epoch_ms, double sim_ms)
{
    return epoch_ms + static_cast<std::int64_t>(std::llround(sim_ms));
}

} // namespace

std::string_view to_string(AgentStatus status)
{
    switch (status)
    {
        case AgentStatus::Reported:
            return "Reported";
        case AgentStatus::TimedOut:
            return "TimedOut";
        case AgentStatus::Unreachable:
            return "Unreachable";
    }
    return "Unreachable";
}

std::optional<AgentStatus> parse_agent_status(std::string_view text)
{
    return parse_enum(text, std::array {AgentStatus::Reported, AgentStatus::TimedOut, AgentStatus::Unreachable});
}

std::string_view to_string(Decision decision)
{
    switch (decision)
    {
        case Decision::Continue:
            return "Continue";
        case Decision::ContinueExcluding:
            return "ContinueExcluding";
        case Decision::Abort:
            return "Abort";
    }
    return "Abort";
}

std::optional<Decision> parse_decision(std::string_view text)
{
    return parse_enum(text, std::array {Decision::Continue, Decision::ContinueExcluding, Decision::Abort});
}

std::string_view to_string(NodeHealth health)
{
    switch (health)
    {
        case NodeHealth::Healthy:
            return "Healthy";
        case NodeHealth::Unhealthy:
            return "Unhealthy";
        case NodeHealth::Unresponsive:
            return "Unresponsive";
    }
    return "Unresponsive";
}

std::optional<NodeHealth> parse_node_health(std::string_view text)
{
    return parse_enum(text, std::array {NodeHealth::Healthy, NodeHealth::Unhealthy, NodeHealth::Unresponsive});
}

std::string_view to_string(UnknownPolicy policy)
{
    switch (policy)
    {
        case UnknownPolicy::Fail:
            return "fail";
        case UnknownPolicy::Pass:
            return "pass";
        case UnknownPolicy::FailIfStrict:
            return "fail-if-strict";
    }
    return "fail-if-strict";
}

std::optional<UnknownPolicy> parse_unknown_policy(std::string_view text)
{
    return parse_enum(text, std::array {UnknownPolicy::Fail, UnknownPolicy::Pass, UnknownPolicy::FailIfStrict});
}

void JobContext::validate() const
{
    if (nodes.empty())
    {
        throw PreconditionError("job context has no nodes");
    }
    std::set<std::string> unique(nodes.begin(), nodes.end());
    if (unique.size() != nodes.size())
    {
        throw PreconditionError("job context lists a node twice");
    }
    if (tasks_per_node < 1 || gpus_per_task < 1)
    {
        throw PreconditionError("tasks per node and GPUs per task must be positive");
    }
    auto n = static_cast<int>(nodes.size());
    if (min_nodes < 1 || min_nodes > n)
    {
        throw PreconditionError(fmt::format("min_nodes must be in [1, {}] (got {})", n, min_nodes));
    }
    if (!flexible && min_nodes != n)
    {
        throw PreconditionError("a non-flexible allocation needs every node (min_nodes == node count)");
    }
}

const std::string &JobContext::coordinator() const
{
    if (nodes.empty())
    {
        throw PreconditionError("job context has no nodes");
    }
    return *std::min_element(nodes.begin(), nodes.end());
}

Environment current_environment()
{
    Environment env;
    for (char **e = environ; e != nullptr && *e != nullptr; ++e)
    {
        std::string_view entry(*e);
        auto eq = entry.find('=');
        if (eq != std::string_view::npos)
        {
            env.emplace(std::string(entry.substr(0, eq)), std::string(entry.substr(eq + 1)));
        }
    }
    return env;
}

EnvNames EnvNames::from(const Environment &env)
{
    EnvNames names;
    if (auto it = env.find("VETGATE_NODELIST_VAR"); it != env.end() && !it->second.empty())
    {
        names.nodelist = it->second;
    }
    if (auto it = env.find("VETGATE_JOBID_VAR"); it != env.end() && !it->second.empty())
    {
        names.job_id = it->second;
    }
    return names;
}

JobContext discover_context(const Environment &env, const ContextOptions &options)
{
    auto names = EnvNames::from(env);
    auto get   = [&](const std::string &var) -> const std::string & {
        auto it = env.find(var);
        if (it == env.end() || it->second.empty())
        {
            throw MissingEnvironment(fmt::format("environment variable {} is not set", var));
        }
        return it->second;
    };

    JobContext ctx;
    ctx.nodes  = hostlist::expand(get(names.nodelist));
    ctx.job_id = get(names.job_id);
    if (auto it = env.find(names.tasks_per_node); it != env.end() && !it->second.empty())
    {
        ctx.tasks_per_node = parse_positive(it->second, names.tasks_per_node);
    }
    if (auto it = env.find(names.gpus_per_task); it != env.end() && !it->second.empty())
    {
        ctx.gpus_per_task = parse_positive(it->second, names.gpus_per_task);
    }
    std::set<std::string> unique(ctx.nodes.begin(), ctx.nodes.end());
    if (unique.size() != ctx.nodes.size())
    {
        throw hostlist::MalformedHostlist(fmt::format("{} names a host twice", names.nodelist));
    }
    ctx.flexible  = options.flexible;
    auto n        = static_cast<int>(ctx.nodes.size());
    ctx.min_nodes = ctx.flexible ? options.min_nodes.value_or(n) : n;
    ctx.validate();
    return ctx;
}

void Policy::validate() const
{
    if (!(max_exclusion_fraction >= 0.0 && max_exclusion_fraction <= 1.0))
    {
        throw PreconditionError(fmt::format("max_exclusion_fraction must be in [0, 1] (got {})", max_exclusion_fraction));
    }
}

bool Policy::unknown_fails() const
{
    switch (treat_unknown_as)
    {
        case UnknownPolicy::Fail:
            return true;
        case UnknownPolicy::Pass:
            return false;
        case UnknownPolicy::FailIfStrict:
            return strict;
    }
    return true;
}

NodeVerdict classify(const NodeReport &report, const Policy &policy)
{
    NodeVerdict v;
    if (report.agent_status == AgentStatus::TimedOut)
    {
        v.health = NodeHealth::Unresponsive;
        v.reasons.push_back(fmt::format("{}: agent missed the deadline", report.node));
        return v;
    }
    if (report.agent_status == AgentStatus::Unreachable)
    {
        v.health = NodeHealth::Unresponsive;
        v.reasons.push_back(fmt::format("{}: agent unreachable", report.node));
        return v;
    }
    for (const auto &r : report.results)
    {
        if (r.status == Status::Fail)
        {
            for (const auto &viol : r.violations)
            {
                v.reasons.push_back(fmt::format("{}: {}", report.node, violation_text(r, viol)));
            }
            if (r.violations.empty())
            {
                v.reasons.push_back(fmt::format("{}: {}: failed{}", report.node, r.eval_name, r.detail.empty() ? "" : " (" + r.detail + ")"));
            }
        }
        else if (r.status == Status::Unknown && policy.unknown_fails())
        {
            v.reasons.push_back(fmt::format("{}: {}: inconclusive ({})", report.node, r.eval_name, r.detail));
        }
    }
    v.health = v.reasons.empty() ? NodeHealth::Healthy : NodeHealth::Unhealthy;
    return v;
}

Verdict decide_verdict(const std::vector<NodeReport> &reports, const JobContext &ctx, const Policy &policy, const std::string &protocol_name)
{
    policy.validate();
    Verdict verdict;
    verdict.protocol_name = protocol_name;
    verdict.job_context   = ctx;

    std::set<std::string> expected(ctx.nodes.begin(), ctx.nodes.end());
    for (const auto &r : reports)
    {
        if (!expected.contains(r.node))
        {
            throw PreconditionError(fmt::format("report for '{}' which is not in the allocation", r.node));
        }
        if (verdict.per_node.contains(r.node))
        {
            throw PreconditionError(fmt::format("two reports for '{}'", r.node));
        }
        verdict.per_node.emplace(r.node, classify(r, policy));
    }
    if (verdict.per_node.size() != expected.size())
    {
        throw PreconditionError(fmt::format("{} reports for {} nodes", verdict.per_node.size(), expected.size()));
    }

    std::vector<std::string> bad;
    std::vector<std::string> node_reasons;
    for (const auto &node : ctx.nodes)
    {
        const auto &nv = verdict.per_node.at(node);
        if (nv.health != NodeHealth::Healthy)
        {
            bad.push_back(node);
            node_reasons.insert(node_reasons.end(), nv.reasons.begin(), nv.reasons.end());
        }
    }
    if (bad.empty())
    {
        verdict.decision = Decision::Continue;
        return verdict;
    }

    const auto total   = static_cast<int>(ctx.nodes.size());
    const auto healthy = total - static_cast<int>(bad.size());
    const double fraction = static_cast<double>(bad.size()) / total;
    std::vector<std::string> guards;
    if (!ctx.flexible)
    {
        guards.push_back("allocation is not flexible");
    }
    if (healthy < ctx.min_nodes)
    {
        guards.push_back(fmt::format("{} healthy nodes is below min_nodes {}", healthy, ctx.min_nodes));
    }
    if (fraction > policy.max_exclusion_fraction)
    {
        guards.push_back(fmt::format("{}/{} unhealthy exceeds max_exclusion_fraction {}", bad.size(), total,
                                     yaml::format_number(policy.max_exclusion_fraction)));
    }
    if (!guards.empty())
    {
        verdict.decision = Decision::Abort;
        verdict.reasons  = guards;
        verdict.reasons.insert(verdict.reasons.end(), node_reasons.begin(), node_reasons.end());
        return verdict;
    }
    verdict.decision = Decision::ContinueExcluding;
    verdict.excluded = hostlist::canonical_order(bad);
    return verdict;
}

int exit_code(Decision decision)
{
    switch (decision)
    {
        case Decision::Continue:
            return 0;
        case Decision::ContinueExcluding:
            return 3;
        case Decision::Abort:
            return 4;
    }
    return 4;
}

std::string emit_exclusion(const Verdict &verdict, const std::optional<std::filesystem::path> &path, std::ostream &out)
{
    if (verdict.decision != Decision::ContinueExcluding)
    {
        throw PreconditionError(fmt::format("no exclusion to emit for a {} verdict", to_string(verdict.decision)));
    }
    auto text = hostlist::compress(verdict.excluded);
    if (path)
    {
        std::ofstream file(*path, std::ios::binary | std::ios::trunc);
        file << text;
        file.close();
        if (!file)
        {
            throw IoError(fmt::format("cannot write exclusion file '{}'", path->string()));
        }
    }
    out << text << '\n';
    return text;
}

NodeReport run_protocol_on_node(const protocol::VettingProtocol &protocol, evaluations::NodeEnvironment &env, std::int64_t epoch_ms)
{
    NodeReport report;
    report.node       = env.node;
    report.started_ms = to_wall(epoch_ms, env.clock->now_ms());
    for (const auto &spec : protocol.evals)
    {
        report.results.push_back(evaluations::run_eval(spec, env));
    }
    report.finished_ms  = to_wall(epoch_ms, env.clock->now_ms());
    report.agent_status = AgentStatus::Reported;
    return report;
}

VettingOutcome run_vetting(const protocol::VettingProtocol &protocol,
                           const JobContext &ctx,
                           AgentTransport &transport,
                           const Policy &policy,
                           double deadline_s)
{
    if (!(deadline_s > 0.0) || !std::isfinite(deadline_s))
    {
        throw PreconditionError(fmt::format("deadline must be > 0 (got {})", deadline_s));
    }
    ctx.validate();
    policy.validate();

    VettingOutcome outcome;
    const double start    = transport.now_ms();
    const double deadline = start + deadline_s * 1000.0;
    const auto epoch      = transport.epoch_ms();

    auto placeholder = [&](const std::string &node, AgentStatus status) {
        NodeReport r;
        r.node         = node;
        r.agent_status = status;
        r.started_ms   = to_wall(epoch, start);
        r.finished_ms  = to_wall(epoch, status == AgentStatus::TimedOut ? deadline : start);
        return r;
    };

    try
    {
        transport.dispatch(protocol, ctx, deadline);
    }
    catch (const CoordinatorFailure &e)
    {
        for (const auto &node : ctx.nodes)
        {
            outcome.reports.push_back(placeholder(node, AgentStatus::Unreachable));
        }
        outcome.verdict            = decide_verdict(outcome.reports, ctx, policy, protocol.name);
        outcome.verdict.decision   = Decision::Abort;
        outcome.verdict.excluded.clear();
        outcome.verdict.reasons.insert(outcome.verdict.reasons.begin(),
                                       fmt::format("coordinator {} failed: {}", ctx.coordinator(), e.what()));
        outcome.elapsed_ms = transport.now_ms() - start;
        return outcome;
    }

    std::map<std::string, NodeReport> received;
    std::set<std::string> members(ctx.nodes.begin(), ctx.nodes.end());
    while (received.size() < members.size())
    {
        auto msg = transport.next(deadline);
        if (!msg)
        {
            break;
        }
        if (msg->arrival_ms > deadline || !members.contains(msg->node) || received.contains(msg->node))
        {
            continue;
        }
        auto report = std::move(msg->report);
        report.node = msg->node;
        if (report.agent_status == AgentStatus::TimedOut)
        {
            report.results.clear();
        }
        received.emplace(msg->node, std::move(report));
    }

    for (const auto &node : ctx.nodes)
    {
        auto it = received.find(node);
        outcome.reports.push_back(it != received.end() ? it->second : placeholder(node, AgentStatus::TimedOut));
    }
    outcome.verdict    = decide_verdict(outcome.reports, ctx, policy, protocol.name);
    outcome.elapsed_ms = std::min(transport.now_ms(), deadline) - start;
    return outcome;
}

LocalTransport::LocalTransport(std::shared_ptr<const probe::Probe> probe,
                               ring::LinkModel links,
                               evaluations::RequirementManifest manifest,
                               Options options)
    : m_probe(std::move(probe))
    , m_links(std::move(links))
    , m_manifest(std::move(manifest))
    , m_options(std::move(options))
{}

LocalTransport::~LocalTransport()
{
    join();
}

void LocalTransport::join()
{
    for (auto &t : m_threads)
    {
        if (t.joinable())
        {
            t.join();
        }
    }
    m_threads.clear();
    if (!m_joined)
    {
        m_joined = true;
        for (auto &m : m_outbox)
        {
            if (m)
            {
                m_inbox.push_back(std::move(*m));
            }
        }
        m_outbox.clear();
        std::sort(m_inbox.begin(), m_inbox.end(), [](const AgentMessage &a, const AgentMessage &b) {
            return std::tie(a.arrival_ms, a.node) < std::tie(b.arrival_ms, b.node);
        });
    }
}

double LocalTransport::latency_ms(const std::string &coordinator, const std::string &node) const
{
    double gbps = coordinator == node ? m_links.loopback(node) : m_links.bandwidth(coordinator, node);
    return m_options.base_latency_ms + m_options.message_bytes / (gbps * 1e9) * 1000.0;
}

void LocalTransport::dispatch(const protocol::VettingProtocol &protocol, const JobContext &ctx, double deadline_ms)
{
    (void)deadline_ms;
    join();
    m_inbox.clear();
    m_cursor = 0;
    m_joined = false;

    const auto &coordinator = ctx.coordinator();
    auto behaviour          = [&](const std::string &node) {
        auto it = m_options.behaviour.find(node);
        return it == m_options.behaviour.end() ? AgentBehaviour {} : it->second;
    };
    if (behaviour(coordinator).unreachable)
    {
        m_joined = true;
        throw CoordinatorFailure(fmt::format("{} cannot reach its own agent", coordinator));
    }

    std::vector<std::string> ring_order;
    for (const auto &node : ctx.nodes)
    {
        if (!behaviour(node).unreachable)
        {
            ring_order.push_back(node);
        }
    }
    m_ring.reset();
    if (!ring_order.empty())
    {
        m_ring = std::make_unique<ring::InProcessRing>(ring_order, m_links);
    }

    m_outbox.assign(ctx.nodes.size(), std::nullopt);
    const double sent = m_now;
    auto proto        = std::make_shared<const protocol::VettingProtocol>(protocol);
    int rank          = 0;
    for (std::size_t i = 0; i < ctx.nodes.size(); ++i)
    {
        const auto &node = ctx.nodes[i];
        auto b           = behaviour(node);
        auto latency     = latency_ms(coordinator, node);
        if (b.unreachable)
        {
            // Connection refused comes back after one round trip.
            NodeReport r;
            r.node         = node;
            r.agent_status = AgentStatus::Unreachable;
            r.started_ms   = to_wall(m_options.epoch_ms, sent);
            r.finished_ms  = to_wall(m_options.epoch_ms, sent + 2 * latency);
            m_outbox[i]    = AgentMessage {node, sent + 2 * latency, std::move(r)};
            continue;
        }
        auto *peer = &m_ring->peer(rank++);
        m_threads.emplace_back([this, proto, i, node, b, latency, peer, sent] {
            evaluations::SimClock clock(sent + latency);
            evaluations::NodeEnvironment env {node, m_probe.get(), &m_manifest, &clock, peer, b.clock_offset_s};
            NodeReport report;
            try
            {
                report = run_protocol_on_node(*proto, env, m_options.epoch_ms);
            }
            catch (const std::exception &)
            {
                // A crashed agent looks the same as one that cannot be reached.
                report.node         = node;
                report.agent_status = AgentStatus::Unreachable;
                report.results.clear();
            }
            if (b.hang)
            {
                return;
            }
            double arrival = clock.now_ms() + b.reply_delay_ms + latency;
            m_outbox[i]    = AgentMessage {node, arrival, std::move(report)};
        });
    }
}

std::optional<AgentMessage> LocalTransport::next(double deadline_ms)
{
    join();
    if (m_cursor < m_inbox.size() && m_inbox[m_cursor].arrival_ms <= deadline_ms)
    {
        m_now = std::max(m_now, m_inbox[m_cursor].arrival_ms);
        return m_inbox[m_cursor++];
    }
    m_now = std::max(m_now, deadline_ms);
    return std::nullopt;
}

double LocalTransport::now_ms()
{
    return m_now;
}

std::int64_t LocalTransport::epoch_ms() const
{
    return m_options.epoch_ms;
}

} // namespace vetgate::executor
