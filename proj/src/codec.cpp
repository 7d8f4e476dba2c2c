/*
 * Copyright (c) 2026, The vetgate Authors.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#include <vetgate/codec.hpp>

#include <fmt/format.h>

#include <cmath>
#include <limits>

namespace vetgate::codec
{

namespace
{

// JSON has no NaN / infinity; they travel as null.
Json number(double v)
{
    return std::isfinite(v) ? Json(v) : Json(nullptr);
}

const Json &member(const Json &j, const char *key)
{
    if (!j.is_object())
    {
        throw DecodeError(fmt::format("expected an object holding '{}'", key));
    }
    auto it = j.find(key);
    if (it == j.end())
    {
        throw DecodeError(fmt::format("missing member '{}'", key));
    }
    return *it;
}

std::string get_string(const Json &j, const char *key)
{
    const auto &v = member(j, key);
    if (!v.is_string())
    {
        throw DecodeError(fmt::format("'{}' must be a string", key));
    }
    return v.get<std::string>();
}

double to_double(const Json &v, const char *key)
{
    if (v.is_null())
    {
        return std::numeric_limits<double>::quiet_NaN();
    }
    if (!v.is_number())
    {
        throw DecodeError(fmt::format("'{}' must be a number", key));
    }
    return v.get<double>();
}

double get_double(const Json &j, const char *key)
{
    return to_double(member(j, key), key);
}

std::int64_t get_int(const Json &j, const char *key)
{
    const auto &v = member(j, key);
    if (!v.is_number_integer())
    {
        throw DecodeError(fmt::format("'{}' must be an integer", key));
    }
    return v.get<std::int64_t>();
}

bool get_bool(const Json &j, const char *key)
{
    const auto &v = member(j, key);
    if (!v.is_boolean())
    {
        throw DecodeError(fmt::format("'{}' must be a boolean", key));
    }
    return v.get<bool>();
}

const Json &get_array(const Json &j, const char *key)
{
    const auto &v = member(j, key);
    if (!v.is_array())
    {
        throw DecodeError(fmt::format("'{}' must be an array", key));
    }
    return v;
}

std::vector<std::string> get_strings(const Json &j, const char *key)
{
    std::vector<std::string> out;
    for (const auto &v : get_array(j, key))
    {
        if (!v.is_string())
        {
            throw DecodeError(fmt::format("'{}' must hold strings", key));
        }
        out.push_back(v.get<std::string>());
    }
    return out;
}

template <typename T, typename F>
T get_enum(const Json &j, const char *key, F parse)
{
    auto text = get_string(j, key);
    auto v    = parse(text);
    if (!v)
    {
        throw DecodeError(fmt::format("'{}' has unknown value '{}'", key, text));
    }
    return *v;
}

} // namespace

Json encode(const evaluations::EvalResult &r)
{
    Json measured = Json::object();
    for (const auto &[k, v] : r.measured)
    {
        measured[k] = number(v);
    }
    Json violations = Json::array();
    for (const auto &v : r.violations)
    {
        violations.push_back(
            {{"param", v.param}, {"threshold", number(v.threshold)}, {"measured", number(v.measured)}, {"subject", v.subject}});
    }
    Json requirements = Json::array();
    for (const auto &q : r.requirements)
    {
        requirements.push_back({{"requirement", q.requirement}, {"satisfied", q.satisfied}, {"detail", q.detail}});
    }
    return Json {{"eval_name", r.eval_name},
                 {"kind", r.kind},
                 {"status", evaluations::to_string(r.status)},
                 {"measured", measured},
                 {"violations", violations},
                 {"duration_ms", number(r.duration_ms)},
                 {"detail", r.detail},
                 {"requirements", requirements}};
}

evaluations::EvalResult decode_eval_result(const Json &j)
{
    evaluations::EvalResult r;
    r.eval_name = get_string(j, "eval_name");
    r.kind      = get_string(j, "kind");
    r.status    = get_enum<evaluations::Status>(j, "status", evaluations::parse_status);
    const auto &measured = member(j, "measured");
    if (!measured.is_object())
    {
        throw DecodeError("'measured' must be an object");
    }
    for (const auto &[k, v] : measured.items())
    {
        r.measured[k] = to_double(v, "measured");
    }
    for (const auto &v : get_array(j, "violations"))
    {
        r.violations.push_back(
            {get_string(v, "param"), get_double(v, "threshold"), get_double(v, "measured"), get_string(v, "subject")});
    }
    r.duration_ms = get_double(j, "duration_ms");
    r.detail      = get_string(j, "detail");
    for (const auto &q : get_array(j, "requirements"))
    {
        r.requirements.push_back({get_string(q, "requirement"), get_bool(q, "satisfied"), get_string(q, "detail")});
    }
    return r;
}

Json encode(const executor::NodeReport &report)
{
    Json results = Json::array();
    for (const auto &r : report.results)
    {
        results.push_back(encode(r));
    }
    return Json {{"node", report.node},
                 {"agent_status", executor::to_string(report.agent_status)},
                 {"started_ms", report.started_ms},
                 {"finished_ms", report.finished_ms},
                 {"results", results}};
}

executor::NodeReport decode_node_report(const Json &j)
{
    executor::NodeReport r;
    r.node         = get_string(j, "node");
    r.agent_status = get_enum<executor::AgentStatus>(j, "agent_status", executor::parse_agent_status);
    r.started_ms   = get_int(j, "started_ms");
    r.finished_ms  = get_int(j, "finished_ms");
    for (const auto &e : get_array(j, "results"))
    {
        r.results.push_back(decode_eval_result(e));
    }
    return r;
}

Json encode(const executor::JobContext &ctx)
{
    return Json {{"job_id", ctx.job_id},
                 {"nodes", ctx.nodes},
                 {"tasks_per_node", ctx.tasks_per_node},
                 {"gpus_per_task", ctx.gpus_per_task},
                 {"flexible", ctx.flexible},
                 {"min_nodes", ctx.min_nodes}};
}

executor::JobContext decode_job_context(const Json &j)
{
    executor::JobContext ctx;
    ctx.job_id         = get_string(j, "job_id");
    ctx.nodes          = get_strings(j, "nodes");
    ctx.tasks_per_node = static_cast<int>(get_int(j, "tasks_per_node"));
    ctx.gpus_per_task  = static_cast<int>(get_int(j, "gpus_per_task"));
    ctx.flexible       = get_bool(j, "flexible");
    ctx.min_nodes      = static_cast<int>(get_int(j, "min_nodes"));
    return ctx;
}

Json encode(const executor::Policy &policy)
{
    return Json {{"max_exclusion_fraction", policy.max_exclusion_fraction},
                 {"treat_unknown_as", executor::to_string(policy.treat_unknown_as)},
                 {"strict", policy.strict}};
}

executor::Policy decode_policy(const Json &j)
{
    executor::Policy p;
    p.max_exclusion_fraction = get_double(j, "max_exclusion_fraction");
    p.treat_unknown_as       = get_enum<executor::UnknownPolicy>(j, "treat_unknown_as", executor::parse_unknown_policy);
    p.strict                 = get_bool(j, "strict");
    return p;
}

Json encode(const executor::Verdict &verdict)
{
    Json per_node = Json::object();
    for (const auto &[node, nv] : verdict.per_node)
    {
        per_node[node] = {{"health", executor::to_string(nv.health)}, {"reasons", nv.reasons}};
    }
    return Json {{"decision", executor::to_string(verdict.decision)},
                 {"reasons", verdict.reasons},
                 {"excluded", verdict.excluded},
                 {"per_node", per_node},
                 {"protocol_name", verdict.protocol_name},
                 {"job_context", encode(verdict.job_context)}};
}

executor::Verdict decode_verdict(const Json &j)
{
    executor::Verdict v;
    v.decision = get_enum<executor::Decision>(j, "decision", executor::parse_decision);
    v.reasons  = get_strings(j, "reasons");
    v.excluded = get_strings(j, "excluded");
    const auto &per_node = member(j, "per_node");
    if (!per_node.is_object())
    {
        throw DecodeError("'per_node' must be an object");
    }
    for (const auto &[node, nv] : per_node.items())
    {
        executor::NodeVerdict out;
        out.health  = get_enum<executor::NodeHealth>(nv, "health", executor::parse_node_health);
        out.reasons = get_strings(nv, "reasons");
        v.per_node.emplace(node, std::move(out));
    }
    v.protocol_name = get_string(j, "protocol_name");
    v.job_context   = decode_job_context(member(j, "job_context"));
    return v;
}

Json encode(const saturation::SaturationScore &s)
{
    return Json {{"overall", number(s.overall)},
                 {"compute", number(s.compute)},
                 {"memory", number(s.memory)},
                 {"network", number(s.network)},
                 {"weights", {{"compute", s.weights.compute}, {"memory", s.weights.memory}, {"network", s.weights.network}}},
                 {"window_start_ms", s.window_start_ms},
                 {"window_end_ms", s.window_end_ms}};
}

Json encode(const protocol::VettingProtocol &p)
{
    Json evals = Json::array();
    for (const auto &e : p.evals)
    {
        Json params = Json::object();
        for (const auto &[k, v] : e.params)
        {
            Json param = Json::object();
            if (v.is_number())
            {
                param["value"] = v.number();
            }
            else
            {
                param["value"] = std::get<std::string>(v.value);
            }
            param["unit"] = std::string(to_string(v.unit));
            params[k]     = param;
        }
        evals.push_back({{"name", e.name}, {"type", std::string(to_string(e.kind))}, {"params", params}, {"requirements", e.requirements}});
    }
    return {{"name", p.name}, {"version", p.version}, {"evals", evals}};
}

Json parse(std::string_view text)
{
    try
    {
        return Json::parse(text);
    }
    catch (const Json::parse_error &e)
    {
        throw DecodeError(fmt::format("malformed JSON: {}", e.what()));
    }
}

std::string dump(const Json &j)
{
    return j.dump();
}

} // namespace vetgate::codec
