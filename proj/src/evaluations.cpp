/*
 * Copyright (c) 2026, The vetgate Authors.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#include <vetgate/evaluations.hpp>

#include "yaml_util.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <thread>

namespace vetgate::evaluations
{

using protocol::EvalSpec;
using protocol::EvaluationKind;

namespace
{

EvalResult start(const EvalSpec &spec)
{
    EvalResult r;
    r.eval_name = spec.name;
    r.kind      = std::string(protocol::to_string(spec.kind));
    r.status    = Status::Pass;
    return r;
}

EvalResult &unknown(EvalResult &r, std::string detail)
{
    r.status = Status::Unknown;
    r.violations.clear();
    r.detail = std::move(detail);
    return r;
}

void settle(EvalResult &r)
{
    if (r.status != Status::Unknown)
    {
        r.status = r.violations.empty() ? Status::Pass : Status::Fail;
    }
}

std::string gpu_key(int index, std::string_view what)
{
    return fmt::format("gpu{}.{}", index, what);
}

std::string unsatisfied_detail(const std::vector<RequirementCheck> &checks)
{
    std::string missing;
    for (const auto &c : checks)
    {
        if (!c.satisfied)
        {
            missing += missing.empty() ? c.requirement : ", " + c.requirement;
        }
    }
    return missing.empty() ? std::string() : fmt::format("requirements not available: {}", missing);
}

// Deterministic verification payload: rank r contributes (r + 1) + j / 2.
std::vector<double> verification_payload(int rank, int ranks)
{
    std::vector<double> data(static_cast<std::size_t>(4 * ranks));
    for (std::size_t j = 0; j < data.size(); ++j)
    {
        data[j] = (rank + 1) + static_cast<double>(j) * 0.5;
    }
    return data;
}

bool verify_reduced(const std::vector<double> &data, int ranks)
{
    for (std::size_t j = 0; j < data.size(); ++j)
    {
        double expected = ranks * (ranks + 1) / 2.0 + ranks * static_cast<double>(j) * 0.5;
        if (data[j] != expected)
        {
            return false;
        }
    }
    return data.size() == static_cast<std::size_t>(4 * ranks);
}

} // namespace

std::string_view to_string(Status status)
{
    switch (status)
    {
        case Status::Pass:
            return "Pass";
        case Status::Fail:
            return "Fail";
        case Status::Unknown:
            return "Unknown";
    }
    return "Unknown";
}

std::optional<Status> parse_status(std::string_view text)
{
    for (auto s : {Status::Pass, Status::Fail, Status::Unknown})
    {
        if (to_string(s) == text)
        {
            return s;
        }
    }
    return std::nullopt;
}

RequirementManifest::RequirementManifest(std::set<std::string> items)
    : m_items(items.begin(), items.end())
{}

RequirementManifest RequirementManifest::parse(std::string_view text)
{
    RequirementManifest m;
    std::size_t pos = 0;
    while (pos <= text.size())
    {
        auto end  = text.find('\n', pos);
        auto line = text.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos);
        if (auto hash = line.find('#'); hash != std::string_view::npos)
        {
            line = line.substr(0, hash);
        }
        while (!line.empty() && std::isspace(static_cast<unsigned char>(line.front())))
        {
            line.remove_prefix(1);
        }
        while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back())))
        {
            line.remove_suffix(1);
        }
        if (!line.empty())
        {
            m.m_items.emplace(line);
        }
        if (end == std::string_view::npos)
        {
            break;
        }
        pos = end + 1;
    }
    return m;
}

RequirementManifest RequirementManifest::load(const std::filesystem::path &path)
{
    return parse(yaml::read_file(path));
}

bool RequirementManifest::contains(std::string_view requirement) const
{
    return m_items.find(requirement) != m_items.end();
}

std::vector<RequirementCheck> check_requirements(const EvalSpec &spec, const RequirementManifest &manifest)
{
    std::vector<RequirementCheck> out;
    for (const auto &req : spec.requirements)
    {
        bool ok = manifest.contains(req);
        out.push_back({req, ok, ok ? "listed in manifest" : "not listed in manifest"});
    }
    return out;
}

double SteadyClock::now_ms()
{
    auto t = std::chrono::steady_clock::now().time_since_epoch();
    return std::chrono::duration<double, std::milli>(t).count();
}

double timeout_seconds(const EvalSpec &spec)
{
    return spec.number("timeout").value_or(kDefaultTimeoutS);
}

EvalResult run_gpu_eval(const EvalSpec &spec, const std::string &node, const probe::Probe &probe, EvalClock &clock)
{
    auto r      = start(spec);
    auto before = clock.now_ms();
    try
    {
        auto snap = probe.snapshot(node);
        clock.charge_ms(kSnapshotCostMs);
        r.duration_ms = clock.now_ms() - before;
        if (snap.gpus.empty())
        {
            return unknown(r, "no GPUs");
        }
        double max_temp = 0.0;
        double max_used = 0.0;
        for (const auto &g : snap.gpus)
        {
            r.measured[gpu_key(g.index, "temperature")] = g.temperature_c;
            r.measured[gpu_key(g.index, "used_memory")] = g.used_memory_fraction;
            max_temp                                    = std::max(max_temp, g.temperature_c);
            max_used                                    = std::max(max_used, g.used_memory_fraction);
        }
        r.measured["max_temp"]        = max_temp;
        r.measured["max_used_memory"] = max_used;

        auto limit_temp = spec.number("max_temp");
        auto limit_used = spec.number("max_used_memory");
        for (const auto &g : snap.gpus)
        {
            auto subject = fmt::format("gpu{}", g.index);
            if (limit_temp && g.temperature_c > *limit_temp)
            {
                r.violations.push_back({"max_temp", *limit_temp, g.temperature_c, subject});
            }
            if (limit_used && g.used_memory_fraction > *limit_used)
            {
                r.violations.push_back({"max_used_memory", *limit_used, g.used_memory_fraction, subject});
            }
        }
    }
    catch (const Error &e)
    {
        r.duration_ms = clock.now_ms() - before;
        return unknown(r, e.what());
    }
    settle(r);
    return r;
}

EvalResult run_kernel_eval(const EvalSpec &spec, const std::string &node, const probe::Probe &probe, EvalClock &clock)
{
    auto r         = start(spec);
    auto before    = clock.now_ms();
    auto timeout_s = timeout_seconds(spec);
    try
    {
        auto launches = probe.launch_trivial_kernels(node, timeout_s);
        if (launches.empty())
        {
            r.duration_ms = clock.now_ms() - before;
            return unknown(r, "no GPUs");
        }
        double slowest = 0.0;
        std::vector<std::string> failed;
        for (const auto &l : launches)
        {
            r.measured[gpu_key(l.gpu, "launch_latency_ms")] = l.latency_ms;
            slowest                                          = std::max(slowest, l.latency_ms);
            if (!l.completed)
            {
                auto subject = fmt::format("gpu{}", l.gpu);
                r.violations.push_back({"timeout", timeout_s, l.latency_ms / 1000.0, subject});
                failed.push_back(subject);
            }
        }
        r.measured["max_launch_latency_ms"] = slowest;
        clock.charge_ms(std::min(slowest, timeout_s * 1000.0));
        r.duration_ms = clock.now_ms() - before;
        if (!failed.empty())
        {
            std::string list;
            for (const auto &f : failed)
            {
                list += list.empty() ? f : ", " + f;
            }
            r.detail = fmt::format("trivial kernel did not complete on {}", list);
        }
    }
    catch (const Error &e)
    {
        r.duration_ms = clock.now_ms() - before;
        return unknown(r, e.what());
    }
    settle(r);
    return r;
}

EvalResult run_host_memory_eval(const EvalSpec &spec, const std::string &node, const probe::Probe &probe, EvalClock &clock)
{
    auto r      = start(spec);
    auto before = clock.now_ms();
    try
    {
        auto snap = probe.snapshot(node);
        clock.charge_ms(kSnapshotCostMs);
        r.duration_ms                  = clock.now_ms() - before;
        r.measured["host_free_memory"] = snap.host_free_memory_fraction;
        if (auto limit = spec.number("min_free_memory"); limit && snap.host_free_memory_fraction < *limit)
        {
            r.violations.push_back({"min_free_memory", *limit, snap.host_free_memory_fraction, ""});
        }
    }
    catch (const Error &e)
    {
        r.duration_ms = clock.now_ms() - before;
        return unknown(r, e.what());
    }
    settle(r);
    return r;
}

EvalResult run_clock_skew_eval(const EvalSpec &spec, std::optional<double> offset_s, EvalClock &clock)
{
    auto r = start(spec);
    (void)clock;
    if (!offset_s)
    {
        return unknown(r, "clock offset against the coordinator is unavailable");
    }
    double skew            = std::abs(*offset_s);
    r.measured["clock_skew"] = skew;
    if (auto limit = spec.number("max_skew"); limit && skew > *limit)
    {
        r.violations.push_back({"max_skew", *limit, skew, ""});
    }
    settle(r);
    return r;
}

EvalResult run_bandwidth_eval(const EvalSpec &spec,
                              ring::RingPeer &peer,
                              const std::vector<RequirementCheck> &requirements,
                              EvalClock &clock)
{
    auto r         = start(spec);
    r.requirements = requirements;
    auto payload   = static_cast<std::uint64_t>(spec.number("payload_mib").value_or(kDefaultPayloadMiB) * 1024.0 * 1024.0);
    int warmup     = static_cast<int>(spec.number("warmup_iters").value_or(kDefaultWarmupIterations));
    int iters      = static_cast<int>(spec.number("iters").value_or(kDefaultTimedIterations));
    auto timeout_s = timeout_seconds(spec);
    const int n    = peer.size();

    try
    {
        auto begin = peer.barrier(clock.now_ms());
        clock.advance_to_ms(begin);

        // One data-carrying pass checks that the ring actually reduces.
        auto check = ring::ring_allreduce(peer, verification_payload(peer.rank(), n), payload);
        bool intact = verify_reduced(check.reduced, n);

        double timed_seconds = 0.0;
        if (auto modeled = peer.modeled_allreduce_seconds(payload))
        {
            clock.charge_ms(*modeled * 1000.0 * (warmup + iters));
            timed_seconds = *modeled * iters;
        }
        else
        {
            std::vector<double> scratch(static_cast<std::size_t>(std::max(n, 1)), 1.0);
            for (int i = 0; i < warmup; ++i)
            {
                ring::ring_allreduce(peer, scratch, payload);
            }
            auto t0 = std::chrono::steady_clock::now();
            for (int i = 0; i < iters; ++i)
            {
                ring::ring_allreduce(peer, scratch, payload);
            }
            timed_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        }
        r.duration_ms = clock.now_ms() - begin;

        double busbw          = ring::bus_bandwidth_gbps(payload, timed_seconds / iters, n);
        r.measured["busbw"]   = busbw;
        r.measured["algbw"]   = n > 1 ? busbw * n / (2.0 * (n - 1)) : busbw;
        r.measured["ranks"]   = n;
        r.measured["payload_bytes"] = static_cast<double>(payload);

        if (auto missing = unsatisfied_detail(requirements); !missing.empty())
        {
            return unknown(r, missing);
        }
        if (!intact)
        {
            return unknown(r, "all-reduce returned corrupted data");
        }
        if (r.duration_ms > timeout_s * 1000.0)
        {
            return unknown(r, fmt::format("collective exceeded its {} s timeout", yaml::format_number(timeout_s)));
        }
        if (auto limit = spec.number("min_bandwidth"); limit && busbw < *limit)
        {
            r.violations.push_back({"min_bandwidth", *limit, busbw, ""});
        }
    }
    catch (const Error &e)
    {
        return unknown(r, e.what());
    }
    settle(r);
    return r;
}

std::map<std::string, EvalResult> run_bandwidth_eval(const EvalSpec &spec,
                                                     const std::vector<std::string> &node_set,
                                                     const ring::LinkModel &links,
                                                     const RequirementManifest &manifest)
{
    if (spec.kind != EvaluationKind::NcclEval)
    {
        throw PreconditionError(fmt::format("'{}' is not an NCCLEval", spec.name));
    }
    ring::InProcessRing ring(node_set, links);
    std::vector<EvalResult> results(node_set.size());
    std::vector<std::thread> threads;
    auto checks = check_requirements(spec, manifest);
    for (std::size_t i = 0; i < node_set.size(); ++i)
    {
        threads.emplace_back([&, i] {
            SimClock clock;
            results[i] = run_bandwidth_eval(spec, ring.peer(static_cast<int>(i)), checks, clock);
        });
    }
    for (auto &t : threads)
    {
        t.join();
    }
    std::map<std::string, EvalResult> out;
    for (std::size_t i = 0; i < node_set.size(); ++i)
    {
        out.emplace(node_set[i], std::move(results[i]));
    }
    return out;
}

EvalResult run_eval(const EvalSpec &spec, NodeEnvironment &env)
{
    static const RequirementManifest empty_manifest;
    SteadyClock fallback_clock;
    auto &clock = env.clock != nullptr ? *env.clock : static_cast<EvalClock &>(fallback_clock);
    auto checks = check_requirements(spec, env.manifest != nullptr ? *env.manifest : empty_manifest);

    if (spec.kind == EvaluationKind::NcclEval)
    {
        if (env.ring == nullptr)
        {
            auto r         = start(spec);
            r.requirements = checks;
            return unknown(r, "no collective transport available");
        }
        return run_bandwidth_eval(spec, *env.ring, checks, clock);
    }

    if (auto missing = unsatisfied_detail(checks); !missing.empty())
    {
        auto r         = start(spec);
        r.requirements = checks;
        return unknown(r, missing);
    }

    EvalResult r;
    if (spec.kind == EvaluationKind::ClockSkewEval)
    {
        r = run_clock_skew_eval(spec, env.clock_offset_s, clock);
    }
    else if (env.probe == nullptr)
    {
        r = start(spec);
        unknown(r, "no telemetry provider");
    }
    else
    {
        switch (spec.kind)
        {
            case EvaluationKind::GpuEval:
                r = run_gpu_eval(spec, env.node, *env.probe, clock);
                break;
            case EvaluationKind::CudaEval:
                r = run_kernel_eval(spec, env.node, *env.probe, clock);
                break;
            case EvaluationKind::HostMemoryEval:
                r = run_host_memory_eval(spec, env.node, *env.probe, clock);
                break;
            default:
                break;
        }
    }
    r.requirements = checks;
    if (r.status != Status::Unknown && r.duration_ms > timeout_seconds(spec) * 1000.0)
    {
        unknown(r, fmt::format("evaluation exceeded its {} s timeout", yaml::format_number(timeout_seconds(spec))));
    }
    return r;
}

} // namespace vetgate::evaluations
