/*
 * Copyright (c) 2026, The vetgate Authors.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.

#include <cli.hpp>

#include <vetgate/cluster_sim.hpp>
#include <vetgate/collector.hpp>
#include <vetgate/executor.hpp>
#include <vetgate/fixture.hpp>
#include <vetgate/hostlist.hpp>
#include <vetgate/protocol.hpp>
#include <vetgate/rules.hpp>
#include <vetgate/saturation.hpp>

#include "oracles/hostlist_oracle.hpp"
#include "oracles/rules_oracle.hpp"
#include "oracles/verdict_oracle.hpp"

#include <fmt/format.h>

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>

namespace co  = vetgate::collector;
namespace ev  = vetgate::evaluations;
namespace ex  = vetgate::executor;
namespace fs  = std::filesystem;
namespace hl  = vetgate::hostlist;
namespace pr  = vetgate::probe;
namespace pt  = vetgate::protocol;
namespace rl  = vetgate::rules;
namespace sat = vetgate::saturation;
namespace sim = vetgate::sim;

namespace
{

const std::string kSrc      = VETGATE_SOURCE_DIR;
const std::string kProtocol = kSrc + "/protocols/ml-training.yaml";
constexpr std::int64_t kT0  = 1735689600000;
constexpr std::int64_t kH   = 3600 * 1000;

/// Collects failed expectations for one criterion.
struct Check
{
    std::vector<std::string> failures;
    std::string summary;

    bool expect(bool ok, const std::string &what)
    {
        if (!ok && failures.size() < 5)
        {
            failures.push_back(what);
        }
        return ok;
    }
};

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string read_file(const fs::path &p)
{
    std::ifstream in(p);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

fs::path fresh_dir(const std::string &name)
{
    auto dir = fs::temp_directory_path() / ("vetgate-acceptance-" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

struct CliResult
{
    int code = -1;
    std::string out;
    std::string err;
};

CliResult vetgate(std::vector<std::string> args, const ex::Environment &env = {})
{
    args.insert(args.begin(), "vetgate");
    std::ostringstream out;
    std::ostringstream err;
    int code = vetgate::cli::run(args, env, out, err);
    return {code, out.str(), err.str()};
}

// ---- AC1 ------------------------------------------------------------------

void protocol_fidelity(Check &c)
{
    auto t0 = std::chrono::steady_clock::now();
    auto p  = pt::load_protocol(kProtocol);
    c.expect(p.evals.size() == 3, "three evals");
    if (p.evals.size() == 3)
    {
        const auto &gpu = p.evals[0];
        c.expect(gpu.kind == pt::EvaluationKind::GpuEval, "first eval is GPUEval");
        c.expect(gpu.params.size() == 2, "GPUEval has two parameters");
        c.expect(gpu.params.count("max_temp") && gpu.params.at("max_temp") == pt::TypedValue {30.0, pt::Unit::Celsius}, "max_temp 30 celsius");
        c.expect(gpu.params.count("max_used_memory") && gpu.params.at("max_used_memory") == pt::TypedValue {0.2, pt::Unit::Fraction},
                 "max_used_memory 0.2 fraction");
        c.expect(gpu.requirements.empty(), "GPUEval has no requirements");
        const auto &nccl = p.evals[1];
        c.expect(nccl.kind == pt::EvaluationKind::NcclEval, "second eval is NCCLEval");
        c.expect(nccl.params.count("min_bandwidth") && nccl.params.at("min_bandwidth") == pt::TypedValue {90.0, pt::Unit::GBps}, "min_bandwidth 90 GBps");
        c.expect(nccl.requirements == std::vector<std::string> {"torch"}, "NCCLEval requires torch");
        const auto &cuda = p.evals[2];
        c.expect(cuda.kind == pt::EvaluationKind::CudaEval, "third eval is CUDAEval");
        c.expect(cuda.requirements == std::vector<std::string> {"cuda-python", "numpy"}, "CUDAEval requires cuda-python, numpy");
    }
    auto text = pt::serialize_protocol(p);
    auto back = pt::parse_protocol(text);
    c.expect(back == p, "serialize/parse round-trip is structurally identical");
    c.expect(pt::serialize_protocol(back) == text, "second serialization is byte-identical");
    double s = seconds_since(t0);
    c.expect(s < 1.0, fmt::format("runtime {:.3f}s < 1s", s));
    c.summary = fmt::format("3 evals (30 celsius, 0.2 fraction, 90 GBps), round-trip identical, {:.3f}s", s);
}

// ---- AC2 ------------------------------------------------------------------

enum class Health
{
    Healthy,
    Failing,
    Unknown,
    Silent,
};

ex::NodeReport report_for(const std::string &node, Health h)
{
    ex::NodeReport r {node, {}, kT0, kT0 + 10, ex::AgentStatus::Reported};
    ev::EvalResult e;
    e.eval_name = "Check GPU";
    e.kind      = "GPUEval";
    switch (h)
    {
        case Health::Healthy: e.status = ev::Status::Pass; break;
        case Health::Failing: e.status = ev::Status::Fail; break;
        case Health::Unknown: e.status = ev::Status::Unknown; break;
        case Health::Silent: r.agent_status = ex::AgentStatus::TimedOut; break;
    }
    if (h != Health::Silent)
    {
        r.results.push_back(e);
    }
    return r;
}

void verdict_equivalence(Check &c)
{
    auto t0 = std::chrono::steady_clock::now();
    const std::vector<double> fractions {0.0, 0.1, 0.25, 0.5, 1.0};
    long compared = 0;
    long disagreements = 0;
    for (int n = 1; n <= 6; ++n)
    {
        std::vector<std::string> nodes;
        for (int i = 1; i <= n; ++i)
        {
            nodes.push_back(fmt::format("nid{:03}", i));
        }
        long assignments = 1;
        for (int i = 0; i < n; ++i)
        {
            assignments *= 4;
        }
        for (long a = 0; a < assignments; ++a)
        {
            std::vector<ex::NodeReport> reports;
            long code = a;
            for (int i = 0; i < n; ++i)
            {
                reports.push_back(report_for(nodes[static_cast<std::size_t>(i)], static_cast<Health>(code % 4)));
                code /= 4;
            }
            for (bool flexible : {true, false})
            {
                for (int min_nodes = 1; min_nodes <= n; ++min_nodes)
                {
                    int effective = flexible ? min_nodes : n;
                    ex::JobContext ctx {"ac2", nodes, 1, 1, flexible, effective};
                    for (double f : fractions)
                    {
                        for (auto mode : {ex::UnknownPolicy::Fail, ex::UnknownPolicy::Pass, ex::UnknownPolicy::FailIfStrict})
                        {
                            for (bool strict : {false, true})
                            {
                                ex::Policy p {f, mode, strict};
                                auto got  = ex::decide_verdict(reports, ctx, p);
                                auto want = oracle::verdict::decide(reports, flexible, effective, f, std::string(ex::to_string(mode)), strict);
                                ++compared;
                                if (std::string(ex::to_string(got.decision)) != want.decision || got.excluded != want.excluded)
                                {
                                    ++disagreements;
                                    c.expect(false, fmt::format("n={} assignment={} flexible={} min={} f={} strict={}: got {} want {}", n, a, flexible, effective, f, strict,
                                                                ex::to_string(got.decision), want.decision));
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    double s = seconds_since(t0);
    c.expect(s < 10.0, fmt::format("runtime {:.3f}s < 10s", s));
    c.summary = fmt::format("{} cases, {} disagreements, {:.3f}s", compared, disagreements, s);
}

// ---- AC3 ------------------------------------------------------------------

void early_abort(Check &c)
{
    auto env                = ex::Environment {{"SLURM_JOB_NODELIST", "nid[001-064]"}, {"SLURM_JOB_ID", "ac3"}};
    env["VETGATE_MANIFEST"] = kSrc + "/manifests/ml-stack.txt";
    auto dir                = fresh_dir("ac3");
    auto exclude            = dir / "exclude.txt";
    auto hot                = kSrc + "/profiles/hot-gpu-64.yaml";
    double worst            = 0.0;
    auto timed              = [&](std::vector<std::string> args) {
        auto t0 = std::chrono::steady_clock::now();
        auto r  = vetgate(std::move(args), env);
        worst   = std::max(worst, seconds_since(t0));
        return r;
    };

    auto flex = timed({"run", "--protocol", kProtocol, "--sim-profile", hot, "--flexible", "--min-nodes", "60", "--deadline", "120", "--exclude-file", exclude.string(),
                       "--json"});
    c.expect(flex.code == 3, fmt::format("flexible hot run exits 3 (got {})", flex.code));
    c.expect(read_file(exclude) == "nid017", "exclusion file holds exactly nid017");
    if (flex.code == 3)
    {
        auto doc = vetgate::codec::parse(flex.out);
        c.expect(doc["verdict"]["decision"] == "ContinueExcluding", "decision ContinueExcluding");
        c.expect(doc["verdict"]["excluded"] == vetgate::codec::Json::array({"nid017"}), "excluded set is {nid017}");
        c.expect(doc["elapsed_ms"].get<double>() < 120000.0, "decided before the simulated deadline");
    }

    auto strict = timed({"run", "--protocol", kProtocol, "--sim-profile", hot, "--deadline", "120"});
    c.expect(strict.code == 4, fmt::format("strict hot run exits 4 (got {})", strict.code));

    auto healthy = timed({"run", "--protocol", kProtocol, "--sim-profile", kSrc + "/profiles/all-healthy-64.yaml", "--deadline", "120"});
    c.expect(healthy.code == 0, fmt::format("fault-free run exits 0 (got {})", healthy.code));

    c.expect(worst < 5.0, fmt::format("slowest scenario {:.3f}s < 5s", worst));
    c.summary = fmt::format("exit 3 excluding nid017, exit 4 strict, exit 0 healthy; slowest {:.3f}s", worst);
}

// ---- AC4 ------------------------------------------------------------------

void timeout_handling(Check &c)
{
    auto profile  = sim::load_profile(kSrc + "/profiles/hang-64.yaml");
    auto protocol = pt::load_protocol(kProtocol);
    std::optional<ex::Verdict> first;
    int identical = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed)
    {
        auto p = profile;
        p.seed = seed;
        sim::ScenarioOptions o;
        auto t        = sim::run_scenario(p, protocol, o);
        const auto &r = t.rounds.at(0).outcome;
        const auto *hung = [&]() -> const ex::NodeReport * {
            for (const auto &rep : r.reports)
            {
                if (rep.node == "nid033")
                {
                    return &rep;
                }
            }
            return nullptr;
        }();
        c.expect(hung && hung->agent_status == ex::AgentStatus::TimedOut, fmt::format("seed {}: nid033 TimedOut", seed));
        auto health = r.verdict.per_node.count("nid033") ? r.verdict.per_node.at("nid033").health : ex::NodeHealth::Healthy;
        c.expect(health != ex::NodeHealth::Healthy, fmt::format("seed {}: nid033 counts as unhealthy", seed));
        const auto &ctx = r.verdict.job_context;
        auto want = oracle::verdict::decide(r.reports, ctx.flexible, ctx.min_nodes, o.policy.max_exclusion_fraction,
                                            std::string(ex::to_string(o.policy.treat_unknown_as)), o.policy.strict);
        c.expect(std::string(ex::to_string(r.verdict.decision)) == want.decision && r.verdict.excluded == want.excluded,
                 fmt::format("seed {}: verdict matches the oracle", seed));
        if (!first)
        {
            first = r.verdict;
        }
        if (r.verdict.decision == first->decision && r.verdict.excluded == first->excluded && r.verdict.per_node == first->per_node)
        {
            ++identical;
        }
    }
    c.expect(identical == 20, fmt::format("verdict identical across 20 seeds ({} of 20)", identical));
    c.summary = fmt::format("nid033 TimedOut, {} under every seed, {}/20 identical", first ? std::string(ex::to_string(first->decision)) : "?", identical);
}

// ---- AC5 ------------------------------------------------------------------

oracle::rules::Model model_of(const rl::Catalog &cat)
{
    oracle::rules::Model m;
    for (const auto &r : cat.rules)
    {
        m.rules.push_back({r.count, r.window_ms, r.eval, std::string(rl::to_string(r.action)), r.priority});
    }
    m.max_attempts = cat.max_recovery_attempts;
    m.clear_window = cat.recovery_window_ms;
    return m;
}

void rules_escalation(Check &c)
{
    const auto cat = rl::default_catalog();

    // Three failing vetting rounds, one simulated hour apart.
    auto profile = sim::load_profile(kSrc + "/profiles/hot-gpu-64.yaml");
    sim::ScenarioOptions o;
    o.repeat = 3;
    auto t   = sim::run_scenario(profile, pt::load_protocol(kProtocol), o);
    c.expect(t.rules.count("nid017") && t.rules.at("nid017").state == rl::NodeState::Drained, "nid017 Drained after three failing rounds");
    c.expect(t.drain_list == std::set<std::string> {"nid017"}, "drain list is {nid017}");

    // Replay the same rounds as events, then exhaust recovery.
    std::vector<rl::Event> log;
    for (const auto &r : t.rounds)
    {
        auto events = rl::events_from_round(r.outcome.verdict, r.outcome.reports, 0);
        log.insert(log.end(), events.begin(), events.end());
    }
    rl::Engine engine(cat);
    for (const auto &e : log)
    {
        engine.apply(e);
    }
    c.expect(engine.state_of("nid017") == rl::NodeState::Drained, "event replay agrees: nid017 Drained");
    std::int64_t ts = log.empty() ? kT0 : log.back().timestamp_ms;
    int attempts    = 0;
    while (engine.records().at("nid017").recovery_attempts < cat.max_recovery_attempts && attempts < 10)
    {
        ts += kH;
        engine.apply({rl::EventKind::Failure, "nid017", ts, {"Check GPU", "GPUEval"}});
        ++attempts;
    }
    c.expect(engine.state_of("nid017") == rl::NodeState::Drained, "still Drained while recovery is attempted");
    ts += kH;
    engine.apply({rl::EventKind::Failure, "nid017", ts, {"Check GPU", "GPUEval"}});
    c.expect(engine.state_of("nid017") == rl::NodeState::Ticketed, "failure after exhausted recovery yields Ticketed");

    // Incremental state equals full replay and the oracle on random logs.
    std::mt19937_64 rng(5150);
    std::uniform_int_distribution<int> count(0, 200);
    std::uniform_int_distribution<int> node(1, 4);
    std::uniform_int_distribution<int> step(0, 240);
    std::uniform_int_distribution<int> kind(0, 9);
    int matched = 0;
    for (int trial = 0; trial < 100; ++trial)
    {
        std::vector<rl::Event> events;
        std::int64_t now = kT0;
        int n            = count(rng);
        for (int i = 0; i < n; ++i)
        {
            now += std::int64_t {step(rng)} * 60000;
            auto id = fmt::format("nid{:03}", node(rng));
            int k   = kind(rng);
            if (k == 0)
            {
                events.push_back({rl::EventKind::Release, id, now, {}});
            }
            else if (k <= 3)
            {
                events.push_back({rl::EventKind::Success, id, now, {}});
            }
            else
            {
                events.push_back({rl::EventKind::Failure, id, now, k % 2 ? std::vector<std::string> {"Check GPU", "GPUEval"} : std::vector<std::string> {"NCCLBandwidth", "NCCLEval"}});
            }
        }
        rl::Engine inc(cat);
        auto model = model_of(cat);
        bool ok    = true;
        for (const auto &e : events)
        {
            inc.apply(e);
            switch (e.kind)
            {
                case rl::EventKind::Failure: model.failure(e.node, e.timestamp_ms, e.evals); break;
                case rl::EventKind::Success: model.success(e.node, e.timestamp_ms); break;
                case rl::EventKind::Release: model.release(e.node); break;
            }
            const auto &rec = inc.records().at(e.node);
            ok              = ok && std::string(rl::to_string(rec.state)) == model.nodes[e.node].state && rec.recovery_attempts == model.nodes[e.node].attempts;
        }
        ok = ok && rl::replay(events, cat) == inc.records();
        matched += ok ? 1 : 0;
        c.expect(ok, fmt::format("random log {} ({} events): incremental == replay == oracle", trial, events.size()));
    }
    c.summary = fmt::format("Drained after 3 rounds, Ticketed after {} recovery attempt(s); {}/100 random logs agree", attempts, matched);
}

// ---- AC6 ------------------------------------------------------------------

co::ReportEnvelope random_envelope(std::mt19937_64 &rng, int i)
{
    std::uniform_int_distribution<int> coin(0, 3);
    std::uniform_int_distribution<int> jitter(-90, 90);
    std::vector<std::string> nodes;
    for (int n = 1; n <= 6; ++n)
    {
        if (coin(rng) != 0)
        {
            nodes.push_back(fmt::format("nid{:03}", n));
        }
    }
    if (nodes.empty())
    {
        nodes.push_back("nid001");
    }
    auto at = kT0 + i * kH + jitter(rng) * 60000;
    std::vector<ex::NodeReport> reports;
    for (const auto &n : nodes)
    {
        int k = coin(rng);
        reports.push_back(report_for(n, k == 0 ? Health::Failing : (k == 1 && i % 5 == 0 ? Health::Silent : Health::Healthy)));
        reports.back().started_ms  = at;
        reports.back().finished_ms = at + 5;
    }
    ex::JobContext ctx {fmt::format("J{}", i % 7), nodes, 1, 1, true, 1};
    co::ReportEnvelope e;
    e.submitted_at_ms = at + 10;
    e.job_context     = ctx;
    e.verdict         = ex::decide_verdict(reports, ctx, {1.0}, "acceptance");
    e.reports         = reports;
    e.submitter       = "ci";
    return e;
}

/// Independent recount: one entry per eval result, or one "agent" entry for
/// a node that never reported, stamped with the report's finish time.
std::vector<co::HistoryEntry> recount(const std::vector<co::ReportEnvelope> &all, const std::string &node, std::int64_t from, std::int64_t to)
{
    std::vector<co::HistoryEntry> out;
    for (const auto &e : all)
    {
        for (const auto &r : e.reports)
        {
            auto ts = r.finished_ms > 0 ? r.finished_ms : e.submitted_at_ms;
            if (r.node != node || ts < from || ts > to)
            {
                continue;
            }
            if (r.agent_status != ex::AgentStatus::Reported)
            {
                out.push_back({ts, "agent", std::string(ex::to_string(r.agent_status))});
                continue;
            }
            for (const auto &res : r.results)
            {
                out.push_back({ts, res.eval_name, std::string(ev::to_string(res.status))});
            }
        }
    }
    std::stable_sort(out.begin(), out.end(), [](const auto &a, const auto &b) { return a.timestamp_ms < b.timestamp_ms; });
    return out;
}

void collector_durability(Check &c)
{
    auto dir = fresh_dir("ac6");
    std::mt19937_64 rng(606);
    std::vector<co::ReportEnvelope> envelopes;
    for (int i = 0; i < 40; ++i)
    {
        envelopes.push_back(random_envelope(rng, i));
    }

    int fds[2];
    if (!c.expect(::pipe(fds) == 0, "pipe"))
    {
        return;
    }
    pid_t child = ::fork();
    if (child == 0)
    {
        ::close(fds[0]);
        co::FileStore store(dir);
        std::string keys;
        for (const auto &e : envelopes)
        {
            auto r = store.ingest(e);
            keys += fmt::format("{} {}\n", r.key.job_id, r.key.seq);
        }
        (void)!::write(fds[1], keys.data(), keys.size());
        ::close(fds[1]);
        ::raise(SIGKILL);
        ::_exit(0);
    }
    ::close(fds[1]);
    std::string keys;
    char buf[4096];
    for (ssize_t n; (n = ::read(fds[0], buf, sizeof buf)) > 0;)
    {
        keys.append(buf, static_cast<std::size_t>(n));
    }
    ::close(fds[0]);
    int status = 0;
    ::waitpid(child, &status, 0);
    c.expect(WIFSIGNALED(status) && WTERMSIG(status) == SIGKILL, "writer was killed with SIGKILL");

    std::vector<co::StoredReportKey> acked;
    std::istringstream ks(keys);
    for (std::string job; ks >> job;)
    {
        std::int64_t seq = 0;
        ks >> seq;
        acked.push_back({job, seq});
    }
    c.expect(acked.size() == envelopes.size(), fmt::format("{} acknowledged ingests", acked.size()));

    co::FileStore restarted(dir);
    auto stored = restarted.envelopes();
    c.expect(stored.size() == envelopes.size(), fmt::format("restart restores {} of {} envelopes", stored.size(), envelopes.size()));
    for (std::size_t i = 0; i < std::min(stored.size(), acked.size()); ++i)
    {
        c.expect(stored[i].first == acked[i] && stored[i].second == envelopes[i], fmt::format("envelope {} intact under its key", i));
    }

    int same_key = 0;
    for (std::size_t i = 0; i < std::min(envelopes.size(), acked.size()); ++i)
    {
        auto again = restarted.ingest(envelopes[i]);
        same_key += again.duplicate && again.key == acked[i] ? 1 : 0;
    }
    c.expect(same_key == static_cast<int>(envelopes.size()), fmt::format("resubmission returns the original key ({} of {})", same_key, envelopes.size()));
    c.expect(restarted.size() == envelopes.size(), "resubmission stores nothing new");

    int queries = 0;
    for (int n = 1; n <= 6; ++n)
    {
        auto id = fmt::format("nid{:03}", n);
        for (auto [from, to] : {std::pair {kT0 - kH, kT0 + 100 * kH}, std::pair {kT0 + 10 * kH, kT0 + 20 * kH}, std::pair {kT0 + 7 * kH, kT0 + 7 * kH + 5}})
        {
            ++queries;
            c.expect(restarted.query_node_history(id, from, to) == recount(envelopes, id, from, to), fmt::format("history of {} in [{}, {}] matches recount", id, from, to));
        }
    }
    c.summary = fmt::format("{} envelopes survive SIGKILL, resubmissions keep their keys, {} history queries match the recount", stored.size(), queries);
}

// ---- AC7 ------------------------------------------------------------------

const pr::FixtureSet &fixtures()
{
    static const auto set = pr::FixtureSet::load_dir(kSrc + "/fixtures");
    return set;
}

std::vector<sat::MetricSeries> collect(const pr::Fixture &fx, std::uint64_t seed = 11)
{
    pr::SimulatedProbe probe({{"n0", fx}}, seed);
    pr::GpuGroup g {"ac7", {}};
    for (int i = 0; i < fx.gpu_count(); ++i)
    {
        g.gpus.insert({"n0", i});
    }
    return sat::collect(g, probe, 1000, 60000);
}

void saturation_properties(Check &c)
{
    // Separation: always "in use", barely loaded.
    auto busy = collect(fixtures().get("busy-wait"));
    bool util_one = true;
    for (const auto &s : busy)
    {
        if (s.field == pr::MetricField::GpuUtilization)
        {
            for (const auto &p : s.samples)
            {
                util_one = util_one && p.value == 1.0;
            }
        }
    }
    c.expect(util_one, "busy-wait GpuUtilization is 1.0 throughout");
    auto bs = sat::score(busy);
    c.expect(bs.overall < 0.05, fmt::format("busy-wait overall {} < 0.05", bs.overall));
    c.expect(std::abs(bs.overall - 0.031) <= 1e-9, fmt::format("busy-wait overall {:.12f} within 1e-9 of 0.031", bs.overall));

    // Weight degeneracy.
    auto saturated = collect(fixtures().get("saturated"));
    auto wc        = sat::score(saturated, {1, 0, 0});
    auto wm        = sat::score(saturated, {0, 1, 0});
    auto wn        = sat::score(saturated, {0, 0, 1});
    c.expect(wc.overall == wc.compute && wm.overall == wm.memory && wn.overall == wn.network, "unit weights reproduce the component exactly");

    // Boundedness and monotonicity over randomized fixture perturbations.
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> u(0, 1);
    const std::vector<pr::MetricField> inputs {pr::MetricField::SmActivity, pr::MetricField::TensorActivity, pr::MetricField::MemoryBandwidthUtilization,
                                               pr::MetricField::NvlinkTxBandwidth, pr::MetricField::NvlinkRxBandwidth};
    const std::vector<std::string> bases {"saturated", "healthy", "busy-wait", "idle-node"};
    int monotone = 0;
    for (int trial = 0; trial < 100; ++trial)
    {
        auto base = fixtures().get(bases[static_cast<std::size_t>(trial) % bases.size()]);
        // Random starting point inside each field's range.
        for (auto &g : base.gpus)
        {
            for (auto f : inputs)
            {
                auto range = pr::field_range(f);
                double hi  = std::isfinite(range.max) ? range.max : 250.0;
                g.fields[f] = pr::FieldGenerator {pr::FieldGenerator::Shape::Noise, range.min + u(rng) * (hi - range.min), u(rng) * 0.1 * (hi - range.min)};
            }
        }
        auto bumped = base;
        auto field  = inputs[rng() % inputs.size()];
        auto &gpu   = bumped.gpus[rng() % bumped.gpus.size()];
        auto range  = pr::field_range(field);
        double span = (std::isfinite(range.max) ? range.max : 250.0) - range.min;
        gpu.fields[field].a += u(rng) * 0.5 * span;

        std::uint64_t seed = rng();
        auto before        = sat::score(collect(base, seed));
        auto after         = sat::score(collect(bumped, seed));
        bool bounded       = true;
        for (const auto &s : {before, after})
        {
            for (double v : {s.compute, s.memory, s.network, s.overall})
            {
                bounded = bounded && v >= 0.0 && v <= 1.0;
            }
        }
        c.expect(bounded, fmt::format("trial {}: every component in [0, 1]", trial));
        bool ok = after.compute >= before.compute && after.memory >= before.memory && after.network >= before.network && after.overall >= before.overall;
        c.expect(ok, fmt::format("trial {}: raising {} never lowers a component", trial, pr::field_name(field)));
        monotone += ok ? 1 : 0;
    }
    c.summary = fmt::format("busy-wait overall {:.3f} with utilization 1.0, degeneracy exact, {}/100 perturbations monotone and bounded", bs.overall, monotone);
}

// ---- AC8 ------------------------------------------------------------------

void hostlist_codec(Check &c)
{
    long cases = 0;
    long mismatches = 0;
    auto agree = [&](bool ok, const std::string &what) {
        ++cases;
        if (!ok)
        {
            ++mismatches;
            c.expect(false, what);
        }
    };

    // Every subset of a universe mixing singletons, runs, padding widths,
    // digit-count changes and non-numeric names.
    const std::vector<std::string> universe {"nid001", "nid002", "nid003", "nid005", "nid9", "nid10", "nid099", "nid100", "x1", "x01", "login", "gpu2n3"};
    for (unsigned mask = 1; mask < (1u << universe.size()); ++mask)
    {
        std::vector<std::string> names;
        for (std::size_t i = 0; i < universe.size(); ++i)
        {
            if (mask & (1u << i))
            {
                names.push_back(universe[i]);
            }
        }
        auto text = hl::compress(names);
        agree(text == oracle::hostlist::compress(names), fmt::format("compress mask {}: {}", mask, text));
        auto back = hl::expand(text);
        agree(back == oracle::hostlist::sorted_unique(names), fmt::format("round-trip mask {}", mask));
        auto ref = oracle::hostlist::expand(text);
        agree(ref && *ref == back, fmt::format("oracle expansion mask {}", mask));
    }

    // Every range over small bounds and widths.
    for (int width = 1; width <= 3; ++width)
    {
        for (int lo = 0; lo <= 12; ++lo)
        {
            for (int hi = lo; hi <= 12; ++hi)
            {
                auto expr = fmt::format("n[{:0{}}-{:0{}}]", lo, width, hi, width);
                auto ours = hl::expand(expr);
                auto ref  = oracle::hostlist::expand(expr);
                agree(ref && ours == *ref, "expand " + expr);
                agree(hl::compress(ours) == oracle::hostlist::compress(ours), "compress " + expr);
            }
        }
    }

    // Mixed lists and multi-bracket patterns.
    for (const char *expr : {"nid[001-003],nid007", "a[1-3]b[01-02]", "x1,x[2-4],y", "gpu2n[005-010]", "n[8-10]", "n[099-101]", "r[1-2]n[1-2]-ib", "nid[1,3,5-7],login",
                             "c[0-1]g[0-3]", "single"})
    {
        auto ours = hl::expand(expr);
        auto ref  = oracle::hostlist::expand(expr);
        agree(ref && ours == *ref, std::string("expand ") + expr);
        agree(hl::expand(hl::compress(ours)) == oracle::hostlist::sorted_unique(ours), std::string("round-trip ") + expr);
    }
    for (const char *bad : {"nid[3-1]", "nid[", "n]", "n[1-]", "n[,1]", "n[[1]]"})
    {
        bool threw = false;
        try
        {
            hl::expand(bad);
        }
        catch (const hl::MalformedHostlist &)
        {
            threw = true;
        }
        agree(threw && !oracle::hostlist::expand(bad), std::string("rejects ") + bad);
    }
    c.summary = fmt::format("{} comparisons, {} mismatches", cases, mismatches);
}

// ---- AC9 ------------------------------------------------------------------

void determinism(Check &c)
{
    int profiles = 0;
    for (const auto &entry : fs::directory_iterator(kSrc + "/profiles"))
    {
        if (entry.path().extension() != ".yaml")
        {
            continue;
        }
        ++profiles;
        std::vector<std::string> args {"sim", "--profile", entry.path().string(), "--protocol", kProtocol, "--repeat", "2", "--json"};
        auto a = vetgate(args);
        auto b = vetgate(args);
        auto name = entry.path().filename().string();
        c.expect(a.code == 0 && !a.out.empty(), name + ": sim succeeds");
        c.expect(a.out == b.out, name + ": transcripts are byte-identical");
        args.push_back("--seed");
        args.push_back("12345");
        c.expect(vetgate(args).out == vetgate(args).out, name + ": byte-identical under an explicit seed");
    }
    c.expect(profiles >= 5, "every shipped profile is covered");
    c.summary = fmt::format("{} profiles, repeated `vetgate sim --json` byte-identical", profiles);
}

} // namespace

int main(int argc, char **argv)
{
    std::string only = argc > 1 ? argv[1] : "";
    const std::vector<std::pair<std::string, std::function<void(Check &)>>> criteria {
        {"AC1", protocol_fidelity},    {"AC2", verdict_equivalence},  {"AC3", early_abort},
        {"AC4", timeout_handling},     {"AC5", rules_escalation},     {"AC6", collector_durability},
        {"AC7", saturation_properties}, {"AC8", hostlist_codec},      {"AC9", determinism},
    };
    int failed = 0;
    for (const auto &[id, fn] : criteria)
    {
        if (!only.empty() && only != id)
        {
            continue;
        }
        Check c;
        auto t0 = std::chrono::steady_clock::now();
        try
        {
            fn(c);
        }
        catch (const std::exception &e)
        {
            c.expect(false, std::string("unexpected exception: ") + e.what());
        }
        bool ok = c.failures.empty();
        failed += ok ? 0 : 1;
        fmt::print("{} {} {} [{:.2f}s]\n", id, ok ? "PASS" : "FAIL", c.summary, seconds_since(t0));
        for (const auto &f : c.failures)
        {
            fmt::print("    {}\n", f);
        }
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
