/*
 * Copyright (c) 2026, The vetgate Authors.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#include <doctest.h>

#include <vetgate/cluster_sim.hpp>
#include <vetgate/protocol.hpp>

#include "../oracles/rules_oracle.hpp"
#include "../oracles/verdict_oracle.hpp"

#include <chrono>

namespace ev = vetgate::evaluations;
namespace ex = vetgate::executor;
namespace pr = vetgate::probe;
namespace rl = vetgate::rules;
namespace sim = vetgate::sim;

namespace
{

const std::filesystem::path kProfiles = VETGATE_SOURCE_DIR "/profiles";

pr::FixtureSet fixtures()
{
    return pr::FixtureSet::load_dir(VETGATE_SOURCE_DIR "/fixtures");
}

vetgate::protocol::VettingProtocol ml_training()
{
    return vetgate::protocol::load_protocol(VETGATE_SOURCE_DIR "/protocols/ml-training.yaml");
}

std::string small(const std::string &faults, const std::string &topology = "ring")
{
    return "name: t\nseed: 1\npackages: [torch, cuda-python, numpy]\nnodes:\n  - ids: \"nid[001-004]\"\n    fixture: healthy\n"
           "links:\n  topology: " +
           topology + "\n  bandwidth: 100\nfaults:\n" + faults;
}

const ev::EvalResult &result_of(const ex::NodeReport &r, const std::string &name)
{
    for (const auto &res : r.results)
    {
        if (res.eval_name == name)
        {
            return res;
        }
    }
    FAIL("no result for ", name);
    throw std::logic_error("unreachable");
}

const ex::NodeReport &report_of(const ex::VettingOutcome &o, const std::string &node)
{
    for (const auto &r : o.reports)
    {
        if (r.node == node)
        {
            return r;
        }
    }
    FAIL("no report for ", node);
    throw std::logic_error("unreachable");
}

oracle::verdict::Outcome oracle_verdict(const std::vector<ex::NodeReport> &reports, const ex::JobContext &ctx, const ex::Policy &p)
{
    return oracle::verdict::decide(reports, ctx.flexible, ctx.min_nodes, p.max_exclusion_fraction, std::string(ex::to_string(p.treat_unknown_as)), p.strict);
}

} // namespace

TEST_SUITE("sim")
{
    TEST_CASE("shipped profiles load")
    {
        auto p = sim::load_profile(kProfiles / "all-healthy-64.yaml");
        CHECK(p.nodes.size() == 64);
        CHECK(p.topology == sim::Topology::Ring);
        CHECK(p.link_gbps == 100.0);
        CHECK(p.faults.empty());
        auto probe = sim::make_probe(p);
        for (const auto &id : p.node_ids())
        {
            CHECK(probe->gpu_count(id) == 4);
        }
        CHECK(p.node_ids().front() == "nid001");
        CHECK(p.node_ids().back() == "nid064");

        for (auto name : {"hot-gpu-64", "hang-64", "degraded-link-4", "mixed-faults-8"})
        {
            CHECK_NOTHROW(sim::load_profile(kProfiles / (std::string(name) + ".yaml")));
        }
    }

    TEST_CASE("profile validation")
    {
        auto fx = fixtures();
        CHECK_NOTHROW(sim::parse_profile(small("  - kind: HotGpu\n    target: nid002\n"), fx));
        CHECK_THROWS_AS(sim::parse_profile(small("  - kind: HotGpu\n    target: nid999\n"), fx), sim::InvalidFault);
        CHECK_THROWS_AS(sim::parse_profile(small("  - kind: Meltdown\n    target: nid001\n"), fx), sim::InvalidFault);
        CHECK_THROWS_AS(sim::parse_profile(small("  - kind: HotGpu\n    target: nid001\n    gpu: 4\n"), fx), sim::InvalidFault);
        CHECK_THROWS_AS(sim::parse_profile(small("  - kind: HotGpu\n    target: nid001\n    temperature: -3\n"), fx), sim::InvalidFault);
        CHECK_THROWS_AS(sim::parse_profile(small("  - kind: DirtyGpuMemory\n    target: nid001\n    used_fraction: 1.5\n"), fx),
                        sim::InvalidFault);
        CHECK_THROWS_AS(sim::parse_profile(small("  - kind: DegradedLink\n    target: [nid001, nid002]\n"), fx), sim::InvalidFault);
        CHECK_THROWS_AS(sim::parse_profile(small("  - kind: DegradedLink\n    target: [nid001, nid003]\n    bandwidth: 40\n"), fx),
                        sim::InvalidFault);
        CHECK_NOTHROW(sim::parse_profile(small("  - kind: DegradedLink\n    target: [nid001, nid003]\n    bandwidth: 40\n", "full-mesh"), fx));
        CHECK_NOTHROW(sim::parse_profile(small("  - kind: DegradedLink\n    target: [nid004, nid001]\n    bandwidth: 40\n"), fx));
        CHECK_THROWS_AS(sim::parse_profile(small("  - kind: AgentHang\n    target: [nid001, nid002]\n"), fx), sim::InvalidFault);

        CHECK_THROWS_AS(sim::parse_profile("name: t\nnodes: []\n", fx), sim::InvalidProfile);
        CHECK_THROWS_AS(sim::parse_profile("name: t\n", fx), sim::InvalidProfile);
        CHECK_THROWS_AS(sim::parse_profile("name: t\nnodes:\n  - id: a\n    fixture: nope\n", fx), sim::UnknownFixture);
        CHECK_THROWS_AS(sim::parse_profile("name: t\nnodes:\n  - id: a\n    fixture: healthy\n  - id: a\n    fixture: healthy\n", fx),
                        sim::InvalidProfile);
        CHECK_THROWS_AS(sim::parse_profile("name: t\nnodes:\n  - id: a\n    fixture: healthy\nlinks:\n  bandwidth: 0\n", fx),
                        sim::InvalidProfile);
        CHECK_THROWS_AS(sim::parse_profile("name: t\nnodes:\n  - id: a\n    fixture: healthy\nlinks:\n  topology: torus\n", fx),
                        sim::InvalidProfile);
    }

    TEST_CASE("fault overrides reach the probe")
    {
        auto fx = fixtures();
        auto p  = sim::parse_profile(small("  - kind: HotGpu\n    target: nid002\n    gpu: 1\n    temperature: 45\n"
                                            "  - kind: DirtyGpuMemory\n    target: nid003\n    gpu: 0\n    used_fraction: 0.6\n"
                                            "  - kind: KernelLaunchFail\n    target: nid004\n    gpu: 3\n"),
                                     fx);
        auto probe = sim::make_probe(p);
        auto hot   = probe->snapshot("nid002");
        int at45   = 0;
        for (const auto &g : hot.gpus)
        {
            at45 += g.temperature_c == 45.0;
            CHECK(g.temperature_c == (g.index == 1 ? 45.0 : 25.0));
        }
        CHECK(at45 == 1);
        CHECK(probe->snapshot("nid003").gpus[0].used_memory_fraction == 0.6);
        CHECK(probe->snapshot("nid003").gpus[1].used_memory_fraction == 0.05);
        auto launches = probe->launch_trivial_kernels("nid004", 1.0);
        for (const auto &l : launches)
        {
            CHECK(l.completed == (l.gpu != 3));
        }
        for (const auto &g : probe->snapshot("nid001").gpus)
        {
            CHECK(g.temperature_c == 25.0);
        }
    }

    TEST_CASE("degraded link shows up in the measured bus bandwidth")
    {
        auto p         = sim::load_profile(kProfiles / "degraded-link-4.yaml");
        auto transport = sim::make_transport(p);
        auto out       = ex::run_vetting(ml_training(), sim::make_context(p), *transport, {});
        // busbw = (2(n-1)/n * S) / (2(n-1) * (S/n) / bw) = bw of the slower adjacent link.
        std::map<std::string, double> expected {{"nid001", 40.0}, {"nid002", 40.0}, {"nid003", 100.0}, {"nid004", 100.0}};
        for (const auto &[node, bw] : expected)
        {
            const auto &r = result_of(report_of(out, node), "NCCLBandwidth");
            CHECK(r.measured.at("busbw") == doctest::Approx(bw).epsilon(1e-9));
            CHECK(r.status == (bw < 90.0 ? ev::Status::Fail : ev::Status::Pass));
        }
        CHECK(out.verdict.decision == ex::Decision::Abort);
    }

    TEST_CASE("hung agent times out without stalling the scenario")
    {
        auto p     = sim::load_profile(kProfiles / "hang-64.yaml");
        auto start = std::chrono::steady_clock::now();
        auto t     = sim::run_scenario(p, ml_training(), {ex::Policy {0.1}});
        auto secs  = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        CHECK(secs < 5.0);
        const auto &out = t.rounds[0].outcome;
        CHECK(report_of(out, "nid033").agent_status == ex::AgentStatus::TimedOut);
        CHECK(out.verdict.per_node.at("nid033").health == ex::NodeHealth::Unresponsive);
        CHECK(out.verdict.decision == ex::Decision::ContinueExcluding);
        CHECK(out.verdict.excluded == std::vector<std::string> {"nid033"});
        CHECK(out.elapsed_ms <= 120000.0 + 2000.0);
        auto expect = oracle_verdict(out.reports, out.verdict.job_context, {0.1});
        CHECK(expect.decision == "ContinueExcluding");
        CHECK(expect.excluded == out.verdict.excluded);
    }

    TEST_CASE("healthy scenario")
    {
        auto p     = sim::load_profile(kProfiles / "all-healthy-64.yaml");
        auto start = std::chrono::steady_clock::now();
        auto t     = sim::run_scenario(p, ml_training());
        auto secs  = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        CHECK(secs < 5.0);
        REQUIRE(t.rounds.size() == 1);
        const auto &r = t.rounds[0];
        CHECK(r.outcome.verdict.decision == ex::Decision::Continue);
        CHECK(r.exit_code == 0);
        CHECK(r.outcome.reports.size() == 64);
        for (const auto &rep : r.outcome.reports)
        {
            CHECK(rep.agent_status == ex::AgentStatus::Reported);
        }
        CHECK(r.effects.empty());
        CHECK(t.drain_list.empty());
        CHECK(t.stored == 1);
        CHECK(r.key == vetgate::collector::StoredReportKey {"4242.1", 1});
    }

    TEST_CASE("hot node: exclusion, abort and escalation")
    {
        auto p     = sim::load_profile(kProfiles / "hot-gpu-64.yaml");
        auto proto = ml_training();

        sim::ScenarioOptions flexible;
        flexible.policy = {0.1};
        auto t          = sim::run_scenario(p, proto, flexible);
        CHECK(t.rounds[0].outcome.verdict.decision == ex::Decision::ContinueExcluding);
        CHECK(t.rounds[0].outcome.verdict.excluded == std::vector<std::string> {"nid017"});
        CHECK(t.rounds[0].exit_code == 3);

        sim::ScenarioOptions strict = flexible;
        strict.flexible             = false;
        auto s                      = sim::run_scenario(p, proto, strict);
        CHECK(s.rounds[0].outcome.verdict.decision == ex::Decision::Abort);
        CHECK(s.rounds[0].exit_code == 4);

        sim::ScenarioOptions three = flexible;
        three.repeat               = 3;
        auto r                     = sim::run_scenario(p, proto, three);
        REQUIRE(r.rounds.size() == 3);
        auto c = rl::default_catalog();
        oracle::rules::Model m;
        for (const auto &rule : c.rules)
        {
            m.rules.push_back({rule.count, rule.window_ms, rule.eval, std::string(rl::to_string(rule.action)), rule.priority});
        }
        m.max_attempts = c.max_recovery_attempts;
        m.clear_window = c.recovery_window_ms;
        for (const auto &round : r.rounds)
        {
            CHECK(round.key.seq == 1);
            m.failure("nid017", report_of(round.outcome, "nid017").finished_ms, {"Check GPU", "GPUEval"});
        }
        CHECK(m.nodes["nid017"].state == "Drained");
        CHECK(r.rules.at("nid017").state == rl::NodeState::Drained);
        CHECK(r.drain_list == std::set<std::string> {"nid017"});
        bool listed = false;
        for (const auto &f : r.fleet)
        {
            if (f.node == "nid017")
            {
                listed = true;
                CHECK(f.state == rl::NodeState::Drained);
                CHECK(f.failures_24h == 3);
            }
            else
            {
                CHECK(f.state == rl::NodeState::Active);
            }
        }
        CHECK(listed);
    }

    TEST_CASE("every fault kind is visible")
    {
        auto fx    = fixtures();
        auto proto = ml_training();
        auto base  = sim::run_scenario(sim::parse_profile(small(""), fx), proto);
        for (std::string fault : {"  - kind: HotGpu\n    target: nid002\n",
                                  "  - kind: DirtyGpuMemory\n    target: nid002\n",
                                  "  - kind: DegradedLink\n    target: [nid002, nid003]\n    bandwidth: 40\n",
                                  "  - kind: AgentHang\n    target: nid002\n",
                                  "  - kind: AgentHang\n    target: nid002\n    delay: 500\n",
                                  "  - kind: KernelLaunchFail\n    target: nid002\n"})
        {
            CAPTURE(fault);
            auto faulted = sim::run_scenario(sim::parse_profile(small(fault), fx), proto);
            const auto &a = base.rounds[0].outcome.reports;
            const auto &b = faulted.rounds[0].outcome.reports;
            bool differs  = false;
            for (std::size_t i = 0; i < a.size(); ++i)
            {
                differs |= a[i].agent_status != b[i].agent_status;
                for (std::size_t k = 0; k < a[i].results.size() && k < b[i].results.size(); ++k)
                {
                    differs |= a[i].results[k].status != b[i].results[k].status || a[i].results[k].measured != b[i].results[k].measured;
                }
            }
            CHECK(differs);
            CHECK(faulted.rounds[0].outcome.verdict.per_node.at("nid002").health != ex::NodeHealth::Healthy);
        }
    }

    TEST_CASE("transcripts are deterministic")
    {
        auto p     = sim::load_profile(kProfiles / "mixed-faults-8.yaml");
        auto proto = ml_training();
        sim::ScenarioOptions o;
        o.repeat   = 3;
        auto first = vetgate::codec::dump(sim::encode(sim::run_scenario(p, proto, o)));
        for (int i = 0; i < 3; ++i)
        {
            CHECK(vetgate::codec::dump(sim::encode(sim::run_scenario(p, proto, o))) == first);
        }
        auto other = p;
        other.seed += 1;
        CHECK_NOTHROW(sim::run_scenario(other, proto, o));

        auto hang    = sim::load_profile(kProfiles / "hang-64.yaml");
        auto verdict = sim::run_scenario(hang, proto, {ex::Policy {0.1}}).rounds[0].outcome.verdict;
        for (int i = 0; i < 20; ++i)
        {
            CHECK(sim::run_scenario(hang, proto, {ex::Policy {0.1}}).rounds[0].outcome.verdict == verdict);
        }
    }
}
