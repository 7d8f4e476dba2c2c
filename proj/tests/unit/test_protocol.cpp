/*
 * Copyright (c) 2026, The vetgate Authors.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#include <doctest.h>

#include <vetgate/protocol.hpp>

#include <fstream>
#include <random>
#include <sstream>

using namespace vetgate::protocol;

namespace
{

std::string read_asset(const std::string &relative)
{
    std::ifstream in(std::string(VETGATE_SOURCE_DIR) + "/" + relative);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

std::string replace(std::string text, const std::string &from, const std::string &to)
{
    auto pos = text.find(from);
    REQUIRE(pos != std::string::npos);
    return text.replace(pos, from.size(), to);
}

} // namespace

TEST_SUITE("protocol")
{
    TEST_CASE("the reference ML training protocol parses exactly")
    {
        auto p = parse_protocol(read_asset("protocols/ml-training.yaml"));
        CHECK(p.name == "ML Training Node Vetting");
        CHECK(p.version == "1");
        REQUIRE(p.evals.size() == 3);

        const auto &gpu = p.evals[0];
        CHECK(gpu.name == "Check GPU");
        CHECK(gpu.kind == EvaluationKind::GpuEval);
        CHECK(gpu.params.size() == 2);
        CHECK(gpu.params.at("max_temp") == TypedValue {30.0, Unit::Celsius});
        CHECK(gpu.params.at("max_used_memory") == TypedValue {0.2, Unit::Fraction});
        CHECK(gpu.requirements.empty());

        const auto &nccl = p.evals[1];
        CHECK(nccl.kind == EvaluationKind::NcclEval);
        CHECK(nccl.params.at("min_bandwidth") == TypedValue {90.0, Unit::GBps});
        CHECK(nccl.requirements == std::vector<std::string> {"torch"});

        const auto &cuda = p.evals[2];
        CHECK(cuda.kind == EvaluationKind::CudaEval);
        CHECK(cuda.params.empty());
        CHECK(cuda.requirements == std::vector<std::string> {"cuda-python", "numpy"});
    }

    TEST_CASE("empty protocol")
    {
        auto p = parse_protocol("name: \"x\"\nevals: []\n");
        CHECK(p.name == "x");
        CHECK(p.evals.empty());
        auto text = serialize_protocol(p);
        CHECK(text.find("evals: []") != std::string::npos);
        CHECK(parse_protocol(text) == p);
    }

    TEST_CASE("fraction outside [0,1] is a parameter error")
    {
        auto doc = replace(read_asset("protocols/ml-training.yaml"), "max_used_memory: 0.2", "max_used_memory: 1.5");
        try
        {
            parse_protocol(doc);
            FAIL("expected ParamError");
        }
        catch (const ParamError &e)
        {
            CHECK(e.eval() == "Check GPU");
            CHECK(e.param() == "max_used_memory");
        }
    }

    TEST_CASE("type resolution is by last segment, case-insensitive")
    {
        CHECK(resolve_kind("vetnode.evaluations.gpu_eval.GPUEval") == EvaluationKind::GpuEval);
        CHECK(resolve_kind("gpueval") == EvaluationKind::GpuEval);
        CHECK(resolve_kind("x.y.NcclEval") == EvaluationKind::NcclEval);
        CHECK_FALSE(resolve_kind("vetnode.evaluations.foo.FooEval").has_value());
        CHECK_FALSE(resolve_kind("GPUEval.extra").has_value());
    }

    TEST_CASE("typed errors")
    {
        SUBCASE("unknown kind names the type value")
        {
            try
            {
                parse_protocol("name: x\nevals:\n- name: a\n  type: pkg.FooEval\n");
                FAIL("expected UnknownEvaluationKind");
            }
            catch (const UnknownEvaluationKind &e)
            {
                CHECK(std::string(e.what()).find("pkg.FooEval") != std::string::npos);
            }
        }
        SUBCASE("syntax error carries a position")
        {
            try
            {
                parse_protocol("name: x\nevals: [\n");
                FAIL("expected SyntaxError");
            }
            catch (const SyntaxError &e)
            {
                CHECK(e.line() >= 1);
                CHECK(e.column() >= 1);
            }
        }
        CHECK_THROWS_AS(parse_protocol("name: x\nevals:\n- name: a\n  type: GPUEval\n  max_power: 3\n"), ParamError);
        CHECK_THROWS_AS(parse_protocol("name: x\nevals:\n- name: a\n  type: NCCLEval\n"), ParamError);
        CHECK_THROWS_AS(parse_protocol("name: x\nevals:\n- name: a\n  type: GPUEval\n  max_temp: \"30\"\n"), ParamError);
        CHECK_THROWS_AS(parse_protocol("name: x\nevals:\n- name: a\n  type: GPUEval\n  max_temp: .inf\n"), ParamError);
        CHECK_THROWS_AS(parse_protocol("name: x\nevals:\n- name: a\n  type: GPUEval\n  max_temp: -1\n"), ParamError);
        CHECK_THROWS_AS(parse_protocol("name: x\nevals:\n- name: a\n  type: NCCLEval\n  min_bandwidth: 0\n"), ParamError);
        CHECK_THROWS_AS(parse_protocol("name: x\nevals:\n- name: a\n  type: NCCLEval\n  min_bandwidth: 9\n  iters: 2.5\n"),
                        ParamError);
        CHECK_THROWS_AS(parse_protocol("name: x\nevals:\n- name: a\n  type: GPUEval\n- name: a\n  type: CUDAEval\n"),
                        DuplicateEvalName);
        CHECK_THROWS_AS(parse_protocol("name: x\nevals:\n- name: a\n  type: GPUEval\n  max_temp: 3\n  max_temp: 4\n"),
                        SyntaxError);
        CHECK_THROWS_AS(parse_protocol("name: x\nversion: 2\nevals: []\n"), UnsupportedVersion);
        CHECK_THROWS_AS(parse_protocol("name: x\nevals: []\nextra: 1\n"), SyntaxError);
        CHECK_THROWS_AS(parse_protocol("evals: []\n"), SyntaxError);
        CHECK_THROWS_AS(parse_protocol("name: x\n"), SyntaxError);
        CHECK_THROWS_AS(parse_protocol(""), SyntaxError);
        CHECK_THROWS_AS(parse_protocol("name: x\nevals:\n- just a string\n"), SyntaxError);
        CHECK_THROWS_AS(parse_protocol("name: x\nevals:\n- type: GPUEval\n"), ParamError);
    }

    TEST_CASE("explicit version 1 is accepted")
    {
        CHECK(parse_protocol("version: \"1\"\nname: x\nevals: []\n").version == "1");
        CHECK(parse_protocol("version: 1\nname: x\nevals: []\n").version == "1");
    }

    TEST_CASE("serialization is canonical and round-trips")
    {
        auto p    = parse_protocol(read_asset("protocols/ml-training.yaml"));
        auto text = serialize_protocol(p);
        CHECK(parse_protocol(text) == p);
        CHECK(serialize_protocol(parse_protocol(text)) == text);
        CHECK(text.rfind("name: \"ML Training Node Vetting\"\nevals:\n", 0) == 0);
        // params alphabetical, before requirements
        auto temp = text.find("max_temp"), mem = text.find("max_used_memory");
        CHECK(temp < mem);
        CHECK(text.find("type: GPUEval") < temp);
    }

    TEST_CASE("unicode names round-trip byte-identically")
    {
        VettingProtocol p;
        p.name = "Überprüfung der Knoten";
        p.evals.push_back({"Überprüfung", EvaluationKind::GpuEval, {{"max_temp", {30.0, Unit::Celsius}}}, {"numpy"}});
        auto once  = serialize_protocol(p);
        auto again = parse_protocol(once);
        CHECK(again == p);
        CHECK(serialize_protocol(again) == once);
        CHECK(once.find("Überprüfung") != std::string::npos);
    }

    TEST_CASE("round-trip property over generated protocols")
    {
        std::mt19937_64 rng(20240611);
        auto pick = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
        const std::vector<std::string> names {"a", "Check GPU", "quote\"d", "back\\slash", "tab\there", "ümlaut", "#hash", "- dash", ": colon"};
        for (int round = 0; round < 300; ++round)
        {
            VettingProtocol p;
            p.name    = names[rng() % names.size()];
            int evals = static_cast<int>(rng() % 5);
            for (int i = 0; i < evals; ++i)
            {
                EvalSpec spec;
                spec.name = names[rng() % names.size()] + std::to_string(i);
                switch (rng() % 4)
                {
                    case 0:
                        spec.kind = EvaluationKind::GpuEval;
                        if (rng() % 2)
                        {
                            spec.params["max_temp"] = {pick(0, 150), Unit::Celsius};
                        }
                        if (rng() % 2)
                        {
                            spec.params["max_used_memory"] = {pick(0, 1), Unit::Fraction};
                        }
                        break;
                    case 1:
                        spec.kind                    = EvaluationKind::NcclEval;
                        spec.params["min_bandwidth"] = {pick(0.001, 1000), Unit::GBps};
                        if (rng() % 2)
                        {
                            spec.params["iters"] = {static_cast<double>(1 + rng() % 50), Unit::Count};
                        }
                        break;
                    case 2:
                        spec.kind = EvaluationKind::CudaEval;
                        if (rng() % 2)
                        {
                            spec.params["timeout"] = {pick(0.5, 120), Unit::Seconds};
                        }
                        break;
                    default:
                        spec.kind                      = EvaluationKind::HostMemoryEval;
                        spec.params["min_free_memory"] = {pick(0, 1), Unit::Fraction};
                }
                int reqs = static_cast<int>(rng() % 3);
                for (int r = 0; r < reqs; ++r)
                {
                    spec.requirements.push_back("pkg-" + std::to_string(rng() % 100));
                }
                p.evals.push_back(spec);
            }
            REQUIRE_NOTHROW(validate(p));
            auto text = serialize_protocol(p);
            INFO(text);
            CHECK(parse_protocol(text) == p);
        }
    }

    TEST_CASE("registry description")
    {
        const auto &gpu = registry_describe("GPUEval");
        const auto *temp = gpu.find("max_temp");
        REQUIRE(temp != nullptr);
        CHECK(temp->unit == Unit::Celsius);
        CHECK_FALSE(temp->mandatory);
        CHECK(temp->min == 0.0);
        CHECK(temp->max == 150.0);
        const auto *mem = gpu.find("max_used_memory");
        REQUIRE(mem != nullptr);
        CHECK(mem->unit == Unit::Fraction);
        CHECK_FALSE(mem->mandatory);
        CHECK(mem->range_text() == "[0, 1]");

        const auto &nccl = registry_describe("NCCLEval");
        const auto *bw   = nccl.find("min_bandwidth");
        REQUIRE(bw != nullptr);
        CHECK(bw->unit == Unit::GBps);
        CHECK(bw->mandatory);
        CHECK(bw->range_text() == "(0, inf)");
        CHECK_FALSE(bw->in_range(0.0));
        CHECK(bw->in_range(1e9));

        CHECK_THROWS_AS(registry_describe("FooEval"), UnknownEvaluationKind);
    }

    TEST_CASE("parsing is deterministic")
    {
        auto doc = read_asset("protocols/ml-training.yaml");
        CHECK(parse_protocol(doc) == parse_protocol(doc));
    }
}
