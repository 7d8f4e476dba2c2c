/*
 * Copyright (c) 2026, The vetgate Authors.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

// Python extension. Structured values cross the boundary as JSON text; the
// pure-Python package decodes them into dicts and lists.

#include <cli.hpp>

#include <vetgate/cluster_sim.hpp>
#include <vetgate/codec.hpp>
#include <vetgate/collector.hpp>
#include <vetgate/fixture.hpp>
#include <vetgate/hostlist.hpp>
#include <vetgate/protocol.hpp>
#include <vetgate/rules.hpp>
#include <vetgate/saturation.hpp>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

namespace py = pybind11;
using namespace vetgate;
using codec::Json;

namespace
{

std::string decide(const std::string &reports_json, const std::string &context_json, const std::string &policy_json)
{
    auto reports_doc = codec::parse(reports_json);
    if (!reports_doc.is_array())
    {
        throw codec::DecodeError("reports: expected an array");
    }
    std::vector<executor::NodeReport> reports;
    for (const auto &r : reports_doc)
    {
        reports.push_back(codec::decode_node_report(r));
    }
    auto ctx    = codec::decode_job_context(codec::parse(context_json));
    auto policy = codec::decode_policy(codec::parse(policy_json));
    return codec::dump(codec::encode(executor::decide_verdict(reports, ctx, policy)));
}

std::string score(const std::string &fixtures_dir,
                  const std::string &fixture,
                  std::optional<int> gpus,
                  std::int64_t interval_ms,
                  std::int64_t duration_ms,
                  std::array<double, 3> weights,
                  double link_peak_gbps,
                  std::uint64_t seed)
{
    auto set = probe::FixtureSet::load_dir(fixtures_dir);
    auto fx  = set.get(fixture);
    int n    = gpus.value_or(fx.gpu_count());
    if (n < 1 || n > fx.gpu_count())
    {
        throw PreconditionError("gpus must be between 1 and the fixture's GPU count");
    }
    saturation::Weights w {weights[0], weights[1], weights[2]};
    w.validate();
    probe::SimulatedProbe probe({{fixture, fx}}, seed);
    probe::GpuGroup group {"python", {}};
    for (int i = 0; i < n; ++i)
    {
        group.gpus.insert({fixture, i});
    }
    auto series = saturation::collect(group, probe, interval_ms, duration_ms);
    return codec::dump(codec::encode(saturation::score(series, w, link_peak_gbps)));
}

std::string simulate(const std::string &profile_path, const std::string &protocol_path, int repeat, std::optional<std::uint64_t> seed)
{
    auto profile = sim::load_profile(profile_path);
    if (seed)
    {
        profile.seed = *seed;
    }
    sim::ScenarioOptions options;
    options.repeat = repeat;
    return codec::dump(sim::encode(sim::run_scenario(profile, protocol::load_protocol(protocol_path), options)));
}

std::string replay_rules(const std::vector<std::string> &event_lines, const std::optional<std::string> &catalog_path)
{
    auto catalog = catalog_path ? rules::load_catalog(*catalog_path) : rules::default_catalog();
    std::vector<rules::Event> events;
    for (const auto &line : event_lines)
    {
        events.push_back(rules::decode_event(line));
    }
    rules::Engine engine(catalog);
    for (const auto &e : events)
    {
        engine.apply(e);
    }
    Json records = Json::object();
    for (const auto &[node, rec] : engine.records())
    {
        records[node] = collector::encode(rec);
    }
    Json drain = Json::array();
    for (const auto &n : engine.drain_list())
    {
        drain.push_back(n);
    }
    return codec::dump(Json {{"records", records}, {"drain_list", drain}});
}

py::tuple run_cli(const std::vector<std::string> &args, const std::map<std::string, std::string> &env)
{
    executor::Environment e(env.begin(), env.end());
    std::ostringstream out;
    std::ostringstream err;
    int code = 0;
    {
        py::gil_scoped_release release;
        code = cli::run(args, e, out, err);
    }
    return py::make_tuple(code, out.str(), err.str());
}

} // namespace

PYBIND11_MODULE(_core, m)
{
    m.doc() = "Native core of the vetgate node vetting toolkit";
    m.attr("__version__") = VETGATE_VERSION;

    static py::exception<Error> error(m, "VetgateError");
    py::register_exception_translator([](std::exception_ptr p) {
        try
        {
            if (p)
            {
                std::rethrow_exception(p);
            }
        }
        catch (const Error &e)
        {
            PyErr_SetObject(error.ptr(), py::make_tuple(e.kind(), e.what()).ptr());
        }
    });

    m.def("expand_hostlist", [](const std::string &expr) { return hostlist::expand(expr); }, py::arg("expression"));
    m.def("compress_hostlist", [](const std::vector<std::string> &names) { return hostlist::compress(names); }, py::arg("names"));
    m.def("parse_protocol", [](const std::string &text) { return codec::dump(codec::encode(protocol::parse_protocol(text))); }, py::arg("document"));
    m.def("load_protocol", [](const std::string &path) { return codec::dump(codec::encode(protocol::load_protocol(path))); }, py::arg("path"));
    m.def("canonical_protocol", [](const std::string &text) { return protocol::serialize_protocol(protocol::parse_protocol(text)); }, py::arg("document"));
    m.def("decide_verdict", &decide, py::arg("reports"), py::arg("context"), py::arg("policy"));
    m.def("score", &score, py::arg("fixtures_dir"), py::arg("fixture"), py::arg("gpus") = py::none(), py::arg("interval_ms") = 1000,
          py::arg("duration_ms") = 60000, py::arg("weights") = std::array<double, 3> {0.5, 0.3, 0.2}, py::arg("link_peak_gbps") = saturation::kDefaultLinkPeakGbps,
          py::arg("seed") = 0);
    m.def("simulate", &simulate, py::arg("profile"), py::arg("protocol"), py::arg("repeat") = 1, py::arg("seed") = py::none());
    m.def("replay_rules", &replay_rules, py::arg("events"), py::arg("catalog") = py::none());
    m.def("run_cli", &run_cli, py::arg("args"), py::arg("env"));
}
