/*
 * Copyright (c) 2026, The vetgate Authors.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#include <doctest.h>

#include <vetgate/fixture.hpp>
#include <vetgate/saturation.hpp>

#include <fmt/format.h>

#include <filesystem>
#include <fstream>
#include <random>

namespace pr  = vetgate::probe;
namespace sat = vetgate::saturation;
using pr::MetricField;

namespace
{

const pr::FixtureSet &fixtures()
{
    static const auto set = pr::FixtureSet::load_dir(VETGATE_SOURCE_DIR "/fixtures");
    return set;
}

pr::GpuGroup all_gpus(const std::vector<std::string> &nodes, int per_node)
{
    pr::GpuGroup g {"job", {}};
    for (const auto &n : nodes)
    {
        for (int i = 0; i < per_node; ++i)
        {
            g.gpus.insert(pr::GpuId {n, i});
        }
    }
    return g;
}

std::vector<sat::MetricSeries> collect_fixture(const std::string &fixture, int nodes = 1)
{
    std::vector<pr::SimulatedNode> sim;
    std::vector<std::string> names;
    for (int i = 0; i < nodes; ++i)
    {
        names.push_back(fmt::format("n{}", i));
        sim.push_back({names.back(), fixtures().get(fixture)});
    }
    pr::SimulatedProbe probe(sim, 11);
    return sat::collect(all_gpus(names, fixtures().get(fixture).gpu_count()), probe, 100, 1000);
}

sat::MetricSeries constant(const std::string &node, int gpu, MetricField f, double v, int n = 5)
{
    sat::MetricSeries s {pr::GpuId {node, gpu}, f, {}};
    for (int k = 0; k < n; ++k)
    {
        s.samples.push_back({k * 100, v});
    }
    return s;
}

// Independent scoring model: plain loops over (gpu, timestamp).
double oracle_overall(const std::vector<sat::MetricSeries> &series, sat::Weights w, double peak)
{
    std::map<pr::GpuId, std::map<std::int64_t, std::map<MetricField, double>>> grid;
    for (const auto &s : series)
    {
        for (const auto &p : s.samples)
        {
            grid[s.gpu][p.timestamp_ms][s.field] = p.value;
        }
    }
    auto get = [](const std::map<MetricField, double> &m, MetricField f) { return m.count(f) ? m.at(f) : 0.0; };
    double c = 0, m = 0, n = 0;
    for (const auto &[gpu, times] : grid)
    {
        double gc = 0, gm = 0, gn = 0;
        for (const auto &[t, v] : times)
        {
            gc += std::max(get(v, MetricField::SmActivity), get(v, MetricField::TensorActivity));
            gm += get(v, MetricField::MemoryBandwidthUtilization);
            gn += std::min(1.0, (get(v, MetricField::NvlinkTxBandwidth) + get(v, MetricField::NvlinkRxBandwidth)) / (2 * peak));
        }
        c += gc / times.size();
        m += gm / times.size();
        n += gn / times.size();
    }
    auto g = static_cast<double>(grid.size());
    return w.compute * c / g + w.memory * m / g + w.network * n / g;
}

struct TempDir
{
    std::filesystem::path path;

    TempDir()
    {
        path = std::filesystem::temp_directory_path() / fmt::format("vetgate-sat-{}", std::random_device {}());
        std::filesystem::create_directories(path);
    }

    ~TempDir()
    {
        std::filesystem::remove_all(path);
    }
};

} // namespace

TEST_SUITE("saturation")
{
    TEST_CASE("collect: one series per gpu and field")
    {
        auto series = collect_fixture("saturated", 4);
        CHECK(series.size() == 7 * 16);
        for (const auto &s : series)
        {
            CHECK(s.samples.size() == 10);
        }

        auto probe = pr::SimulatedProbe({{"n0", fixtures().get("healthy")}}, 1);
        pr::GpuGroup one {"t", {pr::GpuId {"n0", 0}}};
        MetricField extra[] = {MetricField::Fp64Activity, MetricField::SmActivity};
        CHECK(sat::collect(one, probe, 100, 1000, extra).size() == 8);
        CHECK_THROWS_AS(sat::collect(one, probe, 100, 50), vetgate::PreconditionError);
        CHECK_THROWS_AS(sat::collect(pr::GpuGroup {"t", {}}, probe, 100, 1000), vetgate::PreconditionError);
    }

    TEST_CASE("busy-wait: utilization 1.0, overall 0.031")
    {
        auto series = collect_fixture("busy-wait");
        for (const auto &s : series)
        {
            if (s.field == MetricField::GpuUtilization)
            {
                for (const auto &p : s.samples)
                {
                    CHECK(p.value == 1.0);
                }
            }
        }
        auto score = sat::score(series);
        CHECK(std::abs(score.overall - 0.031) <= 1e-9);
        CHECK(score.overall < 0.05);
        CHECK(score.compute == doctest::Approx(0.05));
        CHECK(score.memory == doctest::Approx(0.02));
        CHECK(score.network == 0.0);
        CHECK(score.window_start_ms == 0);
        CHECK(score.window_end_ms == 900);
    }

    TEST_CASE("idle and fully saturated")
    {
        auto idle = sat::score(collect_fixture("idle-node"));
        CHECK(idle.overall == 0.0);
        CHECK(idle.compute == 0.0);
        CHECK(idle.memory == 0.0);
        CHECK(idle.network == 0.0);

        std::vector<sat::MetricSeries> full;
        for (int g = 0; g < 2; ++g)
        {
            full.push_back(constant("n", g, MetricField::SmActivity, 1));
            full.push_back(constant("n", g, MetricField::TensorActivity, 1));
            full.push_back(constant("n", g, MetricField::MemoryBandwidthUtilization, 1));
            full.push_back(constant("n", g, MetricField::NvlinkTxBandwidth, 100));
            full.push_back(constant("n", g, MetricField::NvlinkRxBandwidth, 100));
        }
        for (auto w : {sat::Weights {}, sat::Weights {1, 0, 0}, sat::Weights {0, 0, 1}, sat::Weights {0.25, 0.25, 0.5}})
        {
            CHECK(sat::score(full, w).overall == doctest::Approx(1.0).epsilon(1e-12));
        }
    }

    TEST_CASE("weights")
    {
        CHECK(sat::Weights::parse("0.5,0.3,0.2") == sat::Weights {});
        CHECK(sat::Weights::parse("1, 0, 0") == sat::Weights {1, 0, 0});
        CHECK_THROWS_AS(sat::Weights::parse("0,0,0"), sat::InvalidWeights);
        CHECK_THROWS_AS(sat::Weights::parse("0.5,0.5"), sat::InvalidWeights);
        CHECK_THROWS_AS(sat::Weights::parse("1.5,-0.5,0"), sat::InvalidWeights);
        CHECK_THROWS_AS(sat::Weights::parse("a,b,c"), sat::InvalidWeights);
        CHECK_THROWS_AS(sat::Weights::parse("0.5,0.3,0.2,0"), sat::InvalidWeights);
    }

    TEST_CASE("weight degeneracy is exact")
    {
        auto series = collect_fixture("saturated", 2);
        auto s      = sat::score(series, {1, 0, 0});
        CHECK(s.overall == s.compute);
        auto m = sat::score(series, {0, 1, 0});
        CHECK(m.overall == m.memory);
        auto n = sat::score(series, {0, 0, 1});
        CHECK(n.overall == n.network);
    }

    TEST_CASE("missing inputs")
    {
        std::vector<sat::MetricSeries> only_sm {constant("n", 0, MetricField::SmActivity, 0.4)};
        CHECK_THROWS_AS(sat::score(only_sm), sat::MissingField);
        auto s = sat::score(only_sm, {1, 0, 0});
        CHECK(s.overall == 0.4);

        CHECK_THROWS_AS(collect_fixture("no-nvlink"), pr::FieldUnsupported);
        std::vector<sat::MetricSeries> no_nv {constant("n", 0, MetricField::SmActivity, 0.4),
                                              constant("n", 0, MetricField::MemoryBandwidthUtilization, 0.1)};
        CHECK_THROWS_AS(sat::score(no_nv), sat::MissingField);
        CHECK_NOTHROW(sat::score(no_nv, {0.6, 0.4, 0}));
        CHECK_THROWS_AS(sat::score({}), vetgate::PreconditionError);
    }

    TEST_CASE("scores match the independent model and stay bounded")
    {
        std::mt19937_64 rng(17);
        std::uniform_real_distribution<double> frac(0, 1);
        std::uniform_real_distribution<double> bw(0, 250);
        for (int trial = 0; trial < 100; ++trial)
        {
            std::vector<sat::MetricSeries> series;
            for (int g = 0; g < 3; ++g)
            {
                for (auto f : {MetricField::SmActivity, MetricField::TensorActivity, MetricField::MemoryBandwidthUtilization,
                               MetricField::NvlinkTxBandwidth, MetricField::NvlinkRxBandwidth})
                {
                    sat::MetricSeries s {pr::GpuId {"n", g}, f, {}};
                    for (int k = 0; k < 6; ++k)
                    {
                        bool bandwidth = f == MetricField::NvlinkTxBandwidth || f == MetricField::NvlinkRxBandwidth;
                        s.samples.push_back({k * 10, bandwidth ? bw(rng) : frac(rng)});
                    }
                    series.push_back(std::move(s));
                }
            }
            sat::Weights w {frac(rng), 0, 0};
            w.memory  = (1 - w.compute) * frac(rng);
            w.network = 1 - w.compute - w.memory;
            auto s    = sat::score(series, w);
            CHECK(s.overall == doctest::Approx(oracle_overall(series, w, 100)).epsilon(1e-9));
            CHECK(std::abs(s.overall - (w.compute * s.compute + w.memory * s.memory + w.network * s.network)) <= 1e-9);
            for (double v : {s.compute, s.memory, s.network, s.overall})
            {
                CHECK(v >= 0.0);
                CHECK(v <= 1.0);
            }
        }
    }

    TEST_CASE("component monotonicity under pointwise increases")
    {
        std::mt19937_64 rng(23);
        std::uniform_real_distribution<double> frac(0, 1);
        auto base = collect_fixture("saturated");
        for (int trial = 0; trial < 100; ++trial)
        {
            auto bumped = base;
            auto &s     = bumped[static_cast<std::size_t>(rng() % bumped.size())];
            auto range  = pr::field_range(s.field);
            for (auto &p : s.samples)
            {
                double step = pr::field_unit(s.field) == pr::FieldUnit::Fraction ? frac(rng) * 0.3 : frac(rng) * 40;
                p.value     = range.clamp(p.value + step);
            }
            auto before = sat::score(base);
            auto after  = sat::score(bumped);
            CHECK(after.compute >= before.compute);
            CHECK(after.memory >= before.memory);
            CHECK(after.network >= before.network);
            CHECK(after.overall >= before.overall);
        }
    }

    TEST_CASE("export csv and json")
    {
        TempDir dir;
        std::vector<sat::MetricSeries> two {constant("n", 0, MetricField::SmActivity, 0.25, 3),
                                            constant("n", 0, MetricField::TensorActivity, 0.5, 3)};
        auto files = sat::export_series(two, sat::ExportFormat::Csv, dir.path / "csv");
        REQUIRE(files.size() == 2);
        std::ifstream in(files[0]);
        std::string header;
        std::getline(in, header);
        CHECK(header == "timestamp,gpu,value");
        std::string row;
        std::getline(in, row);
        CHECK(row == "0,n:gpu0,0.25");
        CHECK(sat::read_series(files[0]) == std::vector<sat::MetricSeries> {two[0]});

        CHECK(sat::export_series({}, sat::ExportFormat::Csv, dir.path / "empty").empty());
        CHECK_FALSE(std::filesystem::exists(dir.path / "empty"));

        auto series = collect_fixture("saturated", 2);
        auto json   = sat::export_series(series, sat::ExportFormat::Json, dir.path / "json");
        CHECK(json.size() == 7);
        std::vector<sat::MetricSeries> back;
        for (const auto &f : json)
        {
            auto part = sat::read_series(f);
            back.insert(back.end(), part.begin(), part.end());
        }
        auto key = [](const sat::MetricSeries &s) { return std::make_pair(s.gpu, s.field); };
        auto sorted = series;
        std::sort(sorted.begin(), sorted.end(), [&](const auto &a, const auto &b) { return key(a) < key(b); });
        std::sort(back.begin(), back.end(), [&](const auto &a, const auto &b) { return key(a) < key(b); });
        CHECK(back == sorted);

        auto csv = sat::export_series(series, sat::ExportFormat::Csv, dir.path / "csv2");
        std::vector<sat::MetricSeries> back_csv;
        for (const auto &f : csv)
        {
            auto part = sat::read_series(f);
            back_csv.insert(back_csv.end(), part.begin(), part.end());
        }
        std::sort(back_csv.begin(), back_csv.end(), [&](const auto &a, const auto &b) { return key(a) < key(b); });
        CHECK(back_csv == sorted);

        CHECK(sat::parse_export_format("json") == sat::ExportFormat::Json);
        CHECK_THROWS_AS(sat::parse_export_format("xml"), vetgate::PreconditionError);
    }
}
