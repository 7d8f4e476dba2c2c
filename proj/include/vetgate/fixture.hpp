/*
 * Copyright (c) 2026, The vetgate Authors.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <vetgate/probe.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

// Declarative per-node telemetry profiles and the deterministic provider that
// serves them.
namespace vetgate::probe
{

VETGATE_DEFINE_ERROR(UnknownFixture);
VETGATE_DEFINE_ERROR(FixtureError);

/// How one field evolves over a sampling window.
struct FieldGenerator
{
    enum class Shape
    {
        Constant, ///< a
        Ramp,     ///< linear from a (t = 0) to b (t = duration)
        Noise,    ///< uniform in [a - b, a + b] (mean a, amplitude b)
    };

    Shape shape = Shape::Constant;
    double a    = 0.0;
    double b    = 0.0;

    /// `unit_draw` is a uniform variate in [0,1) used only by Noise.
    double value_at(std::int64_t t_ms, std::int64_t duration_ms, double unit_draw) const;

    static FieldGenerator constant(double v)
    {
        return {Shape::Constant, v, 0.0};
    }
};

struct GpuProfile
{
    std::map<MetricField, FieldGenerator> fields;
    bool kernel_launch_ok    = true;
    double kernel_latency_ms = 0.02;
};

struct Fixture
{
    std::string name;
    double host_free_memory        = 0.9;   ///< fraction of host memory available
    double clock_offset_s          = 0.0;   ///< wall-clock offset against the coordinator
    double loopback_bandwidth_gbps = 150.0; ///< intra-node path used by single-node rings
    std::vector<GpuProfile> gpus;

    int gpu_count() const
    {
        return static_cast<int>(gpus.size());
    }

    /// A field is supported when every GPU declares it.
    bool supports(MetricField field) const;
};

/// Parse one fixture document. Throws FixtureError (or SyntaxError).
Fixture parse_fixture(std::string_view document);

class FixtureSet
{
public:
    /// Every *.yaml / *.yml file in `dir`, keyed by the document's `name:`.
    static FixtureSet load_dir(const std::filesystem::path &dir);

    void add(Fixture fixture);

    /// Throws UnknownFixture.
    const Fixture &get(std::string_view name) const;

    bool contains(std::string_view name) const;

    std::vector<std::string> names() const;

private:
    std::map<std::string, Fixture, std::less<>> m_fixtures;
};

struct SimulatedNode
{
    std::string node;
    Fixture fixture;
};

/// Fixture-driven provider. Every output is a pure function of (fixtures,
/// seed, request); noise streams are keyed by (seed, node, gpu, field).
class SimulatedProbe final : public Probe
{
public:
    SimulatedProbe(std::vector<SimulatedNode> nodes, std::uint64_t seed);

    std::vector<std::string> nodes() const override;
    int gpu_count(std::string_view node) const override;
    std::vector<MetricSample> sample(const GpuGroup &group,
                                     std::span<const MetricField> fields,
                                     std::int64_t interval_ms,
                                     std::int64_t duration_ms) const override;
    NodeSnapshot snapshot(std::string_view node) const override;
    std::vector<KernelLaunch> launch_trivial_kernels(std::string_view node, double timeout_s) const override;

    /// Throws UnknownNode.
    const Fixture &fixture_of(std::string_view node) const;

    std::uint64_t seed() const
    {
        return m_seed;
    }

private:
    double draw(std::string_view node, int gpu, MetricField field, std::int64_t index) const;

    std::vector<std::string> m_order;
    std::map<std::string, Fixture, std::less<>> m_nodes;
    std::uint64_t m_seed;
};

/// Stable 64-bit FNV-1a, used to derive per-stream seeds.
std::uint64_t stable_hash(std::string_view text);

} // namespace vetgate::probe
