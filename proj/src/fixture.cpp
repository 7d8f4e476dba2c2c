/*
 * Copyright (c) 2026, The vetgate Authors.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#include <vetgate/fixture.hpp>

#include "yaml_util.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace vetgate::probe
{

namespace
{

std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

[[noreturn]] void fixture_error(std::string_view fixture, const YAML::Node &node, const std::string &message)
{
    throw FixtureError(fmt::format("fixture '{}' ({}): {}", fixture, yaml::where(node), message));
}

FieldGenerator parse_generator(std::string_view fixture, MetricField field, const YAML::Node &node)
{
    auto range = field_range(field);
    auto name  = field_name(field);
    auto check = [&](double v, const YAML::Node &at) {
        if (!std::isfinite(v) || !range.contains(v))
        {
            fixture_error(fixture, at, fmt::format("{} value {} outside its valid range", name, v));
        }
    };

    if (node.IsScalar())
    {
        auto v = yaml::require_number(node, name);
        check(v, node);
        return FieldGenerator::constant(v);
    }
    auto keys = yaml::keys(node, name);
    if (keys.size() != 1)
    {
        fixture_error(fixture, node, fmt::format("{} needs exactly one of constant, ramp, noise", name));
    }
    const auto &shape = keys.front();
    const auto &body  = node[shape];
    if (shape == "constant")
    {
        auto v = yaml::require_number(body, name);
        check(v, body);
        return FieldGenerator::constant(v);
    }
    if (shape == "ramp")
    {
        if (!body.IsSequence() || body.size() != 2)
        {
            fixture_error(fixture, body, fmt::format("{} ramp must be [from, to]", name));
        }
        auto from = yaml::require_number(body[0], name);
        auto to   = yaml::require_number(body[1], name);
        check(from, body);
        check(to, body);
        return {FieldGenerator::Shape::Ramp, from, to};
    }
    if (shape == "noise")
    {
        for (const auto &k : yaml::keys(body, name))
        {
            if (k != "mean" && k != "amplitude")
            {
                fixture_error(fixture, body, fmt::format("{} noise has unknown key '{}'", name, k));
            }
        }
        auto mean      = yaml::require_number(body["mean"], fmt::format("{}.noise.mean", name));
        auto amplitude = yaml::require_number(body["amplitude"], fmt::format("{}.noise.amplitude", name));
        check(mean, body);
        if (!std::isfinite(amplitude) || amplitude < 0.0)
        {
            fixture_error(fixture, body, fmt::format("{} noise amplitude must be >= 0", name));
        }
        return {FieldGenerator::Shape::Noise, mean, amplitude};
    }
    fixture_error(fixture, node, fmt::format("{} has unknown shape '{}'", name, shape));
}

void parse_fields(std::string_view fixture, const YAML::Node &node, std::map<MetricField, FieldGenerator> &out)
{
    for (const auto &key : yaml::keys(node, "fields"))
    {
        auto field = parse_field(key);
        if (!field)
        {
            fixture_error(fixture, node[key], fmt::format("unknown metric field '{}'", key));
        }
        out[*field] = parse_generator(fixture, *field, node[key]);
    }
}

} // namespace

double FieldGenerator::value_at(std::int64_t t_ms, std::int64_t duration_ms, double unit_draw) const
{
    switch (shape)
    {
        case Shape::Constant:
            return a;
        case Shape::Ramp:
        {
            if (duration_ms <= 0)
            {
                return a;
            }
            double progress = static_cast<double>(t_ms) / static_cast<double>(duration_ms);
            return a + (b - a) * progress;
        }
        case Shape::Noise:
            return a + b * (2.0 * unit_draw - 1.0);
    }
    return a;
}

bool Fixture::supports(MetricField field) const
{
    return !gpus.empty() && std::all_of(gpus.begin(), gpus.end(), [&](const GpuProfile &g) { return g.fields.contains(field); });
}

Fixture parse_fixture(std::string_view document)
{
    auto root = yaml::load(document);
    if (!root.IsMap())
    {
        throw FixtureError("fixture document must be a mapping");
    }
    auto keys = yaml::keys(root, "fixture");
    Fixture fx;
    if (!root["name"])
    {
        throw FixtureError("fixture has no 'name'");
    }
    fx.name = yaml::require_string(root["name"], "name");

    int gpus = 0;
    GpuProfile common;
    YAML::Node overrides;
    for (const auto &key : keys)
    {
        const auto &v = root[key];
        if (key == "name")
        {
            continue;
        }
        if (key == "gpus")
        {
            gpus = static_cast<int>(yaml::require_integer(v, "gpus"));
            if (gpus < 0 || gpus > 64)
            {
                fixture_error(fx.name, v, "gpus must be in [0, 64]");
            }
        }
        else if (key == "host_free_memory")
        {
            fx.host_free_memory = yaml::require_number(v, key);
            if (!(fx.host_free_memory >= 0.0 && fx.host_free_memory <= 1.0))
            {
                fixture_error(fx.name, v, "host_free_memory must be a fraction");
            }
        }
        else if (key == "clock_offset")
        {
            fx.clock_offset_s = yaml::require_number(v, key);
            if (!std::isfinite(fx.clock_offset_s))
            {
                fixture_error(fx.name, v, "clock_offset must be finite");
            }
        }
        else if (key == "loopback_bandwidth")
        {
            fx.loopback_bandwidth_gbps = yaml::require_number(v, key);
            if (!(fx.loopback_bandwidth_gbps > 0.0) || !std::isfinite(fx.loopback_bandwidth_gbps))
            {
                fixture_error(fx.name, v, "loopback_bandwidth must be > 0");
            }
        }
        else if (key == "kernel_launch_ok")
        {
            common.kernel_launch_ok = yaml::require_bool(v, key);
        }
        else if (key == "kernel_latency_ms")
        {
            common.kernel_latency_ms = yaml::require_number(v, key);
            if (!(common.kernel_latency_ms >= 0.0))
            {
                fixture_error(fx.name, v, "kernel_latency_ms must be >= 0");
            }
        }
        else if (key == "fields")
        {
            parse_fields(fx.name, v, common.fields);
        }
        else if (key == "gpu_overrides")
        {
            overrides = v;
        }
        else
        {
            fixture_error(fx.name, v, fmt::format("unknown key '{}'", key));
        }
    }

    fx.gpus.assign(static_cast<std::size_t>(gpus), common);
    if (overrides.IsDefined() && !overrides.IsNull())
    {
        if (!overrides.IsSequence())
        {
            fixture_error(fx.name, overrides, "gpu_overrides must be a list");
        }
        for (const auto &o : overrides)
        {
            auto okeys = yaml::keys(o, "gpu override");
            if (!o["gpu"])
            {
                fixture_error(fx.name, o, "override has no 'gpu'");
            }
            auto index = yaml::require_integer(o["gpu"], "gpu");
            if (index < 0 || index >= gpus)
            {
                fixture_error(fx.name, o, fmt::format("override targets gpu{} but the fixture has {} GPUs", index, gpus));
            }
            auto &gpu = fx.gpus[static_cast<std::size_t>(index)];
            for (const auto &k : okeys)
            {
                if (k == "gpu")
                {
                    continue;
                }
                if (k == "fields")
                {
                    parse_fields(fx.name, o[k], gpu.fields);
                }
                else if (k == "kernel_launch_ok")
                {
                    gpu.kernel_launch_ok = yaml::require_bool(o[k], k);
                }
                else if (k == "kernel_latency_ms")
                {
                    gpu.kernel_latency_ms = yaml::require_number(o[k], k);
                }
                else
                {
                    fixture_error(fx.name, o[k], fmt::format("unknown override key '{}'", k));
                }
            }
        }
    }

    for (int g = 0; g < gpus; ++g)
    {
        for (auto required : {MetricField::GpuTemperature, MetricField::GpuMemoryUsedFraction})
        {
            if (!fx.gpus[static_cast<std::size_t>(g)].fields.contains(required))
            {
                throw FixtureError(fmt::format("fixture '{}': gpu{} lacks required field {}", fx.name, g, field_name(required)));
            }
        }
    }
    return fx;
}

FixtureSet FixtureSet::load_dir(const std::filesystem::path &dir)
{
    std::error_code ec;
    if (!std::filesystem::is_directory(dir, ec))
    {
        throw IoError(fmt::format("fixture directory '{}' does not exist", dir.string()));
    }
    std::vector<std::filesystem::path> files;
    for (const auto &entry : std::filesystem::directory_iterator(dir))
    {
        auto ext = entry.path().extension();
        if (entry.is_regular_file() && (ext == ".yaml" || ext == ".yml"))
        {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    FixtureSet set;
    for (const auto &file : files)
    {
        try
        {
            set.add(parse_fixture(yaml::read_file(file)));
        }
        catch (const SyntaxError &e)
        {
            throw SyntaxError(fmt::format("{}: {}", file.string(), e.what()), e.line(), e.column());
        }
        catch (const FixtureError &e)
        {
            throw FixtureError(fmt::format("{}: {}", file.string(), e.what()));
        }
    }
    return set;
}

void FixtureSet::add(Fixture fixture)
{
    auto name = fixture.name;
    if (!m_fixtures.emplace(name, std::move(fixture)).second)
    {
        throw FixtureError(fmt::format("fixture '{}' defined twice", name));
    }
}

const Fixture &FixtureSet::get(std::string_view name) const
{
    auto it = m_fixtures.find(name);
    if (it == m_fixtures.end())
    {
        throw UnknownFixture(fmt::format("unknown fixture '{}'", name));
    }
    return it->second;
}

bool FixtureSet::contains(std::string_view name) const
{
    return m_fixtures.find(name) != m_fixtures.end();
}

std::vector<std::string> FixtureSet::names() const
{
    std::vector<std::string> out;
    for (const auto &[name, _] : m_fixtures)
    {
        out.push_back(name);
    }
    return out;
}

std::uint64_t stable_hash(std::string_view text)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text)
    {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

SimulatedProbe::SimulatedProbe(std::vector<SimulatedNode> nodes, std::uint64_t seed)
    : m_seed(seed)
{
    for (auto &n : nodes)
    {
        m_order.push_back(n.node);
        if (!m_nodes.emplace(n.node, std::move(n.fixture)).second)
        {
            throw FixtureError(fmt::format("node '{}' listed twice", n.node));
        }
    }
}

std::vector<std::string> SimulatedProbe::nodes() const
{
    return m_order;
}

const Fixture &SimulatedProbe::fixture_of(std::string_view node) const
{
    auto it = m_nodes.find(node);
    if (it == m_nodes.end())
    {
        throw UnknownNode(fmt::format("node '{}' is not in the probe inventory", node));
    }
    return it->second;
}

int SimulatedProbe::gpu_count(std::string_view node) const
{
    return fixture_of(node).gpu_count();
}

double SimulatedProbe::draw(std::string_view node, int gpu, MetricField field, std::int64_t index) const
{
    auto stream = splitmix64(m_seed ^ stable_hash(node));
    stream      = splitmix64(stream ^ (static_cast<std::uint64_t>(gpu) << 8) ^ static_cast<std::uint64_t>(field));
    auto bits   = splitmix64(stream + static_cast<std::uint64_t>(index) * 0x9e3779b97f4a7c15ULL);
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

std::vector<MetricSample> SimulatedProbe::sample(const GpuGroup &group,
                                                 std::span<const MetricField> fields,
                                                 std::int64_t interval_ms,
                                                 std::int64_t duration_ms) const
{
    check_sampling_request(interval_ms, duration_ms);
    if (group.gpus.empty())
    {
        throw PreconditionError(fmt::format("GPU group '{}' is empty", group.owner));
    }
    for (const auto &gpu : group.gpus)
    {
        const auto &fx = fixture_of(gpu.node);
        if (gpu.index < 0 || gpu.index >= fx.gpu_count())
        {
            throw UnknownGpu(fmt::format("{} does not exist (node has {} GPUs)", gpu.str(), fx.gpu_count()));
        }
        for (auto field : fields)
        {
            if (!fx.gpus[static_cast<std::size_t>(gpu.index)].fields.contains(field))
            {
                throw FieldUnsupported(
                    fmt::format("fixture '{}' on {} does not provide {}", fx.name, gpu.str(), field_name(field)));
            }
        }
    }

    const auto count = duration_ms / interval_ms;
    std::vector<MetricSample> out;
    out.reserve(group.gpus.size() * fields.size() * static_cast<std::size_t>(count));
    for (const auto &gpu : group.gpus)
    {
        const auto &profile = fixture_of(gpu.node).gpus[static_cast<std::size_t>(gpu.index)];
        for (auto field : fields)
        {
            const auto &gen = profile.fields.at(field);
            auto range      = field_range(field);
            for (std::int64_t k = 0; k < count; ++k)
            {
                auto t     = k * interval_ms;
                double u   = gen.shape == FieldGenerator::Shape::Noise ? draw(gpu.node, gpu.index, field, k) : 0.0;
                auto value = range.clamp(gen.value_at(t, duration_ms, u));
                out.push_back(MetricSample {field, gpu, t, value});
            }
        }
    }
    return out;
}

NodeSnapshot SimulatedProbe::snapshot(std::string_view node) const
{
    const auto &fx = fixture_of(node);
    NodeSnapshot snap;
    snap.node                      = std::string(node);
    snap.host_free_memory_fraction = fx.host_free_memory;
    for (int g = 0; g < fx.gpu_count(); ++g)
    {
        const auto &profile = fx.gpus[static_cast<std::size_t>(g)];
        auto reading        = [&](MetricField field) {
            const auto &gen = profile.fields.at(field);
            double u        = gen.shape == FieldGenerator::Shape::Noise ? draw(node, g, field, 0) : 0.0;
            return field_range(field).clamp(gen.value_at(0, 0, u));
        };
        snap.gpus.push_back(GpuHealth {g, reading(MetricField::GpuTemperature), reading(MetricField::GpuMemoryUsedFraction)});
    }
    return snap;
}

std::vector<KernelLaunch> SimulatedProbe::launch_trivial_kernels(std::string_view node, double timeout_s) const
{
    const auto &fx = fixture_of(node);
    std::vector<KernelLaunch> out;
    for (int g = 0; g < fx.gpu_count(); ++g)
    {
        const auto &profile = fx.gpus[static_cast<std::size_t>(g)];
        bool completed      = profile.kernel_launch_ok && profile.kernel_latency_ms <= timeout_s * 1000.0;
        out.push_back(KernelLaunch {g, completed, profile.kernel_launch_ok ? profile.kernel_latency_ms : timeout_s * 1000.0});
    }
    return out;
}

} // namespace vetgate::probe
