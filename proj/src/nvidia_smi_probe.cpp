/*
 * Copyright (c) 2026, The vetgate Authors.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#include <vetgate/nvidia_smi_probe.hpp>

#include <fmt/format.h>

#include <array>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <sys/wait.h>
#include <thread>

namespace vetgate::probe
{

namespace
{

std::string_view trim(std::string_view s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
    {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    {
        s.remove_suffix(1);
    }
    return s;
}

double to_double(std::string_view s, std::string_view line)
{
    s            = trim(s);
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc() || ptr != s.data() + s.size())
    {
        throw ProviderUnavailable(fmt::format("unexpected nvidia-smi output: '{}'", line));
    }
    return value;
}

// Single-quote for /bin/sh.
std::string shell_quote(std::string_view s)
{
    std::string out = "'";
    for (char c : s)
    {
        if (c == '\'')
        {
            out += "'\\''";
        }
        else
        {
            out.push_back(c);
        }
    }
    return out + "'";
}

} // namespace

std::vector<SmiRow> parse_smi_csv(std::string_view text)
{
    std::vector<SmiRow> rows;
    std::size_t start = 0;
    while (start < text.size())
    {
        auto end  = text.find('\n', start);
        auto line = trim(text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start));
        start     = end == std::string_view::npos ? text.size() : end + 1;
        if (line.empty())
        {
            continue;
        }
        std::vector<std::string_view> cols;
        std::size_t c = 0;
        while (true)
        {
            auto comma = line.find(',', c);
            cols.push_back(line.substr(c, comma == std::string_view::npos ? std::string_view::npos : comma - c));
            if (comma == std::string_view::npos)
            {
                break;
            }
            c = comma + 1;
        }
        if (cols.size() != 5)
        {
            throw ProviderUnavailable(fmt::format("unexpected nvidia-smi output: '{}'", line));
        }
        SmiRow row;
        row.index             = static_cast<int>(to_double(cols[0], line));
        row.temperature_c     = to_double(cols[1], line);
        row.memory_used_mib   = to_double(cols[2], line);
        row.memory_total_mib  = to_double(cols[3], line);
        row.utilization_ratio = to_double(cols[4], line) / 100.0;
        rows.push_back(row);
    }
    return rows;
}

double parse_meminfo_available(std::string_view text)
{
    auto value_of = [&](std::string_view key) -> double {
        auto pos = text.find(key);
        if (pos == std::string_view::npos)
        {
            return -1.0;
        }
        auto rest = text.substr(pos + key.size());
        auto eol  = rest.find('\n');
        rest      = trim(rest.substr(0, eol));
        auto sp   = rest.find(' ');
        return to_double(rest.substr(0, sp), rest);
    };
    double total     = value_of("MemTotal:");
    double available = value_of("MemAvailable:");
    if (total <= 0.0 || available < 0.0)
    {
        throw ProviderUnavailable("cannot read host memory from meminfo");
    }
    return available / total;
}

NvidiaSmiProbe::NvidiaSmiProbe(std::string node, std::string command)
    : m_node(std::move(node))
    , m_command(std::move(command))
{}

std::vector<std::string> NvidiaSmiProbe::nodes() const
{
    return {m_node};
}

void NvidiaSmiProbe::check_node(std::string_view node) const
{
    if (node != m_node)
    {
        throw UnknownNode(fmt::format("node '{}' is not local (this probe serves '{}')", node, m_node));
    }
}

std::vector<SmiRow> NvidiaSmiProbe::query() const
{
    auto cmd = fmt::format("{} --query-gpu=index,temperature.gpu,memory.used,memory.total,utilization.gpu "
                           "--format=csv,noheader,nounits 2>/dev/null",
                           shell_quote(m_command));
    FILE *pipe = ::popen(cmd.c_str(), "r");
    if (pipe == nullptr)
    {
        throw ProviderUnavailable("cannot start nvidia-smi");
    }
    std::string output;
    std::array<char, 4096> buffer {};
    std::size_t n = 0;
    while ((n = std::fread(buffer.data(), 1, buffer.size(), pipe)) > 0)
    {
        output.append(buffer.data(), n);
    }
    int status = ::pclose(pipe);
    if (status == -1 || !WIFEXITED(status) || WEXITSTATUS(status) != 0)
    {
        throw ProviderUnavailable(fmt::format("'{}' is not available on this node", m_command));
    }
    return parse_smi_csv(output);
}

int NvidiaSmiProbe::gpu_count(std::string_view node) const
{
    check_node(node);
    return static_cast<int>(query().size());
}

std::vector<MetricSample> NvidiaSmiProbe::sample(const GpuGroup &group,
                                                 std::span<const MetricField> fields,
                                                 std::int64_t interval_ms,
                                                 std::int64_t duration_ms) const
{
    check_sampling_request(interval_ms, duration_ms);
    for (auto field : fields)
    {
        if (field != MetricField::GpuTemperature && field != MetricField::GpuMemoryUsedFraction
            && field != MetricField::GpuUtilization)
        {
            throw FieldUnsupported(fmt::format("{} needs a telemetry daemon; nvidia-smi cannot provide it", field_name(field)));
        }
    }
    for (const auto &gpu : group.gpus)
    {
        check_node(gpu.node);
    }

    std::vector<MetricSample> out;
    auto start = std::chrono::steady_clock::now();
    for (std::int64_t k = 0; k < duration_ms / interval_ms; ++k)
    {
        std::this_thread::sleep_until(start + std::chrono::milliseconds(k * interval_ms));
        auto rows = query();
        for (const auto &gpu : group.gpus)
        {
            auto row = std::find_if(rows.begin(), rows.end(), [&](const SmiRow &r) { return r.index == gpu.index; });
            if (row == rows.end())
            {
                throw UnknownGpu(fmt::format("{} not reported by nvidia-smi", gpu.str()));
            }
            for (auto field : fields)
            {
                double value = 0.0;
                switch (field)
                {
                    case MetricField::GpuTemperature:
                        value = row->temperature_c;
                        break;
                    case MetricField::GpuMemoryUsedFraction:
                        value = row->memory_total_mib > 0 ? row->memory_used_mib / row->memory_total_mib : 0.0;
                        break;
                    default:
                        value = row->utilization_ratio;
                }
                out.push_back(MetricSample {field, gpu, k * interval_ms, field_range(field).clamp(value)});
            }
        }
    }
    return out;
}

NodeSnapshot NvidiaSmiProbe::snapshot(std::string_view node) const
{
    check_node(node);
    NodeSnapshot snap;
    snap.node = m_node;
    for (const auto &row : query())
    {
        double used = row.memory_total_mib > 0 ? row.memory_used_mib / row.memory_total_mib : 0.0;
        snap.gpus.push_back(GpuHealth {row.index, row.temperature_c, used});
    }
    std::ifstream meminfo("/proc/meminfo");
    std::stringstream text;
    text << meminfo.rdbuf();
    snap.host_free_memory_fraction = parse_meminfo_available(text.str());
    return snap;
}

std::vector<KernelLaunch> NvidiaSmiProbe::launch_trivial_kernels(std::string_view node, double) const
{
    check_node(node);
    throw ProviderUnavailable("kernel launches need a CUDA-enabled build of the probe");
}

} // namespace vetgate::probe
