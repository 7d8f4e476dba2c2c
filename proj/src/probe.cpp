/*
 * Copyright (c) 2026, The vetgate Authors.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#include <vetgate/probe.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <limits>

namespace vetgate::probe
{

namespace
{

struct FieldInfo
{
    MetricField field;
    std::string_view name;
    FieldUnit unit;
};

constexpr std::array<FieldInfo, 15> kFields {{
    {MetricField::GraphicsEngineActivity, "GraphicsEngineActivity", FieldUnit::Fraction},
    {MetricField::SmActivity, "SmActivity", FieldUnit::Fraction},
    {MetricField::SmOccupancy, "SmOccupancy", FieldUnit::Fraction},
    {MetricField::TensorActivity, "TensorActivity", FieldUnit::Fraction},
    {MetricField::Fp64Activity, "Fp64Activity", FieldUnit::Fraction},
    {MetricField::Fp32Activity, "Fp32Activity", FieldUnit::Fraction},
    {MetricField::Fp16Activity, "Fp16Activity", FieldUnit::Fraction},
    {MetricField::MemoryBandwidthUtilization, "MemoryBandwidthUtilization", FieldUnit::Fraction},
    {MetricField::PcieTxBandwidth, "PcieTxBandwidth", FieldUnit::GBps},
    {MetricField::PcieRxBandwidth, "PcieRxBandwidth", FieldUnit::GBps},
    {MetricField::NvlinkTxBandwidth, "NvlinkTxBandwidth", FieldUnit::GBps},
    {MetricField::NvlinkRxBandwidth, "NvlinkRxBandwidth", FieldUnit::GBps},
    {MetricField::GpuTemperature, "GpuTemperature", FieldUnit::Celsius},
    {MetricField::GpuMemoryUsedFraction, "GpuMemoryUsedFraction", FieldUnit::Fraction},
    {MetricField::GpuUtilization, "GpuUtilization", FieldUnit::Fraction},
}};

constexpr std::array<MetricField, 15> kAllFields = [] {
    std::array<MetricField, 15> out {};
    for (std::size_t i = 0; i < kFields.size(); ++i)
    {
        out[i] = kFields[i].field;
    }
    return out;
}();

const FieldInfo &info(MetricField field)
{
    return kFields[static_cast<std::size_t>(field)];
}

} // namespace

std::string_view field_name(MetricField field)
{
    return info(field).name;
}

std::optional<MetricField> parse_field(std::string_view name)
{
    for (const auto &f : kFields)
    {
        if (f.name == name)
        {
            return f.field;
        }
    }
    return std::nullopt;
}

FieldUnit field_unit(MetricField field)
{
    return info(field).unit;
}

std::string_view to_string(FieldUnit unit)
{
    switch (unit)
    {
        case FieldUnit::Fraction:
            return "fraction";
        case FieldUnit::GBps:
            return "GBps";
        case FieldUnit::Celsius:
            return "celsius";
    }
    return "?";
}

std::span<const MetricField> all_fields()
{
    return kAllFields;
}

double FieldRange::clamp(double v) const
{
    if (std::isnan(v))
    {
        return min;
    }
    return std::clamp(v, min, max);
}

FieldRange field_range(MetricField field)
{
    if (field_unit(field) == FieldUnit::Fraction)
    {
        return {0.0, 1.0};
    }
    return {0.0, std::numeric_limits<double>::max()};
}

std::string GpuId::str() const
{
    return fmt::format("{}:gpu{}", node, index);
}

GpuId GpuId::parse(std::string_view text)
{
    auto sep = text.rfind(":gpu");
    if (sep == std::string_view::npos || sep == 0)
    {
        throw UnknownGpu(fmt::format("'{}' is not a GPU id (expected NODE:gpuN)", text));
    }
    GpuId id;
    id.node     = std::string(text.substr(0, sep));
    auto digits = text.substr(sep + 4);
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), id.index);
    if (digits.empty() || ec != std::errc() || ptr != digits.data() + digits.size() || id.index < 0)
    {
        throw UnknownGpu(fmt::format("'{}' is not a GPU id (expected NODE:gpuN)", text));
    }
    return id;
}

AllocationInfo AllocationInfo::block(std::vector<std::string> nodes, int tasks_per_node, int gpus_per_task)
{
    AllocationInfo a;
    a.nodes          = std::move(nodes);
    a.tasks_per_node = tasks_per_node;
    a.gpus_per_task  = gpus_per_task;
    if (tasks_per_node < 1 || gpus_per_task < 1)
    {
        throw InvalidAllocation("tasks per node and GPUs per task must be positive");
    }
    int task = 0;
    for (const auto &node : a.nodes)
    {
        for (int local = 0; local < tasks_per_node; ++local, ++task)
        {
            auto &gpus = a.task_gpu_map[task];
            for (int g = 0; g < gpus_per_task; ++g)
            {
                gpus.insert(GpuId {node, local * gpus_per_task + g});
            }
        }
    }
    return a;
}

void AllocationInfo::validate() const
{
    if (tasks_per_node < 1 || gpus_per_task < 1)
    {
        throw InvalidAllocation("tasks per node and GPUs per task must be positive");
    }
    std::set<std::string> known(nodes.begin(), nodes.end());
    if (known.size() != nodes.size())
    {
        throw InvalidAllocation("allocation lists a node twice");
    }
    auto expected = static_cast<std::size_t>(tasks_per_node) * nodes.size();
    if (task_gpu_map.size() != expected)
    {
        throw InvalidAllocation(
            fmt::format("allocation maps {} tasks but {} nodes x {} tasks were requested", task_gpu_map.size(), nodes.size(), tasks_per_node));
    }
    int next = 0;
    for (const auto &[task, gpus] : task_gpu_map)
    {
        if (task != next++)
        {
            throw InvalidAllocation("task ids must be 0..N-1");
        }
        if (gpus.size() != static_cast<std::size_t>(gpus_per_task))
        {
            throw InvalidAllocation(fmt::format("task {} owns {} GPUs, expected {}", task, gpus.size(), gpus_per_task));
        }
        for (const auto &g : gpus)
        {
            if (!known.contains(g.node))
            {
                throw InvalidAllocation(fmt::format("task {} maps {} outside the allocation", task, g.str()));
            }
        }
    }
}

GpuGroup create_group(const AllocationInfo &allocation, int task)
{
    auto it = allocation.task_gpu_map.find(task);
    if (it == allocation.task_gpu_map.end())
    {
        throw UnknownTask(fmt::format("task {} is not part of the allocation", task));
    }
    return GpuGroup {fmt::format("task{}", task), it->second};
}

void check_disjoint(std::span<const GpuGroup> groups)
{
    std::map<GpuId, std::string> owner;
    for (const auto &g : groups)
    {
        for (const auto &gpu : g.gpus)
        {
            auto [it, inserted] = owner.emplace(gpu, g.owner);
            if (!inserted)
            {
                throw OverlappingGroups(
                    fmt::format("{} belongs to both '{}' and '{}'", gpu.str(), it->second, g.owner));
            }
        }
    }
}

void check_sampling_request(std::int64_t interval_ms, std::int64_t duration_ms)
{
    if (interval_ms < kMinSampleIntervalMs)
    {
        throw PreconditionError(
            fmt::format("sampling interval {} ms is below the {} ms minimum", interval_ms, kMinSampleIntervalMs));
    }
    if (duration_ms < interval_ms)
    {
        throw PreconditionError(
            fmt::format("sampling duration {} ms is shorter than the interval {} ms", duration_ms, interval_ms));
    }
}

} // namespace vetgate::probe
