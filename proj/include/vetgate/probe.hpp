/*
 * Copyright (c) 2026, The vetgate Authors.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <vetgate/error.hpp>

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vetgate::probe
{

VETGATE_DEFINE_ERROR(ProviderUnavailable);
VETGATE_DEFINE_ERROR(FieldUnsupported);
VETGATE_DEFINE_ERROR(UnknownTask);
VETGATE_DEFINE_ERROR(UnknownNode);
VETGATE_DEFINE_ERROR(UnknownGpu);
VETGATE_DEFINE_ERROR(OverlappingGroups);
VETGATE_DEFINE_ERROR(InvalidAllocation);

enum class MetricField
{
    GraphicsEngineActivity,
    SmActivity,
    SmOccupancy,
    TensorActivity,
    Fp64Activity,
    Fp32Activity,
    Fp16Activity,
    MemoryBandwidthUtilization,
    PcieTxBandwidth,
    PcieRxBandwidth,
    NvlinkTxBandwidth,
    NvlinkRxBandwidth,
    GpuTemperature,
    GpuMemoryUsedFraction,
    GpuUtilization,
};

enum class FieldUnit
{
    Fraction,
    GBps,
    Celsius,
};

/// Spelling used in fixtures and exported files ("SmActivity").
std::string_view field_name(MetricField field);
std::optional<MetricField> parse_field(std::string_view name);
FieldUnit field_unit(MetricField field);
std::string_view to_string(FieldUnit unit);
std::span<const MetricField> all_fields();

/// Valid value interval for a field: fractions in [0,1], bandwidths and
/// temperatures in [0, inf).
struct FieldRange
{
    double min;
    double max;

    bool contains(double v) const
    {
        return v >= min && v <= max;
    }

    double clamp(double v) const;
};

FieldRange field_range(MetricField field);

struct GpuId
{
    std::string node;
    int index = 0;

    auto operator<=>(const GpuId &) const = default;

    /// "nid001:gpu2"
    std::string str() const;
    static GpuId parse(std::string_view text);
};

struct MetricSample
{
    MetricField field;
    GpuId gpu;
    std::int64_t timestamp_ms = 0; ///< since collection start
    double value              = 0.0;

    bool operator==(const MetricSample &) const = default;
};

struct GpuGroup
{
    std::string owner;
    std::set<GpuId> gpus;
};

/// Scheduler view of a workload: nodes, tasks per node, GPUs per task and
/// which GPUs each task owns. Tasks are numbered globally.
struct AllocationInfo
{
    std::vector<std::string> nodes;
    int tasks_per_node = 1;
    int gpus_per_task  = 1;
    std::map<int, std::set<GpuId>> task_gpu_map;

    /// Block placement: task t runs on nodes[t / tasks_per_node] and owns the
    /// local GPUs [(t % tasks_per_node) * gpus_per_task, ... + gpus_per_task).
    static AllocationInfo block(std::vector<std::string> nodes, int tasks_per_node, int gpus_per_task);

    /// Throws InvalidAllocation.
    void validate() const;
};

/// Group holding exactly the GPUs of `task`. Throws UnknownTask.
GpuGroup create_group(const AllocationInfo &allocation, int task);

/// Throws OverlappingGroups when any GPU belongs to two groups.
void check_disjoint(std::span<const GpuGroup> groups);

struct GpuHealth
{
    int index                   = 0;
    double temperature_c        = 0.0;
    double used_memory_fraction = 0.0;
};

struct NodeSnapshot
{
    std::string node;
    std::vector<GpuHealth> gpus;
    double host_free_memory_fraction = 0.0;
};

struct KernelLaunch
{
    int gpu           = 0;
    bool completed    = false;
    double latency_ms = 0.0;
};

/// Telemetry provider. Implementations are read-only after construction and
/// safe to call concurrently.
class Probe
{
public:
    virtual ~Probe() = default;

    virtual std::vector<std::string> nodes() const = 0;

    /// Throws UnknownNode.
    virtual int gpu_count(std::string_view node) const = 0;

    /// floor(duration/interval) samples per (gpu, field), timestamps
    /// 0, interval, 2*interval, ... Throws PreconditionError when
    /// interval < 10 ms or duration < interval.
    virtual std::vector<MetricSample> sample(const GpuGroup &group,
                                             std::span<const MetricField> fields,
                                             std::int64_t interval_ms,
                                             std::int64_t duration_ms) const = 0;

    virtual NodeSnapshot snapshot(std::string_view node) const = 0;

    /// Run a trivial compute task on every GPU of `node`.
    virtual std::vector<KernelLaunch> launch_trivial_kernels(std::string_view node, double timeout_s) const = 0;
};

inline constexpr std::int64_t kMinSampleIntervalMs = 10;

/// Shared precondition check for Probe::sample.
void check_sampling_request(std::int64_t interval_ms, std::int64_t duration_ms);

} // namespace vetgate::probe
