/*
 * Copyright (c) 2026, The vetgate Authors.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <vetgate/probe.hpp>

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

// Saturation scoring: how loaded the compute pipes, memory bandwidth and
// interconnect actually are, as opposed to how often the GPU is "in use".
namespace vetgate::saturation
{

VETGATE_DEFINE_ERROR(MissingField);
VETGATE_DEFINE_ERROR(InvalidWeights);

struct Point
{
    std::int64_t timestamp_ms = 0;
    double value              = 0.0;

    bool operator==(const Point &) const = default;
};

struct MetricSeries
{
    probe::GpuId gpu;
    probe::MetricField field = probe::MetricField::SmActivity;
    std::vector<Point> samples;

    bool operator==(const MetricSeries &) const = default;
};

struct Weights
{
    double compute = 0.5;
    double memory  = 0.3;
    double network = 0.2;

    /// Throws InvalidWeights unless every weight is finite, >= 0, and the
    /// three sum to 1 (within 1e-9).
    void validate() const;

    /// "C,M,N". Throws InvalidWeights.
    static Weights parse(std::string_view text);

    bool operator==(const Weights &) const = default;
};

inline constexpr double kDefaultLinkPeakGbps = 100.0;

struct SaturationScore
{
    double compute = 0.0;
    double memory  = 0.0;
    double network = 0.0;
    double overall = 0.0;
    Weights weights;
    std::int64_t window_start_ms = 0;
    std::int64_t window_end_ms   = 0;
};

/// GpuUtilization, SmActivity, SmOccupancy, TensorActivity,
/// MemoryBandwidthUtilization, NvlinkTxBandwidth, NvlinkRxBandwidth.
std::span<const probe::MetricField> default_fields();

/// One series per (gpu, field), GPUs in group order, fields in default order
/// followed by `extra` (duplicates dropped).
std::vector<MetricSeries> collect(const probe::GpuGroup &group,
                                  const probe::Probe &probe,
                                  std::int64_t interval_ms,
                                  std::int64_t duration_ms,
                                  std::span<const probe::MetricField> extra = {});

/// Components are time averages per GPU, then averaged over the GPUs that
/// carry the component's inputs:
///   compute = max(SmActivity, TensorActivity)
///   memory  = MemoryBandwidthUtilization
///   network = clamp((NvlinkTx + NvlinkRx) / (2 * link_peak), 0, 1)
/// A component whose inputs are absent scores 0 when its weight is 0 and
/// raises MissingField otherwise.
SaturationScore score(const std::vector<MetricSeries> &series,
                      const Weights &weights = {},
                      double link_peak_gbps  = kDefaultLinkPeakGbps);

enum class ExportFormat
{
    Csv,
    Json,
};

/// Throws PreconditionError for anything but "csv" / "json".
ExportFormat parse_export_format(std::string_view text);

/// Writes `<Field>.csv` (header `timestamp,gpu,value`) or `<Field>.json`
/// into `dir`, one file per field present, rows ordered by gpu then time.
/// Returns the written paths in field order. Throws IoError.
std::vector<std::filesystem::path> export_series(const std::vector<MetricSeries> &series,
                                                 ExportFormat format,
                                                 const std::filesystem::path &dir);

/// Read back one exported file (either format). Throws IoError or
/// SyntaxError.
std::vector<MetricSeries> read_series(const std::filesystem::path &file);

} // namespace vetgate::saturation
