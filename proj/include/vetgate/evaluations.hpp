/*
 * Copyright (c) 2026, The vetgate Authors.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <vetgate/probe.hpp>
#include <vetgate/protocol.hpp>
#include <vetgate/ring.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace vetgate::evaluations
{

enum class Status
{
    Pass,
    Fail,
    Unknown,
};

std::string_view to_string(Status status);
std::optional<Status> parse_status(std::string_view text);

struct Violation
{
    std::string param;
    double threshold = 0.0;
    double measured  = 0.0;
    std::string subject; ///< e.g. "gpu3"; empty when node-wide

    bool operator==(const Violation &) const = default;
};

struct RequirementCheck
{
    std::string requirement;
    bool satisfied = false;
    std::string detail;

    bool operator==(const RequirementCheck &) const = default;
};

struct EvalResult
{
    std::string eval_name;
    std::string kind; ///< registry name, e.g. "GPUEval"
    Status status = Status::Unknown;
    std::map<std::string, double> measured;
    std::vector<Violation> violations;
    double duration_ms = 0.0;
    std::string detail;
    std::vector<RequirementCheck> requirements;

    bool operator==(const EvalResult &) const = default;
};

/// Requirement identifiers known to be available on the nodes. One per line;
/// blank lines and '#' comments are ignored.
class RequirementManifest
{
public:
    RequirementManifest() = default;
    explicit RequirementManifest(std::set<std::string> items);

    static RequirementManifest parse(std::string_view text);

    /// Throws IoError.
    static RequirementManifest load(const std::filesystem::path &path);

    bool contains(std::string_view requirement) const;

    const std::set<std::string, std::less<>> &items() const
    {
        return m_items;
    }

private:
    std::set<std::string, std::less<>> m_items;
};

/// Check-only: nothing is installed.
std::vector<RequirementCheck> check_requirements(const protocol::EvalSpec &spec, const RequirementManifest &manifest);

/// Time source for evaluations. Real runs read a monotonic clock; simulated
/// runs advance a counter by the modelled cost of each step.
class EvalClock
{
public:
    virtual ~EvalClock() = default;
    virtual double now_ms() = 0;
    /// Account for `ms` of modelled work. No-op on real clocks.
    virtual void charge_ms(double ms) = 0;
    /// Jump forward to `ms` if it lies in the future.
    virtual void advance_to_ms(double ms) = 0;
};

class SteadyClock final : public EvalClock
{
public:
    double now_ms() override;
    void charge_ms(double) override {}
    void advance_to_ms(double) override {}
};

class SimClock final : public EvalClock
{
public:
    explicit SimClock(double start_ms = 0.0)
        : m_now(start_ms)
    {}

    double now_ms() override
    {
        return m_now;
    }

    void charge_ms(double ms) override
    {
        m_now += ms;
    }

    void advance_to_ms(double ms) override
    {
        m_now = std::max(m_now, ms);
    }

private:
    double m_now;
};

/// Modelled cost of one snapshot-based check under simulation.
inline constexpr double kSnapshotCostMs = 5.0;

inline constexpr double kDefaultTimeoutS      = 60.0;
inline constexpr double kDefaultPayloadMiB    = 128.0;
inline constexpr int kDefaultWarmupIterations = 5;
inline constexpr int kDefaultTimedIterations  = 10;

double timeout_seconds(const protocol::EvalSpec &spec);

EvalResult run_gpu_eval(const protocol::EvalSpec &spec, const std::string &node, const probe::Probe &probe, EvalClock &clock);

EvalResult run_kernel_eval(const protocol::EvalSpec &spec, const std::string &node, const probe::Probe &probe, EvalClock &clock);

EvalResult run_host_memory_eval(const protocol::EvalSpec &spec, const std::string &node, const probe::Probe &probe, EvalClock &clock);

/// `offset_s` is this node's clock offset against the coordinator, if known.
EvalResult run_clock_skew_eval(const protocol::EvalSpec &spec, std::optional<double> offset_s, EvalClock &clock);

/// This rank's share of a ring all-reduce bandwidth test. Every rank joins
/// the ring even when its requirements are unsatisfied (its own result is
/// then Unknown) so that the other ranks can still measure.
EvalResult run_bandwidth_eval(const protocol::EvalSpec &spec,
                              ring::RingPeer &peer,
                              const std::vector<RequirementCheck> &requirements,
                              EvalClock &clock);

/// Whole-ring convenience over an in-process ring: one thread per node,
/// hop times from `links`. Results are keyed by node.
std::map<std::string, EvalResult> run_bandwidth_eval(const protocol::EvalSpec &spec,
                                                     const std::vector<std::string> &node_set,
                                                     const ring::LinkModel &links,
                                                     const RequirementManifest &manifest);

/// Everything an agent needs to run one protocol on its node.
struct NodeEnvironment
{
    std::string node;
    const probe::Probe *probe                = nullptr;
    const RequirementManifest *manifest      = nullptr;
    EvalClock *clock                         = nullptr;
    ring::RingPeer *ring                     = nullptr; ///< required for NCCLEval
    std::optional<double> clock_offset_s;
};

/// Run one eval of any kind, resolving requirements first. Never throws for
/// probe, requirement or transport problems: those become Unknown.
EvalResult run_eval(const protocol::EvalSpec &spec, NodeEnvironment &env);

} // namespace vetgate::evaluations
