/*
 * Copyright (c) 2026, The vetgate Authors.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <vetgate/collector.hpp>
#include <vetgate/executor.hpp>
#include <vetgate/fixture.hpp>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

// Simulated cluster: node inventory, per-node fixtures, link bandwidths and
// injected faults, plus an end-to-end scenario driver.
namespace vetgate::sim
{

VETGATE_DEFINE_ERROR(InvalidProfile);
VETGATE_DEFINE_ERROR(InvalidFault);
using probe::UnknownFixture;

enum class Topology
{
    Ring,
    FullMesh,
};

std::string_view to_string(Topology topology);

enum class FaultKind
{
    HotGpu,           ///< one GPU reads `temperature_c`
    DirtyGpuMemory,   ///< one GPU has `used_fraction` of its memory taken
    DegradedLink,     ///< the link between two nodes runs at `bandwidth_gbps`
    AgentHang,        ///< the agent never answers, or answers `delay_s` late
    KernelLaunchFail, ///< trivial kernels fail on one GPU
};

std::string_view to_string(FaultKind kind);
std::optional<FaultKind> parse_fault_kind(std::string_view text);

struct FaultSpec
{
    FaultKind kind = FaultKind::HotGpu;
    std::string target;              ///< node, or first end of a link
    std::optional<std::string> peer; ///< second end of a link
    int gpu                = 0;
    double temperature_c   = 45.0;
    double used_fraction   = 0.5;
    double bandwidth_gbps  = 0.0;
    std::optional<double> delay_s;

    bool operator==(const FaultSpec &) const = default;
};

struct NodeSpec
{
    std::string id;
    std::string fixture;
    int gpus = 0; ///< 0 keeps the fixture's count

    bool operator==(const NodeSpec &) const = default;
};

struct ClusterProfile
{
    std::string name;
    std::vector<NodeSpec> nodes;
    Topology topology    = Topology::Ring;
    double link_gbps     = 100.0;
    std::vector<FaultSpec> faults;
    std::uint64_t seed   = 0;
    /// Fixtures referenced by `nodes`, resolved at load time.
    std::map<std::string, probe::Fixture> fixtures;
    evaluations::RequirementManifest manifest;

    // Job defaults; callers may override.
    std::string job_id = "sim";
    bool flexible      = false;
    std::optional<int> min_nodes;

    std::vector<std::string> node_ids() const;

    /// Throws InvalidProfile, UnknownFixture or InvalidFault.
    void validate() const;
};

/// `base_dir` anchors the relative `manifest:` path. Fixture names resolve
/// against `fixtures`. Throws SyntaxError, InvalidProfile, UnknownFixture,
/// InvalidFault.
ClusterProfile parse_profile(std::string_view document,
                             const probe::FixtureSet &fixtures,
                             const std::filesystem::path &base_dir = {});

/// Reads the file; fixtures come from `fixtures_dir`, else the document's
/// `fixtures:` directory (relative to the file).
ClusterProfile load_profile(const std::filesystem::path &path,
                            const std::optional<std::filesystem::path> &fixtures_dir = std::nullopt);

/// Fixtures with faults applied, one per node in profile order.
std::vector<probe::SimulatedNode> faulted_nodes(const ClusterProfile &profile);

std::shared_ptr<probe::SimulatedProbe> make_probe(const ClusterProfile &profile);
std::shared_ptr<probe::SimulatedProbe> make_probe(const ClusterProfile &profile, std::uint64_t seed);

ring::LinkModel make_links(const ClusterProfile &profile);

std::unique_ptr<executor::LocalTransport> make_transport(const ClusterProfile &profile,
                                                         std::int64_t epoch_ms = 1735689600000,
                                                         std::optional<std::uint64_t> seed = std::nullopt);

/// Job context for the whole profile with its job defaults applied.
executor::JobContext make_context(const ClusterProfile &profile);

struct ScenarioOptions
{
    executor::Policy policy;
    std::optional<bool> flexible;
    std::optional<int> min_nodes;
    double deadline_s              = executor::kDefaultDeadlineS;
    int repeat                     = 1;
    std::int64_t epoch_ms          = 1735689600000;
    std::int64_t round_interval_ms = 3600 * 1000;
    rules::Catalog catalog         = rules::default_catalog();
};

struct RoundTranscript
{
    int round = 0;
    executor::VettingOutcome outcome;
    int exit_code = 0;
    collector::StoredReportKey key;
    std::vector<rules::ActionEffect> effects;
};

struct Transcript
{
    std::string profile;
    std::uint64_t seed = 0;
    std::string protocol;
    executor::Policy policy;
    double deadline_s = 0.0;
    std::vector<RoundTranscript> rounds;
    std::size_t stored = 0;
    std::vector<collector::FleetEntry> fleet;
    std::map<std::string, rules::NodeHealthRecord> rules;
    std::set<std::string> drain_list;
};

/// Run `repeat` vetting rounds, one simulated hour apart, feeding each into
/// an in-memory collector with its rules engine. Round r uses seed + r - 1.
Transcript run_scenario(const ClusterProfile &profile, const protocol::VettingProtocol &protocol, const ScenarioOptions &options = {});

/// Deterministic JSON form. Rules records are listed only for nodes that
/// have left Active or carry failure history.
codec::Json encode(const Transcript &transcript);

} // namespace vetgate::sim
