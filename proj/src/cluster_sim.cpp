/*
 * Copyright (c) 2026, The vetgate Authors.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#include <vetgate/cluster_sim.hpp>
#include <vetgate/hostlist.hpp>

#include "yaml_util.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <set>

namespace vetgate::sim
{

namespace
{

[[noreturn]] void bad(const YAML::Node &node, const std::string &message)
{
    throw InvalidProfile(fmt::format("{}: {}", yaml::where(node), message));
}

bool present(const YAML::Node &node)
{
    return node.IsDefined() && !node.IsNull();
}

std::string fault_label(const FaultSpec &f)
{
    return f.peer ? fmt::format("{}({}, {})", to_string(f.kind), f.target, *f.peer) : fmt::format("{}({})", to_string(f.kind), f.target);
}

std::vector<NodeSpec> parse_nodes(const YAML::Node &list)
{
    if (!list.IsSequence() || list.size() == 0)
    {
        bad(list, "'nodes' must be a non-empty list");
    }
    std::vector<NodeSpec> out;
    for (const auto &item : list)
    {
        if (!item.IsMap())
        {
            bad(item, "node entries must be mappings");
        }
        std::vector<std::string> ids;
        std::string fixture;
        int gpus = 0;
        for (const auto &key : yaml::keys(item, "node"))
        {
            const auto v = item[key];
            if (key == "id")
            {
                ids.push_back(yaml::require_string(v, "id"));
            }
            else if (key == "ids")
            {
                ids = hostlist::expand(yaml::require_string(v, "ids"));
            }
            else if (key == "fixture")
            {
                fixture = yaml::require_string(v, "fixture");
            }
            else if (key == "gpus")
            {
                auto g = yaml::require_integer(v, "gpus");
                if (g < 1 || g > 64)
                {
                    bad(v, fmt::format("gpus must be in [1, 64], got {}", g));
                }
                gpus = static_cast<int>(g);
            }
            else
            {
                bad(v, fmt::format("unknown node key '{}'", key));
            }
        }
        if (ids.empty())
        {
            bad(item, "node entry needs 'id' or 'ids'");
        }
        if (fixture.empty())
        {
            bad(item, "node entry needs 'fixture'");
        }
        for (auto &id : ids)
        {
            out.push_back({std::move(id), fixture, gpus});
        }
    }
    return out;
}

FaultSpec parse_fault(const YAML::Node &item)
{
    if (!item.IsMap())
    {
        throw InvalidFault(fmt::format("{}: fault entries must be mappings", yaml::where(item)));
    }
    FaultSpec f;
    bool have_kind = false, have_target = false, have_bandwidth = false;
    for (const auto &key : yaml::keys(item, "fault"))
    {
        const auto v = item[key];
        if (key == "kind")
        {
            auto text = yaml::require_string(v, "kind");
            auto kind = parse_fault_kind(text);
            if (!kind)
            {
                throw InvalidFault(fmt::format("{}: unknown fault kind '{}'", yaml::where(v), text));
            }
            f.kind    = *kind;
            have_kind = true;
        }
        else if (key == "target")
        {
            if (v.IsSequence())
            {
                auto ends = yaml::require_string_list(v, "target");
                if (ends.size() != 2)
                {
                    throw InvalidFault(fmt::format("{}: a link target names exactly two nodes", yaml::where(v)));
                }
                f.target = ends[0];
                f.peer   = ends[1];
            }
            else
            {
                f.target = yaml::require_string(v, "target");
            }
            have_target = true;
        }
        else if (key == "gpu")
        {
            f.gpu = static_cast<int>(yaml::require_integer(v, "gpu"));
        }
        else if (key == "temperature")
        {
            f.temperature_c = yaml::require_number(v, "temperature");
        }
        else if (key == "used_fraction")
        {
            f.used_fraction = yaml::require_number(v, "used_fraction");
        }
        else if (key == "bandwidth")
        {
            f.bandwidth_gbps = yaml::require_number(v, "bandwidth");
            have_bandwidth   = true;
        }
        else if (key == "delay")
        {
            f.delay_s = yaml::require_number(v, "delay");
        }
        else
        {
            throw InvalidFault(fmt::format("{}: unknown fault key '{}'", yaml::where(v), key));
        }
    }
    if (!have_kind || !have_target)
    {
        throw InvalidFault(fmt::format("{}: fault needs 'kind' and 'target'", yaml::where(item)));
    }
    if (f.kind == FaultKind::DegradedLink && !have_bandwidth)
    {
        throw InvalidFault(fmt::format("{}: DegradedLink needs 'bandwidth'", yaml::where(item)));
    }
    return f;
}

probe::Fixture resized(probe::Fixture fx, int gpus)
{
    if (gpus <= 0 || gpus == fx.gpu_count())
    {
        return fx;
    }
    if (fx.gpus.empty())
    {
        fx.gpus.resize(static_cast<std::size_t>(gpus));
        return fx;
    }
    auto last = fx.gpus.back();
    fx.gpus.resize(static_cast<std::size_t>(gpus), last);
    return fx;
}

} // namespace

std::string_view to_string(Topology topology)
{
    return topology == Topology::Ring ? "ring" : "full-mesh";
}

std::string_view to_string(FaultKind kind)
{
    switch (kind)
    {
    case FaultKind::HotGpu: return "HotGpu";
    case FaultKind::DirtyGpuMemory: return "DirtyGpuMemory";
    case FaultKind::DegradedLink: return "DegradedLink";
    case FaultKind::AgentHang: return "AgentHang";
    case FaultKind::KernelLaunchFail: return "KernelLaunchFail";
    }
    return "?";
}

std::optional<FaultKind> parse_fault_kind(std::string_view text)
{
    for (auto k : {FaultKind::HotGpu, FaultKind::DirtyGpuMemory, FaultKind::DegradedLink, FaultKind::AgentHang, FaultKind::KernelLaunchFail})
    {
        if (to_string(k) == text)
        {
            return k;
        }
    }
    return std::nullopt;
}

std::vector<std::string> ClusterProfile::node_ids() const
{
    std::vector<std::string> out;
    out.reserve(nodes.size());
    for (const auto &n : nodes)
    {
        out.push_back(n.id);
    }
    return out;
}

void ClusterProfile::validate() const
{
    if (nodes.empty())
    {
        throw InvalidProfile(fmt::format("profile '{}' has no nodes", name));
    }
    if (!(link_gbps > 0.0))
    {
        throw InvalidProfile(fmt::format("link bandwidth must be > 0, got {}", link_gbps));
    }
    std::map<std::string, std::size_t> position;
    for (std::size_t i = 0; i < nodes.size(); ++i)
    {
        if (!position.emplace(nodes[i].id, i).second)
        {
            throw InvalidProfile(fmt::format("node '{}' is listed twice", nodes[i].id));
        }
        if (!fixtures.contains(nodes[i].fixture))
        {
            throw UnknownFixture(fmt::format("node {} uses unknown fixture '{}'", nodes[i].id, nodes[i].fixture));
        }
    }
    if (min_nodes && (*min_nodes < 1 || *min_nodes > static_cast<int>(nodes.size())))
    {
        throw InvalidProfile(fmt::format("min_nodes {} is outside [1, {}]", *min_nodes, nodes.size()));
    }
    auto gpus_of = [&](const std::string &id) {
        const auto &n = nodes[position.at(id)];
        return n.gpus > 0 ? n.gpus : fixtures.at(n.fixture).gpu_count();
    };
    for (const auto &f : faults)
    {
        if (!position.contains(f.target))
        {
            throw InvalidFault(fmt::format("{}: no node '{}' in the profile", fault_label(f), f.target));
        }
        if ((f.kind == FaultKind::DegradedLink) != f.peer.has_value())
        {
            throw InvalidFault(fmt::format("{}: only DegradedLink targets a link", fault_label(f)));
        }
        switch (f.kind)
        {
        case FaultKind::HotGpu:
        case FaultKind::DirtyGpuMemory:
        case FaultKind::KernelLaunchFail:
            if (f.gpu < 0 || f.gpu >= gpus_of(f.target))
            {
                throw InvalidFault(fmt::format("{}: gpu {} out of range for {} GPUs", fault_label(f), f.gpu, gpus_of(f.target)));
            }
            if (f.kind == FaultKind::HotGpu && !probe::field_range(probe::MetricField::GpuTemperature).contains(f.temperature_c))
            {
                throw InvalidFault(fmt::format("{}: temperature {} is not a valid reading", fault_label(f), f.temperature_c));
            }
            if (f.kind == FaultKind::DirtyGpuMemory && !probe::field_range(probe::MetricField::GpuMemoryUsedFraction).contains(f.used_fraction))
            {
                throw InvalidFault(fmt::format("{}: used_fraction {} is outside [0, 1]", fault_label(f), f.used_fraction));
            }
            break;
        case FaultKind::DegradedLink: {
            if (!position.contains(*f.peer) || *f.peer == f.target)
            {
                throw InvalidFault(fmt::format("{}: link must join two distinct profile nodes", fault_label(f)));
            }
            if (!(f.bandwidth_gbps > 0.0))
            {
                throw InvalidFault(fmt::format("{}: bandwidth must be > 0", fault_label(f)));
            }
            auto a = position.at(f.target), b = position.at(*f.peer), n = nodes.size();
            if (topology == Topology::Ring && (a + 1) % n != b && (b + 1) % n != a)
            {
                throw InvalidFault(fmt::format("{}: nodes are not ring neighbours", fault_label(f)));
            }
            break;
        }
        case FaultKind::AgentHang:
            if (f.delay_s && !(*f.delay_s >= 0.0))
            {
                throw InvalidFault(fmt::format("{}: delay must be >= 0", fault_label(f)));
            }
            break;
        }
    }
}

ClusterProfile parse_profile(std::string_view document, const probe::FixtureSet &fixtures, const std::filesystem::path &base_dir)
{
    auto root = yaml::load(document);
    if (!root.IsMap())
    {
        throw InvalidProfile("profile document must be a mapping");
    }
    ClusterProfile p;
    bool have_nodes = false;
    for (const auto &key : yaml::keys(root, "profile"))
    {
        const auto v = root[key];
        if (key == "name")
        {
            p.name = yaml::require_string(v, "name");
        }
        else if (key == "seed")
        {
            auto s = yaml::require_integer(v, "seed");
            if (s < 0)
            {
                bad(v, "seed must be >= 0");
            }
            p.seed = static_cast<std::uint64_t>(s);
        }
        else if (key == "fixtures")
        {
            yaml::require_string(v, "fixtures"); // consumed by load_profile
        }
        else if (key == "manifest")
        {
            auto path = std::filesystem::path(yaml::require_string(v, "manifest"));
            p.manifest = evaluations::RequirementManifest::load(path.is_absolute() ? path : base_dir / path);
        }
        else if (key == "packages")
        {
            auto items = yaml::require_string_list(v, "packages");
            p.manifest = evaluations::RequirementManifest(std::set<std::string>(items.begin(), items.end()));
        }
        else if (key == "nodes")
        {
            if (!present(v))
            {
                bad(v, "'nodes' must be a non-empty list");
            }
            p.nodes    = parse_nodes(v);
            have_nodes = true;
        }
        else if (key == "links")
        {
            if (!v.IsMap())
            {
                bad(v, "'links' must be a mapping");
            }
            for (const auto &lk : yaml::keys(v, "links"))
            {
                const auto lv = v[lk];
                if (lk == "topology")
                {
                    auto t = yaml::require_string(lv, "topology");
                    if (t == "ring")
                    {
                        p.topology = Topology::Ring;
                    }
                    else if (t == "full-mesh")
                    {
                        p.topology = Topology::FullMesh;
                    }
                    else
                    {
                        bad(lv, fmt::format("topology must be 'ring' or 'full-mesh', got '{}'", t));
                    }
                }
                else if (lk == "bandwidth")
                {
                    p.link_gbps = yaml::require_number(lv, "bandwidth");
                }
                else
                {
                    bad(lv, fmt::format("unknown links key '{}'", lk));
                }
            }
        }
        else if (key == "faults")
        {
            if (!present(v))
            {
                continue;
            }
            if (!v.IsSequence())
            {
                bad(v, "'faults' must be a list");
            }
            for (const auto &item : v)
            {
                p.faults.push_back(parse_fault(item));
            }
        }
        else if (key == "job")
        {
            if (!v.IsMap())
            {
                bad(v, "'job' must be a mapping");
            }
            for (const auto &jk : yaml::keys(v, "job"))
            {
                const auto jv = v[jk];
                if (jk == "id")
                {
                    p.job_id = yaml::require_string(jv, "id");
                }
                else if (jk == "flexible")
                {
                    p.flexible = yaml::require_bool(jv, "flexible");
                }
                else if (jk == "min_nodes")
                {
                    p.min_nodes = static_cast<int>(yaml::require_integer(jv, "min_nodes"));
                }
                else
                {
                    bad(jv, fmt::format("unknown job key '{}'", jk));
                }
            }
        }
        else
        {
            bad(v, fmt::format("unknown profile key '{}'", key));
        }
    }
    if (!have_nodes)
    {
        throw InvalidProfile("profile has no 'nodes'");
    }
    for (const auto &n : p.nodes)
    {
        if (!p.fixtures.contains(n.fixture))
        {
            p.fixtures.emplace(n.fixture, fixtures.get(n.fixture));
        }
    }
    p.validate();
    return p;
}

ClusterProfile load_profile(const std::filesystem::path &path, const std::optional<std::filesystem::path> &fixtures_dir)
{
    auto text = yaml::read_file(path);
    auto base = path.parent_path();
    std::filesystem::path dir;
    if (fixtures_dir)
    {
        dir = *fixtures_dir;
    }
    else
    {
        auto root = yaml::load(text);
        if (root.IsMap() && present(root["fixtures"]))
        {
            dir = yaml::require_string(root["fixtures"], "fixtures");
            if (dir.is_relative())
            {
                dir = base / dir;
            }
        }
        else
        {
            throw InvalidProfile(fmt::format("{}: no fixture directory given", path.string()));
        }
    }
    return parse_profile(text, probe::FixtureSet::load_dir(dir), base);
}

std::vector<probe::SimulatedNode> faulted_nodes(const ClusterProfile &profile)
{
    std::vector<probe::SimulatedNode> out;
    std::map<std::string, std::size_t> index;
    for (const auto &n : profile.nodes)
    {
        index[n.id] = out.size();
        out.push_back({n.id, resized(profile.fixtures.at(n.fixture), n.gpus)});
    }
    for (const auto &f : profile.faults)
    {
        auto &fx = out[index.at(f.target)].fixture;
        switch (f.kind)
        {
        case FaultKind::HotGpu:
            fx.gpus.at(static_cast<std::size_t>(f.gpu)).fields[probe::MetricField::GpuTemperature] = probe::FieldGenerator::constant(f.temperature_c);
            break;
        case FaultKind::DirtyGpuMemory:
            fx.gpus.at(static_cast<std::size_t>(f.gpu)).fields[probe::MetricField::GpuMemoryUsedFraction] =
                probe::FieldGenerator::constant(f.used_fraction);
            break;
        case FaultKind::KernelLaunchFail:
            fx.gpus.at(static_cast<std::size_t>(f.gpu)).kernel_launch_ok = false;
            break;
        case FaultKind::DegradedLink:
        case FaultKind::AgentHang:
            break;
        }
    }
    return out;
}

std::shared_ptr<probe::SimulatedProbe> make_probe(const ClusterProfile &profile)
{
    return make_probe(profile, profile.seed);
}

std::shared_ptr<probe::SimulatedProbe> make_probe(const ClusterProfile &profile, std::uint64_t seed)
{
    return std::make_shared<probe::SimulatedProbe>(faulted_nodes(profile), seed);
}

ring::LinkModel make_links(const ClusterProfile &profile)
{
    ring::LinkModel links;
    links.default_gbps = profile.link_gbps;
    for (const auto &n : profile.nodes)
    {
        links.loopback_gbps[n.id] = profile.fixtures.at(n.fixture).loopback_bandwidth_gbps;
    }
    for (const auto &f : profile.faults)
    {
        if (f.kind == FaultKind::DegradedLink)
        {
            links.set(f.target, *f.peer, f.bandwidth_gbps);
        }
    }
    return links;
}

std::unique_ptr<executor::LocalTransport> make_transport(const ClusterProfile &profile, std::int64_t epoch_ms, std::optional<std::uint64_t> seed)
{
    executor::LocalTransport::Options opts;
    opts.epoch_ms = epoch_ms;
    for (const auto &n : profile.nodes)
    {
        double offset = profile.fixtures.at(n.fixture).clock_offset_s;
        if (offset != 0.0)
        {
            opts.behaviour[n.id].clock_offset_s = offset;
        }
    }
    for (const auto &f : profile.faults)
    {
        if (f.kind != FaultKind::AgentHang)
        {
            continue;
        }
        auto &b = opts.behaviour[f.target];
        if (f.delay_s)
        {
            b.reply_delay_ms = *f.delay_s * 1000.0;
        }
        else
        {
            b.hang = true;
        }
    }
    return std::make_unique<executor::LocalTransport>(make_probe(profile, seed.value_or(profile.seed)), make_links(profile),
                                                      profile.manifest, std::move(opts));
}

executor::JobContext make_context(const ClusterProfile &profile)
{
    executor::JobContext ctx;
    ctx.job_id    = profile.job_id;
    ctx.nodes     = profile.node_ids();
    ctx.flexible  = profile.flexible;
    ctx.min_nodes = profile.flexible ? profile.min_nodes.value_or(static_cast<int>(ctx.nodes.size())) : static_cast<int>(ctx.nodes.size());
    return ctx;
}

Transcript run_scenario(const ClusterProfile &profile, const protocol::VettingProtocol &protocol, const ScenarioOptions &options)
{
    if (options.repeat < 1)
    {
        throw PreconditionError(fmt::format("repeat must be >= 1, got {}", options.repeat));
    }
    options.policy.validate();

    auto base = profile;
    if (options.flexible)
    {
        base.flexible = *options.flexible;
    }
    if (options.min_nodes)
    {
        base.min_nodes = *options.min_nodes;
    }
    base.validate();

    Transcript t;
    t.profile    = profile.name;
    t.seed       = profile.seed;
    t.protocol   = protocol.name;
    t.policy     = options.policy;
    t.deadline_s = options.deadline_s;

    collector::MemoryStore store(options.catalog);
    std::int64_t now = options.epoch_ms;
    for (int r = 1; r <= options.repeat; ++r)
    {
        auto epoch = options.epoch_ms + (r - 1) * options.round_interval_ms;
        auto ctx   = make_context(base);
        ctx.job_id = fmt::format("{}.{}", base.job_id, r);
        ctx.validate();

        auto transport = make_transport(base, epoch, base.seed + static_cast<std::uint64_t>(r - 1));
        RoundTranscript round;
        round.round     = r;
        round.outcome   = executor::run_vetting(protocol, ctx, *transport, options.policy, options.deadline_s);
        round.exit_code = executor::exit_code(round.outcome.verdict.decision);

        collector::ReportEnvelope env;
        env.submitted_at_ms = epoch + std::llround(round.outcome.elapsed_ms);
        env.job_context     = ctx;
        env.verdict         = round.outcome.verdict;
        env.reports         = round.outcome.reports;
        env.submitter       = "cluster-sim";
        auto ingested       = store.ingest(env);
        round.key           = ingested.key;
        round.effects       = std::move(ingested.effects);
        now                 = env.submitted_at_ms;
        t.rounds.push_back(std::move(round));
    }
    t.stored     = store.size();
    t.fleet      = store.query_fleet({}, now);
    t.rules      = store.rule_records();
    t.drain_list = store.drain_list();
    return t;
}

codec::Json encode(const Transcript &t)
{
    codec::Json rounds = codec::Json::array();
    for (const auto &r : t.rounds)
    {
        codec::Json reports = codec::Json::array();
        for (const auto &rep : r.outcome.reports)
        {
            reports.push_back(codec::encode(rep));
        }
        codec::Json effects = codec::Json::array();
        for (const auto &e : r.effects)
        {
            effects.push_back(collector::encode(e));
        }
        rounds.push_back({{"round", r.round},
                          {"exit_code", r.exit_code},
                          {"elapsed_ms", r.outcome.elapsed_ms},
                          {"verdict", codec::encode(r.outcome.verdict)},
                          {"reports", reports},
                          {"stored", collector::encode(r.key)},
                          {"effects", effects}});
    }
    codec::Json fleet = codec::Json::array();
    for (const auto &f : t.fleet)
    {
        fleet.push_back(collector::encode(f));
    }
    codec::Json records = codec::Json::array();
    for (const auto &[node, rec] : t.rules)
    {
        if (rec.state != rules::NodeState::Active || !rec.failure_events.empty())
        {
            records.push_back(collector::encode(rec));
        }
    }
    std::vector<std::string> drained(t.drain_list.begin(), t.drain_list.end());
    return codec::Json {{"profile", t.profile},
                        {"seed", t.seed},
                        {"protocol", t.protocol},
                        {"policy", codec::encode(t.policy)},
                        {"deadline_s", t.deadline_s},
                        {"rounds", rounds},
                        {"collector", {{"stored", t.stored}, {"fleet", fleet}}},
                        {"rules", {{"nodes", records}, {"drain_list", hostlist::compress(drained)}}}};
}

} // namespace vetgate::sim
