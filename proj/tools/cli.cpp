/*
 * Copyright (c) 2026, The vetgate Authors.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#include "cli.hpp"

#include "yaml_util.hpp"

#include <vetgate/cluster_sim.hpp>
#include <vetgate/codec.hpp>
#include <vetgate/collector.hpp>
#include <vetgate/collector_http.hpp>
#include <vetgate/hostlist.hpp>
#include <vetgate/net.hpp>
#include <vetgate/nvidia_smi_probe.hpp>
#include <vetgate/rules.hpp>
#include <vetgate/saturation.hpp>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <climits>
#include <cmath>
#include <condition_variable>
#include <mutex>
#include <set>

namespace vetgate::cli
{

namespace fs = std::filesystem;
using codec::Json;

namespace
{

constexpr const char *kDefaultManifestNote = "no manifest given; every requirement is reported unmet";

/// Errors that mean the environment failed, not the invocation.
bool is_runtime_error(std::string_view kind)
{
    static const std::set<std::string_view> kinds {"CoordinatorFailure",
                                                   "ConnectionError",
                                                   "FrameError",
                                                   "CollectorUnavailable",
                                                   "StorageFailure",
                                                   "Unauthorized",
                                                   "ProviderUnavailable",
                                                   "DecodeError"};
    return kinds.contains(kind);
}

std::string fold(std::string_view text)
{
    std::string out;
    for (char c : text)
    {
        if (c != '-' && c != '_')
        {
            out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        }
    }
    return out;
}

/// Accepts "fail", "pass", "fail-if-strict" and the enum spellings.
executor::UnknownPolicy parse_unknown(std::string_view text)
{
    for (auto p : {executor::UnknownPolicy::Fail, executor::UnknownPolicy::Pass, executor::UnknownPolicy::FailIfStrict})
    {
        if (fold(to_string(p)) == fold(text))
        {
            return p;
        }
    }
    throw PreconditionError(fmt::format("treat_unknown_as must be fail, pass or fail-if-strict (got '{}')", text));
}

std::pair<std::string, int> parse_host_port(const std::string &text, std::string_view what)
{
    auto colon = text.rfind(':');
    if (colon == std::string::npos || colon + 1 == text.size())
    {
        throw PreconditionError(fmt::format("{} must be HOST:PORT (got '{}')", what, text));
    }
    int port = 0;
    try
    {
        std::size_t used = 0;
        port             = std::stoi(text.substr(colon + 1), &used);
        if (used != text.size() - colon - 1)
        {
            throw std::invalid_argument("trailing");
        }
    }
    catch (const std::exception &)
    {
        throw PreconditionError(fmt::format("{} must be HOST:PORT (got '{}')", what, text));
    }
    if (port < 0 || port > 65535)
    {
        throw PreconditionError(fmt::format("{} port out of range (got '{}')", what, text));
    }
    auto host = text.substr(0, colon);
    return {host.empty() ? std::string("0.0.0.0") : host, port};
}

std::optional<std::string> env_get(const executor::Environment &env, std::string_view key)
{
    auto it = env.find(key);
    if (it == env.end() || it->second.empty())
    {
        return std::nullopt;
    }
    return it->second;
}

void print_json(std::ostream &out, const Json &j)
{
    out << codec::dump(j) << '\n';
    out.flush();
}

Json encode_schema(const protocol::KindSchema &k)
{
    Json params = Json::array();
    for (const auto &p : k.params)
    {
        params.push_back({{"name", p.name},
                          {"unit", std::string(to_string(p.unit))},
                          {"mandatory", p.mandatory},
                          {"range", p.range_text()},
                          {"description", p.description}});
    }
    return {{"kind", k.name}, {"description", k.description}, {"params", params}};
}

Json error_json(const std::exception &e)
{
    const auto *ve = dynamic_cast<const Error *>(&e);
    return {{"error", ve ? ve->kind() : "Error"}, {"message", e.what()}};
}

// ---- configuration -------------------------------------------------------

void set_origin(CliConfig &c, const std::string &key, const std::string &origin)
{
    c.origin[key] = origin;
}

const std::vector<std::string> &config_keys()
{
    static const std::vector<std::string> keys {"fixtures",
                                                "manifest",
                                                "report_url",
                                                "report_token",
                                                "nodelist_var",
                                                "jobid_var",
                                                "policy.flexible",
                                                "policy.min_nodes",
                                                "policy.max_exclusion_fraction",
                                                "policy.deadline",
                                                "policy.treat_unknown_as",
                                                "policy.strict"};
    return keys;
}

CliConfig defaults()
{
    CliConfig c;
    for (const auto &k : config_keys())
    {
        c.origin[k] = "default";
    }
    return c;
}

/// Options that can be given on any subcommand.
struct Common
{
    std::string config;
    CLI::Option *config_opt = nullptr;
    bool json               = false;

    void add(CLI::App *app)
    {
        config_opt = app->add_option("--config", config, "Config file (YAML); also VETGATE_CONFIG");
        app->add_flag("--json", json, "Emit one JSON document on stdout; human text goes to stderr");
    }

    std::optional<fs::path> config_path() const
    {
        if (config_opt->count() == 0)
        {
            return std::nullopt;
        }
        return fs::path(config);
    }

    std::ostream &human(std::ostream &out, std::ostream &err) const
    {
        return json ? err : out;
    }
};

struct PathFlags
{
    std::string fixtures;
    CLI::Option *fixtures_opt = nullptr;
    std::string manifest;
    CLI::Option *manifest_opt = nullptr;

    void add(CLI::App *app, bool with_manifest)
    {
        fixtures_opt = app->add_option("--fixtures", fixtures, "Fixture directory; also VETGATE_FIXTURES");
        if (with_manifest)
        {
            manifest_opt = app->add_option("--manifest", manifest, "Requirement manifest; also VETGATE_MANIFEST");
        }
    }

    void apply(CliConfig &c) const
    {
        if (fixtures_opt && fixtures_opt->count())
        {
            c.fixtures_dir = fixtures;
            set_origin(c, "fixtures", "flag");
        }
        if (manifest_opt && manifest_opt->count())
        {
            c.manifest = manifest;
            set_origin(c, "manifest", "flag");
        }
    }
};

struct PolicyFlags
{
    bool flexible = false;
    CLI::Option *flexible_opt = nullptr;
    int min_nodes = 0;
    CLI::Option *min_nodes_opt = nullptr;
    double max_exclusion_fraction = 0.1;
    CLI::Option *fraction_opt = nullptr;
    double deadline = executor::kDefaultDeadlineS;
    CLI::Option *deadline_opt = nullptr;
    std::string treat_unknown;
    CLI::Option *unknown_opt = nullptr;
    bool strict = false;
    CLI::Option *strict_opt = nullptr;

    void add(CLI::App *app)
    {
        flexible_opt  = app->add_flag("--flexible,!--no-flexible", flexible, "Allow the job to continue without unhealthy nodes");
        min_nodes_opt = app->add_option("--min-nodes", min_nodes, "Smallest allocation a flexible job accepts");
        fraction_opt  = app->add_option("--max-exclusion-fraction", max_exclusion_fraction, "Largest fraction of nodes that may be excluded [0,1]");
        deadline_opt  = app->add_option("--deadline", deadline, "Seconds to wait for agent reports");
        unknown_opt   = app->add_option("--treat-unknown-as", treat_unknown, "fail, pass or fail-if-strict");
        strict_opt    = app->add_flag("--strict", strict, "Arm fail-if-strict for Unknown results");
    }

    void apply(CliConfig &c) const
    {
        if (flexible_opt->count())
        {
            c.flexible = flexible;
            set_origin(c, "policy.flexible", "flag");
        }
        if (min_nodes_opt->count())
        {
            c.min_nodes = min_nodes;
            set_origin(c, "policy.min_nodes", "flag");
        }
        if (fraction_opt->count())
        {
            c.max_exclusion_fraction = max_exclusion_fraction;
            set_origin(c, "policy.max_exclusion_fraction", "flag");
        }
        if (deadline_opt->count())
        {
            c.deadline_s = deadline;
            set_origin(c, "policy.deadline", "flag");
        }
        if (unknown_opt->count())
        {
            c.treat_unknown_as = parse_unknown(treat_unknown);
            set_origin(c, "policy.treat_unknown_as", "flag");
        }
        if (strict_opt->count())
        {
            c.strict = strict;
            set_origin(c, "policy.strict", "flag");
        }
    }
};

struct ReportFlags
{
    std::string url;
    CLI::Option *url_opt = nullptr;
    std::string token;
    CLI::Option *token_opt = nullptr;

    void add(CLI::App *app)
    {
        url_opt   = app->add_option("--report-url", url, "Collector base URL; also VETGATE_REPORT_URL");
        token_opt = app->add_option("--report-token", token, "Collector bearer token; also VETGATE_REPORT_TOKEN");
    }

    void apply(CliConfig &c) const
    {
        if (url_opt->count())
        {
            c.report_url = url;
            set_origin(c, "report_url", "flag");
        }
        if (token_opt->count())
        {
            c.report_token = token;
            set_origin(c, "report_token", "flag");
        }
    }
};

executor::Policy policy_of(const CliConfig &c)
{
    executor::Policy p {c.max_exclusion_fraction, c.treat_unknown_as, c.strict};
    p.validate();
    return p;
}

Json encode_config(const CliConfig &c)
{
    auto opt_path = [](const std::optional<fs::path> &p) { return p ? Json(p->string()) : Json(nullptr); };
    Json values   = {{"fixtures", opt_path(c.fixtures_dir)},
                     {"manifest", opt_path(c.manifest)},
                     {"report_url", c.report_url},
                     {"report_token", c.report_token.empty() ? "" : "***"},
                     {"nodelist_var", c.nodelist_var},
                     {"jobid_var", c.jobid_var},
                     {"policy.flexible", c.flexible ? Json(*c.flexible) : Json(nullptr)},
                     {"policy.min_nodes", c.min_nodes ? Json(*c.min_nodes) : Json(nullptr)},
                     {"policy.max_exclusion_fraction", c.max_exclusion_fraction},
                     {"policy.deadline", c.deadline_s},
                     {"policy.treat_unknown_as", std::string(to_string(c.treat_unknown_as))},
                     {"policy.strict", c.strict}};
    Json origin   = Json::object();
    for (const auto &k : config_keys())
    {
        origin[k] = c.origin.at(k);
    }
    return {{"values", values}, {"origin", origin}};
}

/// Fold the config file's variable-name overrides into the environment so
/// that discovery sees them with the right precedence.
executor::Environment effective_env(const executor::Environment &env, const CliConfig &c)
{
    auto e = env;
    if (!c.nodelist_var.empty())
    {
        e["VETGATE_NODELIST_VAR"] = c.nodelist_var;
    }
    if (!c.jobid_var.empty())
    {
        e["VETGATE_JOBID_VAR"] = c.jobid_var;
    }
    return e;
}

evaluations::RequirementManifest manifest_of(const CliConfig &c, std::ostream &notes)
{
    if (!c.manifest)
    {
        notes << "note: " << kDefaultManifestNote << '\n';
        return {};
    }
    return evaluations::RequirementManifest::load(*c.manifest);
}

probe::FixtureSet fixtures_of(const CliConfig &c)
{
    if (!c.fixtures_dir)
    {
        throw PreconditionError("no fixture directory; pass --fixtures DIR or set VETGATE_FIXTURES");
    }
    if (!fs::is_directory(*c.fixtures_dir))
    {
        throw IoError(fmt::format("fixture directory '{}' does not exist", c.fixtures_dir->string()));
    }
    return probe::FixtureSet::load_dir(*c.fixtures_dir);
}

std::string hostname_or(const executor::Environment &env)
{
    if (auto n = env_get(env, "SLURMD_NODENAME"))
    {
        return *n;
    }
    char buf[HOST_NAME_MAX + 1] = {};
    if (::gethostname(buf, sizeof buf) != 0)
    {
        throw PreconditionError("cannot determine the node name; pass --node");
    }
    std::string name(buf);
    return name.substr(0, name.find('.'));
}

// ---- collector serve stop hook -------------------------------------------

struct StopSignal
{
    std::mutex mutex;
    std::condition_variable cv;
    bool requested = false;
};

StopSignal &stop_signal()
{
    static StopSignal s;
    return s;
}

// ---- subcommands ----------------------------------------------------------

struct Streams
{
    std::ostream &out;
    std::ostream &err;
};

struct ValidateCmd
{
    Common common;
    std::string file;

    void add(CLI::App &app)
    {
        auto *sub = app.add_subcommand("validate", "Parse a vetting protocol and print its normalized form");
        sub->add_option("file", file, "Protocol file")->required();
        common.add(sub);
    }

    int run(Streams s) const
    {
        try
        {
            auto p = protocol::load_protocol(file);
            if (common.json)
            {
                print_json(s.out, {{"valid", true}, {"protocol", codec::encode(p)}});
            }
            else
            {
                s.out << protocol::serialize_protocol(p);
            }
            return 0;
        }
        catch (const Error &e)
        {
            if (common.json)
            {
                auto j     = error_json(e);
                j["valid"] = false;
                print_json(s.out, j);
            }
            s.err << file << ": " << e.kind() << ": " << e.what() << '\n';
            return executor::kExitUsage;
        }
    }
};

struct ExplainCmd
{
    Common common;
    std::string kind;

    void add(CLI::App &app)
    {
        auto *sub = app.add_subcommand("explain", "Describe evaluation kinds and their parameters");
        sub->add_option("kind", kind, "Evaluation kind; all kinds when omitted");
        common.add(sub);
    }

    int run(Streams s) const
    {
        std::vector<const protocol::KindSchema *> kinds;
        if (kind.empty())
        {
            for (const auto &k : protocol::registry())
            {
                kinds.push_back(&k);
            }
        }
        else
        {
            kinds.push_back(&protocol::registry_describe(kind));
        }
        if (common.json)
        {
            Json arr = Json::array();
            for (const auto *k : kinds)
            {
                arr.push_back(encode_schema(*k));
            }
            print_json(s.out, {{"kinds", arr}});
            return 0;
        }
        for (const auto *k : kinds)
        {
            fmt::print(s.out, "{}: {}\n", k->name, k->description);
            for (const auto &p : k->params)
            {
                fmt::print(s.out,
                           "  {:<16} {:<9} {:<9} {:<12} {}\n",
                           p.name,
                           to_string(p.unit),
                           p.mandatory ? "required" : "optional",
                           p.range_text(),
                           p.description);
            }
        }
        return 0;
    }
};

struct ConfigCmd
{
    Common common;
    PathFlags paths;
    PolicyFlags policy;
    ReportFlags report;

    void add(CLI::App &app)
    {
        auto *sub = app.add_subcommand("config", "Show the effective configuration and where each value came from");
        common.add(sub);
        paths.add(sub, true);
        policy.add(sub);
        report.add(sub);
    }

    int run(const executor::Environment &env, Streams s) const
    {
        auto c = resolve_config(env, common.config_path());
        paths.apply(c);
        policy.apply(c);
        report.apply(c);
        c.validate();
        auto j = encode_config(c);
        if (common.json)
        {
            print_json(s.out, j);
            return 0;
        }
        for (const auto &k : config_keys())
        {
            const auto &v = j["values"][k];
            fmt::print(s.out, "{:<31} {:<24} ({})\n", k, v.is_string() ? v.get<std::string>() : v.dump(), j["origin"][k].get<std::string>());
        }
        return 0;
    }
};

struct RunCmd
{
    Common common;
    PathFlags paths;
    PolicyFlags policy;
    ReportFlags report;
    std::string protocol_file;
    std::string exclude_file;
    CLI::Option *exclude_opt = nullptr;
    bool opt_in              = false;
    int min_scale_warning    = 8;
    std::string sim_profile;
    CLI::Option *sim_opt = nullptr;
    std::string transport;
    std::string listen = "0.0.0.0:0";
    CLI::Option *listen_opt = nullptr;
    double connect_window   = 30.0;
    std::string event_log;
    CLI::Option *event_log_opt = nullptr;
    std::uint64_t seed         = 0;
    CLI::Option *seed_opt      = nullptr;

    void add(CLI::App &app)
    {
        auto *sub = app.add_subcommand("run", "Vet the current allocation and decide continue / exclude / abort");
        sub->add_option("--protocol", protocol_file, "Vetting protocol file")->required();
        common.add(sub);
        paths.add(sub, true);
        policy.add(sub);
        report.add(sub);
        exclude_opt = sub->add_option("--exclude-file", exclude_file, "Write the excluded nodes here as a hostlist");
        sub->add_flag("--opt-in-collection", opt_in, "Submit the outcome to the collector (never without this flag)");
        sub->add_option("--min-scale-warning", min_scale_warning, "Print a note when the allocation has fewer nodes")->capture_default_str();
        sim_opt = sub->add_option("--sim-profile", sim_profile, "Vet a simulated cluster profile in-process");
        sub->add_option("--transport", transport, "sim or tcp")->check(CLI::IsMember({"sim", "tcp"}));
        listen_opt = sub->add_option("--listen", listen, "Coordinator address for tcp agents, HOST:PORT")->capture_default_str();
        sub->add_option("--connect-window", connect_window, "Seconds agents have to connect (tcp)")->capture_default_str();
        event_log_opt = sub->add_option("--event-log", event_log, "Append one rules event per node to this JSON-lines log");
        seed_opt      = sub->add_option("--seed", seed, "Override the simulated profile's seed");
    }

    int run(const executor::Environment &env, Streams s) const
    {
        auto &human = common.human(s.out, s.err);
        auto c      = resolve_config(env, common.config_path());
        paths.apply(c);
        policy.apply(c);
        report.apply(c);
        c.validate();
        if (opt_in && c.report_url.empty())
        {
            throw PreconditionError("--opt-in-collection needs a collector URL (--report-url or VETGATE_REPORT_URL)");
        }
        auto pol      = policy_of(c);
        auto protocol = protocol::load_protocol(protocol_file);
        auto ctx      = executor::discover_context(effective_env(env, c), {c.flexible.value_or(false), c.min_nodes});

        std::string mode = transport;
        if (mode.empty())
        {
            mode = sim_opt->count() ? "sim" : (listen_opt->count() ? "tcp" : "");
        }
        if (mode.empty())
        {
            throw PreconditionError("no transport; pass --sim-profile FILE or --transport tcp --listen HOST:PORT");
        }
        std::vector<std::string> notes;
        if (static_cast<int>(ctx.nodes.size()) < min_scale_warning)
        {
            notes.push_back(fmt::format("allocation has {} node(s), fewer than {}; vetting pays off mostly at scale", ctx.nodes.size(), min_scale_warning));
        }

        std::unique_ptr<executor::AgentTransport> channel;
        std::int64_t now = collector::system_now_ms();
        if (mode == "sim")
        {
            if (!sim_opt->count())
            {
                throw PreconditionError("--transport sim needs --sim-profile FILE");
            }
            auto profile = sim::load_profile(sim_profile, c.origin.at("fixtures") == "default" ? std::nullopt : c.fixtures_dir);
            auto known   = profile.node_ids();
            std::set<std::string> members(known.begin(), known.end());
            for (const auto &n : ctx.nodes)
            {
                if (!members.contains(n))
                {
                    throw PreconditionError(fmt::format("node '{}' is not part of profile '{}'", n, profile.name));
                }
            }
            if (c.manifest)
            {
                profile.manifest = evaluations::RequirementManifest::load(*c.manifest);
            }
            channel = sim::make_transport(profile, now, seed_opt->count() ? std::optional(seed) : std::nullopt);
        }
        else
        {
            auto [host, port] = parse_host_port(listen, "--listen");
            auto tcp          = std::make_unique<net::TcpTransport>(net::TcpTransport::Options {host, port, connect_window});
            fmt::print(s.err, "coordinator listening on {}:{}, waiting {}s for {} agent(s)\n", host, tcp->port(), connect_window, ctx.nodes.size());
            s.err.flush();
            now     = tcp->epoch_ms();
            channel = std::move(tcp);
        }
        for (const auto &n : notes)
        {
            s.err << "note: " << n << '\n';
        }

        auto outcome = executor::run_vetting(protocol, ctx, *channel, pol, c.deadline_s);
        channel.reset();
        const auto &v = outcome.verdict;
        int code      = executor::exit_code(v.decision);
        auto finished = now + static_cast<std::int64_t>(std::llround(outcome.elapsed_ms));

        std::optional<std::string> exclusion;
        if (v.decision == executor::Decision::ContinueExcluding)
        {
            std::optional<fs::path> path;
            if (exclude_opt->count())
            {
                path = fs::path(exclude_file);
            }
            exclusion = executor::emit_exclusion(v, path, human);
        }
        if (event_log_opt->count())
        {
            rules::append_event_log(event_log, rules::events_from_round(v, outcome.reports, finished));
        }

        Json submission = nullptr;
        if (opt_in)
        {
            collector::ReportEnvelope envelope {collector::kSchemaVersion, finished, ctx, v, outcome.reports, "vetgate"};
            try
            {
                collector::CollectorClient client(c.report_url, c.report_token);
                auto r     = client.submit(envelope);
                submission = {{"job_id", r.key.job_id}, {"seq", r.key.seq}, {"duplicate", r.duplicate}};
                fmt::print(s.err, "submitted to {} as {}#{}{}\n", c.report_url, r.key.job_id, r.key.seq, r.duplicate ? " (duplicate)" : "");
            }
            catch (const Error &e)
            {
                submission = error_json(e);
                fmt::print(s.err, "warning: collector submission failed: {}: {}\n", e.kind(), e.what());
            }
        }

        fmt::print(s.err, "{}: {} after {:.1f} ms (exit {})\n", v.protocol_name, to_string(v.decision), outcome.elapsed_ms, code);
        for (const auto &[node, nv] : v.per_node)
        {
            if (nv.health != executor::NodeHealth::Healthy)
            {
                fmt::print(s.err, "  {} {}: {}\n", node, to_string(nv.health), fmt::join(nv.reasons, "; "));
            }
        }
        for (const auto &r : v.reasons)
        {
            fmt::print(s.err, "  abort: {}\n", r);
        }
        if (common.json)
        {
            Json reports = Json::array();
            for (const auto &r : outcome.reports)
            {
                reports.push_back(codec::encode(r));
            }
            print_json(s.out,
                       {{"verdict", codec::encode(v)},
                        {"exit_code", code},
                        {"exclusion", exclusion ? Json(*exclusion) : Json(nullptr)},
                        {"elapsed_ms", outcome.elapsed_ms},
                        {"reports", reports},
                        {"submission", submission},
                        {"notes", notes}});
        }
        return code;
    }
};

struct ScoreCmd
{
    Common common;
    PathFlags paths;
    std::string fixture;
    int gpus                 = 0;
    std::int64_t interval_ms = 1000;
    std::int64_t duration_ms = 60000;
    std::string weights      = "0.5,0.3,0.2";
    double link_peak         = saturation::kDefaultLinkPeakGbps;
    std::string format       = "csv";
    std::string out_dir;
    CLI::Option *out_opt = nullptr;
    std::vector<std::string> fields;
    std::uint64_t seed = 0;

    void add(CLI::App &app)
    {
        auto *sub = app.add_subcommand("score", "Sample a fixture's GPUs and compute the saturation score");
        common.add(sub);
        paths.add(sub, false);
        sub->add_option("--fixture", fixture, "Fixture name; optional when the directory holds one fixture");
        sub->add_option("--gpus", gpus, "Number of GPUs to sample (default: all)");
        sub->add_option("--interval", interval_ms, "Sampling interval in ms")->capture_default_str();
        sub->add_option("--duration", duration_ms, "Sampling window in ms")->capture_default_str();
        sub->add_option("--weights", weights, "Compute,memory,network weights summing to 1")->capture_default_str();
        sub->add_option("--link-peak", link_peak, "Per-direction NVLink peak in GB/s")->capture_default_str();
        sub->add_option("--format", format, "Export format, csv or json")->capture_default_str();
        out_opt = sub->add_option("--out", out_dir, "Export the sampled series into this directory");
        sub->add_option("--field", fields, "Extra field to sample (repeatable)");
        sub->add_option("--seed", seed, "Noise seed")->capture_default_str();
    }

    int run(const executor::Environment &env, Streams s) const
    {
        auto c = resolve_config(env, common.config_path());
        paths.apply(c);
        auto w   = saturation::Weights::parse(weights);
        auto fmt_ = saturation::parse_export_format(format);
        auto set = fixtures_of(c);
        std::string name = fixture;
        if (name.empty())
        {
            auto names = set.names();
            if (names.size() != 1)
            {
                throw PreconditionError(fmt::format("fixture directory holds {} fixtures; pass --fixture NAME", names.size()));
            }
            name = names.front();
        }
        const auto &fx = set.get(name);
        int n          = gpus == 0 ? fx.gpu_count() : gpus;
        if (n < 1 || n > fx.gpu_count())
        {
            throw PreconditionError(fmt::format("--gpus must be in [1, {}] for fixture '{}' (got {})", fx.gpu_count(), name, gpus));
        }
        std::vector<probe::MetricField> extra;
        for (const auto &f : fields)
        {
            auto parsed = probe::parse_field(f);
            if (!parsed)
            {
                throw PreconditionError(fmt::format("unknown field '{}'", f));
            }
            extra.push_back(*parsed);
        }
        probe::SimulatedProbe probe({{name, fx}}, seed);
        probe::GpuGroup group {"score", {}};
        for (int i = 0; i < n; ++i)
        {
            group.gpus.insert({name, i});
        }
        auto series = saturation::collect(group, probe, interval_ms, duration_ms, extra);
        auto score  = saturation::score(series, w, link_peak);
        std::vector<fs::path> written;
        if (out_opt->count())
        {
            fs::create_directories(out_dir);
            written = saturation::export_series(series, fmt_, out_dir);
        }
        auto &human = common.human(s.out, s.err);
        fmt::print(human, "overall {:.3f}\n", score.overall);
        fmt::print(human, "  compute {:.3f} (weight {})\n", score.compute, w.compute);
        fmt::print(human, "  memory  {:.3f} (weight {})\n", score.memory, w.memory);
        fmt::print(human, "  network {:.3f} (weight {})\n", score.network, w.network);
        for (const auto &p : written)
        {
            fmt::print(s.err, "wrote {}\n", p.string());
        }
        if (common.json)
        {
            Json files = Json::array();
            for (const auto &p : written)
            {
                files.push_back(p.string());
            }
            print_json(s.out, {{"fixture", name}, {"gpus", n}, {"score", codec::encode(score)}, {"exported", files}});
        }
        return 0;
    }
};

struct SimCmd
{
    Common common;
    PathFlags paths;
    PolicyFlags policy;
    std::string profile_file;
    std::string protocol_file;
    int repeat = 1;
    std::uint64_t seed = 0;
    CLI::Option *seed_opt = nullptr;
    std::string catalog;
    CLI::Option *catalog_opt = nullptr;

    void add(CLI::App &app)
    {
        auto *sub = app.add_subcommand("sim", "Run vetting rounds on a simulated cluster and print the transcript");
        sub->add_option("--profile", profile_file, "Cluster profile")->required();
        sub->add_option("--protocol", protocol_file, "Vetting protocol file")->required();
        sub->add_option("--repeat", repeat, "Number of rounds, one simulated hour apart")->capture_default_str()->check(CLI::PositiveNumber);
        seed_opt = sub->add_option("--seed", seed, "Override the profile's seed");
        catalog_opt = sub->add_option("--catalog", catalog, "Rules catalog (default catalog when omitted)");
        common.add(sub);
        paths.add(sub, true);
        policy.add(sub);
    }

    int run(const executor::Environment &env, Streams s) const
    {
        auto c = resolve_config(env, common.config_path());
        paths.apply(c);
        policy.apply(c);
        c.validate();
        auto profile = sim::load_profile(profile_file, c.origin.at("fixtures") != "default" ? c.fixtures_dir : std::nullopt);
        if (seed_opt->count())
        {
            profile.seed = seed;
        }
        if (c.origin.at("manifest") != "default")
        {
            profile.manifest = evaluations::RequirementManifest::load(*c.manifest);
        }
        auto protocol = protocol::load_protocol(protocol_file);
        sim::ScenarioOptions o;
        o.policy     = policy_of(c);
        o.flexible   = c.flexible;
        o.min_nodes  = c.min_nodes;
        o.deadline_s = c.deadline_s;
        o.repeat     = repeat;
        if (catalog_opt->count())
        {
            o.catalog = rules::load_catalog(catalog);
        }
        auto t = sim::run_scenario(profile, protocol, o);
        if (common.json)
        {
            print_json(s.out, sim::encode(t));
        }
        auto &human = common.human(s.out, s.err);
        fmt::print(human, "profile {} seed {} protocol {}\n", t.profile, t.seed, t.protocol);
        for (const auto &r : t.rounds)
        {
            const auto &v = r.outcome.verdict;
            fmt::print(human, "round {}: {} (exit {}) in {:.1f} simulated ms", r.round, to_string(v.decision), r.exit_code, r.outcome.elapsed_ms);
            if (!v.excluded.empty())
            {
                std::vector<std::string> ex(v.excluded.begin(), v.excluded.end());
                fmt::print(human, " excluding {}", hostlist::compress(ex));
            }
            fmt::print(human, "\n");
            for (const auto &[node, nv] : v.per_node)
            {
                if (nv.health != executor::NodeHealth::Healthy)
                {
                    fmt::print(human, "  {} {}: {}\n", node, to_string(nv.health), fmt::join(nv.reasons, "; "));
                }
            }
            for (const auto &e : r.effects)
            {
                fmt::print(human, "  rule {}: {} -> {}\n", e.rule.empty() ? "-" : e.rule, e.node, to_string(e.resulting_state));
            }
        }
        std::vector<std::string> drained(t.drain_list.begin(), t.drain_list.end());
        fmt::print(human, "drain list: {}\n", drained.empty() ? "(empty)" : hostlist::compress(drained));
        return 0;
    }
};

struct RulesCmd
{
    Common common;
    std::string events;
    CLI::Option *events_opt = nullptr;
    std::string catalog;
    CLI::Option *catalog_opt = nullptr;
    std::string drain_list;
    CLI::Option *drain_opt = nullptr;
    std::string collector_url;
    CLI::Option *collector_opt = nullptr;
    std::string token;
    std::int64_t at = 0;
    CLI::Option *at_opt = nullptr;
    std::string node;
    CLI::App *status_cmd  = nullptr;
    CLI::App *release_cmd = nullptr;
    CLI::App *replay_cmd  = nullptr;

    void add_shared(CLI::App *sub, bool needs_node)
    {
        common.add(sub);
        auto *ev = sub->add_option("--events", events, "JSON-lines event log");
        auto *ca = sub->add_option("--catalog", catalog, "Rules catalog (default catalog when omitted)");
        auto *dl = sub->add_option("--drain-list", drain_list, "Rewrite this drain-list file");
        auto *co = sub->add_option("--collector", collector_url, "Ask a running collector instead of a local log");
        sub->add_option("--token", token, "Collector bearer token; also VETGATE_REPORT_TOKEN");
        auto *a = sub->add_option("--at", at, "Timestamp in ms since the Unix epoch (default: now)");
        events_opt    = ev;
        catalog_opt   = ca;
        drain_opt     = dl;
        collector_opt = co;
        at_opt        = a;
        if (needs_node)
        {
            sub->add_option("node", node, "Node to return to service")->required();
        }
    }

    /// `parent` gets status / release / replay.
    void add(CLI::App *parent)
    {
        parent->require_subcommand(1);
        status_cmd  = parent->add_subcommand("status", "Per-node health state and the drain list");
        release_cmd = parent->add_subcommand("release", "Return a node to service");
        replay_cmd  = parent->add_subcommand("replay", "Rebuild state from the event log and rewrite the drain list");
        // Each verb owns its option objects; the bound variables are shared
        // since only one verb runs.
        add_shared(status_cmd, false);
        auto status_opts = std::tuple {events_opt, catalog_opt, drain_opt, collector_opt, at_opt};
        add_shared(release_cmd, true);
        auto release_opts = std::tuple {events_opt, catalog_opt, drain_opt, collector_opt, at_opt};
        add_shared(replay_cmd, false);
        m_opts = {{status_cmd, status_opts}, {release_cmd, release_opts}, {replay_cmd, std::tuple {events_opt, catalog_opt, drain_opt, collector_opt, at_opt}}};
    }

    std::map<CLI::App *, std::tuple<CLI::Option *, CLI::Option *, CLI::Option *, CLI::Option *, CLI::Option *>> m_opts;

    bool parsed() const
    {
        return status_cmd->parsed() || release_cmd->parsed() || replay_cmd->parsed();
    }

    int run(const executor::Environment &env, Streams s)
    {
        auto *verb = status_cmd->parsed() ? status_cmd : (release_cmd->parsed() ? release_cmd : replay_cmd);
        std::tie(events_opt, catalog_opt, drain_opt, collector_opt, at_opt) = m_opts.at(verb);
        auto &human = common.human(s.out, s.err);
        if (collector_opt->count())
        {
            return remote(verb, env, s, human);
        }
        if (!events_opt->count())
        {
            throw PreconditionError("pass --events FILE or --collector URL");
        }
        auto cat = catalog_opt->count() ? rules::load_catalog(catalog) : rules::default_catalog();
        auto log = fs::exists(events) ? rules::read_event_log(events) : std::vector<rules::Event> {};
        if (verb == status_cmd && !fs::exists(events))
        {
            throw IoError(fmt::format("event log '{}' does not exist", events));
        }
        rules::Engine engine(cat);
        std::vector<rules::ActionEffect> effects;
        for (const auto &e : log)
        {
            auto fx = engine.apply(e);
            effects.insert(effects.end(), fx.begin(), fx.end());
        }
        Json extra = Json::object();
        if (verb == release_cmd)
        {
            std::int64_t when = at_opt->count() ? at : collector::system_now_ms();
            if (!log.empty())
            {
                when = std::max(when, log.back().timestamp_ms);
            }
            rules::Event ev {rules::EventKind::Release, node, when, {}};
            auto fx = engine.apply(ev);
            rules::append_event_log(events, {ev});
            Json arr = Json::array();
            for (const auto &f : fx)
            {
                arr.push_back(collector::encode(f));
            }
            extra["released"] = node;
            extra["effects"]  = arr;
            fmt::print(human, "released {} at {}\n", node, when);
        }
        if (verb == replay_cmd)
        {
            extra["events"] = log.size();
            Json arr        = Json::array();
            for (const auto &f : effects)
            {
                arr.push_back(collector::encode(f));
            }
            extra["effects"] = arr;
            fmt::print(human, "replayed {} event(s), {} effect(s)\n", log.size(), effects.size());
        }
        auto drained = engine.drain_list();
        if (drain_opt->count() && verb != status_cmd)
        {
            rules::write_drain_list(drained, drain_list);
        }
        std::vector<std::string> dl(drained.begin(), drained.end());
        Json nodes = Json::array();
        for (const auto &[n, r] : engine.records())
        {
            nodes.push_back(collector::encode(r));
            std::size_t failures = r.failure_events.size();
            fmt::print(human, "{:<12} {:<9} failures {:<4} recovery attempts {}\n", n, to_string(r.state), failures, r.recovery_attempts);
        }
        fmt::print(human, "drain list: {}\n", dl.empty() ? "(empty)" : hostlist::compress(dl));
        if (common.json)
        {
            Json j = {{"nodes", nodes}, {"drain_list", hostlist::compress(dl)}};
            j.update(extra);
            print_json(s.out, j);
        }
        return 0;
    }

    int remote(CLI::App *verb, const executor::Environment &env, Streams s, std::ostream &human) const
    {
        auto tok = token.empty() ? env_get(env, "VETGATE_REPORT_TOKEN").value_or("") : token;
        collector::CollectorClient client(collector_url, tok);
        if (verb == release_cmd)
        {
            auto state = client.release(node, at_opt->count() ? std::optional(at) : std::nullopt);
            fmt::print(human, "{} is now {}\n", node, to_string(state));
            if (common.json)
            {
                print_json(s.out, {{"node", node}, {"state", std::string(to_string(state))}});
            }
            return 0;
        }
        if (verb == replay_cmd)
        {
            throw PreconditionError("replay works on a local event log; the collector replays its own log at startup");
        }
        auto fleet = client.fleet({}, at_opt->count() ? std::optional(at) : std::nullopt);
        Json nodes = Json::array();
        std::vector<std::string> drained;
        for (const auto &e : fleet)
        {
            nodes.push_back(collector::encode(e));
            if (e.state == rules::NodeState::Drained)
            {
                drained.push_back(e.node);
            }
            fmt::print(human, "{:<12} {:<9} failures(24h) {:<4} last {}\n", e.node, to_string(e.state), e.failures_24h, e.last_health);
        }
        fmt::print(human, "drain list: {}\n", drained.empty() ? "(empty)" : hostlist::compress(drained));
        if (common.json)
        {
            print_json(s.out, {{"nodes", nodes}, {"drain_list", hostlist::compress(drained)}});
        }
        return 0;
    }
};

struct ServeCmd
{
    Common common;
    std::string config;
    CLI::App *cmd = nullptr;

    void add(CLI::App *parent)
    {
        parent->require_subcommand(1);
        cmd = parent->add_subcommand("serve", "Run the opt-in report collector");
        cmd->add_option("--config", config, "Collector config (listen, data_dir, token_file, retention_days, catalog, drain_list)")->required();
        cmd->add_flag("--json", common.json, "Print the bound address as JSON on stdout");
    }

    int run(Streams s) const
    {
        auto cfg = collector::ServiceConfig::load(config);
        auto cat = cfg.catalog ? rules::load_catalog(*cfg.catalog) : rules::default_catalog();
        collector::FileStore store(cfg.data_dir, cat);
        auto prune = [&] {
            if (cfg.retention_days <= 0)
            {
                return;
            }
            auto cutoff = collector::system_now_ms() - static_cast<std::int64_t>(cfg.retention_days) * 86400000;
            if (auto n = store.prune_before(cutoff))
            {
                fmt::print(s.err, "pruned {} report(s) older than {} day(s)\n", n, cfg.retention_days);
            }
        };
        prune();
        auto tokens = collector::load_tokens(cfg.token_file);
        collector::SideEffectOptions fx {cfg.drain_list, cfg.data_dir / "tickets.log", cat.ticket_webhook};
        if (cfg.drain_list)
        {
            rules::write_drain_list(store.drain_list(), *cfg.drain_list);
        }
        collector::CollectorServer server(store, tokens, fx);
        int port = server.start(cfg.host, cfg.port);
        fmt::print(s.err, "collector listening on {}:{} with {} stored report(s)\n", cfg.host, port, store.size());
        if (common.json)
        {
            print_json(s.out, {{"host", cfg.host}, {"port", port}, {"stored", store.size()}});
        }
        s.err.flush();
        auto &sig = stop_signal();
        {
            std::unique_lock lock(sig.mutex);
            while (!sig.requested)
            {
                if (!sig.cv.wait_for(lock, std::chrono::hours(1), [&] { return sig.requested; }))
                {
                    lock.unlock();
                    prune();
                    lock.lock();
                }
            }
            sig.requested = false;
        }
        server.stop();
        fmt::print(s.err, "collector stopped\n");
        return 0;
    }
};

struct AgentCmd
{
    Common common;
    PathFlags paths;
    std::string coordinator;
    std::string node;
    std::string fixture;
    std::string advertise;
    std::string ring_bind = "0.0.0.0";
    double connect_timeout = 60.0;
    double run_timeout     = 600.0;
    std::uint64_t seed     = 0;

    void add(CLI::App &app)
    {
        auto *sub = app.add_subcommand("agent", "Run the per-node agent of a tcp vetting round");
        sub->add_option("--coordinator", coordinator, "Coordinator address, HOST:PORT")->required();
        sub->add_option("--node", node, "Node name (default: SLURMD_NODENAME or the hostname)");
        sub->add_option("--fixture", fixture, "Serve this fixture instead of querying nvidia-smi");
        sub->add_option("--advertise", advertise, "Address other ranks use to reach this node");
        sub->add_option("--ring-bind", ring_bind, "Bind address of the ring listener")->capture_default_str();
        sub->add_option("--connect-timeout", connect_timeout, "Seconds to keep retrying the coordinator")->capture_default_str();
        sub->add_option("--run-timeout", run_timeout, "Seconds to wait for the protocol")->capture_default_str();
        sub->add_option("--seed", seed, "Noise seed for --fixture")->capture_default_str();
        common.add(sub);
        paths.add(sub, true);
    }

    int run(const executor::Environment &env, Streams s) const
    {
        auto c = resolve_config(env, common.config_path());
        paths.apply(c);
        auto [host, port] = parse_host_port(coordinator, "--coordinator");
        net::AgentOptions o;
        o.coordinator_host  = host;
        o.coordinator_port  = port;
        o.node              = node.empty() ? hostname_or(env) : node;
        o.ring_bind         = ring_bind;
        o.advertise_host    = advertise;
        o.connect_timeout_s = connect_timeout;
        o.run_timeout_s     = run_timeout;
        auto manifest       = manifest_of(c, s.err);
        std::unique_ptr<probe::Probe> probe;
        if (!fixture.empty())
        {
            auto set = fixtures_of(c);
            probe    = std::make_unique<probe::SimulatedProbe>(std::vector<probe::SimulatedNode> {{o.node, set.get(fixture)}}, seed);
        }
        else
        {
            probe = std::make_unique<probe::NvidiaSmiProbe>(o.node);
        }
        auto report = net::run_agent(o, *probe, manifest);
        auto &human = common.human(s.out, s.err);
        fmt::print(human, "{}: sent {} result(s) to {}:{}\n", o.node, report.results.size(), host, port);
        for (const auto &r : report.results)
        {
            fmt::print(human, "  {:<24} {}\n", r.eval_name, to_string(r.status));
        }
        if (common.json)
        {
            print_json(s.out, codec::encode(report));
        }
        return 0;
    }
};

std::string personality(const std::string &argv0)
{
    auto base = fs::path(argv0).filename().string();
    if (base == "vetgate-rules" || base == "vetgate-collector")
    {
        return base;
    }
    return "vetgate";
}

/// Every subcommand down to the leaves; CLI11's "all" mode stops one level deep.
std::string full_help(const CLI::App &app)
{
    std::string text = app.help("", CLI::AppFormatMode::All);
    for (const auto *sub : app.get_subcommands({}))
    {
        for (const auto *leaf : sub->get_subcommands({}))
        {
            text += "\n" + leaf->help(app.get_name() + " " + sub->get_name());
        }
    }
    return text;
}

int dispatch_error(const std::exception &e, bool json, std::ostream &out, std::ostream &err)
{
    const auto *ve = dynamic_cast<const Error *>(&e);
    std::string kind = ve ? ve->kind() : "Error";
    if (json)
    {
        print_json(out, error_json(e));
    }
    err << "error: " << kind << ": " << e.what() << '\n';
    if (ve && !is_runtime_error(kind))
    {
        return executor::kExitUsage;
    }
    return executor::kExitRuntime;
}

} // namespace

// ---- public API -----------------------------------------------------------

void CliConfig::validate() const
{
    if (!std::isfinite(max_exclusion_fraction) || max_exclusion_fraction < 0.0 || max_exclusion_fraction > 1.0)
    {
        throw PreconditionError(fmt::format("max_exclusion_fraction must be in [0, 1] (got {})", max_exclusion_fraction));
    }
    if (!std::isfinite(deadline_s) || deadline_s <= 0.0)
    {
        throw PreconditionError(fmt::format("deadline must be positive (got {})", deadline_s));
    }
    if (min_nodes && *min_nodes < 1)
    {
        throw PreconditionError(fmt::format("min_nodes must be at least 1 (got {})", *min_nodes));
    }
}

CliConfig load_config_file(const fs::path &path)
{
    auto root = yaml::load(yaml::read_file(path));
    auto c    = defaults();
    if (root.IsNull())
    {
        return c;
    }
    if (!root.IsMap())
    {
        throw SyntaxError(fmt::format("{}: config must be a mapping", path.string()), 1, 1);
    }
    auto base    = path.parent_path();
    auto resolve = [&](const std::string &p) {
        fs::path fp(p);
        return fp.is_absolute() ? fp : base / fp;
    };
    for (const auto &key : yaml::keys(root, "config"))
    {
        const auto v = root[key];
        if (key == "fixtures")
        {
            c.fixtures_dir = resolve(yaml::require_string(v, key));
        }
        else if (key == "manifest")
        {
            c.manifest = resolve(yaml::require_string(v, key));
        }
        else if (key == "report_url")
        {
            c.report_url = yaml::require_string(v, key);
        }
        else if (key == "report_token")
        {
            c.report_token = yaml::require_string(v, key);
        }
        else if (key == "nodelist_var")
        {
            c.nodelist_var = yaml::require_string(v, key);
        }
        else if (key == "jobid_var")
        {
            c.jobid_var = yaml::require_string(v, key);
        }
        else if (key == "policy")
        {
            if (!v.IsMap())
            {
                throw SyntaxError(fmt::format("{}: policy must be a mapping {}", path.string(), yaml::where(v)), 0, 0);
            }
            for (const auto &pk : yaml::keys(v, "policy"))
            {
                const auto pv = v[pk];
                if (pk == "flexible")
                {
                    c.flexible = yaml::require_bool(pv, pk);
                }
                else if (pk == "min_nodes")
                {
                    c.min_nodes = static_cast<int>(yaml::require_integer(pv, pk));
                }
                else if (pk == "max_exclusion_fraction")
                {
                    c.max_exclusion_fraction = yaml::require_number(pv, pk);
                }
                else if (pk == "deadline")
                {
                    c.deadline_s = yaml::require_number(pv, pk);
                }
                else if (pk == "treat_unknown_as")
                {
                    c.treat_unknown_as = parse_unknown(yaml::require_string(pv, pk));
                }
                else if (pk == "strict")
                {
                    c.strict = yaml::require_bool(pv, pk);
                }
                else
                {
                    throw SyntaxError(fmt::format("{}: unknown policy key '{}'", path.string(), pk), 0, 0);
                }
                set_origin(c, "policy." + pk, "config");
            }
            continue;
        }
        else
        {
            throw SyntaxError(fmt::format("{}: unknown config key '{}'", path.string(), key), 0, 0);
        }
        set_origin(c, key, "config");
    }
    c.validate();
    return c;
}

CliConfig resolve_config(const executor::Environment &env, const std::optional<fs::path> &config_flag)
{
    std::optional<fs::path> file = config_flag;
    if (!file)
    {
        if (auto p = env_get(env, "VETGATE_CONFIG"))
        {
            file = *p;
        }
    }
    auto c = file ? load_config_file(*file) : defaults();
    auto from_env = [&](std::string_view var, const std::string &key, auto &&assign) {
        if (auto v = env_get(env, var))
        {
            assign(*v);
            set_origin(c, key, "env");
        }
    };
    from_env("VETGATE_FIXTURES", "fixtures", [&](const std::string &v) { c.fixtures_dir = v; });
    from_env("VETGATE_MANIFEST", "manifest", [&](const std::string &v) { c.manifest = v; });
    from_env("VETGATE_REPORT_URL", "report_url", [&](const std::string &v) { c.report_url = v; });
    from_env("VETGATE_REPORT_TOKEN", "report_token", [&](const std::string &v) { c.report_token = v; });
    from_env("VETGATE_NODELIST_VAR", "nodelist_var", [&](const std::string &v) { c.nodelist_var = v; });
    from_env("VETGATE_JOBID_VAR", "jobid_var", [&](const std::string &v) { c.jobid_var = v; });
    return c;
}

void request_stop()
{
    auto &sig = stop_signal();
    {
        std::lock_guard lock(sig.mutex);
        sig.requested = true;
    }
    sig.cv.notify_all();
}

int run(const std::vector<std::string> &args, const executor::Environment &env, std::ostream &out, std::ostream &err)
{
    const auto who = personality(args.empty() ? std::string("vetgate") : args.front());
    CLI::App app {"GPU node vetting: protocol checks, saturation scoring, node health rules", who};
    app.set_help_all_flag("--help-all", "Help for every subcommand");
    app.set_version_flag("--version", "vetgate " VETGATE_VERSION);
    app.require_subcommand(1);
    app.fallthrough(false);

    ValidateCmd validate;
    ExplainCmd explain;
    ConfigCmd config;
    RunCmd run_cmd;
    ScoreCmd score;
    SimCmd sim_cmd;
    AgentCmd agent;
    RulesCmd rules_cmd;
    ServeCmd serve;
    CLI::App *rules_app     = nullptr;
    CLI::App *collector_app = nullptr;

    if (who == "vetgate-rules")
    {
        app.description("Operator verbs for node health rules");
        rules_cmd.add(&app);
    }
    else if (who == "vetgate-collector")
    {
        app.description("Opt-in collector for vetting outcomes");
        serve.add(&app);
    }
    else
    {
        validate.add(app);
        explain.add(app);
        config.add(app);
        run_cmd.add(app);
        score.add(app);
        sim_cmd.add(app);
        agent.add(app);
        rules_app = app.add_subcommand("rules", "Operator verbs: status, release NODE, replay");
        rules_cmd.add(rules_app);
        collector_app = app.add_subcommand("collector", "Opt-in report collector");
        serve.add(collector_app);
    }
    app.footer("Exit codes: 0 continue/ok, 2 usage, 3 continue excluding nodes, 4 abort, 1 runtime failure.\n"
               "Precedence: flags > VETGATE_* environment > config file (--config / VETGATE_CONFIG) > defaults.");

    std::vector<const char *> argv;
    argv.push_back(args.empty() ? "vetgate" : args.front().c_str());
    for (std::size_t i = 1; i < args.size(); ++i)
    {
        argv.push_back(args[i].c_str());
    }
    try
    {
        app.parse(static_cast<int>(argv.size()), argv.data());
    }
    catch (const CLI::CallForHelp &)
    {
        // Top-level help lists every subcommand's flags.
        if (app.get_subcommands().empty())
        {
            out << full_help(app);
        }
        else
        {
            const CLI::App *leaf = &app;
            while (!leaf->get_subcommands().empty())
            {
                leaf = leaf->get_subcommands().front();
            }
            out << leaf->help();
        }
        return 0;
    }
    catch (const CLI::CallForAllHelp &)
    {
        out << full_help(app);
        return 0;
    }
    catch (const CLI::CallForVersion &)
    {
        out << "vetgate " << VETGATE_VERSION << '\n';
        return 0;
    }
    catch (const CLI::ParseError &e)
    {
        err << "error: " << e.what() << '\n';
        err << "run with --help for usage\n";
        return executor::kExitUsage;
    }

    bool json = false;
    for (const auto *c : {&validate.common, &explain.common, &config.common, &run_cmd.common, &score.common, &sim_cmd.common, &agent.common,
                          &rules_cmd.common, &serve.common})
    {
        json = json || c->json;
    }
    Streams s {out, err};
    try
    {
        auto parsed = [&](std::string_view name) {
            auto *sub = app.get_subcommand_ptr(std::string(name)).get();
            return sub && sub->parsed();
        };
        if (who == "vetgate-rules" || (rules_app && rules_app->parsed()))
        {
            return rules_cmd.run(env, s);
        }
        if (who == "vetgate-collector" || (collector_app && collector_app->parsed()))
        {
            return serve.run(s);
        }
        if (parsed("validate"))
        {
            return validate.run(s);
        }
        if (parsed("explain"))
        {
            return explain.run(s);
        }
        if (parsed("config"))
        {
            return config.run(env, s);
        }
        if (parsed("run"))
        {
            return run_cmd.run(env, s);
        }
        if (parsed("score"))
        {
            return score.run(env, s);
        }
        if (parsed("sim"))
        {
            return sim_cmd.run(env, s);
        }
        if (parsed("agent"))
        {
            return agent.run(env, s);
        }
    }
    catch (const std::exception &e)
    {
        return dispatch_error(e, json, out, err);
    }
    err << "error: no subcommand\n";
    return executor::kExitUsage;
}

} // namespace vetgate::cli
