/*
 * Copyright (c) 2026, The vetgate Authors.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#include <vetgate/collector.hpp>
#include <vetgate/hostlist.hpp>

#include "yaml_util.hpp"

#include <fmt/format.h>

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>

namespace vetgate::collector
{

namespace
{

constexpr std::int64_t kDayMs = 24LL * 3600 * 1000;

void insert_sorted(std::vector<HistoryEntry> &list, HistoryEntry entry)
{
    auto pos = std::upper_bound(list.begin(), list.end(), entry.timestamp_ms,
                                [](std::int64_t t, const HistoryEntry &e) { return t < e.timestamp_ms; });
    list.insert(pos, std::move(entry));
}

std::vector<std::pair<std::string, HistoryEntry>> entries_of(const ReportEnvelope &envelope)
{
    std::vector<std::pair<std::string, HistoryEntry>> out;
    for (const auto &r : envelope.reports)
    {
        auto ts = r.finished_ms > 0 ? r.finished_ms : envelope.submitted_at_ms;
        if (r.agent_status != executor::AgentStatus::Reported)
        {
            out.push_back({r.node, {ts, "agent", std::string(executor::to_string(r.agent_status))}});
            continue;
        }
        for (const auto &e : r.results)
        {
            out.push_back({r.node, {ts, e.eval_name, std::string(evaluations::to_string(e.status))}});
        }
    }
    return out;
}

std::string errno_text()
{
    return std::strerror(errno);
}

} // namespace

codec::Json encode(const ReportEnvelope &envelope)
{
    codec::Json reports = codec::Json::array();
    for (const auto &r : envelope.reports)
    {
        reports.push_back(codec::encode(r));
    }
    return codec::Json {{"schema_version", envelope.schema_version},
                        {"submitted_at_ms", envelope.submitted_at_ms},
                        {"submitter", envelope.submitter},
                        {"job_context", codec::encode(envelope.job_context)},
                        {"verdict", codec::encode(envelope.verdict)},
                        {"reports", reports}};
}

ReportEnvelope decode_envelope(const codec::Json &j)
{
    try
    {
        if (!j.is_object())
        {
            throw SchemaMismatch("envelope must be a JSON object");
        }
        ReportEnvelope e;
        if (!j.contains("schema_version") || !j["schema_version"].is_number_integer())
        {
            throw SchemaMismatch("envelope has no integer schema_version");
        }
        e.schema_version = j["schema_version"].get<int>();
        if (e.schema_version != kSchemaVersion)
        {
            throw SchemaMismatch(fmt::format("unsupported schema_version {} (expected {})", e.schema_version, kSchemaVersion));
        }
        if (!j.contains("submitted_at_ms") || !j["submitted_at_ms"].is_number_integer())
        {
            throw SchemaMismatch("envelope has no integer submitted_at_ms");
        }
        e.submitted_at_ms = j["submitted_at_ms"].get<std::int64_t>();
        if (j.contains("submitter"))
        {
            if (!j["submitter"].is_string())
            {
                throw SchemaMismatch("'submitter' must be a string");
            }
            e.submitter = j["submitter"].get<std::string>();
        }
        if (!j.contains("job_context") || !j.contains("verdict") || !j.contains("reports") || !j["reports"].is_array())
        {
            throw SchemaMismatch("envelope needs job_context, verdict and a reports array");
        }
        e.job_context = codec::decode_job_context(j["job_context"]);
        e.verdict     = codec::decode_verdict(j["verdict"]);
        for (const auto &r : j["reports"])
        {
            e.reports.push_back(codec::decode_node_report(r));
        }
        return e;
    }
    catch (const codec::DecodeError &err)
    {
        throw SchemaMismatch(err.what());
    }
}

void validate(const ReportEnvelope &envelope)
{
    if (envelope.schema_version != kSchemaVersion)
    {
        throw SchemaMismatch(fmt::format("unsupported schema_version {}", envelope.schema_version));
    }
    const auto &ctx = envelope.job_context;
    if (ctx.job_id.empty())
    {
        throw SchemaMismatch("job_context has no job id");
    }
    std::set<std::string> nodes(ctx.nodes.begin(), ctx.nodes.end());
    if (nodes.empty() || nodes.size() != ctx.nodes.size())
    {
        throw SchemaMismatch("job_context node list is empty or repeats a node");
    }
    std::set<std::string> seen;
    for (const auto &r : envelope.reports)
    {
        if (!nodes.contains(r.node))
        {
            throw SchemaMismatch(fmt::format("report for '{}' which is not in job {}", r.node, ctx.job_id));
        }
        if (!seen.insert(r.node).second)
        {
            throw SchemaMismatch(fmt::format("two reports for '{}'", r.node));
        }
        if (r.agent_status != executor::AgentStatus::Reported && !r.results.empty())
        {
            throw SchemaMismatch(fmt::format("'{}' carries results without having reported", r.node));
        }
    }
    for (const auto &[node, nv] : envelope.verdict.per_node)
    {
        (void)nv;
        if (!nodes.contains(node))
        {
            throw SchemaMismatch(fmt::format("verdict names '{}' which is not in job {}", node, ctx.job_id));
        }
    }
    for (const auto &node : envelope.verdict.excluded)
    {
        if (!nodes.contains(node))
        {
            throw SchemaMismatch(fmt::format("verdict excludes '{}' which is not in job {}", node, ctx.job_id));
        }
    }
}

Store::Store(rules::Catalog catalog)
    : m_catalog(std::move(catalog))
    , m_engine(m_catalog)
{}

std::string Store::canonical_form(const ReportEnvelope &envelope)
{
    return codec::dump(encode(envelope));
}

std::vector<rules::ActionEffect> Store::feed_rules(const ReportEnvelope &envelope)
{
    std::vector<rules::ActionEffect> effects;
    for (const auto &event : rules::events_from_round(envelope.verdict, envelope.reports, envelope.submitted_at_ms))
    {
        try
        {
            auto e = m_engine.apply(event);
            effects.insert(effects.end(), e.begin(), e.end());
        }
        catch (const rules::OutOfOrderEvent &)
        {
            // A late submission cannot rewrite a node's history.
            ++m_skipped_events;
        }
    }
    return effects;
}

void Store::index(Entry entry)
{
    for (auto &[node, h] : entries_of(entry.envelope))
    {
        insert_sorted(m_history[node], std::move(h));
    }
    auto &seq = m_next_seq[entry.key.job_id];
    seq       = std::max(seq, entry.key.seq + 1);
    m_by_job[entry.key.job_id].push_back(m_entries.size());
    m_entries.push_back(std::move(entry));
}

IngestResult Store::ingest(const ReportEnvelope &envelope)
{
    validate(envelope);
    auto canonical = canonical_form(envelope);

    std::unique_lock lock(m_mutex);
    const auto &job = envelope.job_context.job_id;
    if (auto it = m_by_job.find(job); it != m_by_job.end())
    {
        for (auto idx : it->second)
        {
            if (m_entries[idx].canonical == canonical)
            {
                return {m_entries[idx].key, true, {}};
            }
        }
    }
    auto [seq_it, fresh] = m_next_seq.try_emplace(job, 1);
    (void)fresh;
    Entry entry {{job, seq_it->second}, std::move(canonical), envelope};
    persist_report(entry);
    auto key     = entry.key;
    auto effects = feed_rules(entry.envelope);
    index(std::move(entry));
    return {key, false, std::move(effects)};
}

void Store::restore_report(Entry entry)
{
    feed_rules(entry.envelope);
    index(std::move(entry));
}

void Store::restore_release(const std::string &node, std::int64_t at_ms)
{
    try
    {
        m_engine.apply({rules::EventKind::Release, node, at_ms, {}});
    }
    catch (const rules::OutOfOrderEvent &)
    {
        ++m_skipped_events;
    }
}

void Store::restore_tombstone(const std::string &job_id, std::int64_t seq)
{
    auto &next = m_next_seq[job_id];
    next       = std::max(next, seq + 1);
}

void Store::clear_index()
{
    m_entries.clear();
    m_history.clear();
    m_by_job.clear();
    m_next_seq.clear();
    m_engine         = rules::Engine(m_catalog);
    m_skipped_events = 0;
}

std::vector<rules::ActionEffect> Store::release(const std::string &node, std::int64_t at_ms)
{
    std::unique_lock lock(m_mutex);
    // A release stamped before the node's newest event (clock drift between
    // submitters and the service) takes effect at that event instead.
    at_ms               = std::max(at_ms, m_engine.last_event_ms(node).value_or(at_ms));
    rules::Engine probe = m_engine;
    auto effects        = probe.apply({rules::EventKind::Release, node, at_ms, {}});
    persist_release(node, at_ms);
    m_engine = std::move(probe);
    return effects;
}

std::vector<HistoryEntry> Store::query_node_history(const std::string &node, std::int64_t from_ms, std::int64_t to_ms) const
{
    std::shared_lock lock(m_mutex);
    std::vector<HistoryEntry> out;
    auto it = m_history.find(node);
    if (it == m_history.end())
    {
        return out;
    }
    for (const auto &e : it->second)
    {
        if (e.timestamp_ms >= from_ms && e.timestamp_ms <= to_ms)
        {
            out.push_back(e);
        }
    }
    return out;
}

std::vector<FleetEntry> Store::query_fleet(const FleetFilter &filter, std::int64_t now_ms) const
{
    std::shared_lock lock(m_mutex);
    std::map<std::string, FleetEntry> fleet;
    for (const auto &entry : m_entries)
    {
        const auto &v = entry.envelope.verdict;
        for (const auto &r : entry.envelope.reports)
        {
            auto &f = fleet[r.node];
            f.node  = r.node;
            if (auto it = v.per_node.find(r.node); it != v.per_node.end())
            {
                f.last_health = std::string(executor::to_string(it->second.health));
            }
            f.last_decision = std::string(executor::to_string(v.decision));
        }
    }
    for (const auto &[node, record] : m_engine.records())
    {
        auto &f = fleet[node];
        f.node  = node;
        f.state = record.state;
    }
    std::vector<std::string> names;
    for (auto &[node, f] : fleet)
    {
        if (auto it = m_history.find(node); it != m_history.end())
        {
            f.failures_24h = static_cast<int>(std::count_if(it->second.begin(), it->second.end(), [&](const HistoryEntry &h) {
                return h.status == "Fail" && h.timestamp_ms >= now_ms - kDayMs && h.timestamp_ms <= now_ms;
            }));
        }
        names.push_back(node);
    }
    std::vector<FleetEntry> out;
    for (const auto &node : hostlist::canonical_order(names))
    {
        const auto &f = fleet.at(node);
        if (filter.state && f.state != *filter.state)
        {
            continue;
        }
        if (filter.min_failures && f.failures_24h < *filter.min_failures)
        {
            continue;
        }
        out.push_back(f);
    }
    return out;
}

std::set<std::string> Store::drain_list() const
{
    std::shared_lock lock(m_mutex);
    return m_engine.drain_list();
}

std::map<std::string, rules::NodeHealthRecord> Store::rule_records() const
{
    std::shared_lock lock(m_mutex);
    return m_engine.records();
}

std::vector<std::pair<StoredReportKey, ReportEnvelope>> Store::envelopes() const
{
    std::shared_lock lock(m_mutex);
    std::vector<std::pair<StoredReportKey, ReportEnvelope>> out;
    for (const auto &e : m_entries)
    {
        out.emplace_back(e.key, e.envelope);
    }
    return out;
}

std::size_t Store::size() const
{
    std::shared_lock lock(m_mutex);
    return m_entries.size();
}

FileStore::FileStore(std::filesystem::path dir, rules::Catalog catalog)
    : Store(std::move(catalog))
    , m_dir(std::move(dir))
    , m_log(m_dir / "reports.log")
{
    std::error_code ec;
    std::filesystem::create_directories(m_dir, ec);
    if (ec)
    {
        throw StorageFailure(fmt::format("cannot create data directory '{}': {}", m_dir.string(), ec.message()));
    }
    load();
    m_fd = ::open(m_log.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (m_fd < 0)
    {
        throw StorageFailure(fmt::format("cannot open '{}': {}", m_log.string(), errno_text()));
    }
}

FileStore::~FileStore()
{
    if (m_fd >= 0)
    {
        ::close(m_fd);
    }
}

void FileStore::load()
{
    std::unique_lock lock(m_mutex);
    clear_index();
    std::ifstream in(m_log);
    if (!in)
    {
        return;
    }
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line))
    {
        ++number;
        if (line.empty())
        {
            continue;
        }
        codec::Json j;
        try
        {
            j = codec::parse(line);
        }
        catch (const codec::DecodeError &)
        {
            if (in.peek() == std::char_traits<char>::eof())
            {
                // Torn final write from a crash before the ack; never acknowledged.
                break;
            }
            throw StorageFailure(fmt::format("{}:{}: corrupt record", m_log.string(), number));
        }
        try
        {
            auto type = j.at("type").get<std::string>();
            if (type == "report")
            {
                auto envelope = decode_envelope(j.at("envelope"));
                Entry entry {{j.at("job_id").get<std::string>(), j.at("seq").get<std::int64_t>()},
                             canonical_form(envelope), std::move(envelope)};
                restore_report(std::move(entry));
            }
            else if (type == "release")
            {
                restore_release(j.at("node").get<std::string>(), j.at("at_ms").get<std::int64_t>());
            }
            else if (type == "tombstone")
            {
                restore_tombstone(j.at("job_id").get<std::string>(), j.at("seq").get<std::int64_t>());
            }
            else
            {
                throw StorageFailure(fmt::format("{}:{}: unknown record type '{}'", m_log.string(), number, type));
            }
        }
        catch (const codec::Json::exception &e)
        {
            throw StorageFailure(fmt::format("{}:{}: {}", m_log.string(), number, e.what()));
        }
        catch (const SchemaMismatch &e)
        {
            throw StorageFailure(fmt::format("{}:{}: {}", m_log.string(), number, e.what()));
        }
    }
}

void FileStore::append_line(const std::string &line)
{
    std::string data = line + "\n";
    const char *p    = data.data();
    std::size_t left = data.size();
    while (left > 0)
    {
        auto n = ::write(m_fd, p, left);
        if (n < 0)
        {
            if (errno == EINTR)
            {
                continue;
            }
            throw StorageFailure(fmt::format("write to '{}' failed: {}", m_log.string(), errno_text()));
        }
        p += n;
        left -= static_cast<std::size_t>(n);
    }
    if (::fsync(m_fd) != 0)
    {
        throw StorageFailure(fmt::format("fsync of '{}' failed: {}", m_log.string(), errno_text()));
    }
}

void FileStore::persist_report(const Entry &entry)
{
    codec::Json j {{"type", "report"}, {"job_id", entry.key.job_id}, {"seq", entry.key.seq}, {"envelope", codec::parse(entry.canonical)}};
    append_line(codec::dump(j));
}

void FileStore::persist_release(const std::string &node, std::int64_t at_ms)
{
    append_line(codec::dump(codec::Json {{"type", "release"}, {"node", node}, {"at_ms", at_ms}}));
}

std::size_t FileStore::prune_before(std::int64_t cutoff_ms)
{
    std::vector<std::string> kept;
    std::map<std::string, std::int64_t> tombstones;
    std::size_t removed = 0;
    {
        std::unique_lock lock(m_mutex);
        std::ifstream in(m_log);
        std::string line;
        while (std::getline(in, line))
        {
            if (line.empty())
            {
                continue;
            }
            auto j = codec::parse(line);
            if (j.value("type", "") == "report" && j["envelope"].value("submitted_at_ms", std::int64_t {0}) < cutoff_ms)
            {
                auto &t = tombstones[j["job_id"].get<std::string>()];
                t       = std::max(t, j["seq"].get<std::int64_t>());
                ++removed;
                continue;
            }
            if (j.value("type", "") == "tombstone")
            {
                auto &t = tombstones[j["job_id"].get<std::string>()];
                t       = std::max(t, j["seq"].get<std::int64_t>());
                continue;
            }
            kept.push_back(line);
        }
        if (removed == 0)
        {
            return 0;
        }
        auto tmp = m_log;
        tmp += ".tmp";
        {
            std::ofstream out(tmp, std::ios::trunc);
            for (const auto &[job, seq] : tombstones)
            {
                out << codec::dump(codec::Json {{"type", "tombstone"}, {"job_id", job}, {"seq", seq}}) << '\n';
            }
            for (const auto &l : kept)
            {
                out << l << '\n';
            }
            out.flush();
            if (!out)
            {
                throw StorageFailure(fmt::format("cannot rewrite '{}'", tmp.string()));
            }
        }
        int fd = ::open(tmp.c_str(), O_RDONLY | O_CLOEXEC);
        if (fd >= 0)
        {
            ::fsync(fd);
            ::close(fd);
        }
        std::error_code ec;
        std::filesystem::rename(tmp, m_log, ec);
        if (ec)
        {
            throw StorageFailure(fmt::format("cannot replace '{}': {}", m_log.string(), ec.message()));
        }
        ::close(m_fd);
        m_fd = ::open(m_log.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
        if (m_fd < 0)
        {
            throw StorageFailure(fmt::format("cannot reopen '{}': {}", m_log.string(), errno_text()));
        }
    }
    load();
    return removed;
}

std::vector<HistoryEntry> history_from_envelopes(const std::vector<ReportEnvelope> &envelopes,
                                                 const std::string &node,
                                                 std::int64_t from_ms,
                                                 std::int64_t to_ms)
{
    std::vector<HistoryEntry> out;
    for (const auto &env : envelopes)
    {
        for (auto &[n, h] : entries_of(env))
        {
            if (n == node && h.timestamp_ms >= from_ms && h.timestamp_ms <= to_ms)
            {
                out.push_back(std::move(h));
            }
        }
    }
    std::stable_sort(out.begin(), out.end(), [](const HistoryEntry &a, const HistoryEntry &b) { return a.timestamp_ms < b.timestamp_ms; });
    return out;
}

codec::Json encode(const HistoryEntry &entry)
{
    return codec::Json {{"timestamp_ms", entry.timestamp_ms}, {"eval_name", entry.eval_name}, {"status", entry.status}};
}

codec::Json encode(const FleetEntry &entry)
{
    return codec::Json {{"node", entry.node},
                        {"state", rules::to_string(entry.state)},
                        {"last_health", entry.last_health},
                        {"last_decision", entry.last_decision},
                        {"failures_24h", entry.failures_24h}};
}

codec::Json encode(const StoredReportKey &key)
{
    return codec::Json {{"job_id", key.job_id}, {"seq", key.seq}};
}

codec::Json encode(const rules::ActionEffect &effect)
{
    return codec::Json {{"node", effect.node},
                        {"kind", rules::to_string(effect.kind)},
                        {"action", effect.action ? codec::Json(rules::to_string(*effect.action)) : codec::Json(nullptr)},
                        {"rule", effect.rule},
                        {"state", rules::to_string(effect.resulting_state)},
                        {"detail", effect.detail},
                        {"timestamp_ms", effect.timestamp_ms}};
}

codec::Json encode(const rules::NodeHealthRecord &record)
{
    codec::Json failures = codec::Json::array();
    for (const auto &f : record.failure_events)
    {
        failures.push_back({{"timestamp_ms", f.timestamp_ms}, {"evals", f.evals}});
    }
    return codec::Json {{"node", record.node},
                        {"state", rules::to_string(record.state)},
                        {"recovery_attempts", record.recovery_attempts},
                        {"last_transition_ms", record.last_transition_ms},
                        {"failures", failures}};
}

ServiceConfig ServiceConfig::load(const std::filesystem::path &path)
{
    auto root = yaml::load(yaml::read_file(path));
    if (!root.IsMap())
    {
        throw SyntaxError(fmt::format("{}: collector config must be a mapping", path.string()), 1, 1);
    }
    auto base    = path.parent_path();
    auto resolve = [&](const std::string &p) {
        std::filesystem::path fp(p);
        return fp.is_absolute() ? fp : base / fp;
    };
    ServiceConfig c;
    bool have_dir = false;
    for (const auto &key : yaml::keys(root, "collector config"))
    {
        const auto v = root[key];
        if (key == "listen")
        {
            auto text  = yaml::require_string(v, key);
            auto colon = text.rfind(':');
            if (colon == std::string::npos)
            {
                throw SyntaxError(fmt::format("listen must be host:port (got '{}')", text), 0, 0);
            }
            c.host = text.substr(0, colon);
            try
            {
                c.port = std::stoi(text.substr(colon + 1));
            }
            catch (const std::exception &)
            {
                throw SyntaxError(fmt::format("listen must be host:port (got '{}')", text), 0, 0);
            }
            if (c.port < 0 || c.port > 65535)
            {
                throw SyntaxError(fmt::format("port out of range in '{}'", text), 0, 0);
            }
        }
        else if (key == "data_dir")
        {
            c.data_dir = resolve(yaml::require_string(v, key));
            have_dir   = true;
        }
        else if (key == "token_file")
        {
            c.token_file = resolve(yaml::require_string(v, key));
        }
        else if (key == "retention_days")
        {
            c.retention_days = static_cast<int>(yaml::require_integer(v, key));
            if (c.retention_days < 0)
            {
                throw SyntaxError("retention_days must be >= 0", 0, 0);
            }
        }
        else if (key == "catalog")
        {
            c.catalog = resolve(yaml::require_string(v, key));
        }
        else if (key == "drain_list")
        {
            c.drain_list = resolve(yaml::require_string(v, key));
        }
        else
        {
            throw SyntaxError(fmt::format("{}: unknown collector config key '{}'", path.string(), key), 0, 0);
        }
    }
    if (!have_dir)
    {
        throw SyntaxError(fmt::format("{}: data_dir is required", path.string()), 0, 0);
    }
    return c;
}

std::map<std::string, std::string> load_tokens(const std::filesystem::path &path)
{
    std::ifstream in(path);
    if (!in)
    {
        throw IoError(fmt::format("cannot read token file '{}'", path.string()));
    }
    std::map<std::string, std::string> by_token;
    std::string line;
    int number = 0;
    while (std::getline(in, line))
    {
        ++number;
        if (auto hash = line.find('#'); hash != std::string::npos)
        {
            line.erase(hash);
        }
        std::istringstream fields(line);
        std::string submitter, token, extra;
        if (!(fields >> submitter))
        {
            continue;
        }
        if (!(fields >> token) || (fields >> extra))
        {
            throw SyntaxError(fmt::format("{}: expected 'submitter token'", path.string()), number, 1);
        }
        if (!by_token.emplace(token, submitter).second)
        {
            throw SyntaxError(fmt::format("{}: token reused", path.string()), number, 1);
        }
    }
    return by_token;
}

} // namespace vetgate::collector
