/*
 * Copyright (c) 2026, The vetgate Authors.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <vetgate/codec.hpp>
#include <vetgate/executor.hpp>
#include <vetgate/rules.hpp>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

// Opt-in store for vetting outcomes: append-only log, in-memory index, and
// a rules engine fed by every ingested round.
namespace vetgate::collector
{

VETGATE_DEFINE_ERROR(SchemaMismatch);
VETGATE_DEFINE_ERROR(StorageFailure);

inline constexpr int kSchemaVersion = 1;

struct ReportEnvelope
{
    int schema_version = kSchemaVersion;
    std::int64_t submitted_at_ms = 0;
    executor::JobContext job_context;
    executor::Verdict verdict;
    std::vector<executor::NodeReport> reports;
    std::string submitter;

    bool operator==(const ReportEnvelope &) const = default;
};

codec::Json encode(const ReportEnvelope &envelope);

/// Throws SchemaMismatch.
ReportEnvelope decode_envelope(const codec::Json &j);

/// Throws SchemaMismatch unless the version is known and every report and
/// verdict entry names a node of the job context.
void validate(const ReportEnvelope &envelope);

struct StoredReportKey
{
    std::string job_id;
    std::int64_t seq = 0;

    bool operator==(const StoredReportKey &) const = default;
};

struct HistoryEntry
{
    std::int64_t timestamp_ms = 0;
    std::string eval_name;
    std::string status; ///< Pass / Fail / Unknown, or the agent status when no report came back

    bool operator==(const HistoryEntry &) const = default;
};

struct FleetFilter
{
    std::optional<rules::NodeState> state;
    std::optional<int> min_failures;
};

struct FleetEntry
{
    std::string node;
    std::string last_health; ///< from the most recent verdict naming the node
    std::string last_decision;
    int failures_24h = 0;
    rules::NodeState state = rules::NodeState::Active;

    bool operator==(const FleetEntry &) const = default;
};

struct IngestResult
{
    StoredReportKey key;
    bool duplicate = false;
    std::vector<rules::ActionEffect> effects;
};

/// Shared index over stored envelopes. Backends differ only in persistence.
class Store
{
public:
    explicit Store(rules::Catalog catalog = rules::default_catalog());
    virtual ~Store() = default;

    Store(const Store &)            = delete;
    Store &operator=(const Store &) = delete;

    /// Durable before returning. Throws SchemaMismatch or StorageFailure.
    IngestResult ingest(const ReportEnvelope &envelope);

    /// Outcomes for `node` with from <= t <= to, oldest first.
    std::vector<HistoryEntry> query_node_history(const std::string &node, std::int64_t from_ms, std::int64_t to_ms) const;

    /// Every node seen so far, in canonical order, matching the filter.
    std::vector<FleetEntry> query_fleet(const FleetFilter &filter, std::int64_t now_ms) const;

    /// Operator release; persisted like an ingest.
    std::vector<rules::ActionEffect> release(const std::string &node, std::int64_t at_ms);

    std::set<std::string> drain_list() const;
    std::map<std::string, rules::NodeHealthRecord> rule_records() const;

    /// Stored envelopes in ingest order, with their keys.
    std::vector<std::pair<StoredReportKey, ReportEnvelope>> envelopes() const;

    std::size_t size() const;

protected:
    struct Entry
    {
        StoredReportKey key;
        std::string canonical; ///< encoded envelope, the identity used for duplicates
        ReportEnvelope envelope;
    };

    // Backend hooks, called with the write lock held.
    virtual void persist_report(const Entry &entry)                          = 0;
    virtual void persist_release(const std::string &node, std::int64_t at_ms) = 0;

    /// Rebuild the index from a backend's log, in original order.
    void restore_report(Entry entry);
    void restore_release(const std::string &node, std::int64_t at_ms);
    void restore_tombstone(const std::string &job_id, std::int64_t seq);
    void clear_index();

    static std::string canonical_form(const ReportEnvelope &envelope);

private:
    std::vector<rules::ActionEffect> feed_rules(const ReportEnvelope &envelope);
    void index(Entry entry);

protected:
    mutable std::shared_mutex m_mutex;

private:
    rules::Catalog m_catalog;
    std::vector<Entry> m_entries;
    std::map<std::string, std::vector<HistoryEntry>> m_history;
    std::map<std::string, std::vector<std::size_t>> m_by_job;
    std::map<std::string, std::int64_t> m_next_seq;
    rules::Engine m_engine;
    std::size_t m_skipped_events = 0;
};

class MemoryStore final : public Store
{
public:
    using Store::Store;

private:
    void persist_report(const Entry &) override {}
    void persist_release(const std::string &, std::int64_t) override {}
};

/// One JSON record per line in `<dir>/reports.log`, fsync'd before every
/// acknowledgement. Reopening replays the log.
class FileStore final : public Store
{
public:
    explicit FileStore(std::filesystem::path dir, rules::Catalog catalog = rules::default_catalog());
    ~FileStore() override;

    /// Drop envelopes submitted before `cutoff_ms` by rewriting the log.
    /// Returns the number removed.
    std::size_t prune_before(std::int64_t cutoff_ms);

    const std::filesystem::path &log_path() const
    {
        return m_log;
    }

private:
    void persist_report(const Entry &entry) override;
    void persist_release(const std::string &node, std::int64_t at_ms) override;
    void append_line(const std::string &line);
    void load();

    std::filesystem::path m_dir;
    std::filesystem::path m_log;
    int m_fd = -1;
};

/// Recompute a node's history directly from raw envelopes.
std::vector<HistoryEntry> history_from_envelopes(const std::vector<ReportEnvelope> &envelopes,
                                                 const std::string &node,
                                                 std::int64_t from_ms,
                                                 std::int64_t to_ms);

codec::Json encode(const HistoryEntry &entry);
codec::Json encode(const FleetEntry &entry);
codec::Json encode(const StoredReportKey &key);
codec::Json encode(const rules::ActionEffect &effect);
codec::Json encode(const rules::NodeHealthRecord &record);

struct ServiceConfig
{
    std::string host = "127.0.0.1";
    int port         = 8080;
    std::filesystem::path data_dir;
    std::filesystem::path token_file;
    int retention_days = 0; ///< 0 keeps everything
    std::optional<std::filesystem::path> catalog;
    std::optional<std::filesystem::path> drain_list;

    /// YAML: listen, data_dir, token_file, retention_days, catalog,
    /// drain_list. Relative paths resolve against the file's directory.
    static ServiceConfig load(const std::filesystem::path &path);
};

/// "submitter token" per line; '#' starts a comment. Returns token ->
/// submitter. Throws IoError or SyntaxError.
std::map<std::string, std::string> load_tokens(const std::filesystem::path &path);

} // namespace vetgate::collector
