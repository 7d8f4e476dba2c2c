/*
 * Copyright (c) 2026, The vetgate Authors.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <vetgate/collector.hpp>

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <thread>

// HTTP+JSON front end for the collector store, and the matching client.
//
//   POST /v1/reports                      envelope -> {"job_id", "seq", "duplicate"}
//   GET  /v1/nodes/{id}/history?from&to   -> {"node", "entries": [...]}
//   GET  /v1/fleet?state&min_failures&now -> {"nodes": [...]}
//   POST /v1/nodes/{id}/release?at        -> {"node", "state", "effects"}
//   GET  /v1/drain-list                   -> {"nodes": [...], "hostlist"}
//   GET  /v1/health                       -> {"status": "ok"}   (no auth)
//
// Every other endpoint needs "Authorization: Bearer <token>".
namespace vetgate::collector
{

VETGATE_DEFINE_ERROR(Unauthorized);
VETGATE_DEFINE_ERROR(CollectorUnavailable);

struct SideEffectOptions
{
    std::optional<std::filesystem::path> drain_list; ///< rewritten after every change
    std::optional<std::filesystem::path> ticket_log; ///< one JSON ticket per line
    std::string ticket_webhook;                      ///< POSTed best effort
};

/// Materialise rule effects: drain-list file, ticket records, webhook.
void apply_side_effects(const Store &store, const std::vector<rules::ActionEffect> &effects, const SideEffectOptions &options);

class CollectorServer
{
public:
    using Clock = std::function<std::int64_t()>;

    /// `tokens` maps bearer token -> submitter id.
    CollectorServer(Store &store, std::map<std::string, std::string> tokens, SideEffectOptions effects = {}, Clock clock = {});
    ~CollectorServer();

    CollectorServer(const CollectorServer &)            = delete;
    CollectorServer &operator=(const CollectorServer &) = delete;

    /// Port 0 picks a free port. Returns the bound port. Throws IoError.
    int bind(const std::string &host, int port);

    /// Serve until stop(); blocking.
    void serve();

    /// bind + serve on a background thread.
    int start(const std::string &host, int port);
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> m_impl;
    std::thread m_thread;
};

struct SubmitResult
{
    StoredReportKey key;
    bool duplicate = false;
};

class CollectorClient
{
public:
    /// `base_url` like "http://127.0.0.1:8080".
    CollectorClient(std::string base_url, std::string token, double timeout_s = 10.0);

    // Throw CollectorUnavailable on transport errors, Unauthorized on 401,
    // SchemaMismatch on 400 and StorageFailure on other failures.
    SubmitResult submit(const ReportEnvelope &envelope);
    std::vector<HistoryEntry> history(const std::string &node, std::int64_t from_ms, std::int64_t to_ms);
    std::vector<FleetEntry> fleet(const FleetFilter &filter, std::optional<std::int64_t> now_ms = std::nullopt);
    rules::NodeState release(const std::string &node, std::optional<std::int64_t> at_ms = std::nullopt);

private:
    std::string m_url;
    std::string m_token;
    double m_timeout_s;
};

std::int64_t system_now_ms();

} // namespace vetgate::collector
