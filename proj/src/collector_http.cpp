/*
 * Copyright (c) 2026, The vetgate Authors.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#include <vetgate/collector_http.hpp>
#include <vetgate/hostlist.hpp>

#include <fmt/format.h>
#include <httplib.h>

#include <chrono>
#include <fstream>

namespace vetgate::collector
{

namespace
{

constexpr const char *kJson = "application/json";

void reply(httplib::Response &res, int status, const codec::Json &body)
{
    res.status = status;
    res.set_content(codec::dump(body), kJson);
}

void fail(httplib::Response &res, int status, const std::string &message)
{
    reply(res, status, codec::Json {{"error", message}});
}

std::optional<std::int64_t> int_param(const httplib::Request &req, const char *name)
{
    if (!req.has_param(name))
    {
        return std::nullopt;
    }
    auto text = req.get_param_value(name);
    std::size_t used = 0;
    long long v      = 0;
    try
    {
        v = std::stoll(text, &used);
    }
    catch (const std::exception &)
    {
        used = 0;
    }
    if (used == 0 || used != text.size())
    {
        throw PreconditionError(fmt::format("query parameter '{}' must be an integer (got '{}')", name, text));
    }
    return v;
}

std::string error_of(const httplib::Result &res)
{
    if (!res)
    {
        return httplib::to_string(res.error());
    }
    try
    {
        auto j = codec::parse(res->body);
        if (j.is_object() && j.contains("error") && j["error"].is_string())
        {
            return j["error"].get<std::string>();
        }
    }
    catch (const codec::DecodeError &)
    {
    }
    return fmt::format("HTTP {}", res->status);
}

} // namespace

std::int64_t system_now_ms()
{
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch()).count();
}

void apply_side_effects(const Store &store, const std::vector<rules::ActionEffect> &effects, const SideEffectOptions &options)
{
    bool drain_changed = false;
    for (const auto &e : effects)
    {
        if (e.kind == rules::EffectKind::DrainListUpdate || e.kind == rules::EffectKind::TicketRecord)
        {
            drain_changed = true;
        }
        if (e.kind != rules::EffectKind::TicketRecord)
        {
            continue;
        }
        if (options.ticket_log)
        {
            std::ofstream out(*options.ticket_log, std::ios::app);
            out << e.detail << '\n';
            if (!out)
            {
                throw StorageFailure(fmt::format("cannot append to ticket log '{}'", options.ticket_log->string()));
            }
        }
        if (!options.ticket_webhook.empty())
        {
            // Split "http://host:port/path" for the client.
            auto scheme_end = options.ticket_webhook.find("://");
            auto path_start = options.ticket_webhook.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
            auto origin     = options.ticket_webhook.substr(0, path_start);
            auto path       = path_start == std::string::npos ? std::string("/") : options.ticket_webhook.substr(path_start);
            httplib::Client client(origin);
            client.set_connection_timeout(2, 0);
            client.set_read_timeout(2, 0);
            client.Post(path, e.detail, kJson);
        }
    }
    if (drain_changed && options.drain_list)
    {
        rules::write_drain_list(store.drain_list(), *options.drain_list);
    }
}

struct CollectorServer::Impl
{
    Store &store;
    std::map<std::string, std::string> tokens;
    SideEffectOptions effects;
    Clock clock;
    httplib::Server server;
    std::mutex effects_mutex;

    Impl(Store &s, std::map<std::string, std::string> t, SideEffectOptions e, Clock c)
        : store(s)
        , tokens(std::move(t))
        , effects(std::move(e))
        , clock(std::move(c))
    {}

    std::optional<std::string> principal(const httplib::Request &req) const
    {
        auto header = req.get_header_value("Authorization");
        const std::string prefix = "Bearer ";
        if (header.rfind(prefix, 0) != 0)
        {
            return std::nullopt;
        }
        auto it = tokens.find(header.substr(prefix.size()));
        if (it == tokens.end())
        {
            return std::nullopt;
        }
        return it->second;
    }

    template <typename F>
    httplib::Server::Handler guarded(F handler)
    {
        return [this, handler](const httplib::Request &req, httplib::Response &res) {
            auto who = principal(req);
            if (!who)
            {
                fail(res, 401, "missing or unknown bearer token");
                return;
            }
            try
            {
                handler(req, res, *who);
            }
            catch (const SchemaMismatch &e)
            {
                fail(res, 400, e.what());
            }
            catch (const codec::DecodeError &e)
            {
                fail(res, 400, e.what());
            }
            catch (const PreconditionError &e)
            {
                fail(res, 400, e.what());
            }
            catch (const rules::OutOfOrderEvent &e)
            {
                fail(res, 409, e.what());
            }
            catch (const std::exception &e)
            {
                fail(res, 500, e.what());
            }
        };
    }

    void routes()
    {
        server.Get("/v1/health", [](const httplib::Request &, httplib::Response &res) {
            reply(res, 200, codec::Json {{"status", "ok"}});
        });

        server.Post("/v1/reports", guarded([this](const httplib::Request &req, httplib::Response &res, const std::string &who) {
            auto envelope      = decode_envelope(codec::parse(req.body));
            envelope.submitter = who;
            auto result        = store.ingest(envelope);
            {
                std::lock_guard lock(effects_mutex);
                apply_side_effects(store, result.effects, effects);
            }
            reply(res, result.duplicate ? 200 : 201,
                  codec::Json {{"job_id", result.key.job_id}, {"seq", result.key.seq}, {"duplicate", result.duplicate}});
        }));

        server.Get(R"(/v1/nodes/([^/]+)/history)",
                   guarded([this](const httplib::Request &req, httplib::Response &res, const std::string &) {
                       std::string node = req.matches[1];
                       auto from        = int_param(req, "from").value_or(std::numeric_limits<std::int64_t>::min());
                       auto to          = int_param(req, "to").value_or(std::numeric_limits<std::int64_t>::max());
                       codec::Json entries = codec::Json::array();
                       for (const auto &e : store.query_node_history(node, from, to))
                       {
                           entries.push_back(encode(e));
                       }
                       reply(res, 200, codec::Json {{"node", node}, {"entries", entries}});
                   }));

        server.Get("/v1/fleet", guarded([this](const httplib::Request &req, httplib::Response &res, const std::string &) {
            FleetFilter filter;
            if (req.has_param("state"))
            {
                auto text = req.get_param_value("state");
                filter.state = rules::parse_node_state(text);
                if (!filter.state)
                {
                    throw PreconditionError(fmt::format("unknown state '{}'", text));
                }
            }
            if (auto m = int_param(req, "min_failures"))
            {
                filter.min_failures = static_cast<int>(*m);
            }
            auto now           = int_param(req, "now").value_or(clock());
            codec::Json nodes  = codec::Json::array();
            for (const auto &f : store.query_fleet(filter, now))
            {
                nodes.push_back(encode(f));
            }
            reply(res, 200, codec::Json {{"nodes", nodes}});
        }));

        server.Post(R"(/v1/nodes/([^/]+)/release)",
                    guarded([this](const httplib::Request &req, httplib::Response &res, const std::string &) {
                        std::string node = req.matches[1];
                        auto at          = int_param(req, "at").value_or(clock());
                        auto fx          = store.release(node, at);
                        {
                            std::lock_guard lock(effects_mutex);
                            apply_side_effects(store, fx, effects);
                        }
                        codec::Json out_fx = codec::Json::array();
                        for (const auto &e : fx)
                        {
                            out_fx.push_back({{"kind", rules::to_string(e.kind)}, {"detail", e.detail}});
                        }
                        auto records = store.rule_records();
                        auto it      = records.find(node);
                        auto state   = it == records.end() ? rules::NodeState::Active : it->second.state;
                        reply(res, 200, codec::Json {{"node", node}, {"state", rules::to_string(state)}, {"effects", out_fx}});
                    }));

        server.Get("/v1/drain-list", guarded([this](const httplib::Request &, httplib::Response &res, const std::string &) {
            auto drained = store.drain_list();
            std::vector<std::string> list(drained.begin(), drained.end());
            auto ordered = hostlist::canonical_order(list);
            reply(res, 200,
                  codec::Json {{"nodes", ordered}, {"hostlist", ordered.empty() ? std::string() : hostlist::compress(ordered)}});
        }));
    }
};

CollectorServer::CollectorServer(Store &store, std::map<std::string, std::string> tokens, SideEffectOptions effects, Clock clock)
    : m_impl(std::make_unique<Impl>(store, std::move(tokens), std::move(effects), clock ? clock : Clock(system_now_ms)))
{
    m_impl->routes();
}

CollectorServer::~CollectorServer()
{
    stop();
}

int CollectorServer::bind(const std::string &host, int port)
{
    if (port == 0)
    {
        int bound = m_impl->server.bind_to_any_port(host);
        if (bound <= 0)
        {
            throw IoError(fmt::format("cannot bind {}:<any>", host));
        }
        return bound;
    }
    if (!m_impl->server.bind_to_port(host, port))
    {
        throw IoError(fmt::format("cannot bind {}:{}", host, port));
    }
    return port;
}

void CollectorServer::serve()
{
    m_impl->server.listen_after_bind();
}

int CollectorServer::start(const std::string &host, int port)
{
    int bound = bind(host, port);
    m_thread  = std::thread([this] { serve(); });
    m_impl->server.wait_until_ready();
    return bound;
}

void CollectorServer::stop()
{
    if (m_impl)
    {
        m_impl->server.stop();
    }
    if (m_thread.joinable())
    {
        m_thread.join();
    }
}

CollectorClient::CollectorClient(std::string base_url, std::string token, double timeout_s)
    : m_url(std::move(base_url))
    , m_token(std::move(token))
    , m_timeout_s(timeout_s)
{
    while (!m_url.empty() && m_url.back() == '/')
    {
        m_url.pop_back();
    }
}

namespace
{

httplib::Client make_client(const std::string &url, const std::string &token, double timeout_s)
{
    httplib::Client client(url);
    if (!client.is_valid())
    {
        throw CollectorUnavailable(fmt::format("unsupported collector URL '{}'", url));
    }
    auto secs  = static_cast<time_t>(timeout_s);
    auto usecs = static_cast<time_t>((timeout_s - static_cast<double>(secs)) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);
    if (!token.empty())
    {
        client.set_bearer_token_auth(token);
    }
    return client;
}

codec::Json checked(const httplib::Result &res, const std::string &url)
{
    if (!res)
    {
        throw CollectorUnavailable(fmt::format("collector at {} unreachable: {}", url, error_of(res)));
    }
    if (res->status == 401)
    {
        throw Unauthorized(error_of(res));
    }
    if (res->status == 400)
    {
        throw SchemaMismatch(error_of(res));
    }
    if (res->status < 200 || res->status >= 300)
    {
        throw StorageFailure(fmt::format("collector error: {}", error_of(res)));
    }
    try
    {
        return codec::parse(res->body);
    }
    catch (const codec::DecodeError &e)
    {
        throw StorageFailure(fmt::format("collector sent malformed JSON: {}", e.what()));
    }
}

} // namespace

SubmitResult CollectorClient::submit(const ReportEnvelope &envelope)
{
    auto client = make_client(m_url, m_token, m_timeout_s);
    auto j      = checked(client.Post("/v1/reports", codec::dump(encode(envelope)), kJson), m_url);
    try
    {
        return {{j.at("job_id").get<std::string>(), j.at("seq").get<std::int64_t>()}, j.at("duplicate").get<bool>()};
    }
    catch (const codec::Json::exception &e)
    {
        throw StorageFailure(fmt::format("unexpected collector reply: {}", e.what()));
    }
}

std::vector<HistoryEntry> CollectorClient::history(const std::string &node, std::int64_t from_ms, std::int64_t to_ms)
{
    auto client = make_client(m_url, m_token, m_timeout_s);
    httplib::Params params {{"from", std::to_string(from_ms)}, {"to", std::to_string(to_ms)}};
    auto j = checked(client.Get(fmt::format("/v1/nodes/{}/history", node), params, httplib::Headers {}), m_url);
    std::vector<HistoryEntry> out;
    for (const auto &e : j.at("entries"))
    {
        out.push_back({e.at("timestamp_ms").get<std::int64_t>(), e.at("eval_name").get<std::string>(), e.at("status").get<std::string>()});
    }
    return out;
}

std::vector<FleetEntry> CollectorClient::fleet(const FleetFilter &filter, std::optional<std::int64_t> now_ms)
{
    auto client = make_client(m_url, m_token, m_timeout_s);
    httplib::Params params;
    if (filter.state)
    {
        params.emplace("state", std::string(rules::to_string(*filter.state)));
    }
    if (filter.min_failures)
    {
        params.emplace("min_failures", std::to_string(*filter.min_failures));
    }
    if (now_ms)
    {
        params.emplace("now", std::to_string(*now_ms));
    }
    auto j = checked(client.Get("/v1/fleet", params, httplib::Headers {}), m_url);
    std::vector<FleetEntry> out;
    for (const auto &e : j.at("nodes"))
    {
        FleetEntry f;
        f.node          = e.at("node").get<std::string>();
        f.state         = rules::parse_node_state(e.at("state").get<std::string>()).value_or(rules::NodeState::Active);
        f.last_health   = e.at("last_health").get<std::string>();
        f.last_decision = e.at("last_decision").get<std::string>();
        f.failures_24h  = e.at("failures_24h").get<int>();
        out.push_back(std::move(f));
    }
    return out;
}

rules::NodeState CollectorClient::release(const std::string &node, std::optional<std::int64_t> at_ms)
{
    auto client = make_client(m_url, m_token, m_timeout_s);
    auto path   = fmt::format("/v1/nodes/{}/release", node);
    if (at_ms)
    {
        path += fmt::format("?at={}", *at_ms);
    }
    auto j = checked(client.Post(path, std::string(), kJson), m_url);
    return rules::parse_node_state(j.at("state").get<std::string>()).value_or(rules::NodeState::Active);
}

} // namespace vetgate::collector
