/*
 * Copyright (c) 2026, The vetgate Authors.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <vetgate/executor.hpp>
#include <vetgate/saturation.hpp>

#include <json.hpp>

// JSON encoding of results, reports and verdicts. Shared by the CLI's --json
// output, the collector wire format and the TCP frames.
namespace vetgate::codec
{

using Json = nlohmann::ordered_json;

VETGATE_DEFINE_ERROR(DecodeError);

Json encode(const evaluations::EvalResult &result);
Json encode(const executor::NodeReport &report);
Json encode(const executor::JobContext &ctx);
Json encode(const executor::Policy &policy);
Json encode(const executor::Verdict &verdict);
Json encode(const saturation::SaturationScore &score);
Json encode(const protocol::VettingProtocol &protocol);

// Decoders throw DecodeError naming the offending member.
evaluations::EvalResult decode_eval_result(const Json &j);
executor::NodeReport decode_node_report(const Json &j);
executor::JobContext decode_job_context(const Json &j);
executor::Policy decode_policy(const Json &j);
executor::Verdict decode_verdict(const Json &j);

/// Throws DecodeError on malformed text.
Json parse(std::string_view text);

/// Compact, deterministic text.
std::string dump(const Json &j);

} // namespace vetgate::codec
