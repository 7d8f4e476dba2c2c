/*
 * Copyright (c) 2026, The vetgate Authors.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <vetgate/executor.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

// Command line front end shared by the vetgate, vetgate-rules and
// vetgate-collector binaries.
namespace vetgate::cli
{

/// Settings that can come from flags, environment, a config file or
/// defaults, in that order of precedence.
struct CliConfig
{
    std::optional<std::filesystem::path> fixtures_dir;
    std::optional<std::filesystem::path> manifest;
    std::string report_url;
    std::string report_token;
    std::string nodelist_var;
    std::string jobid_var;

    std::optional<bool> flexible;
    std::optional<int> min_nodes;
    double max_exclusion_fraction            = 0.1;
    double deadline_s                        = executor::kDefaultDeadlineS;
    executor::UnknownPolicy treat_unknown_as = executor::UnknownPolicy::FailIfStrict;
    bool strict                              = false;

    /// Where each set key came from: "flag", "env", "config" or "default".
    std::map<std::string, std::string> origin;

    /// Throws PreconditionError on out-of-range values.
    void validate() const;
};

/// YAML config file. Relative paths resolve against the file's directory.
/// Throws SyntaxError, IoError or PreconditionError.
CliConfig load_config_file(const std::filesystem::path &path);

/// Defaults, then the config file (`config_flag`, else VETGATE_CONFIG), then
/// VETGATE_* environment variables. Flags are applied by the caller.
CliConfig resolve_config(const executor::Environment &env, const std::optional<std::filesystem::path> &config_flag);

/// Entry point. `args[0]` selects the personality by basename:
/// "vetgate-rules", "vetgate-collector", anything else is "vetgate".
int run(const std::vector<std::string> &args, const executor::Environment &env, std::ostream &out, std::ostream &err);

/// Ask a running `collector serve` to shut down. Safe from any thread.
void request_stop();

} // namespace vetgate::cli
