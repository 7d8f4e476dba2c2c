/*
 * Copyright (c) 2026, The vetgate Authors.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <yaml-cpp/yaml.h>

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

// Internal helpers shared by every YAML-subset document reader (protocols,
// fixtures, profiles, rule catalogs, configuration files).
namespace vetgate::yaml
{

/// Parse text into a node tree. Malformed input raises protocol::SyntaxError
/// with the 1-based line/column of the offending token.
YAML::Node load(std::string_view text);

std::string read_file(const std::filesystem::path &path);

/// 1-based "line L, column C" for diagnostics.
std::string where(const YAML::Node &node);

/// True when the scalar was written in quotes (and is therefore a string).
inline bool is_quoted(const YAML::Node &node)
{
    return node.IsScalar() && node.Tag() == "!";
}

/// Mapping keys in document order, rejecting duplicates.
std::vector<std::string> keys(const YAML::Node &map, std::string_view context);

std::optional<double> as_number(const YAML::Node &node);
std::optional<long long> as_integer(const YAML::Node &node);
std::optional<bool> as_bool(const YAML::Node &node);

/// Structural accessors that raise SyntaxError naming `context` on mismatch.
std::string require_string(const YAML::Node &node, std::string_view context);
double require_number(const YAML::Node &node, std::string_view context);
long long require_integer(const YAML::Node &node, std::string_view context);
bool require_bool(const YAML::Node &node, std::string_view context);
std::vector<std::string> require_string_list(const YAML::Node &node, std::string_view context);

/// Double-quoted scalar with YAML escapes; UTF-8 passes through untouched.
std::string quote(std::string_view text);

/// Shortest decimal form that parses back to the same double.
std::string format_number(double value);

} // namespace vetgate::yaml
