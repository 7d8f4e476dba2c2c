/*
 * Copyright (c) 2026, The vetgate Authors.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#include "yaml_util.hpp"

#include <vetgate/error.hpp>

#include <fmt/format.h>

#include <array>
#include <charconv>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace vetgate::yaml
{

YAML::Node load(std::string_view text)
{
    try
    {
        return YAML::Load(std::string(text));
    }
    catch (const YAML::Exception &e)
    {
        int line   = e.mark.is_null() ? 0 : e.mark.line + 1;
        int column = e.mark.is_null() ? 0 : e.mark.column + 1;
        throw SyntaxError(fmt::format("line {}, column {}: {}", line, column, e.msg), line, column);
    }
}

std::string read_file(const std::filesystem::path &path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
    {
        throw IoError(fmt::format("cannot open '{}'", path.string()));
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    if (in.bad())
    {
        throw IoError(fmt::format("error reading '{}'", path.string()));
    }
    return buffer.str();
}

std::string where(const YAML::Node &node)
{
    auto mark = node.Mark();
    if (mark.is_null())
    {
        return "unknown location";
    }
    return fmt::format("line {}, column {}", mark.line + 1, mark.column + 1);
}

namespace
{

[[noreturn]] void fail(const YAML::Node &node, const std::string &message)
{
    auto mark = node.Mark();
    int line  = mark.is_null() ? 0 : mark.line + 1;
    int col   = mark.is_null() ? 0 : mark.column + 1;
    throw SyntaxError(fmt::format("{}: {}", where(node), message), line, col);
}

} // namespace

std::vector<std::string> keys(const YAML::Node &map, std::string_view context)
{
    if (!map.IsMap())
    {
        fail(map, fmt::format("{} must be a mapping", context));
    }
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (auto it = map.begin(); it != map.end(); ++it)
    {
        if (!it->first.IsScalar())
        {
            fail(it->first, fmt::format("{} has a non-scalar key", context));
        }
        const auto &key = it->first.Scalar();
        if (!seen.insert(key).second)
        {
            fail(it->first, fmt::format("duplicate key '{}' in {}", key, context));
        }
        out.push_back(key);
    }
    return out;
}

std::optional<double> as_number(const YAML::Node &node)
{
    if (!node.IsScalar() || is_quoted(node))
    {
        return std::nullopt;
    }
    const auto &text = node.Scalar();
    if (text.empty())
    {
        return std::nullopt;
    }
    std::string_view view = text;
    if (view.front() == '+')
    {
        view.remove_prefix(1);
    }
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(view.data(), view.data() + view.size(), value);
    if (ec != std::errc() || ptr != view.data() + view.size())
    {
        if (view == ".inf" || view == ".Inf")
        {
            return std::numeric_limits<double>::infinity();
        }
        if (view == ".nan" || view == ".NaN")
        {
            return std::numeric_limits<double>::quiet_NaN();
        }
        return std::nullopt;
    }
    return value;
}

std::optional<long long> as_integer(const YAML::Node &node)
{
    if (!node.IsScalar() || is_quoted(node))
    {
        return std::nullopt;
    }
    const auto &text = node.Scalar();
    long long value  = 0;
    auto [ptr, ec]   = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size() || text.empty())
    {
        return std::nullopt;
    }
    return value;
}

std::optional<bool> as_bool(const YAML::Node &node)
{
    if (!node.IsScalar() || is_quoted(node))
    {
        return std::nullopt;
    }
    const auto &text = node.Scalar();
    if (text == "true" || text == "True" || text == "TRUE")
    {
        return true;
    }
    if (text == "false" || text == "False" || text == "FALSE")
    {
        return false;
    }
    return std::nullopt;
}

std::string require_string(const YAML::Node &node, std::string_view context)
{
    if (!node || !node.IsScalar())
    {
        fail(node, fmt::format("{} must be a string", context));
    }
    return node.Scalar();
}

double require_number(const YAML::Node &node, std::string_view context)
{
    auto value = node ? as_number(node) : std::nullopt;
    if (!value)
    {
        fail(node, fmt::format("{} must be a number", context));
    }
    return *value;
}

long long require_integer(const YAML::Node &node, std::string_view context)
{
    auto value = node ? as_integer(node) : std::nullopt;
    if (!value)
    {
        fail(node, fmt::format("{} must be an integer", context));
    }
    return *value;
}

bool require_bool(const YAML::Node &node, std::string_view context)
{
    auto value = node ? as_bool(node) : std::nullopt;
    if (!value)
    {
        fail(node, fmt::format("{} must be true or false", context));
    }
    return *value;
}

std::vector<std::string> require_string_list(const YAML::Node &node, std::string_view context)
{
    if (!node.IsSequence())
    {
        fail(node, fmt::format("{} must be a list", context));
    }
    std::vector<std::string> out;
    for (const auto &item : node)
    {
        out.push_back(require_string(item, context));
    }
    return out;
}

std::string quote(std::string_view text)
{
    std::string out;
    out.reserve(text.size() + 2);
    out.push_back('"');
    for (unsigned char c : text)
    {
        switch (c)
        {
            case '"':
                out += "\\\"";
                break;
            case '\\':
                out += "\\\\";
                break;
            case '\n':
                out += "\\n";
                break;
            case '\t':
                out += "\\t";
                break;
            case '\r':
                out += "\\r";
                break;
            default:
                if (c < 0x20 || c == 0x7f)
                {
                    out += fmt::format("\\x{:02x}", c);
                }
                else
                {
                    out.push_back(static_cast<char>(c));
                }
        }
    }
    out.push_back('"');
    return out;
}

std::string format_number(double value)
{
    std::array<char, 64> buffer {};
    auto [ptr, ec] = std::to_chars(buffer.data(), buffer.data() + buffer.size(), value);
    if (ec != std::errc())
    {
        return fmt::format("{}", value);
    }
    return std::string(buffer.data(), ptr);
}

} // namespace vetgate::yaml
