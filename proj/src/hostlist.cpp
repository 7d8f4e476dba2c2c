/*
 * Copyright (c) 2026, The vetgate Authors.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#include <vetgate/hostlist.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <tuple>

namespace vetgate::hostlist
{

namespace
{

constexpr std::size_t kMaxHosts  = 1'000'000;
constexpr std::size_t kMaxDigits = 18;

std::string_view trim(std::string_view s)
{
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front())))
    {
        s.remove_prefix(1);
    }
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())))
    {
        s.remove_suffix(1);
    }
    return s;
}

bool all_digits(std::string_view s)
{
    return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

std::uint64_t to_number(std::string_view digits, std::string_view expression)
{
    if (digits.size() > kMaxDigits)
    {
        throw MalformedHostlist(fmt::format("number '{}' too long in '{}'", digits, expression));
    }
    std::uint64_t value = 0;
    std::from_chars(digits.data(), digits.data() + digits.size(), value);
    return value;
}

std::string pad(std::uint64_t value, std::size_t width)
{
    auto text = std::to_string(value);
    if (text.size() < width)
    {
        text.insert(0, width - text.size(), '0');
    }
    return text;
}

// Split on commas that are not inside brackets.
std::vector<std::string_view> split_top_level(std::string_view expression)
{
    std::vector<std::string_view> items;
    int depth         = 0;
    std::size_t start = 0;
    for (std::size_t i = 0; i < expression.size(); ++i)
    {
        char c = expression[i];
        if (c == '[')
        {
            if (++depth > 1)
            {
                throw MalformedHostlist(fmt::format("nested '[' in '{}'", expression));
            }
        }
        else if (c == ']')
        {
            if (--depth < 0)
            {
                throw MalformedHostlist(fmt::format("unmatched ']' in '{}'", expression));
            }
        }
        else if (c == ',' && depth == 0)
        {
            items.push_back(expression.substr(start, i - start));
            start = i + 1;
        }
    }
    if (depth != 0)
    {
        throw MalformedHostlist(fmt::format("unmatched '[' in '{}'", expression));
    }
    items.push_back(expression.substr(start));
    return items;
}

std::vector<std::string> expand_bracket(std::string_view body, std::string_view expression)
{
    std::vector<std::string> values;
    std::size_t start = 0;
    while (start <= body.size())
    {
        auto comma = body.find(',', start);
        auto term  = trim(body.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (term.empty())
        {
            throw MalformedHostlist(fmt::format("empty range in '{}'", expression));
        }
        auto dash = term.find('-');
        if (dash == std::string_view::npos)
        {
            if (!all_digits(term))
            {
                throw MalformedHostlist(fmt::format("'{}' is not a number in '{}'", term, expression));
            }
            values.emplace_back(term);
        }
        else
        {
            auto lo_text = trim(term.substr(0, dash));
            auto hi_text = trim(term.substr(dash + 1));
            if (!all_digits(lo_text) || !all_digits(hi_text))
            {
                throw MalformedHostlist(fmt::format("bad range '{}' in '{}'", term, expression));
            }
            auto lo = to_number(lo_text, expression);
            auto hi = to_number(hi_text, expression);
            if (lo > hi)
            {
                throw MalformedHostlist(fmt::format("descending range '{}' in '{}'", term, expression));
            }
            if (hi - lo >= kMaxHosts || values.size() + (hi - lo) >= kMaxHosts)
            {
                throw MalformedHostlist(fmt::format("range '{}' too large", term));
            }
            for (auto v = lo; v <= hi; ++v)
            {
                values.push_back(pad(v, lo_text.size()));
            }
        }
        if (comma == std::string_view::npos)
        {
            break;
        }
        start = comma + 1;
    }
    return values;
}

void expand_item(std::string_view item, std::string_view expression, std::vector<std::string> &out)
{
    // Expand piecewise: literal text and bracket groups alternate.
    std::vector<std::string> partial {std::string()};
    std::size_t pos = 0;
    while (pos < item.size())
    {
        auto open = item.find('[', pos);
        auto literal = item.substr(pos, open == std::string_view::npos ? std::string_view::npos : open - pos);
        if (literal.find(']') != std::string_view::npos)
        {
            throw MalformedHostlist(fmt::format("unmatched ']' in '{}'", expression));
        }
        for (auto &p : partial)
        {
            p.append(literal);
        }
        if (open == std::string_view::npos)
        {
            break;
        }
        auto close = item.find(']', open);
        if (close == std::string_view::npos)
        {
            throw MalformedHostlist(fmt::format("unmatched '[' in '{}'", expression));
        }
        auto values = expand_bracket(item.substr(open + 1, close - open - 1), expression);
        std::vector<std::string> next;
        next.reserve(partial.size() * values.size());
        for (const auto &p : partial)
        {
            for (const auto &v : values)
            {
                next.push_back(p + v);
            }
        }
        if (next.size() > kMaxHosts)
        {
            throw MalformedHostlist(fmt::format("'{}' expands to too many hosts", expression));
        }
        partial = std::move(next);
        pos     = close + 1;
    }
    for (auto &p : partial)
    {
        if (p.empty())
        {
            throw MalformedHostlist(fmt::format("empty host name in '{}'", expression));
        }
        out.push_back(std::move(p));
    }
}

struct SplitName
{
    std::string prefix;
    std::size_t width = 0; // 0: no numeric tail
    std::uint64_t number = 0;
};

SplitName split_name(const std::string &name)
{
    std::size_t i = name.size();
    while (i > 0 && name[i - 1] >= '0' && name[i - 1] <= '9')
    {
        --i;
    }
    std::size_t digits = name.size() - i;
    if (digits == 0 || digits > kMaxDigits)
    {
        return {name, 0, 0};
    }
    std::uint64_t value = 0;
    std::from_chars(name.data() + i, name.data() + name.size(), value);
    return {name.substr(0, i), digits, value};
}

} // namespace

std::vector<std::string> expand(std::string_view expression)
{
    auto text = trim(expression);
    if (text.empty())
    {
        throw MalformedHostlist("empty host list");
    }
    std::vector<std::string> out;
    for (auto item : split_top_level(text))
    {
        item = trim(item);
        if (item.empty())
        {
            throw MalformedHostlist(fmt::format("empty item in '{}'", expression));
        }
        if (std::any_of(item.begin(), item.end(), [](char c) { return std::isspace(static_cast<unsigned char>(c)); }))
        {
            throw MalformedHostlist(fmt::format("whitespace inside host name in '{}'", expression));
        }
        expand_item(item, expression, out);
        if (out.size() > kMaxHosts)
        {
            throw MalformedHostlist(fmt::format("'{}' expands to too many hosts", expression));
        }
    }
    return out;
}

std::vector<std::string> canonical_order(std::span<const std::string> names)
{
    std::vector<std::pair<SplitName, std::string>> keyed;
    keyed.reserve(names.size());
    for (const auto &n : names)
    {
        keyed.emplace_back(split_name(n), n);
    }
    std::sort(keyed.begin(), keyed.end(), [](const auto &a, const auto &b) {
        return std::tie(a.first.prefix, a.first.width, a.first.number, a.second)
             < std::tie(b.first.prefix, b.first.width, b.first.number, b.second);
    });
    std::vector<std::string> out;
    out.reserve(keyed.size());
    for (auto &[key, name] : keyed)
    {
        if (out.empty() || out.back() != name)
        {
            out.push_back(std::move(name));
        }
    }
    return out;
}

std::string compress(std::span<const std::string> names)
{
    // (prefix, width) -> numbers; literal names keep width 0.
    std::map<std::pair<std::string, std::size_t>, std::set<std::uint64_t>> groups;
    for (const auto &name : names)
    {
        if (name.empty() || name.find_first_of("[],") != std::string::npos
            || std::any_of(name.begin(), name.end(), [](char c) { return std::isspace(static_cast<unsigned char>(c)); }))
        {
            throw MalformedHostlist(fmt::format("'{}' is not a valid host name", name));
        }
        auto split = split_name(name);
        groups[{split.prefix, split.width}].insert(split.number);
    }

    std::string out;
    for (const auto &[key, numbers] : groups)
    {
        const auto &[prefix, width] = key;
        if (!out.empty())
        {
            out.push_back(',');
        }
        if (width == 0)
        {
            out += prefix;
            continue;
        }
        if (numbers.size() == 1)
        {
            out += prefix + pad(*numbers.begin(), width);
            continue;
        }
        out += prefix;
        out.push_back('[');
        bool first = true;
        for (auto it = numbers.begin(); it != numbers.end();)
        {
            auto lo = *it;
            auto hi = lo;
            ++it;
            while (it != numbers.end() && *it == hi + 1)
            {
                hi = *it;
                ++it;
            }
            if (!first)
            {
                out.push_back(',');
            }
            first = false;
            out += pad(lo, width);
            if (hi != lo)
            {
                out.push_back('-');
                out += pad(hi, width);
            }
        }
        out.push_back(']');
    }
    return out;
}

} // namespace vetgate::hostlist
