/*
 * Copyright (c) 2026, The vetgate Authors.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

// Standalone hostlist reference used only by tests. Written independently of
// src/hostlist.cpp: regex driven, recursive, no shared helpers.

#include <algorithm>
#include <optional>
#include <regex>
#include <string>
#include <vector>

namespace oracle::hostlist
{

inline std::string zero_pad(unsigned long long v, std::size_t width)
{
    std::string s = std::to_string(v);
    while (s.size() < width)
    {
        s = "0" + s;
    }
    return s;
}

/// nullopt on malformed input.
inline std::optional<std::vector<std::string>> expand_item(const std::string &item)
{
    static const std::regex first_bracket(R"(^([^\[\]]*)\[([^\[\]]*)\](.*)$)");
    static const std::regex term_re(R"(^(\d+)(?:-(\d+))?$)");
    std::smatch m;
    if (!std::regex_match(item, m, first_bracket))
    {
        if (item.empty() || item.find_first_of("[]") != std::string::npos)
        {
            return std::nullopt;
        }
        return std::vector<std::string> {item};
    }
    std::string head = m[1], body = m[2], tail = m[3];
    std::optional<std::vector<std::string>> rest;
    if (tail.find_first_of("[]") == std::string::npos)
    {
        rest = std::vector<std::string> {tail};
    }
    else
    {
        rest = expand_item(tail);
    }
    if (!rest)
    {
        return std::nullopt;
    }
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true)
    {
        auto comma = body.find(',', start);
        std::string term = body.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        std::smatch tm;
        if (!std::regex_match(term, tm, term_re))
        {
            return std::nullopt;
        }
        std::string lo_s = tm[1];
        std::string hi_s = tm[2].matched ? std::string(tm[2]) : lo_s;
        unsigned long long lo = std::stoull(lo_s), hi = std::stoull(hi_s);
        if (lo > hi)
        {
            return std::nullopt;
        }
        for (unsigned long long v = lo; v <= hi; ++v)
        {
            for (const auto &r : *rest)
            {
                out.push_back(head + zero_pad(v, lo_s.size()) + r);
            }
        }
        if (comma == std::string::npos)
        {
            break;
        }
        start = comma + 1;
    }
    return out;
}

inline std::optional<std::vector<std::string>> expand(const std::string &expr)
{
    // split on commas at bracket depth 0
    std::vector<std::string> items;
    std::string cur;
    int depth = 0;
    for (char c : expr)
    {
        if (c == '[')
        {
            depth++;
        }
        if (c == ']')
        {
            depth--;
        }
        if (depth < 0 || depth > 1)
        {
            return std::nullopt;
        }
        if (c == ',' && depth == 0)
        {
            items.push_back(cur);
            cur.clear();
        }
        else
        {
            cur.push_back(c);
        }
    }
    if (depth != 0)
    {
        return std::nullopt;
    }
    items.push_back(cur);
    std::vector<std::string> out;
    for (const auto &i : items)
    {
        auto e = expand_item(i);
        if (!e)
        {
            return std::nullopt;
        }
        out.insert(out.end(), e->begin(), e->end());
    }
    return out;
}

struct Parsed
{
    std::string prefix;
    std::string digits;
};

inline Parsed parse(const std::string &name)
{
    static const std::regex re(R"(^(.*?)(\d+)$)");
    std::smatch m;
    if (std::regex_match(name, m, re))
    {
        return {m[1], m[2]};
    }
    return {name, ""};
}

/// Sorted, de-duplicated order: prefix, digit count, value.
inline std::vector<std::string> sorted_unique(std::vector<std::string> names)
{
    std::sort(names.begin(), names.end(), [](const std::string &a, const std::string &b) {
        auto pa = parse(a), pb = parse(b);
        if (pa.prefix != pb.prefix)
        {
            return pa.prefix < pb.prefix;
        }
        if (pa.digits.size() != pb.digits.size())
        {
            return pa.digits.size() < pb.digits.size();
        }
        return pa.digits < pb.digits; // same length: lexicographic == numeric
    });
    names.erase(std::unique(names.begin(), names.end()), names.end());
    return names;
}

/// Greedy run detection over the sorted list.
inline std::string compress(const std::vector<std::string> &input)
{
    auto names = sorted_unique(input);
    std::string out;
    std::size_t i = 0;
    while (i < names.size())
    {
        auto p = parse(names[i]);
        if (!out.empty())
        {
            out += ",";
        }
        if (p.digits.empty())
        {
            out += names[i++];
            continue;
        }
        // collect the whole (prefix, width) group
        std::vector<unsigned long long> nums;
        std::size_t j = i;
        while (j < names.size())
        {
            auto q = parse(names[j]);
            if (q.prefix != p.prefix || q.digits.size() != p.digits.size() || q.digits.empty())
            {
                break;
            }
            nums.push_back(std::stoull(q.digits));
            ++j;
        }
        std::size_t w = p.digits.size();
        if (nums.size() == 1)
        {
            out += names[i];
        }
        else
        {
            out += p.prefix + "[";
            for (std::size_t k = 0; k < nums.size();)
            {
                std::size_t e = k;
                while (e + 1 < nums.size() && nums[e + 1] == nums[e] + 1)
                {
                    ++e;
                }
                if (k != 0)
                {
                    out += ",";
                }
                out += zero_pad(nums[k], w);
                if (e != k)
                {
                    out += "-" + zero_pad(nums[e], w);
                }
                k = e + 1;
            }
            out += "]";
        }
        i = j;
    }
    return out;
}

} // namespace oracle::hostlist
