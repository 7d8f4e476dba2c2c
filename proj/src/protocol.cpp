/*
 * Copyright (c) 2026, The vetgate Authors.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#include <vetgate/protocol.hpp>

#include "yaml_util.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

namespace vetgate::protocol
{

std::string_view to_string(Unit unit)
{
    switch (unit)
    {
        case Unit::Celsius:
            return "celsius";
        case Unit::Fraction:
            return "fraction";
        case Unit::GBps:
            return "GBps";
        case Unit::Seconds:
            return "seconds";
        case Unit::Count:
            return "count";
        case Unit::None:
            return "none";
    }
    return "none";
}

std::string_view to_string(EvaluationKind kind)
{
    switch (kind)
    {
        case EvaluationKind::GpuEval:
            return "GPUEval";
        case EvaluationKind::NcclEval:
            return "NCCLEval";
        case EvaluationKind::CudaEval:
            return "CUDAEval";
        case EvaluationKind::HostMemoryEval:
            return "HostMemoryEval";
        case EvaluationKind::ClockSkewEval:
            return "ClockSkewEval";
    }
    return "?";
}

std::optional<double> EvalSpec::number(std::string_view param) const
{
    auto it = params.find(std::string(param));
    if (it == params.end() || !it->second.is_number())
    {
        return std::nullopt;
    }
    return it->second.number();
}

bool ParamSchema::in_range(double value) const
{
    if (!std::isfinite(value))
    {
        return false;
    }
    bool above = min_exclusive ? value > min : value >= min;
    bool below = max_exclusive ? value < max : value <= max;
    return above && below;
}

std::string ParamSchema::range_text() const
{
    auto bound = [](double v) { return std::isinf(v) ? std::string("inf") : yaml::format_number(v); };
    return fmt::format("{}{}, {}{}", min_exclusive ? '(' : '[', bound(min), bound(max),
                       (max_exclusive || std::isinf(max)) ? ')' : ']');
}

const ParamSchema *KindSchema::find(std::string_view param) const
{
    auto it = std::find_if(params.begin(), params.end(), [&](const ParamSchema &p) { return p.name == param; });
    return it == params.end() ? nullptr : &*it;
}

namespace
{

constexpr double kInf = std::numeric_limits<double>::infinity();

ParamSchema timeout_param()
{
    return {"timeout", Unit::Seconds, false, 0.0, 3600.0, true, false, "per-evaluation time budget (default 60 s)"};
}

std::vector<KindSchema> build_registry()
{
    std::vector<KindSchema> kinds;
    kinds.push_back({EvaluationKind::GpuEval,
                     "GPUEval",
                     "GPU health snapshot: temperature and device memory already in use",
                     {
                         {"max_temp", Unit::Celsius, false, 0.0, 150.0, false, false, "hottest tolerated GPU"},
                         {"max_used_memory", Unit::Fraction, false, 0.0, 1.0, false, false,
                          "largest tolerated fraction of device memory in use before the job"},
                         timeout_param(),
                     }});
    kinds.push_back({EvaluationKind::NcclEval,
                     "NCCLEval",
                     "ring all-reduce over the allocation, reporting bus bandwidth per node",
                     {
                         {"min_bandwidth", Unit::GBps, true, 0.0, kInf, true, false, "lowest tolerated bus bandwidth"},
                         {"payload_mib", Unit::Count, false, 1.0, 65536.0, false, false, "payload size (default 128)"},
                         {"warmup_iters", Unit::Count, false, 0.0, 1000.0, false, false, "untimed iterations (default 5)"},
                         {"iters", Unit::Count, false, 1.0, 1000.0, false, false, "timed iterations (default 10)"},
                         timeout_param(),
                     }});
    kinds.push_back({EvaluationKind::CudaEval,
                     "CUDAEval",
                     "launch a trivial kernel on every GPU",
                     {
                         timeout_param(),
                     }});
    kinds.push_back({EvaluationKind::HostMemoryEval,
                     "HostMemoryEval",
                     "free host memory",
                     {
                         {"min_free_memory", Unit::Fraction, true, 0.0, 1.0, false, false,
                          "smallest tolerated fraction of host memory available"},
                         timeout_param(),
                     }});
    kinds.push_back({EvaluationKind::ClockSkewEval,
                     "ClockSkewEval",
                     "wall-clock offset against the coordinator",
                     {
                         {"max_skew", Unit::Seconds, true, 0.0, 3600.0, false, false, "largest tolerated absolute offset"},
                         timeout_param(),
                     }});
    return kinds;
}

const std::vector<KindSchema> &registry_storage()
{
    static const std::vector<KindSchema> kinds = build_registry();
    return kinds;
}

bool iequals(std::string_view a, std::string_view b)
{
    return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
               return std::tolower(static_cast<unsigned char>(x)) == std::tolower(static_cast<unsigned char>(y));
           });
}

void validate_param(const std::string &eval, const ParamSchema &schema, double value)
{
    if (!std::isfinite(value))
    {
        throw ParamError(eval, schema.name, fmt::format("eval '{}': parameter '{}' must be finite", eval, schema.name));
    }
    if (schema.unit == Unit::Count && value != std::floor(value))
    {
        throw ParamError(eval, schema.name,
                         fmt::format("eval '{}': parameter '{}' must be a whole number", eval, schema.name));
    }
    if (!schema.in_range(value))
    {
        throw ParamError(eval,
                         schema.name,
                         fmt::format("eval '{}': parameter '{}' = {} outside {} ({})",
                                     eval,
                                     schema.name,
                                     yaml::format_number(value),
                                     schema.range_text(),
                                     to_string(schema.unit)));
    }
}

void validate_spec(const EvalSpec &spec)
{
    const auto &schema = registry_describe(spec.kind);
    for (const auto &[param, value] : spec.params)
    {
        const auto *p = schema.find(param);
        if (p == nullptr)
        {
            throw ParamError(spec.name, param,
                             fmt::format("eval '{}': unknown parameter '{}' for {}", spec.name, param, schema.name));
        }
        if (!value.is_number())
        {
            throw ParamError(spec.name, param,
                             fmt::format("eval '{}': parameter '{}' must be a number", spec.name, param));
        }
        if (value.unit != p->unit)
        {
            throw ParamError(spec.name, param,
                             fmt::format("eval '{}': parameter '{}' carries unit {} but {} is required",
                                         spec.name, param, to_string(value.unit), to_string(p->unit)));
        }
        validate_param(spec.name, *p, value.number());
    }
    for (const auto &p : schema.params)
    {
        if (p.mandatory && !spec.params.contains(p.name))
        {
            throw ParamError(spec.name, p.name,
                             fmt::format("eval '{}': missing mandatory parameter '{}'", spec.name, p.name));
        }
    }
}

EvalSpec parse_eval(const YAML::Node &node, std::size_t index)
{
    auto context = fmt::format("evals[{}]", index);
    if (!node.IsMap())
    {
        throw SyntaxError(fmt::format("{}: {} must be a mapping", yaml::where(node), context),
                          node.Mark().line + 1, node.Mark().column + 1);
    }
    auto keys = yaml::keys(node, context);

    EvalSpec spec;
    if (!node["name"])
    {
        throw ParamError("", "name", fmt::format("{} ({}) has no 'name'", context, yaml::where(node)));
    }
    spec.name = yaml::require_string(node["name"], context + ".name");
    if (!node["type"])
    {
        throw ParamError(spec.name, "type", fmt::format("eval '{}' has no 'type'", spec.name));
    }
    auto type_text = yaml::require_string(node["type"], context + ".type");
    auto kind      = resolve_kind(type_text);
    if (!kind)
    {
        throw UnknownEvaluationKind(fmt::format("eval '{}': unknown evaluation type '{}'", spec.name, type_text));
    }
    spec.kind          = *kind;
    const auto &schema = registry_describe(spec.kind);

    for (const auto &key : keys)
    {
        if (key == "name" || key == "type")
        {
            continue;
        }
        const auto &value = node[key];
        if (key == "requirements")
        {
            if (value.IsNull())
            {
                continue;
            }
            spec.requirements = yaml::require_string_list(value, context + ".requirements");
            continue;
        }
        const auto *p = schema.find(key);
        if (p == nullptr)
        {
            throw ParamError(spec.name, key,
                             fmt::format("eval '{}': unknown parameter '{}' for {}", spec.name, key, schema.name));
        }
        auto number = yaml::as_number(value);
        if (!number)
        {
            throw ParamError(spec.name, key,
                             fmt::format("eval '{}': parameter '{}' must be a number in {} ({})",
                                         spec.name, key, to_string(p->unit), yaml::where(value)));
        }
        validate_param(spec.name, *p, *number);
        spec.params.emplace(key, TypedValue {*number, p->unit});
    }
    validate_spec(spec);
    return spec;
}

} // namespace

std::span<const KindSchema> registry()
{
    return registry_storage();
}

std::optional<EvaluationKind> resolve_kind(std::string_view type_value)
{
    auto dot = type_value.rfind('.');
    auto leaf = dot == std::string_view::npos ? type_value : type_value.substr(dot + 1);
    for (const auto &k : registry_storage())
    {
        if (iequals(leaf, k.name))
        {
            return k.kind;
        }
    }
    return std::nullopt;
}

const KindSchema &registry_describe(EvaluationKind kind)
{
    for (const auto &k : registry_storage())
    {
        if (k.kind == kind)
        {
            return k;
        }
    }
    throw UnknownEvaluationKind(fmt::format("unregistered evaluation kind {}", static_cast<int>(kind)));
}

const KindSchema &registry_describe(std::string_view kind_name)
{
    auto kind = resolve_kind(kind_name);
    if (!kind)
    {
        throw UnknownEvaluationKind(fmt::format("unknown evaluation type '{}'", kind_name));
    }
    return registry_describe(*kind);
}

VettingProtocol parse_protocol(std::string_view document)
{
    auto root = yaml::load(document);
    if (!root.IsDefined() || root.IsNull())
    {
        throw SyntaxError("empty protocol document", 1, 1);
    }
    auto keys = yaml::keys(root, "protocol");

    VettingProtocol protocol;
    for (const auto &key : keys)
    {
        if (key != "name" && key != "evals" && key != "version")
        {
            const auto &n = root[key];
            throw SyntaxError(fmt::format("{}: unknown top-level key '{}'", yaml::where(n), key),
                              n.Mark().line + 1, n.Mark().column + 1);
        }
    }
    if (root["version"])
    {
        auto version = yaml::require_string(root["version"], "version");
        if (version != kSchemaVersion)
        {
            throw UnsupportedVersion(fmt::format("unsupported protocol version '{}'", version));
        }
        protocol.version = version;
    }
    if (!root["name"])
    {
        throw SyntaxError("protocol has no 'name'", 1, 1);
    }
    protocol.name = yaml::require_string(root["name"], "name");

    auto evals = root["evals"];
    if (!evals)
    {
        throw SyntaxError("protocol has no 'evals' list", 1, 1);
    }
    if (!evals.IsSequence())
    {
        throw SyntaxError(fmt::format("{}: 'evals' must be a list", yaml::where(evals)),
                          evals.Mark().line + 1, evals.Mark().column + 1);
    }

    std::set<std::string> names;
    std::size_t index = 0;
    for (const auto &node : evals)
    {
        auto spec = parse_eval(node, index++);
        if (!names.insert(spec.name).second)
        {
            throw DuplicateEvalName(fmt::format("eval name '{}' appears more than once", spec.name));
        }
        protocol.evals.push_back(std::move(spec));
    }
    return protocol;
}

VettingProtocol load_protocol(const std::string &path)
{
    return parse_protocol(yaml::read_file(path));
}

void validate(const VettingProtocol &protocol)
{
    if (protocol.version != kSchemaVersion)
    {
        throw UnsupportedVersion(fmt::format("unsupported protocol version '{}'", protocol.version));
    }
    std::set<std::string> names;
    for (const auto &spec : protocol.evals)
    {
        validate_spec(spec);
        if (!names.insert(spec.name).second)
        {
            throw DuplicateEvalName(fmt::format("eval name '{}' appears more than once", spec.name));
        }
    }
}

std::string serialize_protocol(const VettingProtocol &protocol)
{
    std::string out;
    out += fmt::format("name: {}\n", yaml::quote(protocol.name));
    if (protocol.evals.empty())
    {
        out += "evals: []\n";
        return out;
    }
    out += "evals:\n";
    for (const auto &spec : protocol.evals)
    {
        out += fmt::format("  - name: {}\n", yaml::quote(spec.name));
        out += fmt::format("    type: {}\n", to_string(spec.kind));
        for (const auto &[param, value] : spec.params)
        {
            auto text = value.is_number() ? yaml::format_number(value.number()) : yaml::quote(std::get<std::string>(value.value));
            out += fmt::format("    {}: {}\n", param, text);
        }
        if (!spec.requirements.empty())
        {
            out += "    requirements:\n";
            for (const auto &r : spec.requirements)
            {
                out += fmt::format("      - {}\n", yaml::quote(r));
            }
        }
    }
    return out;
}

} // namespace vetgate::protocol
