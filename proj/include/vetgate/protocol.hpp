/*
 * Copyright (c) 2026, The vetgate Authors.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <vetgate/error.hpp>

#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace vetgate::protocol
{

using vetgate::SyntaxError;

VETGATE_DEFINE_ERROR(UnknownEvaluationKind);
VETGATE_DEFINE_ERROR(DuplicateEvalName);
VETGATE_DEFINE_ERROR(UnsupportedVersion);

/// Missing, unknown, ill-typed or out-of-range evaluation parameter.
class ParamError : public Error
{
public:
    ParamError(std::string eval, std::string param, const std::string &message)
        : Error(message)
        , m_eval(std::move(eval))
        , m_param(std::move(param))
    {}

    const char *kind() const noexcept override
    {
        return "ParamError";
    }

    const std::string &eval() const noexcept
    {
        return m_eval;
    }

    const std::string &param() const noexcept
    {
        return m_param;
    }

private:
    std::string m_eval;
    std::string m_param;
};

enum class Unit
{
    Celsius,
    Fraction,
    GBps,
    Seconds,
    Count,
    None,
};

std::string_view to_string(Unit unit);

struct TypedValue
{
    std::variant<double, std::string> value;
    Unit unit = Unit::None;

    bool is_number() const
    {
        return std::holds_alternative<double>(value);
    }

    double number() const
    {
        return std::get<double>(value);
    }

    bool operator==(const TypedValue &) const = default;
};

enum class EvaluationKind
{
    GpuEval,
    NcclEval,
    CudaEval,
    HostMemoryEval,
    ClockSkewEval,
};

/// Canonical registry name, e.g. "GPUEval".
std::string_view to_string(EvaluationKind kind);

struct EvalSpec
{
    std::string name;
    EvaluationKind kind = EvaluationKind::GpuEval;
    std::map<std::string, TypedValue> params;
    std::vector<std::string> requirements;

    /// Numeric parameter value, if present.
    std::optional<double> number(std::string_view param) const;

    bool operator==(const EvalSpec &) const = default;
};

struct VettingProtocol
{
    std::string name;
    std::vector<EvalSpec> evals;
    std::string version = "1";

    bool operator==(const VettingProtocol &) const = default;
};

inline constexpr std::string_view kSchemaVersion = "1";

struct ParamSchema
{
    std::string name;
    Unit unit          = Unit::None;
    bool mandatory     = false;
    double min         = 0.0;
    double max         = std::numeric_limits<double>::infinity();
    bool min_exclusive = false;
    bool max_exclusive = false;
    std::string description;

    bool in_range(double value) const;

    /// Interval notation, e.g. "[0, 150]" or "(0, inf)".
    std::string range_text() const;
};

struct KindSchema
{
    EvaluationKind kind;
    std::string name;
    std::string description;
    std::vector<ParamSchema> params;

    const ParamSchema *find(std::string_view param) const;
};

/// Every registered evaluation kind, in declaration order.
std::span<const KindSchema> registry();

/// Resolve a `type:` value. Dotted module paths are reduced to their last
/// segment, which is matched case-insensitively against registry names.
std::optional<EvaluationKind> resolve_kind(std::string_view type_value);

const KindSchema &registry_describe(EvaluationKind kind);

/// Throws UnknownEvaluationKind.
const KindSchema &registry_describe(std::string_view kind_name);

/// Parse and validate a protocol document. Every failure raises exactly one
/// typed error and no partial protocol is returned.
VettingProtocol parse_protocol(std::string_view document);

VettingProtocol load_protocol(const std::string &path);

/// Canonical document: name, evals; within an eval name, type, parameters in
/// alphabetical order, requirements.
std::string serialize_protocol(const VettingProtocol &protocol);

/// Re-check an in-memory protocol against the registry (used when protocols
/// are built programmatically rather than parsed).
void validate(const VettingProtocol &protocol);

} // namespace vetgate::protocol
