/*
 * Copyright (c) 2026, The vetgate Authors.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <stdexcept>
#include <string>

namespace vetgate
{

/// Root of every error raised by the library. Each module derives the
/// typed errors its contract names.
class Error : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;

    /// Short machine-readable name ("ParamError", "UnknownNode", ...).
    virtual const char *kind() const noexcept
    {
        return "Error";
    }
};

#define VETGATE_DEFINE_ERROR(Name)                     \
    class Name : public ::vetgate::Error               \
    {                                                  \
    public:                                            \
        using ::vetgate::Error::Error;                 \
        const char *kind() const noexcept override     \
        {                                              \
            return #Name;                              \
        }                                              \
    }

/// A caller broke an operation precondition (bad interval, wrong verdict kind, ...).
VETGATE_DEFINE_ERROR(PreconditionError);

/// Filesystem failure while reading or writing an artifact.
VETGATE_DEFINE_ERROR(IoError);

/// Malformed YAML-subset document. Line and column are 1-based; 0 when unknown.
class SyntaxError : public Error
{
public:
    SyntaxError(const std::string &message, int line, int column)
        : Error(message)
        , m_line(line)
        , m_column(column)
    {}

    const char *kind() const noexcept override
    {
        return "SyntaxError";
    }

    int line() const noexcept
    {
        return m_line;
    }

    int column() const noexcept
    {
        return m_column;
    }

private:
    int m_line;
    int m_column;
};

} // namespace vetgate
