/*
 * Copyright (c) 2026, The vetgate Authors.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <vetgate/error.hpp>

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vetgate::hostlist
{

VETGATE_DEFINE_ERROR(MalformedHostlist);

/// Expand a compressed host list such as "nid[001-003],nid007" into the
/// individual host names, preserving the order in which they are written.
///
/// Bracket groups hold comma-separated numbers or ascending ranges; the
/// zero-padded width of a range is the width of its lower bound. Several
/// bracket groups in one item expand as a cartesian product
/// ("r[1-2]n[1-2]" -> r1n1, r1n2, r2n1, r2n2).
std::vector<std::string> expand(std::string_view expression);

/// Compress host names into canonical hostlist notation.
///
/// Duplicates are dropped. Names ending in digits are grouped by (prefix,
/// digit count) and emitted in ascending numeric order; a group holding a
/// single host is written without brackets. Names without a numeric tail
/// are emitted verbatim. expand(compress(names)) yields the sorted, unique
/// input.
std::string compress(std::span<const std::string> names);

/// The order compress() emits hosts in: by prefix, then digit count, then
/// numeric value. Names without a numeric tail sort by their full text.
std::vector<std::string> canonical_order(std::span<const std::string> names);

} // namespace vetgate::hostlist
