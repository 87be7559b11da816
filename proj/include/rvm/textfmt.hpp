// rvm: resource-safe bytecode virtual machine
// Copyright 2026 The rvm Authors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rvm/program.hpp"
#include "rvm/state.hpp"

namespace rvm {

template <typename T>
struct ParseResult {
    std::optional<T> value;
    std::vector<Diagnostic> diagnostics;

    bool ok() const { return value.has_value() && diagnostics.empty(); }
};

/// Parses the textual program format (.mvp). Whitespace-insensitive,
/// `#` line comments, labels resolve to instruction indices, and the Jump
/// pseudo-instruction desugars to LoadConst true; Branch.
ParseResult<Program> parse_program(std::string_view text);

/// Parses the global-state file format (.gst): one `publish <address>
/// <TypeName> <record-literal>` entry per resource. Values receive fresh
/// locations in file order and every resource node receives a fresh tag in
/// pre-order, so loading is deterministic.
ParseResult<GlobalState> parse_state(std::string_view text, const StructTable& decls);

/// Canonical serialization: entries sorted by (address, type name), record
/// fields in declaration order, tags omitted. Only finalized states (empty
/// locals and stack) serialize; returns nullopt otherwise.
std::optional<std::string> serialize_state(const GlobalState& st);

/// Program rendering; parse_program(render_program(p)) reproduces p.
std::string render_program(const Program& p);

/// Struct-declaration fragment of the program format; used to embed the
/// declaration table in trace logs.
std::string render_struct_table(const StructTable& table);
ParseResult<StructTable> parse_struct_table(std::string_view text);

}  // namespace rvm
