// rvm: resource-safe bytecode virtual machine
// Copyright 2026 The rvm Authors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>

#include "rvm/interpreter.hpp"
#include "rvm/program.hpp"
#include "rvm/state.hpp"

namespace rvm {

/// First violation found in a deterministic traversal order (memory by
/// location, stack top-down, locals by name).
struct CheckFailure {
    std::string clause;
    std::string witness;

    std::string render() const { return clause + ": " + witness; }
};

struct WellFormednessReport {
    std::optional<CheckFailure> globally_consistent;
    std::optional<CheckFailure> tag_consistent;
    std::optional<CheckFailure> non_aliasing;

    bool well_formed() const {
        return !globally_consistent && !tag_consistent && !non_aliasing;
    }
    std::string render() const;
};

/// (i) every value in memory or on the stack is well-formed; (ii) the memory
/// domain is exactly the locations reachable from the global store and the
/// locals (no dangling locations, no garbage); (iii) every global entry holds
/// a resource-tagged value of its declared type.
std::optional<CheckFailure> check_globally_consistent(const GlobalState& st,
                                                      const StructTable& decls);

/// Each resource tag occurs at most once across all subterm positions of
/// memory values and stack values combined.
std::optional<CheckFailure> check_tag_consistent(const GlobalState& st);

/// Distinct locals holding locations map to distinct locations, global ids
/// map to distinct locations, and no global shares a location with a local.
/// Aliasing between references is allowed.
std::optional<CheckFailure> check_non_aliasing(const GlobalState& st);

WellFormednessReport check_well_formed(const GlobalState& st, const StructTable& decls);

/// Resource tags occurring anywhere in memory values or stack values
/// (subterm closure, nested resources included).
std::set<std::uint64_t> resources_of(const GlobalState& st);

/// Conservation audit for one execution: the final resource set must equal
/// (initial ∪ introduced) \ eliminated.
struct TraceAudit {
    std::set<std::uint64_t> initial_resources;
    std::set<std::uint64_t> introduced;
    std::set<std::uint64_t> eliminated;
    std::set<std::uint64_t> final_resources;

    std::set<std::uint64_t> expected_final() const;
    bool passes() const { return final_resources == expected_final(); }
    std::string render() const;
};

TraceAudit audit_trace(const GlobalState& initial, const ExecutionTrace& trace,
                       const GlobalState& final_state);

struct InvariantFault {
    std::string check;    // "globally_consistent", "tag_consistent", ...
    std::string details;

    std::string render() const { return "invariant fault [" + check + "] " + details; }
};

/// Incremental audit state threaded through a checked execution: maintains
/// the introduced/eliminated sets from trace events and cross-checks the
/// event-derived resource set against a full re-scan after every step.
class TraceChecker {
public:
    TraceChecker(const GlobalState& initial_state, const StructTable& decls);

    /// Validates the state reached after one Continue step. Any failure
    /// indicates an interpreter bug, never a user-program error.
    std::optional<InvariantFault> after_step(const GlobalState& st, const TraceEvent& event);

    const std::set<std::uint64_t>& initial_resources() const { return initial_; }
    const std::set<std::uint64_t>& introduced() const { return introduced_; }
    const std::set<std::uint64_t>& eliminated() const { return eliminated_; }

private:
    const StructTable& decls_;
    std::set<std::uint64_t> initial_;
    std::set<std::uint64_t> introduced_;
    std::set<std::uint64_t> eliminated_;
    std::set<std::uint64_t> tracked_;  // event-maintained resource set
};

struct CheckedStepResult {
    StepResult step;
    std::optional<InvariantFault> fault;
};

/// Performs one step and, when it continues, re-validates well-formedness
/// and the prefix conservation equation on the new state.
CheckedStepResult checked_step(const Program& p, ProgramState& ps, TraceChecker& checker,
                               Mutation mutation = Mutation::None);

std::string render_tag_set(const std::set<std::uint64_t>& tags);

}  // namespace rvm
