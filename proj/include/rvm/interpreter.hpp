// rvm: resource-safe bytecode virtual machine
// Copyright 2026 The rvm Authors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rvm/program.hpp"
#include "rvm/state.hpp"

namespace rvm {

/// Runtime errors that abort the transaction (as opposed to stuck steps,
/// which a bytecode verifier would have excluded statically).
enum class AbortKind {
    DivisionByZero,
    ArithmeticOverflow,
    GlobalAlreadyExists,
    GlobalMissing,
};

std::string_view abort_kind_name(AbortKind k);

enum class StepStatus {
    Continue,  // rule applied, execution continues
    Halted,    // pc reached the end of the code
    Abort,     // runtime error; transaction reverts
    Stuck,     // rule precondition failed; transaction is rejected
};

enum class TraceEventKind { None, PackResource, UnpackResource };

struct TraceEvent {
    TraceEventKind kind = TraceEventKind::None;
    std::uint64_t tag = 0;

    static TraceEvent none() { return {}; }
    static TraceEvent pack(std::uint64_t t) { return {TraceEventKind::PackResource, t}; }
    static TraceEvent unpack(std::uint64_t t) { return {TraceEventKind::UnpackResource, t}; }

    bool operator==(const TraceEvent&) const = default;
};

struct StepResult {
    StepStatus status = StepStatus::Continue;
    AbortKind abort_kind = AbortKind::DivisionByZero;  // valid when Abort
    std::string rule;                                  // attempted rule when Stuck
    std::string reason;                                // detail when Stuck
    TraceEvent event;                                  // pack/unpack of a resource tag

    static StepResult cont(TraceEvent ev = TraceEvent::none());
    static StepResult halted();
    static StepResult abort(AbortKind k);
    static StepResult stuck(std::string rule, std::string reason);
};

/// Test-only interpreter mutations used by the property-suite sanity checks:
/// each one disables a single guarantee so the dynamic checks must detect it.
enum class Mutation {
    None,
    ReuseTags,         // Pack reuses the previously allocated resource tag
    SkipUnpackEvent,   // Unpack of a resource records no elimination event
};

/// One record per executed step.
struct TraceStep {
    std::uint64_t step = 0;
    std::uint64_t pc = 0;
    Instruction instr;
    TraceEvent event;
    std::string outcome;  // "continue", "halted", "abort:KIND", "stuck:RULE"
};

using ExecutionTrace = std::vector<TraceStep>;

/// Applies one local-state rule (MvLoc, CpLoc, StLoc, BorrowLoc, BorrowField,
/// FreezeRef, ReadRef, WriteRef, Pop, Pack, Unpack, LoadConst, Op).
/// The state is mutated only when the selected rule fully applies.
StepResult step_local(const Program& p, const Instruction& instr, GlobalState& st,
                      Mutation mutation = Mutation::None);

/// Applies one global-state rule (MoveTo, MoveFrom, BorrowGlobal, Exists).
StepResult step_global(const Program& p, const Instruction& instr, GlobalState& st);

/// Executes the instruction at ps.pc and advances the program counter.
/// Branch pops a non-resource boolean from the stack; true transfers control
/// to the target, false falls through.
StepResult step(const Program& p, ProgramState& ps, Mutation mutation = Mutation::None);

enum class TxStatus {
    Success,
    Aborted,
    Rejected,
    BudgetExhausted,
    InvariantFault,  // a dynamic safety check failed mid-run (implementation bug)
};

std::string_view tx_status_name(TxStatus s);

struct ExecOptions {
    std::uint64_t step_budget = 1'000'000;
    bool checked = false;  // run well-formedness checks and a trace audit per step
    Mutation mutation = Mutation::None;
};

struct TransactionResult {
    TxStatus status = TxStatus::Success;
    GlobalState state;  // finalized state on Success, restored pre-state otherwise
    ExecutionTrace trace;
    AbortKind abort_kind = AbortKind::DivisionByZero;  // valid when Aborted
    std::string reject_rule;                           // valid when Rejected
    std::string reject_reason;
    std::string fault_report;  // valid when InvariantFault
};

/// Runs a transaction with all-or-nothing semantics. Success requires the
/// final operand stack to be empty and no local variable to retain a
/// resource; the finalized state keeps only memory cells reachable from the
/// global store. Every other outcome restores the pre-state.
TransactionResult execute_transaction(const Program& p, const GlobalState& initial,
                                      const ExecOptions& options = {});

/// Line-delimited structured log: one JSON object per step with fields
/// step, pc, instr, event, outcome, followed by one summary record.
struct TraceSummary {
    std::string status;
    std::uint64_t steps = 0;
    std::string structs;         // struct declarations, program text fragment
    std::string initial_digest;  // digest of the canonical initial state
    std::string final_digest;    // digest of the canonical output state
};

std::string render_trace_log(const ExecutionTrace& trace,
                             const std::optional<TraceSummary>& summary);

struct ParsedTraceLog {
    ExecutionTrace trace;
    std::optional<TraceSummary> summary;
};

/// Parses a trace log; diagnostics on malformed records. Instruction
/// operands are recovered from the rendered mnemonics.
std::optional<ParsedTraceLog> parse_trace_log(const std::string& text, std::string& error);

/// Stable 64-bit FNV-1a digest rendered as hex; used to fingerprint
/// canonical state serializations inside trace logs.
std::string content_digest(std::string_view bytes);

}  // namespace rvm
