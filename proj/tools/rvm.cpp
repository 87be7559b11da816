// rvm: resource-safe bytecode virtual machine
// Copyright 2026 The rvm Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Command-line driver: parse, execute, check, audit, fuzz.
//
// Exit codes: 0 success, 1 transaction aborted, 2 transaction rejected or
// audit/invariant failure, 3 parse or validation error, 4 usage error.
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "rvm/generator.hpp"
#include "rvm/interpreter.hpp"
#include "rvm/safety.hpp"
#include "rvm/textfmt.hpp"

namespace {

constexpr int kExitSuccess = 0;
constexpr int kExitAborted = 1;
constexpr int kExitRejected = 2;
constexpr int kExitParseError = 3;
constexpr int kExitUsage = 4;

std::optional<std::string> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        return std::nullopt;
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

/// Writes via a temporary file and renames, so a failed run never leaves a
/// partially written output behind.
bool write_file_atomic(const std::string& path, const std::string& content) {
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            return false;
        out << content;
        if (!out)
            return false;
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    return !ec;
}

void print_diagnostics(const std::string& path, const std::vector<rvm::Diagnostic>& diags) {
    for (const rvm::Diagnostic& d : diags)
        std::cerr << path << ":" << d.render() << "\n";
}

std::optional<rvm::Program> load_program(const std::string& path) {
    std::optional<std::string> text = read_file(path);
    if (!text) {
        std::cerr << "cannot read " << path << "\n";
        return std::nullopt;
    }
    rvm::ParseResult<rvm::Program> parsed = rvm::parse_program(*text);
    if (!parsed.ok()) {
        print_diagnostics(path, parsed.diagnostics);
        return std::nullopt;
    }
    return std::move(parsed.value);
}

std::optional<rvm::GlobalState> load_state(const std::string& path,
                                           const rvm::StructTable& decls) {
    std::optional<std::string> text = read_file(path);
    if (!text) {
        std::cerr << "cannot read " << path << "\n";
        return std::nullopt;
    }
    rvm::ParseResult<rvm::GlobalState> parsed = rvm::parse_state(*text, decls);
    if (!parsed.ok()) {
        print_diagnostics(path, parsed.diagnostics);
        return std::nullopt;
    }
    return std::move(parsed.value);
}

struct RunArgs {
    std::string program_path;
    std::string state_path;
    std::string out_path;
    std::string trace_path;
    bool checked = false;
    bool no_audit = false;
    std::uint64_t budget = 1'000'000;
};

int cmd_run(const RunArgs& args) {
    std::optional<rvm::Program> program = load_program(args.program_path);
    if (!program)
        return kExitParseError;
    std::optional<rvm::GlobalState> initial = load_state(args.state_path, program->structs);
    if (!initial)
        return kExitParseError;

    rvm::WellFormednessReport initial_report = rvm::check_well_formed(*initial, program->structs);
    if (!initial_report.well_formed()) {
        std::cerr << "initial state is not well-formed:\n" << initial_report.render();
        return kExitParseError;
    }

    rvm::ExecOptions options;
    options.checked = args.checked;
    options.step_budget = args.budget;
    rvm::TransactionResult result = rvm::execute_transaction(*program, *initial, options);

    std::string initial_canon = *rvm::serialize_state(*initial);
    rvm::TraceSummary summary;
    summary.status = std::string(rvm::tx_status_name(result.status));
    summary.steps = result.trace.size();
    summary.structs = rvm::render_struct_table(program->structs);
    summary.initial_digest = rvm::content_digest(initial_canon);

    int exit_code = kExitSuccess;
    std::string final_canon;
    switch (result.status) {
    case rvm::TxStatus::Success: {
        std::optional<std::string> serialized = rvm::serialize_state(result.state);
        if (!serialized) {
            std::cerr << "internal error: final state does not serialize\n";
            return kExitRejected;
        }
        final_canon = *serialized;
        summary.final_digest = rvm::content_digest(final_canon);
        rvm::TraceAudit audit = rvm::audit_trace(*initial, result.trace, result.state);
        if (!args.no_audit) {
            std::cout << audit.render();
            if (!audit.passes()) {
                std::cerr << "conservation audit failed\n";
                return kExitRejected;
            }
        }
        if (!write_file_atomic(args.out_path, final_canon)) {
            std::cerr << "cannot write " << args.out_path << "\n";
            return kExitUsage;
        }
        std::cout << "success: " << result.trace.size() << " steps, output written to "
                  << args.out_path << "\n";
        break;
    }
    case rvm::TxStatus::Aborted:
        // The pre-state is untouched on disk; nothing is written.
        summary.final_digest = summary.initial_digest;
        std::cout << "aborted: " << rvm::abort_kind_name(result.abort_kind) << "\n";
        exit_code = kExitAborted;
        break;
    case rvm::TxStatus::Rejected:
        summary.final_digest = summary.initial_digest;
        std::cout << "rejected: " << result.reject_rule << ": " << result.reject_reason << "\n";
        exit_code = kExitRejected;
        break;
    case rvm::TxStatus::BudgetExhausted:
        summary.final_digest = summary.initial_digest;
        std::cout << "rejected: step budget exhausted\n";
        exit_code = kExitRejected;
        break;
    case rvm::TxStatus::InvariantFault:
        summary.final_digest = summary.initial_digest;
        std::cout << "invariant fault: " << result.fault_report << "\n";
        exit_code = kExitRejected;
        break;
    }

    if (!args.trace_path.empty()) {
        std::string log = rvm::render_trace_log(result.trace, summary);
        if (!write_file_atomic(args.trace_path, log)) {
            std::cerr << "cannot write " << args.trace_path << "\n";
            return kExitUsage;
        }
    }
    return exit_code;
}

int cmd_check(const std::string& program_path) {
    std::optional<rvm::Program> program = load_program(program_path);
    if (!program)
        return kExitParseError;
    std::cout << "ok: " << program->code.size() << " instructions, "
              << program->structs.decls().size() << " structs\n";
    return kExitSuccess;
}

/// Offline re-verification of a run's conservation equation from its
/// artifacts. The initial state reloads with the exact tag assignment of the
/// original run (loading is deterministic), so introduced/eliminated tags
/// from the trace live in the same tag space. The final state file reloads
/// with fresh tags, so it is compared by resource type multiset and by the
/// canonical-serialization digest recorded in the trace summary.
int cmd_audit(const std::string& trace_path, const std::string& initial_path,
              const std::string& final_path) {
    std::optional<std::string> trace_text = read_file(trace_path);
    std::optional<std::string> initial_text = read_file(initial_path);
    std::optional<std::string> final_text = read_file(final_path);
    if (!trace_text || !initial_text || !final_text) {
        std::cerr << "cannot read input files\n";
        return kExitParseError;
    }
    std::string error;
    std::optional<rvm::ParsedTraceLog> log = rvm::parse_trace_log(*trace_text, error);
    if (!log) {
        std::cerr << trace_path << ": " << error << "\n";
        return kExitParseError;
    }

    bool has_events = false;
    for (const rvm::TraceStep& s : log->trace)
        has_events |= s.event.kind != rvm::TraceEventKind::None;
    if (!log->summary && has_events) {
        std::cerr << "trace has events but no summary record; cannot audit\n";
        return kExitParseError;
    }

    // Degraded mode for summary-less artifacts: every record node counts as
    // a resource node and the equation must be empty-on-both-sides.
    if (!log->summary) {
        auto count_nodes = [](const std::string& text) {
            return std::count(text.begin(), text.end(), '{');
        };
        if (count_nodes(*initial_text) != count_nodes(*final_text)) {
            std::cout << "audit: FAIL (no summary; states differ structurally)\n";
            return kExitRejected;
        }
        std::cout << "audit: PASS (degraded: no summary record)\n";
        return kExitSuccess;
    }

    rvm::ParseResult<rvm::StructTable> decls = rvm::parse_struct_table(log->summary->structs);
    if (!decls.ok()) {
        std::cerr << "trace summary carries an invalid struct table\n";
        return kExitParseError;
    }
    rvm::ParseResult<rvm::GlobalState> initial = rvm::parse_state(*initial_text, *decls.value);
    if (!initial.ok()) {
        print_diagnostics(initial_path, initial.diagnostics);
        return kExitParseError;
    }
    rvm::ParseResult<rvm::GlobalState> final_state = rvm::parse_state(*final_text, *decls.value);
    if (!final_state.ok()) {
        print_diagnostics(final_path, final_state.diagnostics);
        return kExitParseError;
    }

    // Digest check: the state files must be the canonical serializations the
    // run produced (catches value-level tampering that tag sets cannot see).
    std::string initial_digest = rvm::content_digest(*rvm::serialize_state(*initial.value));
    std::string final_digest = rvm::content_digest(*rvm::serialize_state(*final_state.value));
    bool ok = true;
    if (initial_digest != log->summary->initial_digest) {
        std::cout << "audit: initial state does not match the recorded digest\n";
        ok = false;
    }
    if (final_digest != log->summary->final_digest) {
        std::cout << "audit: final state does not match the recorded digest\n";
        ok = false;
    }

    if (log->summary->status != "success") {
        // Aborted and rejected runs revert to the pre-state; the audit holds
        // trivially when the final state equals the initial state.
        if (final_digest != initial_digest) {
            std::cout << "audit: FAIL (non-success run but final state differs from initial)\n";
            return kExitRejected;
        }
        std::cout << (ok ? "audit: PASS (reverted run)\n" : "audit: FAIL\n");
        return ok ? kExitSuccess : kExitRejected;
    }

    // Conservation equation in the original run's tag space.
    std::map<std::uint64_t, std::string> tag_types;
    for (const auto& [c, tv] : initial.value->memory) {
        // Every resource node of the reloaded initial state reproduces the
        // original run's tag for that node.
        struct Walker {
            std::map<std::uint64_t, std::string>& out;
            void walk(const rvm::TaggedValue& v) {
                if (v.tag.is_resource() && v.record() != nullptr)
                    out.emplace(v.tag.resource_id(), v.record()->struct_name);
                if (const rvm::RecordValue* rec = v.record()) {
                    for (const auto& [f, ftv] : rec->fields)
                        walk(ftv);
                }
            }
        } walker{tag_types};
        walker.walk(tv);
    }

    rvm::TraceAudit audit;
    audit.initial_resources = rvm::resources_of(*initial.value);
    for (const rvm::TraceStep& s : log->trace) {
        if (s.event.kind == rvm::TraceEventKind::PackResource) {
            audit.introduced.insert(s.event.tag);
            tag_types.emplace(s.event.tag, s.instr.symbol);
        } else if (s.event.kind == rvm::TraceEventKind::UnpackResource) {
            audit.eliminated.insert(s.event.tag);
        }
    }

    std::multiset<std::string> expected_types;
    for (std::uint64_t t : audit.expected_final()) {
        auto it = tag_types.find(t);
        if (it == tag_types.end()) {
            std::cout << "audit: FAIL (trace eliminates or keeps an unknown tag t"
                      << std::to_string(t) << ")\n";
            return kExitRejected;
        }
        expected_types.insert(it->second);
    }
    std::multiset<std::string> actual_types;
    for (const auto& [c, tv] : final_state.value->memory) {
        struct Walker {
            std::multiset<std::string>& out;
            void walk(const rvm::TaggedValue& v) {
                if (v.tag.is_resource() && v.record() != nullptr)
                    out.insert(v.record()->struct_name);
                if (const rvm::RecordValue* rec = v.record()) {
                    for (const auto& [f, ftv] : rec->fields)
                        walk(ftv);
                }
            }
        } walker{actual_types};
        walker.walk(tv);
    }

    audit.final_resources = audit.expected_final();  // rendering only
    std::cout << "initial:    " << rvm::render_tag_set(audit.initial_resources) << "\n";
    std::cout << "introduced: " << rvm::render_tag_set(audit.introduced) << "\n";
    std::cout << "eliminated: " << rvm::render_tag_set(audit.eliminated) << "\n";

    if (expected_types != actual_types) {
        std::cout << "audit: FAIL (final resource types do not match the equation)\n";
        return kExitRejected;
    }
    std::cout << (ok ? "audit: PASS\n" : "audit: FAIL\n");
    return ok ? kExitSuccess : kExitRejected;
}

struct FuzzArgs {
    std::uint64_t seeds = 100;
    std::uint64_t base_seed = 0;
    std::size_t max_instr = 48;
    double resource_prob = 0.6;
    double branch_prob = 0.15;
    bool inject_bug = false;
    std::string per_seed_path;
};

int cmd_fuzz(const FuzzArgs& args) {
    rvm::GenConfig cfg;
    cfg.seed = args.base_seed;
    cfg.max_instructions = args.max_instr;
    cfg.resource_probability = args.resource_prob;
    cfg.branch_probability = args.branch_prob;
    rvm::Mutation mutation =
        args.inject_bug ? rvm::Mutation::ReuseTags : rvm::Mutation::None;
    rvm::PropertyReport report = rvm::run_property_suite(args.seeds, cfg, mutation);
    std::cout << report.render();
    if (!args.per_seed_path.empty() &&
        !write_file_atomic(args.per_seed_path, report.render_seed_records())) {
        std::cerr << "cannot write " << args.per_seed_path << "\n";
        return kExitUsage;
    }
    return report.failures == 0 ? kExitSuccess : kExitRejected;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"rvm - resource-safe bytecode virtual machine"};
    app.require_subcommand(1);

    RunArgs run_args;
    CLI::App* run = app.add_subcommand("run", "execute a transaction");
    run->add_option("--program", run_args.program_path, "program file (.mvp)")->required();
    run->add_option("--state", run_args.state_path, "initial global state (.gst)")->required();
    run->add_option("--out", run_args.out_path, "output state file")->required();
    run->add_option("--trace", run_args.trace_path, "write a step log");
    run->add_option("--budget", run_args.budget, "step budget");
    run->add_flag("--checked", run_args.checked, "validate state invariants after every step");
    run->add_flag("--no-audit", run_args.no_audit, "skip the conservation audit");

    std::string check_program;
    CLI::App* check = app.add_subcommand("check", "statically validate a program");
    check->add_option("--program", check_program, "program file (.mvp)")->required();

    std::string audit_trace_path, audit_initial, audit_final;
    CLI::App* audit = app.add_subcommand("audit", "re-verify a run's conservation audit");
    audit->add_option("--trace", audit_trace_path, "trace log from run --trace")->required();
    audit->add_option("--initial", audit_initial, "initial state file")->required();
    audit->add_option("--final", audit_final, "final state file")->required();

    FuzzArgs fuzz_args;
    CLI::App* fuzz = app.add_subcommand("fuzz", "run the random-program property suite");
    fuzz->add_option("--seeds", fuzz_args.seeds, "number of seeds");
    fuzz->add_option("--base-seed", fuzz_args.base_seed, "first seed value");
    fuzz->add_option("--max-instr", fuzz_args.max_instr, "instruction budget per program");
    fuzz->add_option("--resource-prob", fuzz_args.resource_prob, "resource struct probability");
    fuzz->add_option("--branch-prob", fuzz_args.branch_prob, "branch emission probability");
    fuzz->add_flag("--inject-bug", fuzz_args.inject_bug,
                   "seed a tag-reuse interpreter bug (the suite must detect it)");
    fuzz->add_option("--per-seed", fuzz_args.per_seed_path,
                     "write line-delimited per-seed records to this file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return e.get_exit_code() == 0 ? kExitSuccess : kExitUsage;
    }

    if (run->parsed())
        return cmd_run(run_args);
    if (check->parsed())
        return cmd_check(check_program);
    if (audit->parsed())
        return cmd_audit(audit_trace_path, audit_initial, audit_final);
    if (fuzz->parsed())
        return cmd_fuzz(fuzz_args);
    return kExitUsage;
}
