// rvm: resource-safe bytecode virtual machine
// Copyright 2026 The rvm Authors.
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "rvm/generator.hpp"
#include "rvm/interpreter.hpp"
#include "rvm/safety.hpp"
#include "rvm/textfmt.hpp"
#include "rule_fidelity.hpp"

using namespace rvm;
using rvm::testing::addr;
using rvm::testing::coin;
using rvm::testing::fixture_program;
using rvm::testing::u64_val;

TEST_CASE("rule fidelity table") {
    for (const rvm::testing::RuleCheck& check : rvm::testing::rule_fidelity_checks()) {
        CAPTURE(check.name);
        std::string why;
        bool ok = check.run(why);
        CAPTURE(why);
        CHECK(ok);
    }
}

TEST_CASE("empty program on the empty state succeeds") {
    Program p = fixture_program();
    TransactionResult result = execute_transaction(p, GlobalState{});
    CHECK(result.status == TxStatus::Success);
    CHECK(result.state == GlobalState{});
    CHECK(result.trace.empty());
}

TEST_CASE("division by zero aborts and restores the pre-state") {
    Program p = fixture_program({
        Instruction::load_const(prim_u64(1)),
        Instruction::load_const(prim_u64(0)),
        Instruction::stack_op(OpKind::Div),
    });
    StructTable decls = p.structs;
    ParseResult<GlobalState> initial = parse_state("publish 0x1 Coin Coin{value: 5}", decls);
    REQUIRE(initial.ok());
    TransactionResult result = execute_transaction(p, *initial.value);
    CHECK(result.status == TxStatus::Aborted);
    CHECK(result.abort_kind == AbortKind::DivisionByZero);
    CHECK(result.state == *initial.value);
    REQUIRE(result.trace.size() == 3);
    CHECK(result.trace[2].outcome == "abort:DivisionByZero");
}

TEST_CASE("a resource left in a local rejects the transaction") {
    Program p = fixture_program({
        Instruction::load_const(prim_u64(1)),
        Instruction::pack("Coin"),
        Instruction::st_loc("x"),
    });
    TransactionResult result = execute_transaction(p, GlobalState{});
    CHECK(result.status == TxStatus::Rejected);
    CHECK(result.reject_reason.find("retains a resource") != std::string::npos);
    CHECK(result.state == GlobalState{});
}

TEST_CASE("a value left on the stack rejects the transaction") {
    Program p = fixture_program({Instruction::load_const(prim_u64(1))});
    TransactionResult result = execute_transaction(p, GlobalState{});
    CHECK(result.status == TxStatus::Rejected);
    CHECK(result.reject_reason.find("stack not empty") != std::string::npos);
}

TEST_CASE("success finalization keeps only globally reachable cells") {
    // Pack a coin, publish it, and keep a plain number in a local: the
    // local's cell is discarded, the published coin survives.
    Program p = fixture_program({
        Instruction::load_const(prim_u64(7)),
        Instruction::st_loc("x"),
        Instruction::load_const(prim_u64(5)),
        Instruction::pack("Coin"),
        Instruction::load_const(prim_address(addr("0x1"))),
        Instruction::move_to("Coin"),
    });
    TransactionResult result = execute_transaction(p, GlobalState{});
    REQUIRE(result.status == TxStatus::Success);
    CHECK(result.state.locals.empty());
    CHECK(result.state.stack.empty());
    CHECK(result.state.memory.size() == 1);
    CHECK(result.state.globals.size() == 1);
    Location c = result.state.globals.at(GlobalResourceId{addr("0x1"), "Coin"});
    CHECK(result.state.memory.at(c) == coin(5, 0));
}

TEST_CASE("references in locals do not block success") {
    Program p = fixture_program({
        Instruction::load_const(prim_u64(7)),
        Instruction::st_loc("x"),
        Instruction::borrow_loc("x"),
        Instruction::st_loc("y"),
    });
    TransactionResult result = execute_transaction(p, GlobalState{});
    CHECK(result.status == TxStatus::Success);
    CHECK(result.state.memory.empty());
    CHECK(result.state.globals.empty());
    CHECK(result.state.locals.empty());
    CHECK(result.state.stack.empty());
}

TEST_CASE("the step budget rejects runaway loops and restores the pre-state") {
    ParseResult<Program> parsed = parse_program(R"(
        locals x
        code {
            top: LoadConst true
            Branch top
        }
    )");
    REQUIRE(parsed.ok());
    ExecOptions options;
    options.step_budget = 100;
    TransactionResult result = execute_transaction(*parsed.value, GlobalState{}, options);
    CHECK(result.status == TxStatus::BudgetExhausted);
    CHECK(result.state == GlobalState{});
}

TEST_CASE("abort atomicity holds for every non-success outcome") {
    StructTable decls = fixture_program().structs;
    ParseResult<GlobalState> initial = parse_state(
        "publish 0x1 Coin Coin{value: 5}\n"
        "publish 0x2 Bank Bank{balance: Coin{value: 9}}\n",
        decls);
    REQUIRE(initial.ok());

    // Mutates the bank balance, publishes a new coin, then aborts.
    ParseResult<Program> parsed = parse_program(R"(
        resource Coin { value: u64 }
        resource Bank { balance: Coin }
        locals r
        code {
            LoadConst 0x2
            BorrowGlobal Bank
            BorrowField balance
            BorrowField value
            LoadConst 1
            WriteRef
            LoadConst 3
            Pack Coin
            LoadConst 0x3
            MoveTo Coin
            LoadConst 1
            LoadConst 0
            Div
        }
    )");
    REQUIRE(parsed.ok());
    TransactionResult result = execute_transaction(*parsed.value, *initial.value);
    CHECK(result.status == TxStatus::Aborted);
    CHECK(result.state == *initial.value);
}

TEST_CASE("WriteRef through a stored reference updates nested state") {
    // Exercises the stack shape of WriteRef: reference first, value on top.
    Program p = fixture_program({
        Instruction::load_const(prim_u64(1)),
        Instruction::pack("Coin"),
        Instruction::load_const(prim_address(addr("0x1"))),
        Instruction::move_to("Coin"),
        Instruction::load_const(prim_address(addr("0x1"))),
        Instruction::borrow_global("Coin"),
        Instruction::borrow_field("value"),
        Instruction::load_const(prim_u64(42)),
        Instruction::write_ref(),
    });
    TransactionResult result = execute_transaction(p, GlobalState{});
    REQUIRE(result.status == TxStatus::Success);
    Location c = result.state.globals.at(GlobalResourceId{addr("0x1"), "Coin"});
    CHECK(*subterm(result.state.memory.at(c), {"value"}) == u64_val(42));
}

TEST_CASE("traces record pack and unpack events exactly for resources") {
    Program p = fixture_program({
        Instruction::load_const(prim_u64(3)),
        Instruction::load_const(prim_u64(4)),
        Instruction::pack("Pair"),
        Instruction::unpack("Pair"),
        Instruction::pop(),
        Instruction::pop(),
        Instruction::load_const(prim_u64(5)),
        Instruction::pack("Coin"),
        Instruction::unpack("Coin"),
        Instruction::pop(),
    });
    TransactionResult result = execute_transaction(p, GlobalState{});
    REQUIRE(result.status == TxStatus::Success);
    std::vector<TraceEvent> events;
    for (const TraceStep& s : result.trace) {
        if (s.event.kind != TraceEventKind::None)
            events.push_back(s.event);
    }
    REQUIRE(events.size() == 2);  // plain records produce no events
    CHECK(events[0] == TraceEvent::pack(0));
    CHECK(events[1] == TraceEvent::unpack(0));
}

TEST_CASE("determinism: identical runs produce identical traces and states") {
    GenConfig cfg;
    cfg.seed = 11;
    auto [program, initial] = generate(cfg);
    TransactionResult a = execute_transaction(program, initial);
    TransactionResult b = execute_transaction(program, initial);
    CHECK(a.status == b.status);
    CHECK(a.state == b.state);
    CHECK(render_trace_log(a.trace, std::nullopt) == render_trace_log(b.trace, std::nullopt));
}

TEST_CASE("trace logs round-trip through the parser") {
    Program p = fixture_program({
        Instruction::load_const(prim_u64(5)),
        Instruction::pack("Coin"),
        Instruction::load_const(prim_address(addr("0x7"))),
        Instruction::move_to("Coin"),
    });
    TransactionResult result = execute_transaction(p, GlobalState{});
    REQUIRE(result.status == TxStatus::Success);

    TraceSummary summary;
    summary.status = "success";
    summary.steps = result.trace.size();
    summary.structs = render_struct_table(p.structs);
    summary.initial_digest = content_digest("");
    summary.final_digest = content_digest(*serialize_state(result.state));
    std::string log = render_trace_log(result.trace, summary);

    std::string error;
    std::optional<ParsedTraceLog> parsed = parse_trace_log(log, error);
    REQUIRE(parsed.has_value());
    REQUIRE(parsed->trace.size() == result.trace.size());
    for (std::size_t i = 0; i < result.trace.size(); ++i) {
        CHECK(parsed->trace[i].instr == result.trace[i].instr);
        CHECK(parsed->trace[i].event == result.trace[i].event);
        CHECK(parsed->trace[i].pc == result.trace[i].pc);
    }
    REQUIRE(parsed->summary.has_value());
    CHECK(parsed->summary->final_digest == summary.final_digest);
    CHECK(parsed->summary->structs == summary.structs);

    std::optional<ParsedTraceLog> bad = parse_trace_log("not json\n", error);
    CHECK(!bad.has_value());
}

TEST_CASE("pack/unpack inversion holds for random field stacks") {
    Rng rng(5);
    Program p = fixture_program();
    for (int i = 0; i < 200; ++i) {
        GlobalState st;
        std::uint64_t a = rng.below(1000);
        std::uint64_t b = rng.below(1000);
        st.push(u64_val(a));
        st.push(u64_val(b));
        GlobalState before = st;
        REQUIRE(step_local(p, Instruction::pack("Pair"), st).status == StepStatus::Continue);
        REQUIRE(step_local(p, Instruction::unpack("Pair"), st).status == StepStatus::Continue);
        CHECK(st == before);

        // For resources the inversion holds up to the discarded fresh tag.
        GlobalState rst;
        rst.push(u64_val(a));
        REQUIRE(step_local(p, Instruction::pack("Coin"), rst).status == StepStatus::Continue);
        REQUIRE(step_local(p, Instruction::unpack("Coin"), rst).status == StepStatus::Continue);
        REQUIRE(rst.stack.size() == 1);
        CHECK(*rst.peek() == StackValue{u64_val(a)});
    }
}

TEST_CASE("dangling references are stuck, never a crash") {
    Program p = fixture_program();
    GlobalState st;
    st.locals.emplace("x", Reference{99, {}, Mutability::Mut});

    GlobalState read_state = st;
    read_state.push(Reference{99, {}, Mutability::Mut});
    CHECK(step_local(p, Instruction::read_ref(), read_state).status == StepStatus::Stuck);

    GlobalState write_state = st;
    write_state.push(Reference{99, {}, Mutability::Mut});
    write_state.push(u64_val(1));
    CHECK(step_local(p, Instruction::write_ref(), write_state).status == StepStatus::Stuck);

    GlobalState borrow_state = st;
    borrow_state.push(Reference{99, {}, Mutability::Mut});
    CHECK(step_local(p, Instruction::borrow_field("value"), borrow_state).status ==
          StepStatus::Stuck);
}
