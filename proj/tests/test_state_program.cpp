// rvm: resource-safe bytecode virtual machine
// Copyright 2026 The rvm Authors.
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "rvm/program.hpp"
#include "rvm/state.hpp"
#include "rvm/textfmt.hpp"
#include "rule_fidelity.hpp"

using namespace rvm;
using rvm::testing::addr;
using rvm::testing::coin;
using rvm::testing::u64_val;

TEST_CASE("fresh locations and tags are monotone and never repeat") {
    GlobalState st;
    CHECK(st.fresh_location() == 0);
    CHECK(st.next_location == 1);

    GlobalState st7;
    st7.next_location = 7;
    CHECK(st7.fresh_location() == 7);
    CHECK(st7.next_location == 8);

    GlobalState tags;
    CHECK(tags.fresh_tag() == 0);
    CHECK(tags.fresh_tag() == 1);
    CHECK(tags.fresh_tag() == 2);

    std::set<std::uint64_t> seen;
    GlobalState many;
    for (int i = 0; i < 1000; ++i)
        CHECK(seen.insert(many.fresh_tag()).second);
}

TEST_CASE("snapshot/restore is a structural round-trip") {
    GlobalState empty;
    CHECK(restore(snapshot(empty)) == empty);

    GlobalState st;
    st.memory.emplace(st.fresh_location(), coin(5, st.fresh_tag()));
    st.globals.emplace(GlobalResourceId{addr("0x1"), "Coin"}, Location{0});
    st.locals.emplace("x", Reference{0, {"value"}, Mutability::Immut});
    st.push(u64_val(9));

    StateSnapshot snap = snapshot(st);
    GlobalState mutated = st;
    mutated.memory.clear();
    mutated.stack.clear();
    CHECK(mutated != st);
    CHECK(restore(snap) == st);
}

TEST_CASE("snapshot/restore on loader-produced states") {
    StructTable decls({
        {"Coin", true, {{"value", FieldType::u64()}}},
        {"Bank", true, {{"balance", FieldType::record("Coin")}}},
    });
    ParseResult<GlobalState> parsed = parse_state(
        "publish 0x1 Coin Coin{value: 5}\n"
        "publish 0x2 Bank Bank{balance: Coin{value: 10}}\n",
        decls);
    REQUIRE(parsed.ok());
    CHECK(restore(snapshot(*parsed.value)) == *parsed.value);
}

TEST_CASE("validate_program resolves operands") {
    Program empty;
    CHECK(validate_program(empty).empty());

    Program ghost = rvm::testing::fixture_program({Instruction::pack("Ghost")});
    std::vector<Diagnostic> diags = validate_program(ghost);
    REQUIRE(diags.size() == 1);
    CHECK(diags[0].message.find("unknown struct") != std::string::npos);

    Program branches = rvm::testing::fixture_program({
        Instruction::load_const(prim_bool(true)),
        Instruction::branch(99),
        Instruction::pop(),
    });
    diags = validate_program(branches);
    REQUIRE(diags.size() == 1);
    CHECK(diags[0].message.find("branch target out of range") != std::string::npos);

    // Branching to one past the end is the halt state and is legal.
    Program to_end = rvm::testing::fixture_program({
        Instruction::load_const(prim_bool(true)),
        Instruction::branch(2),
    });
    CHECK(validate_program(to_end).empty());

    Program unknown_local = rvm::testing::fixture_program({Instruction::mv_loc("nope")});
    CHECK(validate_program(unknown_local).size() == 1);

    // Global-state instructions require resource structs.
    Program pair_global = rvm::testing::fixture_program({Instruction::exists("Pair")});
    diags = validate_program(pair_global);
    REQUIRE(diags.size() == 1);
    CHECK(diags[0].message.find("not a resource") != std::string::npos);
}

TEST_CASE("struct table validation") {
    StructTable dup({
        {"S", false, {{"f", FieldType::u64()}}},
        {"S", false, {{"f", FieldType::u64()}}},
    });
    CHECK(!validate_struct_table(dup).empty());

    // A non-resource struct cannot hold a resource, even transitively.
    StructTable nested({
        {"Coin", true, {{"value", FieldType::u64()}}},
        {"Wrap", true, {{"c", FieldType::record("Coin")}}},
        {"Bad", false, {{"w", FieldType::record("Wrap")}}},
    });
    std::vector<Diagnostic> diags = validate_struct_table(nested);
    REQUIRE(diags.size() == 1);
    CHECK(diags[0].message.find("stores resource type") != std::string::npos);

    StructTable recursive({
        {"A", false, {{"b", FieldType::record("B")}}},
        {"B", false, {{"a", FieldType::record("A")}}},
    });
    bool found = false;
    for (const Diagnostic& d : validate_struct_table(recursive))
        found |= d.message.find("recursive") != std::string::npos;
    CHECK(found);

    StructTable empty_decl({{"E", false, {}}});
    CHECK(!validate_struct_table(empty_decl).empty());
}
