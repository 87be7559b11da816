// rvm: resource-safe bytecode virtual machine
// Copyright 2026 The rvm Authors.
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "rvm/generator.hpp"
#include "rvm/safety.hpp"
#include "rvm/textfmt.hpp"
#include "rule_fidelity.hpp"

using namespace rvm;

namespace {

const char* kBankStructs = R"(
resource Coin { value: u64 }
resource Credit { amt: u64, bank: address }
resource Bank { balance: Coin }
)";

StructTable bank_table() {
    ParseResult<StructTable> parsed = parse_struct_table(kBankStructs);
    REQUIRE(parsed.ok());
    return *parsed.value;
}

}  // namespace

TEST_CASE("parse_program handles locals and simple code") {
    ParseResult<Program> parsed = parse_program("locals x code { LoadConst 5 \n StLoc x }");
    REQUIRE(parsed.ok());
    CHECK(parsed.value->locals == std::vector<std::string>{"x"});
    REQUIRE(parsed.value->code.size() == 2);
    CHECK(parsed.value->code[0] == Instruction::load_const(prim_u64(5)));
    CHECK(parsed.value->code[1] == Instruction::st_loc("x"));
}

TEST_CASE("parse_program resolves labels and desugars Jump") {
    ParseResult<Program> parsed = parse_program(R"(
        locals x
        code {
            top: LoadConst true
            Branch top
            Jump top
        }
    )");
    REQUIRE(parsed.ok());
    const std::vector<Instruction>& code = parsed.value->code;
    REQUIRE(code.size() == 4);  // Jump expands to LoadConst true; Branch
    CHECK(code[1] == Instruction::branch(0));
    CHECK(code[2] == Instruction::load_const(prim_bool(true)));
    CHECK(code[3] == Instruction::branch(0));
}

TEST_CASE("the adapted withdraw body parses and validates") {
    std::string text = std::string(kBankStructs) + R"(
        locals x0, r, a
        code {
            LoadConst 0x1
            MoveFrom Credit
            StLoc x0
            MvLoc x0
            Unpack Credit
            BorrowGlobal Bank
            BorrowField balance
            BorrowField value
            StLoc r
            StLoc a
        }
    )";
    ParseResult<Program> parsed = parse_program(text);
    REQUIRE(parsed.ok());
    CHECK(validate_program(*parsed.value).empty());
}

TEST_CASE("parse_program reports diagnostics with positions") {
    ParseResult<Program> unresolved = parse_program("locals x code { Branch nowhere }");
    REQUIRE(!unresolved.ok());
    CHECK(unresolved.diagnostics[0].message.find("unresolved label") != std::string::npos);
    CHECK(unresolved.diagnostics[0].line == 1);

    ParseResult<Program> unknown = parse_program("locals x code { Frobnicate }");
    REQUIRE(!unknown.ok());
    CHECK(unknown.diagnostics[0].message.find("unknown mnemonic") != std::string::npos);

    ParseResult<Program> dup = parse_program(
        "resource R { v: u64 } resource R { v: u64 } locals x code { }");
    REQUIRE(!dup.ok());
    CHECK(dup.diagnostics[0].message.find("duplicate struct") != std::string::npos);

    // Static validation failures surface through parse as well.
    ParseResult<Program> ghost = parse_program("locals x code { Pack Ghost }");
    REQUIRE(!ghost.ok());
}

TEST_CASE("parse_state assigns locations in file order and tags in pre-order") {
    StructTable decls = bank_table();
    ParseResult<GlobalState> parsed = parse_state(
        "publish 0x1 Coin Coin{value: 5}\n"
        "publish 0x2 Bank Bank{balance: Coin{value: 10}}\n",
        decls);
    REQUIRE(parsed.ok());
    const GlobalState& st = *parsed.value;
    CHECK(st.memory.size() == 2);
    CHECK(st.next_location == 2);
    CHECK(st.next_tag == 3);  // Coin, Bank, nested Coin

    const TaggedValue& coin = st.memory.at(st.globals.at({*Address::parse("0x1"), "Coin"}));
    CHECK(coin.tag == Tag::resource(0));
    const TaggedValue& bank = st.memory.at(st.globals.at({*Address::parse("0x2"), "Bank"}));
    CHECK(bank.tag == Tag::resource(1));
    CHECK(subterm(bank, {"balance"})->tag == Tag::resource(2));
}

TEST_CASE("parse_state rejects malformed publications") {
    StructTable decls = bank_table();

    ParseResult<GlobalState> dup = parse_state(
        "publish 0x1 Coin Coin{value: 5}\n"
        "publish 0x01 Coin Coin{value: 6}\n",  // same address, canonicalized
        decls);
    REQUIRE(!dup.ok());
    CHECK(dup.diagnostics[0].message.find("duplicate publication") != std::string::npos);

    StructTable with_pair({
        {"Coin", true, {{"value", FieldType::u64()}}},
        {"Pair", false, {{"a", FieldType::u64()}, {"b", FieldType::u64()}}},
    });
    ParseResult<GlobalState> pair = parse_state("publish 0x1 Pair Pair{a: 1, b: 2}", with_pair);
    REQUIRE(!pair.ok());
    CHECK(pair.diagnostics[0].message.find("not a resource") != std::string::npos);

    ParseResult<GlobalState> mismatch =
        parse_state("publish 0x1 Coin Coin{value: true}", decls);
    REQUIRE(!mismatch.ok());

    ParseResult<GlobalState> missing_field =
        parse_state("publish 0x1 Credit Credit{amt: 1}", decls);
    REQUIRE(!missing_field.ok());
}

TEST_CASE("serialize_state is canonical and only applies to finalized states") {
    StructTable decls = bank_table();
    ParseResult<GlobalState> parsed = parse_state(
        "publish 0x2 Bank Bank{balance: Coin{value: 10}}\n"
        "publish 0x1 Coin Coin{value: 5}\n",
        decls);
    REQUIRE(parsed.ok());

    std::optional<std::string> text = serialize_state(*parsed.value);
    REQUIRE(text.has_value());
    // Entries sort by address; tags are omitted.
    CHECK(*text ==
          "publish 0x1 Coin Coin{value: 5}\n"
          "publish 0x2 Bank Bank{balance: Coin{value: 10}}\n");

    // serialize . parse . serialize is byte-identical.
    ParseResult<GlobalState> reparsed = parse_state(*text, decls);
    REQUIRE(reparsed.ok());
    CHECK(*serialize_state(*reparsed.value) == *text);

    GlobalState empty;
    CHECK(*serialize_state(empty) == "");

    GlobalState busy;
    busy.push(rvm::testing::u64_val(1));
    CHECK(!serialize_state(busy).has_value());
}

TEST_CASE("state round-trip preserves values up to tags") {
    StructTable decls = bank_table();
    ParseResult<GlobalState> parsed = parse_state(
        "publish 0x1 Coin Coin{value: 5}\n"
        "publish 0x1 Credit Credit{amt: 10, bank: 0x2}\n"
        "publish 0x2 Bank Bank{balance: Coin{value: 10}}\n",
        decls);
    REQUIRE(parsed.ok());
    ParseResult<GlobalState> roundtrip = parse_state(*serialize_state(*parsed.value), decls);
    REQUIRE(roundtrip.ok());
    REQUIRE(roundtrip.value->globals.size() == parsed.value->globals.size());
    for (const auto& [id, c] : parsed.value->globals) {
        Location c2 = roundtrip.value->globals.at(id);
        CHECK(equal_ignoring_tags(parsed.value->memory.at(c), roundtrip.value->memory.at(c2)));
    }
}

TEST_CASE("render_program round-trips through the parser") {
    GenConfig cfg;
    cfg.seed = 7;
    auto [program, initial] = generate(cfg);
    std::string text = render_program(program);
    ParseResult<Program> reparsed = parse_program(text);
    REQUIRE(reparsed.ok());
    CHECK(reparsed.value->code == program.code);
    CHECK(reparsed.value->locals == program.locals);
    CHECK(render_struct_table(reparsed.value->structs) == render_struct_table(program.structs));
}

TEST_CASE("parsers survive arbitrary byte input") {
    Rng rng(99);
    StructTable decls = bank_table();
    for (int i = 0; i < 2000; ++i) {
        std::string junk;
        std::size_t len = rng.below(160);
        for (std::size_t j = 0; j < len; ++j)
            junk.push_back(static_cast<char>(rng.below(256)));
        // Any outcome is fine as long as failures are diagnostics.
        ParseResult<Program> p = parse_program(junk);
        if (!p.value.has_value())
            CHECK(!p.diagnostics.empty());
        ParseResult<GlobalState> s = parse_state(junk, decls);
        if (!s.value.has_value())
            CHECK(!s.diagnostics.empty());
    }
}
