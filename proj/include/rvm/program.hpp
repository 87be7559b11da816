// rvm: resource-safe bytecode virtual machine
// Copyright 2026 The rvm Authors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rvm/values.hpp"

namespace rvm {

/// Declared type of a struct field: a primitive type or another struct.
struct FieldType {
    enum class Kind { Bool, U64, Address, Struct };
    Kind kind = Kind::U64;
    std::string struct_name;  // valid when kind == Struct

    static FieldType boolean() { return {Kind::Bool, {}}; }
    static FieldType u64() { return {Kind::U64, {}}; }
    static FieldType address() { return {Kind::Address, {}}; }
    static FieldType record(std::string name) { return {Kind::Struct, std::move(name)}; }

    bool operator==(const FieldType&) const = default;
};

std::string render_field_type(const FieldType& t);

struct FieldDecl {
    FieldName name;
    FieldType type;
};

struct StructDecl {
    std::string name;
    bool is_resource = false;
    std::vector<FieldDecl> fields;

    const FieldDecl* field(std::string_view field_name) const;
};

/// Struct declaration table; lookups by name, iteration in declaration order.
class StructTable {
public:
    StructTable() = default;
    explicit StructTable(std::vector<StructDecl> decls);

    const StructDecl* find(std::string_view name) const;
    const std::vector<StructDecl>& decls() const { return decls_; }
    bool empty() const { return decls_.empty(); }

    /// True when `name` names a struct that is or transitively contains a
    /// resource struct.
    bool transitively_resource(std::string_view name) const;

private:
    std::vector<StructDecl> decls_;
    std::map<std::string, std::size_t, std::less<>> index_;
};

enum class Opcode {
    MvLoc,
    CpLoc,
    StLoc,
    BorrowLoc,
    ReadRef,
    WriteRef,
    FreezeRef,
    Pack,
    Unpack,
    BorrowField,
    MoveTo,
    MoveFrom,
    BorrowGlobal,
    Exists,
    Pop,
    LoadConst,
    Op,
    Branch,
};

enum class OpKind { Add, Sub, Mul, Div, Mod, Lt, Le, Gt, Ge, Eq, Neq, And, Or, Not };

/// Operand count consumed from the stack (1 for Not, 2 otherwise).
int op_arity(OpKind k);
std::string_view op_kind_name(OpKind k);
std::optional<OpKind> op_kind_from_name(std::string_view name);

struct Instruction {
    Opcode opcode = Opcode::Pop;
    std::string symbol;              // local / struct / field name operand
    std::uint64_t target = 0;        // Branch target
    PrimitiveValue constant = false; // LoadConst payload
    OpKind op = OpKind::Add;         // Op payload

    static Instruction mv_loc(std::string x);
    static Instruction cp_loc(std::string x);
    static Instruction st_loc(std::string x);
    static Instruction borrow_loc(std::string x);
    static Instruction read_ref();
    static Instruction write_ref();
    static Instruction freeze_ref();
    static Instruction pack(std::string s);
    static Instruction unpack(std::string s);
    static Instruction borrow_field(std::string f);
    static Instruction move_to(std::string s);
    static Instruction move_from(std::string s);
    static Instruction borrow_global(std::string s);
    static Instruction exists(std::string s);
    static Instruction pop();
    static Instruction load_const(PrimitiveValue a);
    static Instruction stack_op(OpKind k);
    static Instruction branch(std::uint64_t label);

    bool operator==(const Instruction&) const = default;
};

/// Mnemonic with operands, e.g. "Pack Coin", "Branch 3", "LoadConst 0x1".
std::string render_instruction(const Instruction& instr);

struct Program {
    StructTable structs;
    std::vector<std::string> locals;
    std::vector<Instruction> code;

    bool declares_local(std::string_view name) const;
};

struct Diagnostic {
    std::string message;
    std::size_t line = 0;  // 1-based; 0 when not tied to a source position
    std::size_t column = 0;

    std::string render() const;
};

/// Static operand resolution: locals declared, struct/field names resolve,
/// global-state instructions name resource structs, branch targets in range.
/// A valid program is executable but may still get stuck or abort at runtime.
std::vector<Diagnostic> validate_program(const Program& p);

/// Struct-table consistency: unique names, resolvable field types, no
/// recursive types, no resource stored inside a non-resource struct.
std::vector<Diagnostic> validate_struct_table(const StructTable& table);

}  // namespace rvm
