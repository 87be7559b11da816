// rvm: resource-safe bytecode virtual machine
// Copyright 2026 The rvm Authors.
// SPDX-License-Identifier: Apache-2.0
#include "rvm/program.hpp"

#include <algorithm>
#include <set>

namespace rvm {

std::string render_field_type(const FieldType& t) {
    switch (t.kind) {
    case FieldType::Kind::Bool: return "bool";
    case FieldType::Kind::U64: return "u64";
    case FieldType::Kind::Address: return "address";
    case FieldType::Kind::Struct: return t.struct_name;
    }
    return "?";
}

const FieldDecl* StructDecl::field(std::string_view field_name) const {
    for (const FieldDecl& f : fields) {
        if (f.name == field_name)
            return &f;
    }
    return nullptr;
}

StructTable::StructTable(std::vector<StructDecl> decls) : decls_(std::move(decls)) {
    for (std::size_t i = 0; i < decls_.size(); ++i)
        index_.emplace(decls_[i].name, i);
}

const StructDecl* StructTable::find(std::string_view name) const {
    auto it = index_.find(name);
    if (it == index_.end())
        return nullptr;
    return &decls_[it->second];
}

namespace {

bool transitively_resource_impl(const StructTable& table, std::string_view name,
                                std::set<std::string, std::less<>>& visiting) {
    const StructDecl* decl = table.find(name);
    if (decl == nullptr)
        return false;
    if (decl->is_resource)
        return true;
    // Guards against malformed recursive tables; cycles contribute nothing.
    if (!visiting.emplace(name).second)
        return false;
    for (const FieldDecl& f : decl->fields) {
        if (f.type.kind == FieldType::Kind::Struct &&
            transitively_resource_impl(table, f.type.struct_name, visiting))
            return true;
    }
    return false;
}

}  // namespace

bool StructTable::transitively_resource(std::string_view name) const {
    std::set<std::string, std::less<>> visiting;
    return transitively_resource_impl(*this, name, visiting);
}

int op_arity(OpKind k) { return k == OpKind::Not ? 1 : 2; }

std::string_view op_kind_name(OpKind k) {
    switch (k) {
    case OpKind::Add: return "Add";
    case OpKind::Sub: return "Sub";
    case OpKind::Mul: return "Mul";
    case OpKind::Div: return "Div";
    case OpKind::Mod: return "Mod";
    case OpKind::Lt: return "Lt";
    case OpKind::Le: return "Le";
    case OpKind::Gt: return "Gt";
    case OpKind::Ge: return "Ge";
    case OpKind::Eq: return "Eq";
    case OpKind::Neq: return "Neq";
    case OpKind::And: return "And";
    case OpKind::Or: return "Or";
    case OpKind::Not: return "Not";
    }
    return "?";
}

std::optional<OpKind> op_kind_from_name(std::string_view name) {
    static constexpr OpKind kinds[] = {OpKind::Add, OpKind::Sub, OpKind::Mul, OpKind::Div,
                                       OpKind::Mod, OpKind::Lt,  OpKind::Le,  OpKind::Gt,
                                       OpKind::Ge,  OpKind::Eq,  OpKind::Neq, OpKind::And,
                                       OpKind::Or,  OpKind::Not};
    for (OpKind k : kinds) {
        if (op_kind_name(k) == name)
            return k;
    }
    return std::nullopt;
}

Instruction Instruction::mv_loc(std::string x) { return {Opcode::MvLoc, std::move(x)}; }
Instruction Instruction::cp_loc(std::string x) { return {Opcode::CpLoc, std::move(x)}; }
Instruction Instruction::st_loc(std::string x) { return {Opcode::StLoc, std::move(x)}; }
Instruction Instruction::borrow_loc(std::string x) { return {Opcode::BorrowLoc, std::move(x)}; }
Instruction Instruction::read_ref() { return {Opcode::ReadRef, {}}; }
Instruction Instruction::write_ref() { return {Opcode::WriteRef, {}}; }
Instruction Instruction::freeze_ref() { return {Opcode::FreezeRef, {}}; }
Instruction Instruction::pack(std::string s) { return {Opcode::Pack, std::move(s)}; }
Instruction Instruction::unpack(std::string s) { return {Opcode::Unpack, std::move(s)}; }
Instruction Instruction::borrow_field(std::string f) {
    return {Opcode::BorrowField, std::move(f)};
}
Instruction Instruction::move_to(std::string s) { return {Opcode::MoveTo, std::move(s)}; }
Instruction Instruction::move_from(std::string s) { return {Opcode::MoveFrom, std::move(s)}; }
Instruction Instruction::borrow_global(std::string s) {
    return {Opcode::BorrowGlobal, std::move(s)};
}
Instruction Instruction::exists(std::string s) { return {Opcode::Exists, std::move(s)}; }
Instruction Instruction::pop() { return {Opcode::Pop, {}}; }

Instruction Instruction::load_const(PrimitiveValue a) {
    Instruction instr;
    instr.opcode = Opcode::LoadConst;
    instr.constant = std::move(a);
    return instr;
}

Instruction Instruction::stack_op(OpKind k) {
    Instruction instr;
    instr.opcode = Opcode::Op;
    instr.op = k;
    return instr;
}

Instruction Instruction::branch(std::uint64_t label) {
    Instruction instr;
    instr.opcode = Opcode::Branch;
    instr.target = label;
    return instr;
}

std::string render_instruction(const Instruction& instr) {
    switch (instr.opcode) {
    case Opcode::MvLoc: return "MvLoc " + instr.symbol;
    case Opcode::CpLoc: return "CpLoc " + instr.symbol;
    case Opcode::StLoc: return "StLoc " + instr.symbol;
    case Opcode::BorrowLoc: return "BorrowLoc " + instr.symbol;
    case Opcode::ReadRef: return "ReadRef";
    case Opcode::WriteRef: return "WriteRef";
    case Opcode::FreezeRef: return "FreezeRef";
    case Opcode::Pack: return "Pack " + instr.symbol;
    case Opcode::Unpack: return "Unpack " + instr.symbol;
    case Opcode::BorrowField: return "BorrowField " + instr.symbol;
    case Opcode::MoveTo: return "MoveTo " + instr.symbol;
    case Opcode::MoveFrom: return "MoveFrom " + instr.symbol;
    case Opcode::BorrowGlobal: return "BorrowGlobal " + instr.symbol;
    case Opcode::Exists: return "Exists " + instr.symbol;
    case Opcode::Pop: return "Pop";
    case Opcode::LoadConst: return "LoadConst " + render_primitive(instr.constant);
    case Opcode::Op: return std::string(op_kind_name(instr.op));
    case Opcode::Branch: return "Branch " + std::to_string(instr.target);
    }
    return "?";
}

bool Program::declares_local(std::string_view name) const {
    return std::find(locals.begin(), locals.end(), name) != locals.end();
}

std::string Diagnostic::render() const {
    if (line == 0)
        return message;
    return std::to_string(line) + ":" + std::to_string(column) + ": " + message;
}

namespace {

void check_no_recursion(const StructTable& table, std::vector<Diagnostic>& out) {
    // DFS over field struct references; 0 = unseen, 1 = in progress, 2 = done.
    std::map<std::string, int> mark;
    std::vector<const StructDecl*> stack;
    for (const StructDecl& decl : table.decls()) {
        if (mark[decl.name] != 0)
            continue;
        std::vector<std::pair<const StructDecl*, std::size_t>> work;
        work.emplace_back(&decl, 0);
        mark[decl.name] = 1;
        while (!work.empty()) {
            auto& [cur, next_field] = work.back();
            if (next_field >= cur->fields.size()) {
                mark[cur->name] = 2;
                work.pop_back();
                continue;
            }
            const FieldType& ft = cur->fields[next_field].type;
            ++next_field;
            if (ft.kind != FieldType::Kind::Struct)
                continue;
            const StructDecl* child = table.find(ft.struct_name);
            if (child == nullptr)
                continue;  // reported separately
            int& m = mark[child->name];
            if (m == 1) {
                out.push_back({"recursive struct type '" + child->name + "'"});
                return;
            }
            if (m == 0) {
                m = 1;
                work.emplace_back(child, std::size_t{0});
            }
        }
    }
}

}  // namespace

std::vector<Diagnostic> validate_struct_table(const StructTable& table) {
    std::vector<Diagnostic> out;
    std::set<std::string> names;
    for (const StructDecl& decl : table.decls()) {
        if (!names.insert(decl.name).second)
            out.push_back({"duplicate struct '" + decl.name + "'"});
        if (decl.fields.empty())
            out.push_back({"struct '" + decl.name + "' has no fields"});
        std::set<std::string> fields;
        for (const FieldDecl& f : decl.fields) {
            if (!fields.insert(f.name).second)
                out.push_back({"duplicate field '" + f.name + "' in struct '" + decl.name + "'"});
            if (f.type.kind == FieldType::Kind::Struct) {
                const StructDecl* target = table.find(f.type.struct_name);
                if (target == nullptr) {
                    out.push_back({"unknown struct '" + f.type.struct_name + "' in field '" +
                                   decl.name + "." + f.name + "'"});
                } else if (!decl.is_resource && table.transitively_resource(f.type.struct_name)) {
                    out.push_back({"non-resource struct '" + decl.name +
                                   "' stores resource type '" + f.type.struct_name + "'"});
                }
            }
        }
    }
    check_no_recursion(table, out);
    return out;
}

std::vector<Diagnostic> validate_program(const Program& p) {
    std::vector<Diagnostic> out = validate_struct_table(p.structs);

    std::set<std::string> local_names;
    for (const std::string& x : p.locals) {
        if (!local_names.insert(x).second)
            out.push_back({"duplicate local '" + x + "'"});
    }

    auto field_declared = [&p](std::string_view f) {
        for (const StructDecl& decl : p.structs.decls()) {
            if (decl.field(f) != nullptr)
                return true;
        }
        return false;
    };

    for (std::size_t pc = 0; pc < p.code.size(); ++pc) {
        const Instruction& instr = p.code[pc];
        auto at = [&](std::string msg) {
            out.push_back({"pc " + std::to_string(pc) + ": " + std::move(msg)});
        };
        switch (instr.opcode) {
        case Opcode::MvLoc:
        case Opcode::CpLoc:
        case Opcode::StLoc:
        case Opcode::BorrowLoc:
            if (!p.declares_local(instr.symbol))
                at("unknown local '" + instr.symbol + "'");
            break;
        case Opcode::Pack:
        case Opcode::Unpack:
            if (p.structs.find(instr.symbol) == nullptr)
                at("unknown struct '" + instr.symbol + "'");
            break;
        case Opcode::BorrowField:
            if (!field_declared(instr.symbol))
                at("unknown field '" + instr.symbol + "'");
            break;
        case Opcode::MoveTo:
        case Opcode::MoveFrom:
        case Opcode::BorrowGlobal:
        case Opcode::Exists: {
            const StructDecl* decl = p.structs.find(instr.symbol);
            if (decl == nullptr)
                at("unknown struct '" + instr.symbol + "'");
            else if (!decl->is_resource)
                at("struct '" + instr.symbol + "' is not a resource");
            break;
        }
        case Opcode::Branch:
            // Branching to one past the end is a jump to the halt state.
            if (instr.target > p.code.size())
                at("branch target out of range");
            break;
        case Opcode::ReadRef:
        case Opcode::WriteRef:
        case Opcode::FreezeRef:
        case Opcode::Pop:
        case Opcode::LoadConst:
        case Opcode::Op:
            break;
        }
    }
    return out;
}

}  // namespace rvm
