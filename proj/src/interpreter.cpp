// rvm: resource-safe bytecode virtual machine
// Copyright 2026 The rvm Authors.
// SPDX-License-Identifier: Apache-2.0
#include "rvm/interpreter.hpp"

#include <cassert>
#include <sstream>

#include <json.hpp>

#include "rvm/safety.hpp"

namespace rvm {

std::string_view abort_kind_name(AbortKind k) {
    switch (k) {
    case AbortKind::DivisionByZero: return "DivisionByZero";
    case AbortKind::ArithmeticOverflow: return "ArithmeticOverflow";
    case AbortKind::GlobalAlreadyExists: return "GlobalAlreadyExists";
    case AbortKind::GlobalMissing: return "GlobalMissing";
    }
    return "?";
}

std::string_view tx_status_name(TxStatus s) {
    switch (s) {
    case TxStatus::Success: return "success";
    case TxStatus::Aborted: return "aborted";
    case TxStatus::Rejected: return "rejected";
    case TxStatus::BudgetExhausted: return "budget_exhausted";
    case TxStatus::InvariantFault: return "invariant_fault";
    }
    return "?";
}

StepResult StepResult::cont(TraceEvent ev) {
    StepResult r;
    r.status = StepStatus::Continue;
    r.event = ev;
    return r;
}

StepResult StepResult::halted() {
    StepResult r;
    r.status = StepStatus::Halted;
    return r;
}

StepResult StepResult::abort(AbortKind k) {
    StepResult r;
    r.status = StepStatus::Abort;
    r.abort_kind = k;
    return r;
}

StepResult StepResult::stuck(std::string rule, std::string reason) {
    StepResult r;
    r.status = StepStatus::Stuck;
    r.rule = std::move(rule);
    r.reason = std::move(reason);
    return r;
}

namespace {

std::uint64_t allocate_tag(GlobalState& st, Mutation mutation) {
    if (mutation == Mutation::ReuseTags && st.next_tag > 0)
        return st.next_tag - 1;  // deliberately violates tag freshness
    return st.fresh_tag();
}

const TaggedValue* as_tagged(const StackValue& v) { return std::get_if<TaggedValue>(&v); }
const Reference* as_reference(const StackValue& v) { return std::get_if<Reference>(&v); }

bool is_unrestricted(const TaggedValue& tv) { return !tv.tag.is_resource(); }

/// StLoc eligibility: the target local must be unbound, hold a reference, or
/// hold a location whose value is not a resource. Returns the location to
/// discard when the store overwrites an existing non-resource cell.
bool st_loc_allowed(const GlobalState& st, const std::string& x,
                    std::optional<Location>& discard, std::string& why_not) {
    auto it = st.locals.find(x);
    if (it == st.locals.end())
        return true;
    if (std::holds_alternative<Reference>(it->second))
        return true;
    Location c = std::get<Location>(it->second);
    auto mem = st.memory.find(c);
    if (mem == st.memory.end()) {
        why_not = "local holds a dangling location";
        return false;
    }
    if (!is_unrestricted(mem->second)) {
        why_not = "local holds a resource";
        return false;
    }
    // Overwriting destroys the old non-resource value; its cell is removed so
    // the memory never accumulates garbage.
    discard = c;
    return true;
}

struct LegalOperands {
    std::vector<const PrimitiveValue*> prims;  // left-to-right (deepest first)
};

StepResult check_op_operands(const GlobalState& st, OpKind k, LegalOperands& out) {
    int n = op_arity(k);
    if (st.stack.size() < static_cast<std::size_t>(n))
        return StepResult::stuck("StackOp", "operand stack underflow");
    // Stack depth 0 is the rightmost operand.
    for (int i = n - 1; i >= 0; --i) {
        const StackValue& sv = *st.peek(static_cast<std::size_t>(i));
        const TaggedValue* tv = as_tagged(sv);
        if (tv == nullptr)
            return StepResult::stuck("StackOp", "operand is a reference");
        if (tv->tag.is_resource())
            return StepResult::stuck("StackOp", "operand is a resource");
        const PrimitiveValue* p = tv->primitive();
        if (p == nullptr)
            return StepResult::stuck("StackOp", "operand is a record");
        out.prims.push_back(p);
    }
    return StepResult::cont();
}

StepResult apply_op(OpKind k, const LegalOperands& ops, PrimitiveValue& result) {
    auto u64_at = [&](std::size_t i) { return std::get_if<std::uint64_t>(ops.prims[i]); };
    auto bool_at = [&](std::size_t i) { return std::get_if<bool>(ops.prims[i]); };

    switch (k) {
    case OpKind::Add:
    case OpKind::Sub:
    case OpKind::Mul:
    case OpKind::Div:
    case OpKind::Mod: {
        const std::uint64_t* a = u64_at(0);
        const std::uint64_t* b = u64_at(1);
        if (a == nullptr || b == nullptr)
            return StepResult::stuck("StackOp", "arithmetic requires u64 operands");
        switch (k) {
        case OpKind::Add:
            if (*b > UINT64_MAX - *a)
                return StepResult::abort(AbortKind::ArithmeticOverflow);
            result = prim_u64(*a + *b);
            break;
        case OpKind::Sub:
            if (*a < *b)
                return StepResult::abort(AbortKind::ArithmeticOverflow);
            result = prim_u64(*a - *b);
            break;
        case OpKind::Mul:
            if (*b != 0 && *a > UINT64_MAX / *b)
                return StepResult::abort(AbortKind::ArithmeticOverflow);
            result = prim_u64(*a * *b);
            break;
        case OpKind::Div:
            if (*b == 0)
                return StepResult::abort(AbortKind::DivisionByZero);
            result = prim_u64(*a / *b);
            break;
        case OpKind::Mod:
            if (*b == 0)
                return StepResult::abort(AbortKind::DivisionByZero);
            result = prim_u64(*a % *b);
            break;
        default: break;
        }
        return StepResult::cont();
    }
    case OpKind::Lt:
    case OpKind::Le:
    case OpKind::Gt:
    case OpKind::Ge: {
        const std::uint64_t* a = u64_at(0);
        const std::uint64_t* b = u64_at(1);
        if (a == nullptr || b == nullptr)
            return StepResult::stuck("StackOp", "comparison requires u64 operands");
        bool v = false;
        switch (k) {
        case OpKind::Lt: v = *a < *b; break;
        case OpKind::Le: v = *a <= *b; break;
        case OpKind::Gt: v = *a > *b; break;
        case OpKind::Ge: v = *a >= *b; break;
        default: break;
        }
        result = prim_bool(v);
        return StepResult::cont();
    }
    case OpKind::Eq:
    case OpKind::Neq: {
        // Equality is defined on primitives of the same built-in type only.
        if (ops.prims[0]->index() != ops.prims[1]->index())
            return StepResult::stuck("StackOp", "equality on mismatched operand types");
        bool eq = *ops.prims[0] == *ops.prims[1];
        result = prim_bool(k == OpKind::Eq ? eq : !eq);
        return StepResult::cont();
    }
    case OpKind::And:
    case OpKind::Or: {
        const bool* a = bool_at(0);
        const bool* b = bool_at(1);
        if (a == nullptr || b == nullptr)
            return StepResult::stuck("StackOp", "logic requires boolean operands");
        result = prim_bool(k == OpKind::And ? (*a && *b) : (*a || *b));
        return StepResult::cont();
    }
    case OpKind::Not: {
        const bool* a = bool_at(0);
        if (a == nullptr)
            return StepResult::stuck("StackOp", "Not requires a boolean operand");
        result = prim_bool(!*a);
        return StepResult::cont();
    }
    }
    return StepResult::stuck("StackOp", "unknown operation");
}

StepResult do_mv_loc(const Instruction& instr, GlobalState& st) {
    auto it = st.locals.find(instr.symbol);
    if (it == st.locals.end())
        return StepResult::stuck("MvLoc", "local '" + instr.symbol + "' is unbound");
    if (const Reference* r = std::get_if<Reference>(&it->second)) {
        Reference moved = *r;
        st.locals.erase(it);
        st.push(moved);
        return StepResult::cont();
    }
    Location c = std::get<Location>(it->second);
    auto mem = st.memory.find(c);
    if (mem == st.memory.end())
        return StepResult::stuck("MvLoc", "local points to a missing memory cell");
    TaggedValue moved = std::move(mem->second);
    st.memory.erase(mem);
    st.locals.erase(it);
    st.push(std::move(moved));
    return StepResult::cont();
}

StepResult do_cp_loc(const Instruction& instr, GlobalState& st) {
    auto it = st.locals.find(instr.symbol);
    if (it == st.locals.end())
        return StepResult::stuck("CpLoc", "local '" + instr.symbol + "' is unbound");
    if (const Reference* r = std::get_if<Reference>(&it->second)) {
        st.push(*r);
        return StepResult::cont();
    }
    Location c = std::get<Location>(it->second);
    auto mem = st.memory.find(c);
    if (mem == st.memory.end())
        return StepResult::stuck("CpLoc", "local points to a missing memory cell");
    if (!is_unrestricted(mem->second))
        return StepResult::stuck("CpLoc", "cannot copy a resource");
    st.push(mem->second);  // deep copy
    return StepResult::cont();
}

StepResult do_st_loc(const Instruction& instr, GlobalState& st) {
    if (st.stack.empty())
        return StepResult::stuck("StLoc", "operand stack is empty");
    const bool storing_ref = as_reference(*st.peek()) != nullptr;
    const char* rule = storing_ref ? "StLoc-Ref" : "StLoc-TV";
    std::optional<Location> discard;
    std::string why_not;
    if (!st_loc_allowed(st, instr.symbol, discard, why_not))
        return StepResult::stuck(rule, why_not);
    StackValue popped = st.pop_top();
    if (discard)
        st.memory.erase(*discard);
    if (storing_ref) {
        st.locals.insert_or_assign(instr.symbol, std::get<Reference>(std::move(popped)));
    } else {
        Location fresh = st.fresh_location();
        st.memory.emplace(fresh, std::get<TaggedValue>(std::move(popped)));
        st.locals.insert_or_assign(instr.symbol, fresh);
    }
    return StepResult::cont();
}

StepResult do_borrow_loc(const Instruction& instr, GlobalState& st) {
    auto it = st.locals.find(instr.symbol);
    if (it == st.locals.end())
        return StepResult::stuck("BorrowLoc", "local '" + instr.symbol + "' is unbound");
    const Location* c = std::get_if<Location>(&it->second);
    if (c == nullptr)
        return StepResult::stuck("BorrowLoc", "local holds a reference, not a value");
    st.push(Reference{*c, {}, Mutability::Mut});
    return StepResult::cont();
}

StepResult do_borrow_field(const Instruction& instr, GlobalState& st) {
    if (st.stack.empty())
        return StepResult::stuck("BorrowField", "operand stack is empty");
    const Reference* r = as_reference(*st.peek());
    if (r == nullptr)
        return StepResult::stuck("BorrowField", "stack top is not a reference");
    auto mem = st.memory.find(r->location);
    if (mem == st.memory.end())
        return StepResult::stuck("BorrowField", "dangling reference");
    const TaggedValue* target = subterm(mem->second, r->path);
    if (target == nullptr)
        return StepResult::stuck("BorrowField", "reference path does not resolve");
    const RecordValue* rec = target->record();
    if (rec == nullptr)
        return StepResult::stuck("BorrowField", "referent is not a record");
    if (rec->field(instr.symbol) == nullptr)
        return StepResult::stuck("BorrowField", "no field '" + instr.symbol + "'");
    Reference extended = *r;
    extended.path.push_back(instr.symbol);
    st.pop_top();
    st.push(std::move(extended));
    return StepResult::cont();
}

StepResult do_freeze_ref(GlobalState& st) {
    if (st.stack.empty())
        return StepResult::stuck("FreezeRef", "operand stack is empty");
    const Reference* r = as_reference(*st.peek());
    if (r == nullptr)
        return StepResult::stuck("FreezeRef", "stack top is not a reference");
    Reference frozen = *r;
    frozen.mutability = Mutability::Immut;
    st.pop_top();
    st.push(std::move(frozen));
    return StepResult::cont();
}

StepResult do_read_ref(GlobalState& st) {
    if (st.stack.empty())
        return StepResult::stuck("ReadRef", "operand stack is empty");
    const Reference* r = as_reference(*st.peek());
    if (r == nullptr)
        return StepResult::stuck("ReadRef", "stack top is not a reference");
    auto mem = st.memory.find(r->location);
    if (mem == st.memory.end())
        return StepResult::stuck("ReadRef", "dangling reference");
    const TaggedValue* target = subterm(mem->second, r->path);
    if (target == nullptr)
        return StepResult::stuck("ReadRef", "reference path does not resolve");
    if (!is_unrestricted(*target))
        return StepResult::stuck("ReadRef", "cannot copy a resource out of a reference");
    TaggedValue copy = *target;
    st.pop_top();
    st.push(std::move(copy));
    return StepResult::cont();
}

StepResult do_write_ref(GlobalState& st) {
    if (st.stack.size() < 2)
        return StepResult::stuck("WriteRef", "operand stack underflow");
    const TaggedValue* tv = as_tagged(*st.peek(0));
    if (tv == nullptr)
        return StepResult::stuck("WriteRef", "stack top is not a value");
    if (!is_unrestricted(*tv))
        return StepResult::stuck("WriteRef", "cannot overwrite through a reference with a resource");
    const Reference* r = as_reference(*st.peek(1));
    if (r == nullptr)
        return StepResult::stuck("WriteRef", "no reference beneath the written value");
    if (r->mutability != Mutability::Mut)
        return StepResult::stuck("WriteRef", "reference is immutable");
    auto mem = st.memory.find(r->location);
    if (mem == st.memory.end())
        return StepResult::stuck("WriteRef", "dangling reference");
    const TaggedValue* old = subterm(mem->second, r->path);
    if (old == nullptr)
        return StepResult::stuck("WriteRef", "reference path does not resolve");
    if (!is_unrestricted(*old))
        return StepResult::stuck("WriteRef", "cannot overwrite a resource");
    std::optional<TaggedValue> updated = replace(mem->second, r->path, *tv);
    assert(updated);
    st.pop_top();
    st.pop_top();
    mem->second = std::move(*updated);
    return StepResult::cont();
}

StepResult do_pop(GlobalState& st) {
    if (st.stack.empty())
        return StepResult::stuck("Pop", "operand stack is empty");
    if (const TaggedValue* tv = as_tagged(*st.peek())) {
        if (!is_unrestricted(*tv))
            return StepResult::stuck("Pop", "cannot pop a resource");
        st.pop_top();
        return StepResult::cont();
    }
    st.pop_top();  // Pop-Ref
    return StepResult::cont();
}

StepResult do_pack(const Program& p, const Instruction& instr, GlobalState& st,
                   Mutation mutation) {
    const StructDecl* decl = p.structs.find(instr.symbol);
    if (decl == nullptr)
        return StepResult::stuck("Pack", "unknown struct '" + instr.symbol + "'");
    const std::size_t n = decl->fields.size();
    const char* rule = decl->is_resource ? "Pack-R" : "Pack-U";
    if (st.stack.size() < n)
        return StepResult::stuck(rule, "operand stack underflow");
    for (std::size_t i = 0; i < n; ++i) {
        const TaggedValue* tv = as_tagged(*st.peek(i));
        if (tv == nullptr)
            return StepResult::stuck(rule, "field operand is a reference");
        if (!decl->is_resource && !is_unrestricted(*tv))
            return StepResult::stuck(rule, "resource operand for a non-resource struct");
    }
    // Field i comes from stack depth n-1-i: operands are pushed in
    // declaration order, so the first field sits deepest.
    std::vector<std::pair<FieldName, TaggedValue>> fields;
    fields.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        fields.emplace_back(decl->fields[i].name,
                            std::get<TaggedValue>(*st.peek(n - 1 - i)));
    TraceEvent event = TraceEvent::none();
    Tag tag = Tag::unrestricted();
    if (decl->is_resource) {
        std::uint64_t t = allocate_tag(st, mutation);
        tag = Tag::resource(t);
        event = TraceEvent::pack(t);
    }
    for (std::size_t i = 0; i < n; ++i)
        st.pop_top();
    st.push(make_record(decl->name, std::move(fields), tag));
    return StepResult::cont(event);
}

StepResult do_unpack(const Program& p, const Instruction& instr, GlobalState& st,
                     Mutation mutation) {
    const StructDecl* decl = p.structs.find(instr.symbol);
    if (decl == nullptr)
        return StepResult::stuck("Unpack", "unknown struct '" + instr.symbol + "'");
    if (st.stack.empty())
        return StepResult::stuck("Unpack", "operand stack is empty");
    const TaggedValue* tv = as_tagged(*st.peek());
    if (tv == nullptr)
        return StepResult::stuck("Unpack", "stack top is not a value");
    const RecordValue* rec = tv->record();
    if (rec == nullptr || rec->struct_name != instr.symbol)
        return StepResult::stuck("Unpack", "stack top is not a '" + instr.symbol + "' record");
    TraceEvent event = TraceEvent::none();
    if (tv->tag.is_resource() && mutation != Mutation::SkipUnpackEvent)
        event = TraceEvent::unpack(tv->tag.resource_id());
    // The record's tag is discarded; freshness guarantees it is never reused.
    std::vector<std::pair<FieldName, TaggedValue>> fields =
        std::move(std::get<RecordValue>(std::get<TaggedValue>(st.stack.front()).value).fields);
    st.pop_top();
    for (auto& [fname, ftv] : fields)
        st.push(std::move(ftv));  // first field ends up deepest
    return StepResult::cont(event);
}

StepResult do_stack_op(const Instruction& instr, GlobalState& st) {
    LegalOperands ops;
    StepResult check = check_op_operands(st, instr.op, ops);
    if (check.status != StepStatus::Continue)
        return check;
    PrimitiveValue result = false;
    StepResult applied = apply_op(instr.op, ops, result);
    if (applied.status != StepStatus::Continue)
        return applied;
    for (int i = 0; i < op_arity(instr.op); ++i)
        st.pop_top();
    st.push(make_primitive(std::move(result)));
    return StepResult::cont();
}

/// Shared preamble of the global-state rules: a declared resource struct and
/// a non-resource address on top of the stack.
StepResult pop_global_operand(const Program& p, const Instruction& instr, const GlobalState& st,
                              const char* rule, Address& out) {
    const StructDecl* decl = p.structs.find(instr.symbol);
    if (decl == nullptr)
        return StepResult::stuck(rule, "unknown struct '" + instr.symbol + "'");
    if (!decl->is_resource)
        return StepResult::stuck(rule, "struct '" + instr.symbol + "' is not a resource");
    if (st.stack.empty())
        return StepResult::stuck(rule, "operand stack is empty");
    const TaggedValue* tv = as_tagged(*st.peek());
    if (tv == nullptr || !is_unrestricted(*tv))
        return StepResult::stuck(rule, "stack top is not a plain value");
    const PrimitiveValue* prim = tv->primitive();
    const Address* a = prim != nullptr ? std::get_if<Address>(prim) : nullptr;
    if (a == nullptr)
        return StepResult::stuck(rule, "stack top is not an address");
    out = *a;
    return StepResult::cont();
}

StepResult do_move_to(const Program& p, const Instruction& instr, GlobalState& st) {
    Address addr;
    StepResult pre = pop_global_operand(p, instr, st, "MoveTo", addr);
    if (pre.status != StepStatus::Continue)
        return pre;
    if (st.stack.size() < 2)
        return StepResult::stuck("MoveTo", "no value beneath the address");
    const TaggedValue* payload = as_tagged(*st.peek(1));
    if (payload == nullptr)
        return StepResult::stuck("MoveTo", "value beneath the address is a reference");
    const RecordValue* rec = payload->record();
    if (rec == nullptr || rec->struct_name != instr.symbol)
        return StepResult::stuck("MoveTo", "value is not a '" + instr.symbol + "' record");
    GlobalResourceId id{addr, instr.symbol};
    if (st.globals.count(id) != 0)
        return StepResult::abort(AbortKind::GlobalAlreadyExists);
    st.pop_top();  // address
    TaggedValue moved = std::get<TaggedValue>(st.pop_top());
    Location c = st.fresh_location();
    st.memory.emplace(c, std::move(moved));
    st.globals.emplace(std::move(id), c);
    return StepResult::cont();
}

StepResult do_move_from(const Program& p, const Instruction& instr, GlobalState& st) {
    Address addr;
    StepResult pre = pop_global_operand(p, instr, st, "MoveFrom", addr);
    if (pre.status != StepStatus::Continue)
        return pre;
    auto global = st.globals.find(GlobalResourceId{addr, instr.symbol});
    if (global == st.globals.end())
        return StepResult::abort(AbortKind::GlobalMissing);
    auto mem = st.memory.find(global->second);
    if (mem == st.memory.end())
        return StepResult::stuck("MoveFrom", "global entry points to a missing memory cell");
    st.pop_top();  // address
    TaggedValue moved = std::move(mem->second);
    st.memory.erase(mem);
    st.globals.erase(global);
    st.push(std::move(moved));
    return StepResult::cont();
}

StepResult do_borrow_global(const Program& p, const Instruction& instr, GlobalState& st) {
    Address addr;
    StepResult pre = pop_global_operand(p, instr, st, "BorrowGlobal", addr);
    if (pre.status != StepStatus::Continue)
        return pre;
    auto global = st.globals.find(GlobalResourceId{addr, instr.symbol});
    if (global == st.globals.end())
        return StepResult::abort(AbortKind::GlobalMissing);
    Location c = global->second;
    st.pop_top();
    st.push(Reference{c, {}, Mutability::Mut});
    return StepResult::cont();
}

StepResult do_exists(const Program& p, const Instruction& instr, GlobalState& st) {
    Address addr;
    StepResult pre = pop_global_operand(p, instr, st, "Exists", addr);
    if (pre.status != StepStatus::Continue)
        return pre;
    bool present = st.globals.count(GlobalResourceId{addr, instr.symbol}) != 0;
    st.pop_top();
    st.push(make_primitive(prim_bool(present)));
    return StepResult::cont();
}

}  // namespace

StepResult step_local(const Program& p, const Instruction& instr, GlobalState& st,
                      Mutation mutation) {
    switch (instr.opcode) {
    case Opcode::MvLoc: return do_mv_loc(instr, st);
    case Opcode::CpLoc: return do_cp_loc(instr, st);
    case Opcode::StLoc: return do_st_loc(instr, st);
    case Opcode::BorrowLoc: return do_borrow_loc(instr, st);
    case Opcode::BorrowField: return do_borrow_field(instr, st);
    case Opcode::FreezeRef: return do_freeze_ref(st);
    case Opcode::ReadRef: return do_read_ref(st);
    case Opcode::WriteRef: return do_write_ref(st);
    case Opcode::Pop: return do_pop(st);
    case Opcode::Pack: return do_pack(p, instr, st, mutation);
    case Opcode::Unpack: return do_unpack(p, instr, st, mutation);
    case Opcode::LoadConst:
        st.push(make_primitive(instr.constant));
        return StepResult::cont();
    case Opcode::Op: return do_stack_op(instr, st);
    default:
        return StepResult::stuck("Step", "not a local-state instruction");
    }
}

StepResult step_global(const Program& p, const Instruction& instr, GlobalState& st) {
    switch (instr.opcode) {
    case Opcode::MoveTo: return do_move_to(p, instr, st);
    case Opcode::MoveFrom: return do_move_from(p, instr, st);
    case Opcode::BorrowGlobal: return do_borrow_global(p, instr, st);
    case Opcode::Exists: return do_exists(p, instr, st);
    default:
        return StepResult::stuck("Step", "not a global-state instruction");
    }
}

StepResult step(const Program& p, ProgramState& ps, Mutation mutation) {
    if (ps.pc >= p.code.size())
        return StepResult::halted();
    const Instruction& instr = p.code[ps.pc];

    if (instr.opcode == Opcode::Branch) {
        GlobalState& st = ps.state;
        if (st.stack.empty())
            return StepResult::stuck("Branch", "operand stack is empty");
        const TaggedValue* tv = as_tagged(*st.peek());
        if (tv == nullptr)
            return StepResult::stuck("Branch", "stack top is a reference");
        if (!is_unrestricted(*tv))
            return StepResult::stuck("Branch", "stack top is a resource");
        const PrimitiveValue* prim = tv->primitive();
        const bool* b = prim != nullptr ? std::get_if<bool>(prim) : nullptr;
        if (b == nullptr)
            return StepResult::stuck("Branch", "stack top is not a boolean");
        bool taken = *b;
        st.pop_top();
        ps.pc = taken ? instr.target : ps.pc + 1;
        return StepResult::cont();
    }

    StepResult r;
    switch (instr.opcode) {
    case Opcode::MoveTo:
    case Opcode::MoveFrom:
    case Opcode::BorrowGlobal:
    case Opcode::Exists:
        r = step_global(p, instr, ps.state);
        break;
    default:
        r = step_local(p, instr, ps.state, mutation);
        break;
    }
    if (r.status == StepStatus::Continue)
        ps.pc += 1;
    return r;
}

namespace {

/// Success requires an empty operand stack and no local variable holding a
/// resource; locals-held non-resource cells are then discarded so the final
/// memory is exactly the image of the global store.
std::optional<std::string> terminal_violation(const GlobalState& st) {
    if (!st.stack.empty())
        return "operand stack not empty at halt";
    for (const auto& [name, lv] : st.locals) {
        if (const Location* c = std::get_if<Location>(&lv)) {
            auto mem = st.memory.find(*c);
            if (mem != st.memory.end() && !contained_resource_tags(mem->second).empty())
                return "local '" + name + "' retains a resource at halt";
        }
    }
    return std::nullopt;
}

GlobalState finalize_state(GlobalState st) {
    std::set<Location> keep;
    for (const auto& [id, c] : st.globals)
        keep.insert(c);
    for (auto it = st.memory.begin(); it != st.memory.end();) {
        if (keep.count(it->first) == 0)
            it = st.memory.erase(it);
        else
            ++it;
    }
    st.locals.clear();
    st.stack.clear();
    return st;
}

}  // namespace

TransactionResult execute_transaction(const Program& p, const GlobalState& initial,
                                      const ExecOptions& options) {
    TransactionResult result;
    StateSnapshot pre = snapshot(initial);

    if (!initial.locals.empty() || !initial.stack.empty()) {
        result.status = TxStatus::Rejected;
        result.reject_rule = "Transaction";
        result.reject_reason = "initial state must have empty locals and stack";
        result.state = restore(pre);
        return result;
    }

    ProgramState ps{0, initial};
    std::optional<TraceChecker> checker;
    if (options.checked)
        checker.emplace(initial, p.structs);

    std::uint64_t steps = 0;
    for (;;) {
        if (steps >= options.step_budget) {
            result.status = TxStatus::BudgetExhausted;
            result.state = restore(pre);
            return result;
        }
        std::uint64_t pc_before = ps.pc;
        StepResult r = step(p, ps, options.mutation);
        if (r.status == StepStatus::Halted) {
            if (std::optional<std::string> violation = terminal_violation(ps.state)) {
                result.status = TxStatus::Rejected;
                result.reject_rule = "Transaction";
                result.reject_reason = *violation;
                result.state = restore(pre);
                return result;
            }
            result.status = TxStatus::Success;
            result.state = finalize_state(std::move(ps.state));
            return result;
        }

        TraceStep record;
        record.step = steps;
        record.pc = pc_before;
        record.instr = p.code[pc_before];
        record.event = r.event;
        switch (r.status) {
        case StepStatus::Continue: record.outcome = "continue"; break;
        case StepStatus::Abort:
            record.outcome = "abort:" + std::string(abort_kind_name(r.abort_kind));
            break;
        case StepStatus::Stuck: record.outcome = "stuck:" + r.rule; break;
        default: break;
        }
        result.trace.push_back(record);
        ++steps;

        if (r.status == StepStatus::Abort) {
            result.status = TxStatus::Aborted;
            result.abort_kind = r.abort_kind;
            result.state = restore(pre);
            return result;
        }
        if (r.status == StepStatus::Stuck) {
            result.status = TxStatus::Rejected;
            result.reject_rule = r.rule;
            result.reject_reason = r.reason;
            result.state = restore(pre);
            return result;
        }
        if (checker) {
            if (std::optional<InvariantFault> fault = checker->after_step(ps.state, r.event)) {
                result.status = TxStatus::InvariantFault;
                result.fault_report = fault->render();
                result.state = restore(pre);
                return result;
            }
        }
    }
}

namespace {

nlohmann::json event_to_json(const TraceEvent& ev) {
    switch (ev.kind) {
    case TraceEventKind::None: return nullptr;
    case TraceEventKind::PackResource: return {{"kind", "pack"}, {"tag", ev.tag}};
    case TraceEventKind::UnpackResource: return {{"kind", "unpack"}, {"tag", ev.tag}};
    }
    return nullptr;
}

std::optional<TraceEvent> event_from_json(const nlohmann::json& j) {
    if (j.is_null())
        return TraceEvent::none();
    if (!j.is_object() || !j.contains("kind") || !j.contains("tag") ||
        !j["tag"].is_number_unsigned())
        return std::nullopt;
    std::string kind = j["kind"].get<std::string>();
    std::uint64_t tag = j["tag"].get<std::uint64_t>();
    if (kind == "pack")
        return TraceEvent::pack(tag);
    if (kind == "unpack")
        return TraceEvent::unpack(tag);
    return std::nullopt;
}

/// Recovers an instruction from its rendered mnemonic. Only the shapes the
/// renderer produces are accepted.
std::optional<Instruction> instruction_from_text(const std::string& text) {
    std::istringstream in(text);
    std::string mnemonic;
    if (!(in >> mnemonic))
        return std::nullopt;
    auto rest = [&in]() -> std::optional<std::string> {
        std::string word;
        if (!(in >> word))
            return std::nullopt;
        return word;
    };
    if (std::optional<OpKind> k = op_kind_from_name(mnemonic))
        return Instruction::stack_op(*k);
    if (mnemonic == "ReadRef")
        return Instruction::read_ref();
    if (mnemonic == "WriteRef")
        return Instruction::write_ref();
    if (mnemonic == "FreezeRef")
        return Instruction::freeze_ref();
    if (mnemonic == "Pop")
        return Instruction::pop();
    std::optional<std::string> arg = rest();
    if (!arg)
        return std::nullopt;
    if (mnemonic == "MvLoc")
        return Instruction::mv_loc(*arg);
    if (mnemonic == "CpLoc")
        return Instruction::cp_loc(*arg);
    if (mnemonic == "StLoc")
        return Instruction::st_loc(*arg);
    if (mnemonic == "BorrowLoc")
        return Instruction::borrow_loc(*arg);
    if (mnemonic == "Pack")
        return Instruction::pack(*arg);
    if (mnemonic == "Unpack")
        return Instruction::unpack(*arg);
    if (mnemonic == "BorrowField")
        return Instruction::borrow_field(*arg);
    if (mnemonic == "MoveTo")
        return Instruction::move_to(*arg);
    if (mnemonic == "MoveFrom")
        return Instruction::move_from(*arg);
    if (mnemonic == "BorrowGlobal")
        return Instruction::borrow_global(*arg);
    if (mnemonic == "Exists")
        return Instruction::exists(*arg);
    if (mnemonic == "Branch") {
        try {
            return Instruction::branch(std::stoull(*arg));
        } catch (...) {
            return std::nullopt;
        }
    }
    if (mnemonic == "LoadConst") {
        if (*arg == "true")
            return Instruction::load_const(prim_bool(true));
        if (*arg == "false")
            return Instruction::load_const(prim_bool(false));
        if (std::optional<Address> a = Address::parse(*arg))
            return Instruction::load_const(prim_address(*a));
        try {
            return Instruction::load_const(prim_u64(std::stoull(*arg)));
        } catch (...) {
            return std::nullopt;
        }
    }
    return std::nullopt;
}

}  // namespace

std::string render_trace_log(const ExecutionTrace& trace,
                             const std::optional<TraceSummary>& summary) {
    std::string out;
    for (const TraceStep& s : trace) {
        nlohmann::json j{{"step", s.step},
                         {"pc", s.pc},
                         {"instr", render_instruction(s.instr)},
                         {"event", event_to_json(s.event)},
                         {"outcome", s.outcome}};
        out += j.dump();
        out += '\n';
    }
    if (summary) {
        nlohmann::json j{{"summary",
                          {{"status", summary->status},
                           {"steps", summary->steps},
                           {"structs", summary->structs},
                           {"initial_digest", summary->initial_digest},
                           {"final_digest", summary->final_digest}}}};
        out += j.dump();
        out += '\n';
    }
    return out;
}

std::optional<ParsedTraceLog> parse_trace_log(const std::string& text, std::string& error) {
    ParsedTraceLog out;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded()) {
            error = "line " + std::to_string(lineno) + ": not a JSON record";
            return std::nullopt;
        }
        if (j.contains("summary")) {
            const nlohmann::json& s = j["summary"];
            TraceSummary summary;
            summary.status = s.value("status", "");
            summary.steps = s.value("steps", std::uint64_t{0});
            summary.structs = s.value("structs", "");
            summary.initial_digest = s.value("initial_digest", "");
            summary.final_digest = s.value("final_digest", "");
            out.summary = std::move(summary);
            continue;
        }
        TraceStep step;
        if (!j.contains("step") || !j.contains("pc") || !j.contains("instr") ||
            !j.contains("event") || !j.contains("outcome")) {
            error = "line " + std::to_string(lineno) + ": missing trace fields";
            return std::nullopt;
        }
        step.step = j["step"].get<std::uint64_t>();
        step.pc = j["pc"].get<std::uint64_t>();
        std::optional<Instruction> instr = instruction_from_text(j["instr"].get<std::string>());
        if (!instr) {
            error = "line " + std::to_string(lineno) + ": unknown instruction";
            return std::nullopt;
        }
        step.instr = *instr;
        std::optional<TraceEvent> ev = event_from_json(j["event"]);
        if (!ev) {
            error = "line " + std::to_string(lineno) + ": malformed event";
            return std::nullopt;
        }
        step.event = *ev;
        step.outcome = j["outcome"].get<std::string>();
        out.trace.push_back(std::move(step));
    }
    return out;
}

std::string content_digest(std::string_view bytes) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

}  // namespace rvm
