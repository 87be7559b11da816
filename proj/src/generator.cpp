// rvm: resource-safe bytecode virtual machine
// Copyright 2026 The rvm Authors.
// SPDX-License-Identifier: Apache-2.0
#include "rvm/generator.hpp"

#include <algorithm>
#include <cassert>
#include <set>

#include <json.hpp>

#include "rvm/safety.hpp"
#include "rvm/textfmt.hpp"

namespace rvm {

std::uint64_t Rng::next() {
    // splitmix64
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t Rng::below(std::uint64_t n) { return n == 0 ? 0 : next() % n; }

std::uint64_t Rng::range(std::uint64_t lo, std::uint64_t hi) {
    return lo + below(hi - lo + 1);
}

bool Rng::chance(double p) {
    if (p <= 0.0)
        return false;
    if (p >= 1.0)
        return true;
    return static_cast<double>(next() >> 11) / 9007199254740992.0 < p;
}

namespace {

bool type_is_resource(const StructTable& structs, const FieldType& t) {
    if (t.kind != FieldType::Kind::Struct)
        return false;
    const StructDecl* decl = structs.find(t.struct_name);
    return decl != nullptr && decl->is_resource;
}

/// Instruction count of building one value of this type from constants.
std::size_t build_cost(const StructTable& structs, const FieldType& t) {
    if (t.kind != FieldType::Kind::Struct)
        return 1;
    const StructDecl* decl = structs.find(t.struct_name);
    std::size_t cost = 1;  // the Pack
    for (const FieldDecl& f : decl->fields)
        cost += build_cost(structs, f.type);
    return cost;
}

/// Abstract mirror of the dynamic state, precise enough that emitted
/// instructions satisfy their rule preconditions when executed.
struct AbsStackVal {
    bool is_ref = false;
    FieldType type;     // value type, or referent type for references
    bool ref_mut = true;
};

struct AbsLocal {
    bool is_ref = false;
    FieldType type;
    bool ref_mut = true;
};

class ProgramBuilder {
public:
    ProgramBuilder(const GenConfig& cfg, Rng& rng, StructTable structs,
                   std::set<GlobalResourceId> initial_globals)
        : cfg_(cfg), rng_(rng), globals_(std::move(initial_globals)) {
        program_.structs = std::move(structs);
        for (int i = 0; i < 6; ++i)
            program_.locals.push_back("x" + std::to_string(i));
        for (int i = 1; i <= 8; ++i)
            addresses_.push_back(*Address::parse("0x" + std::to_string(i)));
    }

    Program build() {
        std::size_t inject_at =
            cfg_.inject_div_zero ? rng_.below(cfg_.max_instructions) : SIZE_MAX;
        bool injected = false;
        while (program_.code.size() < cfg_.max_instructions) {
            if (cfg_.inject_div_zero && !injected && program_.code.size() >= inject_at) {
                emit_div_zero();
                injected = true;
                continue;
            }
            emit_one();
        }
        if (cfg_.inject_div_zero && !injected)
            emit_div_zero();
        cleanup();
        return std::move(program_);
    }

private:
    const GenConfig& cfg_;
    Rng& rng_;
    Program program_;
    std::vector<AbsStackVal> stack_;  // index 0 = top, mirrors the machine
    std::map<std::string, AbsLocal> locals_;
    std::set<GlobalResourceId> globals_;
    std::vector<Address> addresses_;

    const StructTable& structs() const { return program_.structs; }

    void emit(Instruction instr) { program_.code.push_back(std::move(instr)); }

    void push_val(FieldType t) { stack_.insert(stack_.begin(), AbsStackVal{false, std::move(t)}); }

    void push_ref(FieldType t, bool mut) {
        stack_.insert(stack_.begin(), AbsStackVal{true, std::move(t), mut});
    }

    void pop_abs() { stack_.erase(stack_.begin()); }

    PrimitiveValue random_const(const FieldType& t) {
        switch (t.kind) {
        case FieldType::Kind::Bool: return prim_bool(rng_.chance(0.5));
        case FieldType::Kind::U64: return prim_u64(rng_.below(1000));
        case FieldType::Kind::Address:
            return prim_address(addresses_[rng_.below(addresses_.size())]);
        case FieldType::Kind::Struct: break;
        }
        return prim_u64(0);
    }

    /// Emits instructions leaving one value of type t on top of the stack.
    void build_value(const FieldType& t) {
        if (t.kind != FieldType::Kind::Struct) {
            emit(Instruction::load_const(random_const(t)));
            push_val(t);
            return;
        }
        const StructDecl* decl = structs().find(t.struct_name);
        for (const FieldDecl& f : decl->fields)
            build_value(f.type);
        emit(Instruction::pack(decl->name));
        for (std::size_t i = 0; i < decl->fields.size(); ++i)
            pop_abs();
        push_val(t);
    }

    std::optional<Address> free_slot(const std::string& struct_name) {
        for (const Address& a : addresses_) {
            if (globals_.count(GlobalResourceId{a, struct_name}) == 0)
                return a;
        }
        return std::nullopt;
    }

    bool local_storable(const std::string& x) const {
        auto it = locals_.find(x);
        if (it == locals_.end())
            return true;
        if (it->second.is_ref)
            return true;
        return !type_is_resource(structs(), it->second.type);
    }

    std::vector<std::string> storable_locals() const {
        std::vector<std::string> out;
        for (const std::string& x : program_.locals) {
            if (local_storable(x))
                out.push_back(x);
        }
        return out;
    }

    void do_st_loc(const std::string& x) {
        AbsStackVal top = stack_.front();
        emit(Instruction::st_loc(x));
        pop_abs();
        locals_[x] = AbsLocal{top.is_ref, top.type, top.ref_mut};
    }

    // ---- templates ----------------------------------------------------

    void tmpl_load_const() {
        FieldType t;
        switch (rng_.below(3)) {
        case 0: t = FieldType::u64(); break;
        case 1: t = FieldType::boolean(); break;
        default: t = FieldType::address(); break;
        }
        build_value(t);
    }

    void tmpl_arith_consts() {
        std::uint64_t b = rng_.range(1, 999);
        std::uint64_t a = rng_.range(0, 99999);
        OpKind k;
        switch (rng_.below(5)) {
        case 0: k = OpKind::Add; break;
        case 1: k = OpKind::Sub; a = b + rng_.below(1000); break;  // keep a >= b
        case 2: k = OpKind::Mul; a = rng_.below(1000); break;
        case 3: k = OpKind::Div; break;
        default: k = OpKind::Mod; break;
        }
        emit(Instruction::load_const(prim_u64(a)));
        emit(Instruction::load_const(prim_u64(b)));
        emit(Instruction::stack_op(k));
        push_val(FieldType::u64());
    }

    bool top_is_val(std::size_t depth, FieldType::Kind kind) const {
        return stack_.size() > depth && !stack_[depth].is_ref &&
               stack_[depth].type.kind == kind;
    }

    bool tmpl_compare() {
        if (top_is_val(0, FieldType::Kind::U64) && top_is_val(1, FieldType::Kind::U64)) {
            static constexpr OpKind kinds[] = {OpKind::Lt, OpKind::Le, OpKind::Gt,
                                               OpKind::Ge, OpKind::Eq, OpKind::Neq};
            emit(Instruction::stack_op(kinds[rng_.below(6)]));
        } else if (top_is_val(0, FieldType::Kind::Bool) && top_is_val(1, FieldType::Kind::Bool)) {
            static constexpr OpKind kinds[] = {OpKind::And, OpKind::Or, OpKind::Eq, OpKind::Neq};
            emit(Instruction::stack_op(kinds[rng_.below(4)]));
        } else if (top_is_val(0, FieldType::Kind::Address) &&
                   top_is_val(1, FieldType::Kind::Address)) {
            emit(Instruction::stack_op(rng_.chance(0.5) ? OpKind::Eq : OpKind::Neq));
        } else if (top_is_val(0, FieldType::Kind::Bool)) {
            emit(Instruction::stack_op(OpKind::Not));
            return true;
        } else {
            return false;
        }
        pop_abs();
        pop_abs();
        push_val(FieldType::boolean());
        return true;
    }

    /// Arithmetic on whatever u64s are on the stack; may abort at runtime
    /// (overflow or underflow), which exercises the revert path.
    bool tmpl_arith_on_stack() {
        if (!top_is_val(0, FieldType::Kind::U64) || !top_is_val(1, FieldType::Kind::U64))
            return false;
        emit(Instruction::stack_op(rng_.chance(0.5) ? OpKind::Add : OpKind::Sub));
        pop_abs();
        pop_abs();
        push_val(FieldType::u64());
        return true;
    }

    bool tmpl_st_loc() {
        if (stack_.empty())
            return false;
        std::vector<std::string> eligible = storable_locals();
        if (eligible.empty())
            return false;
        do_st_loc(eligible[rng_.below(eligible.size())]);
        return true;
    }

    bool tmpl_mv_loc() {
        std::vector<std::string> bound;
        for (const auto& [x, l] : locals_)
            bound.push_back(x);
        if (bound.empty())
            return false;
        const std::string& x = bound[rng_.below(bound.size())];
        AbsLocal l = locals_.at(x);
        emit(Instruction::mv_loc(x));
        locals_.erase(x);
        if (l.is_ref)
            push_ref(l.type, l.ref_mut);
        else
            push_val(l.type);
        return true;
    }

    bool tmpl_cp_loc() {
        std::vector<std::string> copyable;
        for (const auto& [x, l] : locals_) {
            if (l.is_ref || !type_is_resource(structs(), l.type))
                copyable.push_back(x);
        }
        if (copyable.empty())
            return false;
        const std::string& x = copyable[rng_.below(copyable.size())];
        AbsLocal l = locals_.at(x);
        emit(Instruction::cp_loc(x));
        if (l.is_ref)
            push_ref(l.type, l.ref_mut);
        else
            push_val(l.type);
        return true;
    }

    bool tmpl_pop() {
        if (stack_.empty())
            return false;
        const AbsStackVal& top = stack_.front();
        if (!top.is_ref && type_is_resource(structs(), top.type))
            return false;
        emit(Instruction::pop());
        pop_abs();
        return true;
    }

    bool tmpl_pack() {
        std::vector<const StructDecl*> candidates;
        for (const StructDecl& d : structs().decls()) {
            if (build_cost(structs(), FieldType::record(d.name)) <= 16)
                candidates.push_back(&d);
        }
        if (candidates.empty())
            return false;
        build_value(FieldType::record(candidates[rng_.below(candidates.size())]->name));
        return true;
    }

    bool tmpl_unpack() {
        if (stack_.empty() || stack_.front().is_ref ||
            stack_.front().type.kind != FieldType::Kind::Struct)
            return false;
        const StructDecl* decl = structs().find(stack_.front().type.struct_name);
        emit(Instruction::unpack(decl->name));
        pop_abs();
        for (const FieldDecl& f : decl->fields)
            push_val(f.type);  // first field ends up deepest
        return true;
    }

    bool tmpl_move_to() {
        std::vector<const StructDecl*> candidates;
        for (const StructDecl& d : structs().decls()) {
            if (d.is_resource && free_slot(d.name) &&
                build_cost(structs(), FieldType::record(d.name)) <= 16)
                candidates.push_back(&d);
        }
        if (candidates.empty())
            return false;
        const StructDecl* decl = candidates[rng_.below(candidates.size())];
        // Reuse a matching value from the top of the stack when there is one.
        if (stack_.empty() || stack_.front().is_ref ||
            stack_.front().type != FieldType::record(decl->name))
            build_value(FieldType::record(decl->name));
        Address addr = *free_slot(decl->name);
        emit(Instruction::load_const(prim_address(addr)));
        emit(Instruction::move_to(decl->name));
        pop_abs();  // the resource; the address was never pushed abstractly
        globals_.insert(GlobalResourceId{addr, decl->name});
        return true;
    }

    bool tmpl_move_from() {
        if (globals_.empty())
            return false;
        auto it = globals_.begin();
        std::advance(it, static_cast<long>(rng_.below(globals_.size())));
        GlobalResourceId id = *it;
        emit(Instruction::load_const(prim_address(id.address)));
        emit(Instruction::move_from(id.type_name));
        globals_.erase(id);
        push_val(FieldType::record(id.type_name));
        return true;
    }

    bool tmpl_exists() {
        std::vector<const StructDecl*> resources;
        for (const StructDecl& d : structs().decls()) {
            if (d.is_resource)
                resources.push_back(&d);
        }
        if (resources.empty())
            return false;
        emit(Instruction::load_const(
            prim_address(addresses_[rng_.below(addresses_.size())])));
        emit(Instruction::exists(resources[rng_.below(resources.size())]->name));
        push_val(FieldType::boolean());
        return true;
    }

    /// A borrow episode: create a reference, walk it down the value tree,
    /// then consume it (read, write, pop, or park in a local). The episode
    /// never moves the borrowed root, so its reference cannot dangle while
    /// it is being dereferenced.
    bool tmpl_borrow_episode() {
        struct Root {
            bool global;
            std::string local;
            GlobalResourceId id;
            FieldType type;
        };
        std::vector<Root> roots;
        for (const auto& [x, l] : locals_) {
            if (!l.is_ref)
                roots.push_back({false, x, {}, l.type});
        }
        for (const GlobalResourceId& id : globals_)
            roots.push_back({true, {}, id, FieldType::record(id.type_name)});
        if (roots.empty())
            return false;
        Root root = roots[rng_.below(roots.size())];
        if (root.global) {
            emit(Instruction::load_const(prim_address(root.id.address)));
            emit(Instruction::borrow_global(root.id.type_name));
        } else {
            emit(Instruction::borrow_loc(root.local));
        }
        FieldType cur = root.type;
        bool mut = true;
        while (cur.kind == FieldType::Kind::Struct && rng_.chance(0.6)) {
            const StructDecl* decl = structs().find(cur.struct_name);
            const FieldDecl& f = decl->fields[rng_.below(decl->fields.size())];
            emit(Instruction::borrow_field(f.name));
            cur = f.type;
        }
        if (rng_.chance(0.2)) {
            emit(Instruction::freeze_ref());
            mut = false;
        }
        push_ref(cur, mut);

        bool target_resource = type_is_resource(structs(), cur);
        std::uint64_t use = rng_.below(4);
        if (use == 0 && !target_resource) {  // read a copy out
            emit(Instruction::read_ref());
            pop_abs();
            push_val(cur);
            return true;
        }
        if (use == 1 && mut && !target_resource &&
            build_cost(structs(), cur) <= 8) {  // overwrite the referent
            build_value(cur);
            emit(Instruction::write_ref());
            pop_abs();  // written value
            pop_abs();  // reference
            return true;
        }
        if (use == 2) {  // park the reference in a local for later
            std::vector<std::string> eligible = storable_locals();
            if (!eligible.empty()) {
                do_st_loc(eligible[rng_.below(eligible.size())]);
                return true;
            }
        }
        emit(Instruction::pop());
        pop_abs();
        return true;
    }

    /// Pulls a parked reference back onto the stack and discards it. Parked
    /// references may dangle by now, so they are never dereferenced again.
    bool tmpl_use_parked_ref() {
        std::vector<std::string> parked;
        for (const auto& [x, l] : locals_) {
            if (l.is_ref)
                parked.push_back(x);
        }
        if (parked.empty())
            return false;
        const std::string& x = parked[rng_.below(parked.size())];
        bool copy = rng_.chance(0.5);
        emit(copy ? Instruction::cp_loc(x) : Instruction::mv_loc(x));
        if (!copy)
            locals_.erase(x);
        if (rng_.chance(0.3))
            emit(Instruction::freeze_ref());
        emit(Instruction::pop());
        return true;
    }

    Instruction random_static_instruction() {
        // Dead code behind an unconditional skip: only static validity is
        // required, the instructions never execute.
        std::vector<std::string> resources;
        std::vector<std::string> any_structs;
        std::vector<std::string> any_fields;
        for (const StructDecl& d : structs().decls()) {
            any_structs.push_back(d.name);
            if (d.is_resource)
                resources.push_back(d.name);
            for (const FieldDecl& f : d.fields)
                any_fields.push_back(f.name);
        }
        const std::string& local = program_.locals[rng_.below(program_.locals.size())];
        for (;;) {
            switch (rng_.below(12)) {
            case 0: return Instruction::mv_loc(local);
            case 1: return Instruction::cp_loc(local);
            case 2: return Instruction::st_loc(local);
            case 3: return Instruction::borrow_loc(local);
            case 4: return Instruction::pop();
            case 5: return Instruction::load_const(random_const(FieldType::u64()));
            case 6:
                if (!any_structs.empty())
                    return Instruction::pack(any_structs[rng_.below(any_structs.size())]);
                break;
            case 7:
                if (!any_fields.empty())
                    return Instruction::borrow_field(any_fields[rng_.below(any_fields.size())]);
                break;
            case 8:
                if (!resources.empty())
                    return Instruction::move_from(resources[rng_.below(resources.size())]);
                break;
            case 9: return Instruction::read_ref();
            case 10: return Instruction::stack_op(OpKind::Add);
            case 11: return Instruction::branch(rng_.below(program_.code.size() + 1));
            }
        }
    }

    void tmpl_branch() {
        std::uint64_t flavor = rng_.below(3);
        if (flavor == 0 && !stack_.empty() && !stack_.front().is_ref &&
            stack_.front().type.kind == FieldType::Kind::Bool) {
            // Runtime-dependent branch to the next instruction: both the
            // taken and the fall-through path continue at pc+1.
            emit(Instruction::branch(program_.code.size() + 1));
            pop_abs();
            return;
        }
        if (flavor == 1) {
            // Unconditional skip over a block of dead instructions.
            std::size_t block = 1 + rng_.below(3);
            emit(Instruction::load_const(prim_bool(true)));
            std::uint64_t target = program_.code.size() + 1 + block;
            emit(Instruction::branch(target));
            for (std::size_t i = 0; i < block; ++i)
                emit(random_static_instruction());
            return;
        }
        // Fall-through branch on a false condition.
        emit(Instruction::load_const(prim_bool(false)));
        emit(Instruction::branch(rng_.below(program_.code.size() + 1)));
    }

    void emit_div_zero() {
        emit(Instruction::load_const(prim_u64(1 + rng_.below(100))));
        emit(Instruction::load_const(prim_u64(0)));
        emit(Instruction::stack_op(OpKind::Div));
        push_val(FieldType::u64());  // never reached at runtime
    }

    void emit_one() {
        if (rng_.chance(cfg_.branch_probability)) {
            tmpl_branch();
            return;
        }
        // Try a weighted menu; each entry may report infeasibility.
        for (int attempt = 0; attempt < 8; ++attempt) {
            switch (rng_.below(13)) {
            case 0: tmpl_load_const(); return;
            case 1: tmpl_arith_consts(); return;
            case 2:
                if (tmpl_compare()) return;
                break;
            case 3:
                if (rng_.chance(0.25) && tmpl_arith_on_stack()) return;
                break;
            case 4:
                if (tmpl_st_loc()) return;
                break;
            case 5:
                if (tmpl_mv_loc()) return;
                break;
            case 6:
                if (tmpl_cp_loc()) return;
                break;
            case 7:
                if (tmpl_pop()) return;
                break;
            case 8:
                if (rng_.chance(0.7)) {
                    if (tmpl_pack()) return;
                } else if (tmpl_unpack()) {
                    return;
                }
                break;
            case 9:
                if (rng_.chance(0.6)) {
                    if (tmpl_move_to()) return;
                } else if (tmpl_move_from()) {
                    return;
                }
                break;
            case 10:
                if (tmpl_exists()) return;
                break;
            case 11:
                if (tmpl_borrow_episode()) return;
                break;
            case 12:
                if (tmpl_use_parked_ref()) return;
                break;
            }
        }
        tmpl_load_const();  // always feasible
    }

    /// Steers the program toward a legal halt: the stack is drained and
    /// resource-holding locals are emptied. Resources are either published
    /// to a free global slot or unpacked into their parts.
    void dispose_stack() {
        while (!stack_.empty()) {
            const AbsStackVal top = stack_.front();
            if (top.is_ref || !type_is_resource(structs(), top.type)) {
                emit(Instruction::pop());
                pop_abs();
                continue;
            }
            const std::string& name = top.type.struct_name;
            if (std::optional<Address> addr = free_slot(name)) {
                emit(Instruction::load_const(prim_address(*addr)));
                emit(Instruction::move_to(name));
                pop_abs();
                globals_.insert(GlobalResourceId{*addr, name});
                continue;
            }
            const StructDecl* decl = structs().find(name);
            emit(Instruction::unpack(name));
            pop_abs();
            for (const FieldDecl& f : decl->fields)
                push_val(f.type);
        }
    }

    void cleanup() {
        dispose_stack();
        std::vector<std::string> resource_locals;
        for (const auto& [x, l] : locals_) {
            if (!l.is_ref && type_is_resource(structs(), l.type))
                resource_locals.push_back(x);
        }
        for (const std::string& x : resource_locals) {
            AbsLocal l = locals_.at(x);
            emit(Instruction::mv_loc(x));
            locals_.erase(x);
            push_val(l.type);
            dispose_stack();
        }
    }
};

StructTable generate_structs(const GenConfig& cfg, Rng& rng) {
    std::vector<StructDecl> decls;
    std::size_t n = 1 + rng.below(std::max<std::size_t>(cfg.max_structs, 1));
    for (std::size_t i = 0; i < n; ++i) {
        StructDecl decl;
        decl.name = "S" + std::to_string(i);
        decl.is_resource = rng.chance(cfg.resource_probability);
        std::size_t fields = 1 + rng.below(std::max<std::size_t>(cfg.max_fields, 1));
        for (std::size_t f = 0; f < fields; ++f) {
            FieldDecl field;
            field.name = "f" + std::to_string(f);
            std::vector<std::string> nestable;
            for (const StructDecl& prev : decls) {
                // Non-resource structs may only nest non-resource structs.
                if (decl.is_resource || !prev.is_resource)
                    nestable.push_back(prev.name);
            }
            std::uint64_t roll = rng.below(10);
            if (roll < 3 && !nestable.empty())
                field.type = FieldType::record(nestable[rng.below(nestable.size())]);
            else if (roll < 7)
                field.type = FieldType::u64();
            else if (roll < 9)
                field.type = FieldType::boolean();
            else
                field.type = FieldType::address();
            decl.fields.push_back(std::move(field));
        }
        decls.push_back(std::move(decl));
    }
    return StructTable(std::move(decls));
}

std::string generate_initial_state_text(const StructTable& structs, Rng& rng) {
    std::vector<const StructDecl*> resources;
    for (const StructDecl& d : structs.decls()) {
        if (d.is_resource)
            resources.push_back(&d);
    }
    std::string literal_text;

    // Renders a literal of the given type with random leaves.
    auto render_type = [&](auto&& self, const FieldType& t) -> std::string {
        switch (t.kind) {
        case FieldType::Kind::Bool: return rng.chance(0.5) ? "true" : "false";
        case FieldType::Kind::U64: return std::to_string(rng.below(1000));
        case FieldType::Kind::Address: return "0x" + std::to_string(1 + rng.below(8));
        case FieldType::Kind::Struct: break;
        }
        const StructDecl* decl = structs.find(t.struct_name);
        std::string out = decl->name + "{";
        bool first = true;
        for (const FieldDecl& f : decl->fields) {
            if (!first)
                out += ", ";
            first = false;
            out += f.name + ": " + self(self, f.type);
        }
        out += "}";
        return out;
    };

    std::string text;
    for (const StructDecl* decl : resources) {
        std::size_t copies = rng.below(3);  // publish at up to 2 addresses
        std::set<std::uint64_t> used;
        for (std::size_t i = 0; i < copies; ++i) {
            std::uint64_t addr = 1 + rng.below(8);
            if (!used.insert(addr).second)
                continue;
            text += "publish 0x" + std::to_string(addr) + " " + decl->name + " " +
                    render_type(render_type, FieldType::record(decl->name)) + "\n";
        }
    }
    return text;
}

}  // namespace

std::pair<Program, GlobalState> generate(const GenConfig& cfg) {
    Rng rng(cfg.seed);
    StructTable structs = generate_structs(cfg, rng);
    std::string state_text = generate_initial_state_text(structs, rng);
    ParseResult<GlobalState> parsed = parse_state(state_text, structs);
    assert(parsed.ok());
    GlobalState initial = std::move(*parsed.value);

    std::set<GlobalResourceId> global_ids;
    for (const auto& [id, c] : initial.globals)
        global_ids.insert(id);

    ProgramBuilder builder(cfg, rng, structs, std::move(global_ids));
    return {builder.build(), std::move(initial)};
}

std::vector<std::string> check_run_properties(const Program& p, const GlobalState& initial,
                                              const TransactionResult& result) {
    std::vector<std::string> failures;
    switch (result.status) {
    case TxStatus::InvariantFault:
        failures.push_back("invariant fault: " + result.fault_report);
        break;
    case TxStatus::Success: {
        TraceAudit audit = audit_trace(initial, result.trace, result.state);
        if (!audit.passes())
            failures.push_back("conservation audit failed:\n" + audit.render());
        WellFormednessReport report = check_well_formed(result.state, p.structs);
        if (!report.well_formed())
            failures.push_back("final state not well-formed:\n" + report.render());
        break;
    }
    case TxStatus::Aborted:
    case TxStatus::Rejected:
    case TxStatus::BudgetExhausted:
        if (!(result.state == initial))
            failures.push_back("pre-state not restored after " +
                               std::string(tx_status_name(result.status)));
        break;
    }
    return failures;
}

namespace {

std::vector<std::string> run_one_seed(const GenConfig& cfg, Mutation mutation,
                                      TxStatus& status, std::uint64_t& steps) {
    auto [program, initial] = generate(cfg);
    std::vector<std::string> failures;
    std::vector<Diagnostic> diags = validate_program(program);
    for (const Diagnostic& d : diags)
        failures.push_back("generated program failed validation: " + d.render());
    WellFormednessReport report = check_well_formed(initial, program.structs);
    if (!report.well_formed())
        failures.push_back("generated state not well-formed:\n" + report.render());
    if (!failures.empty())
        return failures;

    ExecOptions options;
    options.checked = true;
    options.step_budget = 100'000;
    options.mutation = mutation;
    TransactionResult result = execute_transaction(program, initial, options);
    status = result.status;
    steps = result.trace.size();
    return check_run_properties(program, initial, result);
}

/// Deterministic shrink: shortest failing code prefix, with branch targets
/// clamped into the truncated range.
std::optional<std::pair<std::size_t, Program>> shrink_failure(const GenConfig& cfg,
                                                              Mutation mutation) {
    auto [program, initial] = generate(cfg);
    for (std::size_t len = 0; len <= program.code.size(); ++len) {
        Program truncated = program;
        truncated.code.resize(len);
        for (Instruction& instr : truncated.code) {
            if (instr.opcode == Opcode::Branch && instr.target > len)
                instr.target = len;
        }
        ExecOptions options;
        options.checked = true;
        options.step_budget = 100'000;
        options.mutation = mutation;
        TransactionResult result = execute_transaction(truncated, initial, options);
        if (!check_run_properties(truncated, initial, result).empty())
            return std::make_pair(len, std::move(truncated));
    }
    return std::nullopt;
}

}  // namespace

PropertyReport run_property_suite(std::uint64_t n_seeds, const GenConfig& cfg,
                                  Mutation mutation) {
    PropertyReport report;
    for (std::uint64_t i = 0; i < n_seeds; ++i) {
        GenConfig seed_cfg = cfg;
        seed_cfg.seed = cfg.seed + i;
        TxStatus status = TxStatus::Success;
        std::uint64_t steps = 0;
        std::vector<std::string> failures = run_one_seed(seed_cfg, mutation, status, steps);
        report.seed_records.push_back({seed_cfg.seed, status, steps, failures});
        ++report.seeds_run;
        report.total_steps += steps;
        if (steps >= 5)
            ++report.runs_with_5_steps;
        switch (status) {
        case TxStatus::Success: ++report.success_runs; break;
        case TxStatus::Aborted: ++report.aborted_runs; break;
        case TxStatus::Rejected: ++report.rejected_runs; break;
        case TxStatus::BudgetExhausted: ++report.budget_runs; break;
        case TxStatus::InvariantFault: ++report.fault_runs; break;
        }
        if (!failures.empty()) {
            ++report.failures;
            if (!report.first_failing_seed) {
                report.first_failing_seed = seed_cfg.seed;
                report.first_failure_details = failures;
                if (auto shrunk = shrink_failure(seed_cfg, mutation)) {
                    report.shrunk_prefix_len = shrunk->first;
                    report.shrunk_program = render_program(shrunk->second);
                }
            }
        }
    }
    return report;
}

std::string PropertyReport::render() const {
    std::string out;
    out += "seeds:            " + std::to_string(seeds_run) + "\n";
    out += "failures:         " + std::to_string(failures) + "\n";
    out += "success runs:     " + std::to_string(success_runs) + "\n";
    out += "aborted runs:     " + std::to_string(aborted_runs) + "\n";
    out += "rejected runs:    " + std::to_string(rejected_runs) + "\n";
    out += "budget runs:      " + std::to_string(budget_runs) + "\n";
    out += "fault runs:       " + std::to_string(fault_runs) + "\n";
    out += "runs >= 5 steps:  " + std::to_string(runs_with_5_steps) + "\n";
    out += "total steps:      " + std::to_string(total_steps) + "\n";
    if (first_failing_seed) {
        out += "first failing seed: " + std::to_string(*first_failing_seed) + "\n";
        for (const std::string& f : first_failure_details)
            out += "  - " + f + "\n";
        if (shrunk_prefix_len)
            out += "shortest failing prefix: " + std::to_string(*shrunk_prefix_len) +
                   " instructions\n";
        if (shrunk_program)
            out += *shrunk_program;
    }
    return out;
}

std::string PropertyReport::render_seed_records() const {
    std::string out;
    for (const SeedOutcome& s : seed_records) {
        nlohmann::json j{{"seed", s.seed},
                         {"status", std::string(tx_status_name(s.status))},
                         {"steps", s.steps},
                         {"failures", s.failures}};
        out += j.dump();
        out += '\n';
    }
    return out;
}

}  // namespace rvm
