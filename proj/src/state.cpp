// rvm: resource-safe bytecode virtual machine
// Copyright 2026 The rvm Authors.
// SPDX-License-Identifier: Apache-2.0
#include "rvm/state.hpp"

namespace rvm {

std::string render_reference(const Reference& r) {
    std::string out = "&" + std::to_string(r.location);
    for (const FieldName& f : r.path) {
        out += '.';
        out += f;
    }
    out += r.mutability == Mutability::Mut ? " mut" : " immut";
    return out;
}

bool operator==(const StackValue& a, const StackValue& b) {
    if (a.index() != b.index())
        return false;
    if (const TaggedValue* tv = std::get_if<TaggedValue>(&a))
        return *tv == std::get<TaggedValue>(b);
    return std::get<Reference>(a) == std::get<Reference>(b);
}

bool operator==(const LocalValue& a, const LocalValue& b) {
    if (a.index() != b.index())
        return false;
    if (const Location* c = std::get_if<Location>(&a))
        return *c == std::get<Location>(b);
    return std::get<Reference>(a) == std::get<Reference>(b);
}

bool GlobalResourceId::operator<(const GlobalResourceId& other) const {
    if (!(address == other.address))
        return address < other.address;
    return type_name < other.type_name;
}

Location GlobalState::fresh_location() { return next_location++; }

std::uint64_t GlobalState::fresh_tag() { return next_tag++; }

StackValue GlobalState::pop_top() {
    StackValue v = std::move(stack.front());
    stack.erase(stack.begin());
    return v;
}

const StackValue* GlobalState::peek(std::size_t depth) const {
    if (depth >= stack.size())
        return nullptr;
    return &stack[depth];
}

bool operator==(const GlobalState& a, const GlobalState& b) {
    if (a.next_location != b.next_location || a.next_tag != b.next_tag)
        return false;
    if (a.memory.size() != b.memory.size() || a.globals.size() != b.globals.size() ||
        a.locals.size() != b.locals.size() || a.stack.size() != b.stack.size())
        return false;
    {
        auto ia = a.memory.begin();
        auto ib = b.memory.begin();
        for (; ia != a.memory.end(); ++ia, ++ib) {
            if (ia->first != ib->first || !(ia->second == ib->second))
                return false;
        }
    }
    {
        auto ia = a.globals.begin();
        auto ib = b.globals.begin();
        for (; ia != a.globals.end(); ++ia, ++ib) {
            if (!(ia->first == ib->first) || ia->second != ib->second)
                return false;
        }
    }
    {
        auto ia = a.locals.begin();
        auto ib = b.locals.begin();
        for (; ia != a.locals.end(); ++ia, ++ib) {
            if (ia->first != ib->first || !(ia->second == ib->second))
                return false;
        }
    }
    for (std::size_t i = 0; i < a.stack.size(); ++i) {
        if (!(a.stack[i] == b.stack[i]))
            return false;
    }
    return true;
}

StateSnapshot snapshot(const GlobalState& s) { return StateSnapshot{s}; }

GlobalState restore(const StateSnapshot& snap) { return snap.state; }

}  // namespace rvm
