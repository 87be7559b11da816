// rvm: resource-safe bytecode virtual machine
// Copyright 2026 The rvm Authors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "rvm/values.hpp"

namespace rvm {

/// Memory location. Allocated monotonically and never reused within one
/// transaction execution.
using Location = std::uint64_t;

enum class Mutability { Mut, Immut };

/// Addresses a subterm of a memory-resident value. Dangling references are
/// representable; dereferencing one is a stuck step, never a crash.
struct Reference {
    Location location = 0;
    Path path;
    Mutability mutability = Mutability::Mut;

    bool operator==(const Reference&) const = default;
};

std::string render_reference(const Reference& r);

using StackValue = std::variant<TaggedValue, Reference>;
using LocalValue = std::variant<Location, Reference>;

bool operator==(const StackValue& a, const StackValue& b);
bool operator==(const LocalValue& a, const LocalValue& b);

/// Keys the persistent global store: at most one resource of a given type
/// at the top level per address.
struct GlobalResourceId {
    Address address;
    std::string type_name;

    bool operator==(const GlobalResourceId&) const = default;
    bool operator<(const GlobalResourceId& other) const;
};

/// Machine state: memory, global store, local variables, operand stack.
/// The operand stack keeps its top element at index 0.
struct GlobalState {
    std::map<Location, TaggedValue> memory;
    std::map<GlobalResourceId, Location> globals;
    std::map<std::string, LocalValue> locals;
    std::vector<StackValue> stack;
    Location next_location = 0;
    std::uint64_t next_tag = 0;

    Location fresh_location();
    std::uint64_t fresh_tag();

    void push(StackValue v) { stack.insert(stack.begin(), std::move(v)); }
    StackValue pop_top();
    const StackValue* peek(std::size_t depth = 0) const;  // depth 0 = top
};

bool operator==(const GlobalState& a, const GlobalState& b);
inline bool operator!=(const GlobalState& a, const GlobalState& b) { return !(a == b); }

/// Pre-state capture for all-or-nothing execution: restore() yields a state
/// structurally identical to the captured one, counters included.
struct StateSnapshot {
    GlobalState state;
};

StateSnapshot snapshot(const GlobalState& s);
GlobalState restore(const StateSnapshot& snap);

struct ProgramState {
    std::uint64_t pc = 0;
    GlobalState state;
};

}  // namespace rvm
