// rvm: resource-safe bytecode virtual machine
// Copyright 2026 The rvm Authors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace rvm {

class StructTable;

/// Account address. Stored in canonical form: lowercase hex digits without
/// the 0x prefix and without leading zeros ("0" for the zero address).
/// Two addresses are equal iff their canonical renderings are equal.
struct Address {
    std::string digits;

    static std::optional<Address> parse(std::string_view text);
    std::string render() const { return "0x" + digits; }

    bool operator==(const Address&) const = default;
    bool operator<(const Address& other) const;
};

/// Primitive data values: booleans, unsigned 64-bit integers, addresses.
using PrimitiveValue = std::variant<bool, std::uint64_t, Address>;

PrimitiveValue prim_bool(bool b);
PrimitiveValue prim_u64(std::uint64_t v);
PrimitiveValue prim_address(Address a);

std::string render_primitive(const PrimitiveValue& p);

/// A tag is either U (non-resource) or a resource tag drawn from an
/// unbounded, totally ordered identifier space.
class Tag {
public:
    static Tag unrestricted() { return Tag{}; }
    static Tag resource(std::uint64_t id) { return Tag{id}; }

    bool is_resource() const { return id_.has_value(); }
    std::uint64_t resource_id() const { return *id_; }

    bool operator==(const Tag&) const = default;

private:
    Tag() = default;
    explicit Tag(std::uint64_t id) : id_(id) {}
    std::optional<std::uint64_t> id_;
};

using FieldName = std::string;

/// Sequence of field names addressing a subterm of a value tree.
using Path = std::vector<FieldName>;

struct TaggedValue;

/// Record value: non-empty field mapping in declaration order, carrying the
/// name of its declared struct type (this makes typeof computable).
struct RecordValue {
    std::string struct_name;
    std::vector<std::pair<FieldName, TaggedValue>> fields;

    const TaggedValue* field(std::string_view name) const;
};

using Value = std::variant<PrimitiveValue, RecordValue>;

/// The unit of all machine data: a value paired with a tag.
struct TaggedValue {
    Value value;
    Tag tag = Tag::unrestricted();

    bool is_record() const { return std::holds_alternative<RecordValue>(value); }
    const RecordValue* record() const { return std::get_if<RecordValue>(&value); }
    const PrimitiveValue* primitive() const { return std::get_if<PrimitiveValue>(&value); }
};

bool operator==(const TaggedValue& a, const TaggedValue& b);
inline bool operator!=(const TaggedValue& a, const TaggedValue& b) { return !(a == b); }
bool operator==(const RecordValue& a, const RecordValue& b);

/// Structural equality that disregards every tag in both trees. Used by
/// serialization round-trip checks, where tags are freshly assigned.
bool equal_ignoring_tags(const TaggedValue& a, const TaggedValue& b);

TaggedValue make_primitive(PrimitiveValue p);
TaggedValue make_record(std::string struct_name,
                        std::vector<std::pair<FieldName, TaggedValue>> fields, Tag tag);

/// Subterm of tv at path p; nullptr when the path does not resolve
/// (missing field or traversal through a primitive). The undefined result
/// is an ordinary outcome, not an error: callers treat it as a failed
/// rule precondition.
const TaggedValue* subterm(const TaggedValue& tv, const Path& p);

/// Copy of tv with the subterm at p replaced by replacement; tags of all
/// ancestors along the path are preserved. nullopt when p does not resolve.
std::optional<TaggedValue> replace(const TaggedValue& tv, const Path& p,
                                   const TaggedValue& replacement);

/// Every resource tag occurring at any node of the tree, root included.
std::set<std::uint64_t> contained_resource_tags(const TaggedValue& tv);
void collect_resource_tags(const TaggedValue& tv, std::set<std::uint64_t>& out);

enum class Wellformed {
    Yes,
    No,
    UnknownStruct,  // malformed input: a record names an undeclared struct
};

/// Checks the tag/type discipline: a node carries a resource tag iff its
/// declared type is a resource type, and a resource is never nested inside
/// a non-resource record.
Wellformed well_formed_tagged_value(const TaggedValue& tv, const StructTable& decls);

/// Debug rendering including tags, e.g. Coin{value: 5}#t0.
std::string render_tagged_value(const TaggedValue& tv);

/// Canonical literal rendering without tags, e.g. Coin{value: 5}.
/// This is the external value syntax shared with the state file format.
std::string render_literal(const TaggedValue& tv);

}  // namespace rvm
