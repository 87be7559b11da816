// rvm: resource-safe bytecode virtual machine
// Copyright 2026 The rvm Authors.
// SPDX-License-Identifier: Apache-2.0
#include "rvm/values.hpp"

#include <algorithm>
#include <cctype>

#include "rvm/program.hpp"

namespace rvm {

namespace {

bool is_hex_digit(char c) {
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f') || (c >= 'A' && c <= 'F');
}

}  // namespace

std::optional<Address> Address::parse(std::string_view text) {
    if (text.size() < 3 || text[0] != '0' || (text[1] != 'x' && text[1] != 'X'))
        return std::nullopt;
    std::string_view digits = text.substr(2);
    std::string canonical;
    canonical.reserve(digits.size());
    for (char c : digits) {
        if (!is_hex_digit(c))
            return std::nullopt;
        canonical.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    std::size_t first = canonical.find_first_not_of('0');
    if (first == std::string::npos)
        canonical = "0";
    else
        canonical.erase(0, first);
    return Address{std::move(canonical)};
}

bool Address::operator<(const Address& other) const {
    if (digits.size() != other.digits.size())
        return digits.size() < other.digits.size();
    return digits < other.digits;
}

PrimitiveValue prim_bool(bool b) { return PrimitiveValue{std::in_place_type<bool>, b}; }

PrimitiveValue prim_u64(std::uint64_t v) {
    return PrimitiveValue{std::in_place_type<std::uint64_t>, v};
}

PrimitiveValue prim_address(Address a) {
    return PrimitiveValue{std::in_place_type<Address>, std::move(a)};
}

std::string render_primitive(const PrimitiveValue& p) {
    if (const bool* b = std::get_if<bool>(&p))
        return *b ? "true" : "false";
    if (const std::uint64_t* u = std::get_if<std::uint64_t>(&p))
        return std::to_string(*u);
    return std::get<Address>(p).render();
}

const TaggedValue* RecordValue::field(std::string_view name) const {
    for (const auto& [fname, tv] : fields) {
        if (fname == name)
            return &tv;
    }
    return nullptr;
}

bool operator==(const RecordValue& a, const RecordValue& b) {
    if (a.struct_name != b.struct_name || a.fields.size() != b.fields.size())
        return false;
    for (std::size_t i = 0; i < a.fields.size(); ++i) {
        if (a.fields[i].first != b.fields[i].first || !(a.fields[i].second == b.fields[i].second))
            return false;
    }
    return true;
}

bool operator==(const TaggedValue& a, const TaggedValue& b) {
    if (!(a.tag == b.tag))
        return false;
    if (a.value.index() != b.value.index())
        return false;
    if (const PrimitiveValue* pa = a.primitive())
        return *pa == *b.primitive();
    return *a.record() == *b.record();
}

bool equal_ignoring_tags(const TaggedValue& a, const TaggedValue& b) {
    if (a.value.index() != b.value.index())
        return false;
    if (const PrimitiveValue* pa = a.primitive())
        return *pa == *b.primitive();
    const RecordValue& ra = *a.record();
    const RecordValue& rb = *b.record();
    if (ra.struct_name != rb.struct_name || ra.fields.size() != rb.fields.size())
        return false;
    for (std::size_t i = 0; i < ra.fields.size(); ++i) {
        if (ra.fields[i].first != rb.fields[i].first)
            return false;
        if (!equal_ignoring_tags(ra.fields[i].second, rb.fields[i].second))
            return false;
    }
    return true;
}

TaggedValue make_primitive(PrimitiveValue p) {
    return TaggedValue{Value{std::move(p)}, Tag::unrestricted()};
}

TaggedValue make_record(std::string struct_name,
                        std::vector<std::pair<FieldName, TaggedValue>> fields, Tag tag) {
    return TaggedValue{Value{RecordValue{std::move(struct_name), std::move(fields)}}, tag};
}

const TaggedValue* subterm(const TaggedValue& tv, const Path& p) {
    const TaggedValue* cur = &tv;
    for (const FieldName& f : p) {
        const RecordValue* rec = cur->record();
        if (rec == nullptr)
            return nullptr;
        cur = rec->field(f);
        if (cur == nullptr)
            return nullptr;
    }
    return cur;
}

std::optional<TaggedValue> replace(const TaggedValue& tv, const Path& p,
                                   const TaggedValue& replacement) {
    if (p.empty())
        return replacement;
    const RecordValue* rec = tv.record();
    if (rec == nullptr)
        return std::nullopt;
    const TaggedValue* child = rec->field(p.front());
    if (child == nullptr)
        return std::nullopt;
    Path rest(p.begin() + 1, p.end());
    std::optional<TaggedValue> replaced = replace(*child, rest, replacement);
    if (!replaced)
        return std::nullopt;
    TaggedValue out = tv;
    for (auto& [fname, ftv] : std::get<RecordValue>(out.value).fields) {
        if (fname == p.front()) {
            ftv = std::move(*replaced);
            break;
        }
    }
    return out;
}

void collect_resource_tags(const TaggedValue& tv, std::set<std::uint64_t>& out) {
    if (tv.tag.is_resource())
        out.insert(tv.tag.resource_id());
    if (const RecordValue* rec = tv.record()) {
        for (const auto& [fname, ftv] : rec->fields)
            collect_resource_tags(ftv, out);
    }
}

std::set<std::uint64_t> contained_resource_tags(const TaggedValue& tv) {
    std::set<std::uint64_t> out;
    collect_resource_tags(tv, out);
    return out;
}

Wellformed well_formed_tagged_value(const TaggedValue& tv, const StructTable& decls) {
    if (const PrimitiveValue* p = tv.primitive()) {
        (void)p;
        // Primitive types are never resource types; the tag must be U.
        return tv.tag.is_resource() ? Wellformed::No : Wellformed::Yes;
    }
    const RecordValue& rec = *tv.record();
    const StructDecl* decl = decls.find(rec.struct_name);
    if (decl == nullptr)
        return Wellformed::UnknownStruct;
    if (decl->is_resource != tv.tag.is_resource())
        return Wellformed::No;
    for (const auto& [fname, ftv] : rec.fields) {
        Wellformed sub = well_formed_tagged_value(ftv, decls);
        if (sub != Wellformed::Yes)
            return sub;
        if (!decl->is_resource) {
            // A resource is never nested inside a non-resource value.
            if (const RecordValue* frec = ftv.record()) {
                const StructDecl* fdecl = decls.find(frec->struct_name);
                if (fdecl != nullptr && fdecl->is_resource)
                    return Wellformed::No;
            }
        }
    }
    return Wellformed::Yes;
}

namespace {

void render_value(const TaggedValue& tv, std::string& out, bool with_tags) {
    if (const PrimitiveValue* p = tv.primitive()) {
        out += render_primitive(*p);
    } else {
        const RecordValue& rec = *tv.record();
        out += rec.struct_name;
        out += '{';
        bool first = true;
        for (const auto& [fname, ftv] : rec.fields) {
            if (!first)
                out += ", ";
            first = false;
            out += fname;
            out += ": ";
            render_value(ftv, out, with_tags);
        }
        out += '}';
    }
    if (with_tags && tv.tag.is_resource()) {
        out += "#t";
        out += std::to_string(tv.tag.resource_id());
    }
}

}  // namespace

std::string render_tagged_value(const TaggedValue& tv) {
    std::string out;
    render_value(tv, out, true);
    return out;
}

std::string render_literal(const TaggedValue& tv) {
    std::string out;
    render_value(tv, out, false);
    return out;
}

}  // namespace rvm
