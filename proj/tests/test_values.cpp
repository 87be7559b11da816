// rvm: resource-safe bytecode virtual machine
// Copyright 2026 The rvm Authors.
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "rvm/generator.hpp"
#include "rvm/program.hpp"
#include "rvm/values.hpp"
#include "rule_fidelity.hpp"

using namespace rvm;
using rvm::testing::coin;
using rvm::testing::u64_val;

namespace {

StructTable coin_table() {
    return StructTable({
        {"Coin", true, {{"value", FieldType::u64()}}},
        {"Bank", true, {{"balance", FieldType::record("Coin")}}},
        {"Pair", false, {{"a", FieldType::u64()}, {"b", FieldType::u64()}}},
    });
}

/// Independent oracle: enumerate every path of the tree by structural
/// recursion and collect the root tags of the subterms.
void enumerate_paths(const TaggedValue& tv, Path prefix,
                     std::vector<std::pair<Path, Tag>>& out) {
    out.emplace_back(prefix, tv.tag);
    if (const RecordValue* rec = tv.record()) {
        for (const auto& [fname, ftv] : rec->fields) {
            Path next = prefix;
            next.push_back(fname);
            enumerate_paths(ftv, std::move(next), out);
        }
    }
}

/// Random tree of depth <= 4 with a mix of tags, independent of any struct
/// table (subterm/replace do not consult declarations).
TaggedValue random_tree(Rng& rng, int depth) {
    if (depth == 0 || rng.chance(0.4))
        return u64_val(rng.below(100));
    std::size_t n = 1 + rng.below(3);
    std::vector<std::pair<FieldName, TaggedValue>> fields;
    for (std::size_t i = 0; i < n; ++i)
        fields.emplace_back("f" + std::to_string(i), random_tree(rng, depth - 1));
    Tag tag = rng.chance(0.5) ? Tag::resource(rng.below(50)) : Tag::unrestricted();
    return make_record("T", std::move(fields), tag);
}

}  // namespace

TEST_CASE("address parsing canonicalizes case and leading zeros") {
    CHECK(Address::parse("0x01")->render() == "0x1");
    CHECK(Address::parse("0xAB")->render() == "0xab");
    CHECK(Address::parse("0x000")->render() == "0x0");
    CHECK(*Address::parse("0x0001a") == *Address::parse("0x1A"));
    CHECK(!Address::parse("123").has_value());
    CHECK(!Address::parse("0x").has_value());
    CHECK(!Address::parse("0xfg").has_value());
    CHECK(*Address::parse("0x2") < *Address::parse("0x10"));
}

TEST_CASE("subterm resolves paths") {
    TaggedValue five = u64_val(5);
    CHECK(*subterm(five, {}) == five);

    TaggedValue c = coin(5, 1);
    REQUIRE(subterm(c, {"value"}) != nullptr);
    CHECK(*subterm(c, {"value"}) == u64_val(5));

    CHECK(subterm(five, {"f"}) == nullptr);
    CHECK(subterm(c, {"nope"}) == nullptr);
    CHECK(subterm(c, {"value", "deeper"}) == nullptr);
}

TEST_CASE("replace rebuilds the tree and preserves ancestor tags") {
    CHECK(*replace(u64_val(7), {}, u64_val(9)) == u64_val(9));

    TaggedValue c = coin(5, 1);
    std::optional<TaggedValue> replaced = replace(c, {"value"}, u64_val(8));
    REQUIRE(replaced.has_value());
    CHECK(*replaced == coin(8, 1));

    CHECK(!replace(make_primitive(prim_bool(true)), {"x"}, u64_val(1)).has_value());
}

TEST_CASE("contained_resource_tags walks the whole tree") {
    CHECK(contained_resource_tags(u64_val(5)).empty());
    CHECK(contained_resource_tags(coin(5, 1)) == std::set<std::uint64_t>{1});

    TaggedValue bank = make_record("Bank", {{"c", coin(0, 2)}}, Tag::resource(1));
    CHECK(contained_resource_tags(bank) == std::set<std::uint64_t>{1, 2});
}

TEST_CASE("replace/subterm round-trip properties") {
    Rng rng(42);
    for (int i = 0; i < 200; ++i) {
        TaggedValue tree = random_tree(rng, 4);
        std::vector<std::pair<Path, Tag>> paths;
        enumerate_paths(tree, {}, paths);

        // Oracle: the contained tags equal the union of subterm root tags
        // over every defined path.
        std::set<std::uint64_t> by_paths;
        for (const auto& [path, tag] : paths) {
            if (tag.is_resource())
                by_paths.insert(tag.resource_id());
        }
        CHECK(contained_resource_tags(tree) == by_paths);

        for (const auto& [path, tag] : paths) {
            const TaggedValue* sub = subterm(tree, path);
            REQUIRE(sub != nullptr);
            // replace(tv, p, subterm(tv, p)) == tv
            CHECK(*replace(tree, path, *sub) == tree);
            // subterm(replace(tv, p, x), p) == x
            TaggedValue x = u64_val(rng.below(1000));
            std::optional<TaggedValue> replaced = replace(tree, path, x);
            REQUIRE(replaced.has_value());
            CHECK(*subterm(*replaced, path) == x);
        }
    }
}

TEST_CASE("well_formed_tagged_value enforces the tag/type discipline") {
    StructTable decls = coin_table();

    CHECK(well_formed_tagged_value(u64_val(5), decls) == Wellformed::Yes);
    CHECK(well_formed_tagged_value(coin(5, 1), decls) == Wellformed::Yes);

    // A resource type with a U tag is ill-formed.
    TaggedValue untagged_coin =
        make_record("Coin", {{"value", u64_val(5)}}, Tag::unrestricted());
    CHECK(well_formed_tagged_value(untagged_coin, decls) == Wellformed::No);

    // A non-resource record may not contain a resource.
    TaggedValue bad_pair = make_record(
        "Pair", {{"a", coin(1, 1)}, {"b", u64_val(2)}}, Tag::unrestricted());
    CHECK(well_formed_tagged_value(bad_pair, decls) == Wellformed::No);

    // A resource-tagged primitive is ill-formed.
    TaggedValue tagged_prim{Value{prim_u64(5)}, Tag::resource(9)};
    CHECK(well_formed_tagged_value(tagged_prim, decls) == Wellformed::No);

    // Unknown struct names are a distinct outcome, not "false".
    TaggedValue ghost = make_record("Ghost", {{"x", u64_val(1)}}, Tag::unrestricted());
    CHECK(well_formed_tagged_value(ghost, decls) == Wellformed::UnknownStruct);

    // Nested well-formedness: a Bank holding a correctly tagged Coin.
    TaggedValue bank = make_record("Bank", {{"balance", coin(0, 2)}}, Tag::resource(1));
    CHECK(well_formed_tagged_value(bank, decls) == Wellformed::Yes);
    TaggedValue bad_bank =
        make_record("Bank", {{"balance", untagged_coin}}, Tag::resource(1));
    CHECK(well_formed_tagged_value(bad_bank, decls) == Wellformed::No);
}

TEST_CASE("equality is structural and tag-sensitive; a tag-ignoring variant exists") {
    CHECK(coin(5, 1) == coin(5, 1));
    CHECK(coin(5, 1) != coin(5, 2));
    CHECK(coin(5, 1) != coin(6, 1));
    CHECK(equal_ignoring_tags(coin(5, 1), coin(5, 2)));
    CHECK(!equal_ignoring_tags(coin(5, 1), coin(6, 2)));
}

TEST_CASE("literal rendering") {
    CHECK(render_literal(coin(5, 1)) == "Coin{value: 5}");
    CHECK(render_literal(u64_val(7)) == "7");
    CHECK(render_tagged_value(coin(5, 1)) == "Coin{value: 5}#t1");
}
