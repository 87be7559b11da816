// rvm: resource-safe bytecode virtual machine
// Copyright 2026 The rvm Authors.
// SPDX-License-Identifier: Apache-2.0
#include "rvm/safety.hpp"

#include <algorithm>
#include <map>

namespace rvm {

std::string WellFormednessReport::render() const {
    std::string out;
    auto add = [&out](const char* name, const std::optional<CheckFailure>& f) {
        out += name;
        out += ": ";
        out += f ? "FAIL (" + f->render() + ")" : "pass";
        out += '\n';
    };
    add("globally_consistent", globally_consistent);
    add("tag_consistent", tag_consistent);
    add("non_aliasing", non_aliasing);
    return out;
}

std::optional<CheckFailure> check_globally_consistent(const GlobalState& st,
                                                      const StructTable& decls) {
    // (i) every tagged value in memory or on the stack is well-formed.
    for (const auto& [c, tv] : st.memory) {
        Wellformed wf = well_formed_tagged_value(tv, decls);
        if (wf != Wellformed::Yes)
            return CheckFailure{"values", "memory cell " + std::to_string(c) + " holds " +
                                              (wf == Wellformed::UnknownStruct
                                                   ? "a value of an undeclared struct"
                                                   : "an ill-formed value: ") +
                                              render_tagged_value(tv)};
    }
    for (std::size_t i = 0; i < st.stack.size(); ++i) {
        if (const TaggedValue* tv = std::get_if<TaggedValue>(&st.stack[i])) {
            Wellformed wf = well_formed_tagged_value(*tv, decls);
            if (wf != Wellformed::Yes)
                return CheckFailure{"values", "stack slot " + std::to_string(i) +
                                                  " holds an ill-formed value: " +
                                                  render_tagged_value(*tv)};
        }
    }

    // (ii) dom(M) equals the locations reachable from globals and locals:
    // no dangling locations, no garbage cells.
    std::set<Location> reachable;
    for (const auto& [id, c] : st.globals) {
        if (st.memory.count(c) == 0)
            return CheckFailure{"memory", "global " + id.address.render() + "." + id.type_name +
                                              " points to missing location " + std::to_string(c)};
        reachable.insert(c);
    }
    for (const auto& [x, lv] : st.locals) {
        if (const Location* c = std::get_if<Location>(&lv)) {
            if (st.memory.count(*c) == 0)
                return CheckFailure{"memory", "local '" + x + "' points to missing location " +
                                                  std::to_string(*c)};
            reachable.insert(*c);
        }
    }
    for (const auto& [c, tv] : st.memory) {
        if (reachable.count(c) == 0)
            return CheckFailure{"memory", "garbage cell " + std::to_string(c) +
                                              " not referenced by any global or local"};
    }

    // (iii) every global entry holds a resource-tagged value of its type.
    for (const auto& [id, c] : st.globals) {
        const TaggedValue& tv = st.memory.at(c);
        const RecordValue* rec = tv.record();
        if (rec == nullptr || rec->struct_name != id.type_name)
            return CheckFailure{"global_types",
                                "global " + id.address.render() + "." + id.type_name +
                                    " holds a value of the wrong type: " + render_tagged_value(tv)};
        if (!tv.tag.is_resource())
            return CheckFailure{"global_types", "global " + id.address.render() + "." +
                                                    id.type_name + " holds an untagged value"};
    }
    return std::nullopt;
}

namespace {

struct TagOccurrence {
    std::string where;
};

void collect_occurrences(const TaggedValue& tv, const std::string& where,
                         std::map<std::uint64_t, std::vector<TagOccurrence>>& out) {
    if (tv.tag.is_resource())
        out[tv.tag.resource_id()].push_back({where});
    if (const RecordValue* rec = tv.record()) {
        for (const auto& [fname, ftv] : rec->fields)
            collect_occurrences(ftv, where + "." + fname, out);
    }
}

}  // namespace

std::optional<CheckFailure> check_tag_consistent(const GlobalState& st) {
    std::map<std::uint64_t, std::vector<TagOccurrence>> occurrences;
    for (const auto& [c, tv] : st.memory)
        collect_occurrences(tv, "memory[" + std::to_string(c) + "]", occurrences);
    for (std::size_t i = 0; i < st.stack.size(); ++i) {
        if (const TaggedValue* tv = std::get_if<TaggedValue>(&st.stack[i]))
            collect_occurrences(*tv, "stack[" + std::to_string(i) + "]", occurrences);
    }
    for (const auto& [tag, occ] : occurrences) {
        if (occ.size() > 1)
            return CheckFailure{"tag_unique", "tag t" + std::to_string(tag) + " occurs at " +
                                                  occ[0].where + " and " + occ[1].where};
    }
    return std::nullopt;
}

std::optional<CheckFailure> check_non_aliasing(const GlobalState& st) {
    // (i) distinct locals holding locations point to distinct locations.
    std::map<Location, std::string> local_holders;
    for (const auto& [x, lv] : st.locals) {
        if (const Location* c = std::get_if<Location>(&lv)) {
            auto [it, inserted] = local_holders.emplace(*c, x);
            if (!inserted)
                return CheckFailure{"locals", "locals '" + it->second + "' and '" + x +
                                                  "' share location " + std::to_string(*c)};
        }
    }
    // (ii) distinct global ids point to distinct locations.
    std::map<Location, GlobalResourceId> global_holders;
    for (const auto& [id, c] : st.globals) {
        auto [it, inserted] = global_holders.emplace(c, id);
        if (!inserted)
            return CheckFailure{"globals", "globals " + it->second.address.render() + "." +
                                               it->second.type_name + " and " +
                                               id.address.render() + "." + id.type_name +
                                               " share location " + std::to_string(c)};
    }
    // (iii) no global shares a location with a local.
    for (const auto& [c, x] : local_holders) {
        auto it = global_holders.find(c);
        if (it != global_holders.end())
            return CheckFailure{"global_local", "global " + it->second.address.render() + "." +
                                                    it->second.type_name + " and local '" + x +
                                                    "' share location " + std::to_string(c)};
    }
    return std::nullopt;
}

WellFormednessReport check_well_formed(const GlobalState& st, const StructTable& decls) {
    WellFormednessReport report;
    report.globally_consistent = check_globally_consistent(st, decls);
    report.tag_consistent = check_tag_consistent(st);
    report.non_aliasing = check_non_aliasing(st);
    return report;
}

std::set<std::uint64_t> resources_of(const GlobalState& st) {
    std::set<std::uint64_t> out;
    for (const auto& [c, tv] : st.memory)
        collect_resource_tags(tv, out);
    for (const StackValue& sv : st.stack) {
        if (const TaggedValue* tv = std::get_if<TaggedValue>(&sv))
            collect_resource_tags(*tv, out);
    }
    return out;
}

std::set<std::uint64_t> TraceAudit::expected_final() const {
    std::set<std::uint64_t> expected = initial_resources;
    expected.insert(introduced.begin(), introduced.end());
    for (std::uint64_t t : eliminated)
        expected.erase(t);
    return expected;
}

std::string render_tag_set(const std::set<std::uint64_t>& tags) {
    std::string out = "{";
    bool first = true;
    for (std::uint64_t t : tags) {
        if (!first)
            out += ", ";
        first = false;
        out += "t" + std::to_string(t);
    }
    out += "}";
    return out;
}

std::string TraceAudit::render() const {
    std::string out;
    out += "initial:    " + render_tag_set(initial_resources) + "\n";
    out += "introduced: " + render_tag_set(introduced) + "\n";
    out += "eliminated: " + render_tag_set(eliminated) + "\n";
    out += "final:      " + render_tag_set(final_resources) + "\n";
    out += "verdict:    ";
    out += passes() ? "PASS" : ("FAIL (expected final " + render_tag_set(expected_final()) + ")");
    out += '\n';
    return out;
}

TraceAudit audit_trace(const GlobalState& initial, const ExecutionTrace& trace,
                       const GlobalState& final_state) {
    TraceAudit audit;
    audit.initial_resources = resources_of(initial);
    audit.final_resources = resources_of(final_state);
    for (const TraceStep& step : trace) {
        switch (step.event.kind) {
        case TraceEventKind::PackResource: audit.introduced.insert(step.event.tag); break;
        case TraceEventKind::UnpackResource: audit.eliminated.insert(step.event.tag); break;
        case TraceEventKind::None: break;
        }
    }
    return audit;
}

TraceChecker::TraceChecker(const GlobalState& initial_state, const StructTable& decls)
    : decls_(decls), initial_(resources_of(initial_state)), tracked_(initial_) {}

std::optional<InvariantFault> TraceChecker::after_step(const GlobalState& st,
                                                       const TraceEvent& event) {
    switch (event.kind) {
    case TraceEventKind::PackResource:
        introduced_.insert(event.tag);
        tracked_.insert(event.tag);
        break;
    case TraceEventKind::UnpackResource:
        eliminated_.insert(event.tag);
        tracked_.erase(event.tag);
        break;
    case TraceEventKind::None: break;
    }

    if (std::optional<CheckFailure> f = check_globally_consistent(st, decls_))
        return InvariantFault{"globally_consistent", f->render()};
    if (std::optional<CheckFailure> f = check_tag_consistent(st))
        return InvariantFault{"tag_consistent", f->render()};
    if (std::optional<CheckFailure> f = check_non_aliasing(st))
        return InvariantFault{"non_aliasing", f->render()};

    // Prefix conservation: the event-maintained resource set, the set given
    // by the conservation equation, and a full re-scan must all agree.
    std::set<std::uint64_t> rescanned = resources_of(st);
    if (rescanned != tracked_) {
        return InvariantFault{"resource_conservation",
                              "event-tracked set " + render_tag_set(tracked_) +
                                  " differs from re-scan " + render_tag_set(rescanned)};
    }
    std::set<std::uint64_t> by_equation = initial_;
    by_equation.insert(introduced_.begin(), introduced_.end());
    for (std::uint64_t t : eliminated_)
        by_equation.erase(t);
    if (rescanned != by_equation) {
        return InvariantFault{"resource_conservation",
                              "equation set " + render_tag_set(by_equation) +
                                  " differs from re-scan " + render_tag_set(rescanned)};
    }
    return std::nullopt;
}

CheckedStepResult checked_step(const Program& p, ProgramState& ps, TraceChecker& checker,
                               Mutation mutation) {
    CheckedStepResult out;
    out.step = step(p, ps, mutation);
    if (out.step.status == StepStatus::Continue)
        out.fault = checker.after_step(ps.state, out.step.event);
    return out;
}

}  // namespace rvm
