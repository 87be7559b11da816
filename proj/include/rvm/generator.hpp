// rvm: resource-safe bytecode virtual machine
// Copyright 2026 The rvm Authors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rvm/interpreter.hpp"
#include "rvm/program.hpp"
#include "rvm/state.hpp"

namespace rvm {

/// splitmix64: small explicit mixing generator so identical seeds reproduce
/// identical suites on every platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next();
    std::uint64_t below(std::uint64_t n);              // uniform in [0, n)
    std::uint64_t range(std::uint64_t lo, std::uint64_t hi);  // inclusive
    bool chance(double p);

private:
    std::uint64_t state_;
};

struct GenConfig {
    std::uint64_t seed = 0;
    std::size_t max_instructions = 48;
    std::size_t max_structs = 4;
    std::size_t max_fields = 3;
    double resource_probability = 0.6;
    double branch_probability = 0.15;

    /// Test hook: emit a division by zero at a random point of the main
    /// instruction sequence so the run is forced into an abort.
    bool inject_div_zero = false;
};

/// Type-directed generation: the emitted program passes static validation
/// and the initial state passes all well-formedness checks; most programs
/// execute several steps before halting. Deterministic in cfg.seed.
std::pair<Program, GlobalState> generate(const GenConfig& cfg);

struct SeedOutcome {
    std::uint64_t seed = 0;
    TxStatus status = TxStatus::Success;
    std::uint64_t steps = 0;
    std::vector<std::string> failures;  // property violations, empty when clean
};

struct PropertyReport {
    std::uint64_t seeds_run = 0;
    std::uint64_t failures = 0;
    std::uint64_t success_runs = 0;
    std::uint64_t aborted_runs = 0;
    std::uint64_t rejected_runs = 0;
    std::uint64_t budget_runs = 0;
    std::uint64_t fault_runs = 0;
    std::uint64_t runs_with_5_steps = 0;
    std::uint64_t total_steps = 0;
    std::optional<std::uint64_t> first_failing_seed;
    std::vector<std::string> first_failure_details;
    /// Shortest failing code prefix of the first failing seed, found by
    /// truncating instruction suffixes in deterministic order.
    std::optional<std::size_t> shrunk_prefix_len;
    std::optional<std::string> shrunk_program;
    std::vector<SeedOutcome> seed_records;  // one per seed, in seed order

    std::string render() const;
    /// One JSON object per seed: seed, status, steps, failures.
    std::string render_seed_records() const;
};

/// For each seed: executes in checked mode and asserts (a) zero invariant
/// faults, (b) a passing conservation audit on success, (c) pre-state
/// restoration on every non-success outcome, (d) event-derived resource sets
/// equal to full re-scans at every step.
PropertyReport run_property_suite(std::uint64_t n_seeds, const GenConfig& cfg,
                                  Mutation mutation = Mutation::None);

/// Properties violated by one executed run, checked against the pre-state.
std::vector<std::string> check_run_properties(const Program& p, const GlobalState& initial,
                                              const TransactionResult& result);

}  // namespace rvm
