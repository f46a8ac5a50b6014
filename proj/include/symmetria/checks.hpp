#pragma once
// Self-verification suites behind the `check` subcommand, also reused by the
// acceptance harness. Each suite returns measured-vs-threshold rows:
//   gradcheck     backward pass vs central finite differences, per branch kind
//   kfac          Kronecker curvature: single-sample exactness, 1x1 reduction
//                 to the dense case, and dense recomputation of every factor
//                 from per-sample tap values (the definitional sums)
//   equivariance  strict-menu networks commute with their group end to end
//   marglik       log-det / effective-parameter closed forms vs dense linear
//                 algebra, and hyper-gradients vs finite differences
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "symmetria/layers.hpp"

namespace symmetria {

struct CheckError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CheckRow {
    std::string name;
    double measured = 0;
    double threshold = 0;
    bool pass = false;
};

// `instances` scales the number of random cases where a suite repeats trials
std::vector<CheckRow> check_gradcheck(uint64_t seed, int instances = 3);
std::vector<CheckRow> check_kfac(uint64_t seed);
std::vector<CheckRow> check_equivariance(uint64_t seed);
std::vector<CheckRow> check_marglik(uint64_t seed);

// anchor-value Jacobians through the basis projection (S-CONV / S-FC chain
// rule), finite-difference verified; part of gradcheck but exposed separately
std::vector<CheckRow> check_anchor_chain(uint64_t seed, int instances = 3);

std::vector<CheckRow> run_check_suite(const std::string& suite, uint64_t seed);

bool all_pass(const std::vector<CheckRow>& rows);
std::string render_check_table(const std::vector<CheckRow>& rows);

// single-pathway-layer test network used across the suites: one branch of the
// given kind at spatial H, followed by the dense head stages
Network single_branch_net(BranchKind kind, int c_in, int c_out, int H, int classes,
                          uint64_t seed, int S = 3, bool trainable_locations = true);

}  // namespace symmetria
