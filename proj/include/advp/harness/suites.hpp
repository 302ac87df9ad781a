#pragma once

// Self-checks exposed through the CLI: gradient checks over random graphs and
// the tabular bound suite.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "advp/autodiff/gradcheck.hpp"
#include "advp/autodiff/tape.hpp"
#include "advp/common/random.hpp"
#include "advp/theory/bounds.hpp"

namespace advp::harness {

/// A random differentiable graph: a builder for its scalar loss and the
/// parameters it reads, kept alive by `owner`.
struct RandomGraph {
  std::string description;
  std::shared_ptr<void> owner;
  std::vector<Parameter*> params;
  GraphBuilder build;
};

/// Chains 2-6 ops drawn from the smooth operator set (matmul, add, add_row,
/// sub, mul, scale, tanh, exp, square, log_softmax, gather, sums, means)
/// over small random inputs. Deterministic in the rng state.
RandomGraph random_graph(Rng& rng);

/// The adversarial total loss of agent 1 (L_RL + alpha (D_own - D_other))
/// for a small two-agent pair on a random minibatch. Parameters are the ones
/// the update steps: all of agent 1 and agent 2's encoder.
RandomGraph total_loss_graph(Rng& rng, double alpha = 1.0);

struct GradcheckSuiteResult {
  std::size_t graphs = 0;
  double max_relative_error = 0.0;
  std::string worst;  // description and parameter of the worst entry
};

/// Graph 0 is the total-loss composition; the rest are random graphs.
GradcheckSuiteResult run_gradcheck_suite(std::size_t n_graphs, std::uint64_t seed);

struct TheorySuiteResult {
  std::size_t instances = 0;
  double perf_diff_max_error = 0.0;  // |eta(pi~) - eta(pi) - E[A]|
  double rho_mass_max_error = 0.0;   // |sum rho - 1/(1 - gamma)|
  double train_mass_max_error = 0.0; // |sum p_train - 1|, |M - sum p_full over train|
  double theorem1_min_slack = 0.0;
  double theorem4_min_slack = 0.0;
  std::size_t cpi_families = 0;
  std::size_t cpi_monotone = 0;      // families whose eta trace never decreased
  /// One row per check and instance: theorem1, theorem2, theorem4, lemma1.
  /// theorem2 rows carry slack = -|lhs - rhs|.
  std::vector<std::pair<std::size_t, theory::BoundReport>> reports;
};

/// CSV with columns instance,name,lhs,rhs,slack,r_max,A_max,C,D1,D2,D3,M_pi.
std::string bound_reports_csv(const TheorySuiteResult& result);

/// `instances` random tabular instances for each check (at most 6 states,
/// 3 actions and 4 members; gamma 0.9 or 0.99 for Theorems 1 and 2, 0.9 for
/// Theorem 4), plus `cpi_families`
/// conservative-iteration runs of `cpi_iters` iterations from lifted random
/// policies.
TheorySuiteResult run_theory_suite(std::size_t instances, std::size_t cpi_families,
                                   std::size_t cpi_iters, std::uint64_t seed);

}  // namespace advp::harness
