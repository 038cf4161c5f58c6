#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cmil/tabular.hpp"

namespace cmil {

// Discounted state-action visitation distribution, normalized by (1 - gamma)
// so it sums to one.
struct OccupancyMeasure {
  std::vector<std::vector<double>> rho;  // [S][A]

  double total() const {
    double s = 0.0;
    for (const auto& row : rho)
      for (double x : row) s += x;
    return s;
  }
};

// One verified inequality: lhs <= sum(rhs_terms) + tolerance.
struct BoundCheck {
  std::string name;
  double lhs = 0.0;
  std::vector<double> rhs_terms;
  double slack = 0.0;  // rhs - lhs
  bool pass = false;
};

struct BoundReport {
  std::vector<BoundCheck> checks;
  int passed = 0;
  int failed = 0;

  void add(BoundCheck c) {
    c.pass ? ++passed : ++failed;
    checks.push_back(std::move(c));
  }
  bool all_pass() const { return failed == 0; }
};

inline constexpr double kBoundTol = 1e-9;

// Exact state occupancy via the linear system d = (1-gamma) mu0 + gamma P^T d,
// then rho(s,a) = d(s) pi(a|s).
OccupancyMeasure occupancy(const TabularMDP& mdp, const TabularPolicy& policy);

// Expected return under the initial distribution, via (I - gamma P_pi) V = r_pi.
double exact_value(const TabularMDP& mdp, const TabularPolicy& policy);

// Half L1 distance between two distributions (flattened). Inputs must each
// sum to 1 within 1e-9.
double tv_distance(const std::vector<double>& p, const std::vector<double>& q);
double kl_divergence(const std::vector<double>& p, const std::vector<double>& q);

std::vector<double> flatten(const OccupancyMeasure& m);

// |V^pi_M - V^pi'_M'| <= (2 R_max / (1-gamma)) TV(rho^pi_M, rho^pi'_M').
BoundCheck verify_prop1(const TabularMDP& m, const TabularPolicy& pi, const TabularPolicy& pi2,
                        const TabularMDP& m2);

struct Thm1Terms {
  double oracle_gap = 0.0;        // |V^E_M - V^pi_M|
  double distribution_match = 0.0;  // (2 R_max / (1-gamma)) TV(rho^pi_Mhat, rho^E_M)
  double model_mismatch = 0.0;      // (gamma R_max / (1-gamma)^2) E_rho[TV(T, That)]
  double sim_lemma_lhs = 0.0;       // |V^pi_Mhat - V^pi_M|
};

Thm1Terms thm1_terms(const TabularMDP& m, const TabularMDP& model, const TabularPolicy& expert,
                     const TabularPolicy& pi);

// Checks both the full suboptimality bound and the intermediate
// simulation-lemma bound |V^pi_Mhat - V^pi_M| <= model-mismatch term.
std::vector<BoundCheck> verify_thm1(const TabularMDP& m, const TabularMDP& model,
                                    const TabularPolicy& expert, const TabularPolicy& pi);

struct History {
  std::vector<int> observations;  // x_1..x_t
  std::vector<int> actions;       // a_1..a_t (a_t pending, applied at s_t)
};

enum class FDivergence { TV, KL };

// Data-processing check for two POMDPs sharing everything but transitions.
// The belief over s_t is filtered from the history; both next-observation
// distributions are induced from that shared belief under each transition
// model. Right side: belief-weighted expectation of the per-row divergence
// (and, for TV, additionally the max over supported states).
std::vector<BoundCheck> verify_thm2(const TabularPOMDP& m, const TabularPOMDP& m2,
                                    const History& history, FDivergence div);

// Forward-filtered belief P(s_t | x_{<=t}, a_{<t}); throws on a
// zero-probability history.
std::vector<double> filter_belief(const TabularPOMDP& m, const History& history);

// Randomized verification suites (deterministic in the seed). thm1 cycles
// the perturbation rate through {0.01, 0.1, 0.3}; thm2 checks both TV and
// KL per sampled POMDP/history pair.
BoundReport prop1_suite(std::uint64_t seed, int n_instances);
BoundReport thm1_suite(std::uint64_t seed, int n_instances);
BoundReport thm2_suite(std::uint64_t seed, int n_instances);

struct GapCurvePoint {
  int instance = 0;
  int step = 0;
  double oracle_gap = 0.0;
  double distribution_match = 0.0;
  double model_mismatch = 0.0;
  bool pass = false;
};

struct GapSuiteResult {
  std::vector<GapCurvePoint> points;
  BoundReport report;
};

// For each seed: random MDP, soft-optimal expert, perturbed model, and a
// policy path interpolating from uniform to the expert; emits exactly
// computed bound terms per step.
GapSuiteResult tabular_gap_suite(std::uint64_t seed, int n_instances, int n_steps = 11,
                                 double perturbation = 0.1);

}  // namespace cmil
