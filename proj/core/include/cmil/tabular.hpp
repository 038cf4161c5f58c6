#pragma once

#include <vector>

#include "cmil/rng.hpp"

namespace cmil {

// Finite MDP with dense row-stochastic transitions. transition[s][a] is a
// distribution over next states; reward[s][a] in [0, r_max].
struct TabularMDP {
  int n_states = 0;
  int n_actions = 0;
  std::vector<std::vector<std::vector<double>>> transition;  // [S][A][S]
  std::vector<std::vector<double>> reward;                   // [S][A]
  std::vector<double> initial;                               // [S]
  double gamma = 0.99;
  double r_max = 1.0;

  void validate() const;  // throws if invariants are violated
};

// Finite POMDP: an MDP plus a row-stochastic observation model.
struct TabularPOMDP {
  TabularMDP mdp;
  int n_obs = 0;
  std::vector<std::vector<double>> obs_model;  // [S][O]

  void validate() const;
};

// Stochastic tabular policy, [S][A] row-stochastic.
struct TabularPolicy {
  std::vector<std::vector<double>> probs;

  void validate() const;
  static TabularPolicy uniform(int n_states, int n_actions);
};

struct RandomTabularOptions {
  double gamma = 0.95;
  double r_max = 1.0;
  double sparsity = 0.0;  // fraction of transition entries zeroed (dense if 0)
};

TabularMDP random_tabular(std::uint64_t seed, int n_states, int n_actions,
                          const RandomTabularOptions& opt = {});
// Dense strictly positive rows throughout (keeps KL-based checks finite).
TabularPOMDP random_tabular_pomdp(std::uint64_t seed, int n_states, int n_obs, int n_actions,
                                  double gamma = 0.95);

TabularPolicy random_policy(Rng& rng, int n_states, int n_actions);

// Soft-optimal policy: softmax(Q*/temperature) with Q* from value iteration.
TabularPolicy soft_optimal_policy(const TabularMDP& mdp, double temperature);

// Mixes each transition row with a random simplex draw: (1-eta) T + eta noise.
TabularMDP perturb_transitions(const TabularMDP& mdp, double eta, Rng& rng);

// FNV-1a over the defining bytes; determinism checks.
std::uint64_t mdp_hash(const TabularMDP& mdp);

std::vector<double> random_simplex(Rng& rng, int n);

}  // namespace cmil
