#include "cmil/tabular.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>

namespace cmil {

namespace {

constexpr double kRowTol = 1e-12;

void check_row(const std::vector<double>& row, const char* what) {
  double sum = 0.0;
  for (double p : row) {
    if (p < 0.0) throw std::invalid_argument(std::string(what) + ": negative probability");
    sum += p;
  }
  if (std::abs(sum - 1.0) > kRowTol)
    throw std::invalid_argument(std::string(what) + ": row sums to " + std::to_string(sum));
}

}  // namespace

void TabularMDP::validate() const {
  if (n_states < 1 || n_actions < 1)
    throw std::invalid_argument("TabularMDP: need at least one state and action");
  if (static_cast<int>(transition.size()) != n_states ||
      static_cast<int>(reward.size()) != n_states ||
      static_cast<int>(initial.size()) != n_states)
    throw std::invalid_argument("TabularMDP: inconsistent table sizes");
  for (int s = 0; s < n_states; ++s) {
    if (static_cast<int>(transition[s].size()) != n_actions)
      throw std::invalid_argument("TabularMDP: inconsistent action count");
    for (int a = 0; a < n_actions; ++a) {
      if (static_cast<int>(transition[s][a].size()) != n_states)
        throw std::invalid_argument("TabularMDP: inconsistent transition row length");
      check_row(transition[s][a], "TabularMDP transition");
      if (reward[s][a] < 0.0 || reward[s][a] > r_max)
        throw std::invalid_argument("TabularMDP: reward outside [0, r_max]");
    }
  }
  check_row(initial, "TabularMDP initial distribution");
  if (gamma <= 0.0 || gamma >= 1.0) throw std::invalid_argument("TabularMDP: gamma not in (0,1)");
}

void TabularPOMDP::validate() const {
  mdp.validate();
  if (n_obs < 1) throw std::invalid_argument("TabularPOMDP: need at least one observation");
  if (static_cast<int>(obs_model.size()) != mdp.n_states)
    throw std::invalid_argument("TabularPOMDP: observation model row count");
  for (const auto& row : obs_model) {
    if (static_cast<int>(row.size()) != n_obs)
      throw std::invalid_argument("TabularPOMDP: observation row length");
    check_row(row, "TabularPOMDP observation model");
  }
}

void TabularPolicy::validate() const {
  for (const auto& row : probs) check_row(row, "TabularPolicy");
}

TabularPolicy TabularPolicy::uniform(int n_states, int n_actions) {
  TabularPolicy pi;
  pi.probs.assign(n_states,
                  std::vector<double>(n_actions, 1.0 / static_cast<double>(n_actions)));
  return pi;
}

std::vector<double> random_simplex(Rng& rng, int n) {
  std::vector<double> row(n);
  double sum = 0.0;
  for (double& x : row) {
    x = rng.gamma(1.0);
    sum += x;
  }
  for (double& x : row) x /= sum;
  // Exact renormalization to absorb rounding.
  double s2 = 0.0;
  for (std::size_t i = 0; i + 1 < row.size(); ++i) s2 += row[i];
  row.back() = 1.0 - s2;
  if (row.back() < 0.0) row.back() = 0.0;
  return row;
}

TabularMDP random_tabular(std::uint64_t seed, int n_states, int n_actions,
                          const RandomTabularOptions& opt) {
  if (n_states < 1 || n_actions < 1)
    throw std::invalid_argument("random_tabular: need S >= 1 and A >= 1");
  Rng rng(seed);
  TabularMDP m;
  m.n_states = n_states;
  m.n_actions = n_actions;
  m.gamma = opt.gamma;
  m.r_max = opt.r_max;
  m.transition.assign(n_states, std::vector<std::vector<double>>(n_actions));
  m.reward.assign(n_states, std::vector<double>(n_actions));
  for (int s = 0; s < n_states; ++s)
    for (int a = 0; a < n_actions; ++a) {
      std::vector<double> row = random_simplex(rng, n_states);
      if (opt.sparsity > 0.0 && n_states > 1) {
        for (double& p : row)
          if (rng.uniform() < opt.sparsity) p = 0.0;
        double sum = 0.0;
        for (double p : row) sum += p;
        if (sum <= 0.0) {
          // Keep at least one reachable successor.
          row[rng.randint(static_cast<std::uint64_t>(n_states))] = 1.0;
          sum = 1.0;
        }
        for (double& p : row) p /= sum;
        double s2 = 0.0;
        for (std::size_t i = 0; i + 1 < row.size(); ++i) s2 += row[i];
        row.back() = 1.0 - s2;
        if (row.back() < 0.0) row.back() = 0.0;
      }
      m.transition[s][a] = std::move(row);
      m.reward[s][a] = rng.uniform() * opt.r_max;
    }
  m.initial = random_simplex(rng, n_states);
  m.validate();
  return m;
}

TabularPOMDP random_tabular_pomdp(std::uint64_t seed, int n_states, int n_obs, int n_actions,
                                  double gamma) {
  RandomTabularOptions opt;
  opt.gamma = gamma;
  TabularPOMDP p;
  p.mdp = random_tabular(seed, n_states, n_actions, opt);
  p.n_obs = n_obs;
  Rng rng(seed ^ 0x517cc1b727220a95ull);
  p.obs_model.assign(n_states, {});
  for (int s = 0; s < n_states; ++s) p.obs_model[s] = random_simplex(rng, n_obs);
  p.validate();
  return p;
}

TabularPolicy random_policy(Rng& rng, int n_states, int n_actions) {
  TabularPolicy pi;
  pi.probs.assign(n_states, {});
  for (int s = 0; s < n_states; ++s) pi.probs[s] = random_simplex(rng, n_actions);
  return pi;
}

TabularPolicy soft_optimal_policy(const TabularMDP& mdp, double temperature) {
  const int S = mdp.n_states, A = mdp.n_actions;
  std::vector<double> v(S, 0.0);
  std::vector<std::vector<double>> q(S, std::vector<double>(A, 0.0));
  // Value iteration to near machine precision.
  for (int iter = 0; iter < 100000; ++iter) {
    double delta = 0.0;
    for (int s = 0; s < S; ++s) {
      double best = -1e300;
      for (int a = 0; a < A; ++a) {
        double x = mdp.reward[s][a];
        for (int s2 = 0; s2 < S; ++s2) x += mdp.gamma * mdp.transition[s][a][s2] * v[s2];
        q[s][a] = x;
        if (x > best) best = x;
      }
      delta = std::max(delta, std::abs(best - v[s]));
      v[s] = best;
    }
    if (delta < 1e-13) break;
  }
  TabularPolicy pi;
  pi.probs.assign(S, std::vector<double>(A, 0.0));
  for (int s = 0; s < S; ++s) {
    double mx = -1e300;
    for (int a = 0; a < A; ++a) mx = std::max(mx, q[s][a] / temperature);
    double sum = 0.0;
    for (int a = 0; a < A; ++a) {
      pi.probs[s][a] = std::exp(q[s][a] / temperature - mx);
      sum += pi.probs[s][a];
    }
    for (int a = 0; a < A; ++a) pi.probs[s][a] /= sum;
    double s2 = 0.0;
    for (int a = 0; a + 1 < A; ++a) s2 += pi.probs[s][a];
    pi.probs[s][A - 1] = std::max(0.0, 1.0 - s2);
  }
  return pi;
}

TabularMDP perturb_transitions(const TabularMDP& mdp, double eta, Rng& rng) {
  TabularMDP out = mdp;
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a) {
      std::vector<double> noise = random_simplex(rng, mdp.n_states);
      auto& row = out.transition[s][a];
      for (int s2 = 0; s2 < mdp.n_states; ++s2)
        row[s2] = (1.0 - eta) * row[s2] + eta * noise[s2];
      double partial = 0.0;
      for (int s2 = 0; s2 + 1 < mdp.n_states; ++s2) partial += row[s2];
      row[mdp.n_states - 1] = std::max(0.0, 1.0 - partial);
    }
  return out;
}

std::uint64_t mdp_hash(const TabularMDP& mdp) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* p, std::size_t n) {
    const unsigned char* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ull;
    }
  };
  mix(&mdp.n_states, sizeof(mdp.n_states));
  mix(&mdp.n_actions, sizeof(mdp.n_actions));
  mix(&mdp.gamma, sizeof(mdp.gamma));
  for (const auto& per_s : mdp.transition)
    for (const auto& row : per_s) mix(row.data(), row.size() * sizeof(double));
  for (const auto& row : mdp.reward) mix(row.data(), row.size() * sizeof(double));
  mix(mdp.initial.data(), mdp.initial.size() * sizeof(double));
  return h;
}

}  // namespace cmil
