#include "cmil/theory.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <stdexcept>

namespace cmil {

namespace {

// Policy-induced state transition matrix P_pi(s, s') = sum_a pi(a|s) T(s,a,s').
Eigen::MatrixXd policy_transition(const TabularMDP& mdp, const TabularPolicy& pi) {
  const int S = mdp.n_states, A = mdp.n_actions;
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(S, S);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) {
      const double w = pi.probs[s][a];
      if (w == 0.0) continue;
      for (int s2 = 0; s2 < S; ++s2) P(s, s2) += w * mdp.transition[s][a][s2];
    }
  return P;
}

void require_compatible(const TabularMDP& a, const TabularMDP& b, const char* op) {
  if (a.n_states != b.n_states || a.n_actions != b.n_actions)
    throw std::invalid_argument(std::string(op) + ": state/action spaces differ");
  if (a.gamma != b.gamma)
    throw std::invalid_argument(std::string(op) + ": discount factors differ");
}

}  // namespace

OccupancyMeasure occupancy(const TabularMDP& mdp, const TabularPolicy& policy) {
  const int S = mdp.n_states, A = mdp.n_actions;
  const Eigen::MatrixXd P = policy_transition(mdp, policy);
  Eigen::VectorXd mu0(S);
  for (int s = 0; s < S; ++s) mu0(s) = mdp.initial[s];
  // d = (1-gamma) mu0 + gamma P^T d  <=>  (I - gamma P^T) d = (1-gamma) mu0.
  const Eigen::MatrixXd A_sys =
      Eigen::MatrixXd::Identity(S, S) - mdp.gamma * P.transpose();
  const Eigen::VectorXd d = A_sys.partialPivLu().solve((1.0 - mdp.gamma) * mu0);
  const double residual = (A_sys * d - (1.0 - mdp.gamma) * mu0).lpNorm<Eigen::Infinity>();
  if (residual > 1e-10)
    throw std::runtime_error("occupancy: linear solve residual " + std::to_string(residual));
  OccupancyMeasure out;
  out.rho.assign(S, std::vector<double>(A, 0.0));
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) out.rho[s][a] = d(s) * policy.probs[s][a];
  return out;
}

double exact_value(const TabularMDP& mdp, const TabularPolicy& policy) {
  const int S = mdp.n_states, A = mdp.n_actions;
  const Eigen::MatrixXd P = policy_transition(mdp, policy);
  Eigen::VectorXd r_pi(S);
  for (int s = 0; s < S; ++s) {
    double r = 0.0;
    for (int a = 0; a < A; ++a) r += policy.probs[s][a] * mdp.reward[s][a];
    r_pi(s) = r;
  }
  const Eigen::MatrixXd A_sys = Eigen::MatrixXd::Identity(S, S) - mdp.gamma * P;
  const Eigen::VectorXd v = A_sys.partialPivLu().solve(r_pi);
  double out = 0.0;
  for (int s = 0; s < S; ++s) out += mdp.initial[s] * v(s);
  return out;
}

double tv_distance(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size()) throw std::invalid_argument("tv_distance: size mismatch");
  double sp = 0.0, sq = 0.0, acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    sp += p[i];
    sq += q[i];
    acc += std::abs(p[i] - q[i]);
  }
  if (std::abs(sp - 1.0) > 1e-9 || std::abs(sq - 1.0) > 1e-9)
    throw std::invalid_argument("tv_distance: inputs must be probability distributions");
  return 0.5 * acc;
}

double kl_divergence(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size()) throw std::invalid_argument("kl_divergence: size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    if (q[i] <= 0.0) return std::numeric_limits<double>::infinity();
    acc += p[i] * std::log(p[i] / q[i]);
  }
  return acc;
}

std::vector<double> flatten(const OccupancyMeasure& m) {
  std::vector<double> out;
  for (const auto& row : m.rho) out.insert(out.end(), row.begin(), row.end());
  return out;
}

BoundCheck verify_prop1(const TabularMDP& m, const TabularPolicy& pi, const TabularPolicy& pi2,
                        const TabularMDP& m2) {
  require_compatible(m, m2, "verify_prop1");
  BoundCheck c;
  c.name = "prop1";
  c.lhs = std::abs(exact_value(m, pi) - exact_value(m2, pi2));
  const double tv = tv_distance(flatten(occupancy(m, pi)), flatten(occupancy(m2, pi2)));
  const double r_max = std::max(m.r_max, m2.r_max);
  c.rhs_terms = {2.0 * r_max / (1.0 - m.gamma) * tv};
  c.slack = c.rhs_terms[0] - c.lhs;
  c.pass = c.slack >= -kBoundTol;
  return c;
}

Thm1Terms thm1_terms(const TabularMDP& m, const TabularMDP& model, const TabularPolicy& expert,
                     const TabularPolicy& pi) {
  require_compatible(m, model, "thm1_terms");
  Thm1Terms t;
  t.oracle_gap = std::abs(exact_value(m, expert) - exact_value(m, pi));
  t.sim_lemma_lhs = std::abs(exact_value(model, pi) - exact_value(m, pi));

  const OccupancyMeasure rho_pi_model = occupancy(model, pi);
  const OccupancyMeasure rho_e = occupancy(m, expert);
  t.distribution_match = 2.0 * m.r_max / (1.0 - m.gamma) *
                         tv_distance(flatten(rho_pi_model), flatten(rho_e));

  double expected_tv = 0.0;
  for (int s = 0; s < m.n_states; ++s)
    for (int a = 0; a < m.n_actions; ++a) {
      const double w = rho_pi_model.rho[s][a];
      if (w == 0.0) continue;
      expected_tv += w * tv_distance(m.transition[s][a], model.transition[s][a]);
    }
  t.model_mismatch = m.gamma * m.r_max / ((1.0 - m.gamma) * (1.0 - m.gamma)) * expected_tv;
  return t;
}

std::vector<BoundCheck> verify_thm1(const TabularMDP& m, const TabularMDP& model,
                                    const TabularPolicy& expert, const TabularPolicy& pi) {
  const Thm1Terms t = thm1_terms(m, model, expert, pi);
  BoundCheck full;
  full.name = "thm1";
  full.lhs = t.oracle_gap;
  full.rhs_terms = {t.distribution_match, t.model_mismatch};
  full.slack = t.distribution_match + t.model_mismatch - t.oracle_gap;
  full.pass = full.slack >= -kBoundTol;

  BoundCheck sim;
  sim.name = "thm1.simulation_lemma";
  sim.lhs = t.sim_lemma_lhs;
  sim.rhs_terms = {t.model_mismatch};
  sim.slack = t.model_mismatch - t.sim_lemma_lhs;
  sim.pass = sim.slack >= -kBoundTol;
  return {full, sim};
}

std::vector<double> filter_belief(const TabularPOMDP& m, const History& history) {
  const int S = m.mdp.n_states;
  if (history.observations.empty())
    throw std::invalid_argument("filter_belief: history needs at least one observation");
  std::vector<double> b(S, 0.0);
  double norm = 0.0;
  for (int s = 0; s < S; ++s) {
    b[s] = m.mdp.initial[s] * m.obs_model[s][history.observations[0]];
    norm += b[s];
  }
  if (norm <= 0.0) throw std::invalid_argument("filter_belief: zero-probability history at t=0");
  for (double& x : b) x /= norm;
  for (std::size_t t = 1; t < history.observations.size(); ++t) {
    const int a = history.actions[t - 1];
    const int x = history.observations[t];
    std::vector<double> nb(S, 0.0);
    norm = 0.0;
    for (int s2 = 0; s2 < S; ++s2) {
      double pred = 0.0;
      for (int s = 0; s < S; ++s) pred += b[s] * m.mdp.transition[s][a][s2];
      nb[s2] = pred * m.obs_model[s2][x];
      norm += nb[s2];
    }
    if (norm <= 0.0)
      throw std::invalid_argument("filter_belief: zero-probability history at t=" +
                                  std::to_string(t));
    for (double& y : nb) y /= norm;
    b = std::move(nb);
  }
  return b;
}

std::vector<BoundCheck> verify_thm2(const TabularPOMDP& m, const TabularPOMDP& m2,
                                    const History& history, FDivergence div) {
  if (m.mdp.n_states != m2.mdp.n_states || m.mdp.n_actions != m2.mdp.n_actions ||
      m.n_obs != m2.n_obs)
    throw std::invalid_argument("verify_thm2: POMDPs must share state/action/observation spaces");
  if (history.actions.size() != history.observations.size())
    throw std::invalid_argument("verify_thm2: need one action per observation");
  const int S = m.mdp.n_states, O = m.n_obs;
  const std::vector<double> belief = filter_belief(m, history);
  const int a = history.actions.back();

  // Next-state and next-observation distributions from the shared belief
  // under each transition model.
  auto predict = [&](const TabularPOMDP& model) {
    std::vector<double> next_s(S, 0.0);
    for (int s = 0; s < S; ++s) {
      if (belief[s] == 0.0) continue;
      for (int s2 = 0; s2 < S; ++s2) next_s[s2] += belief[s] * model.mdp.transition[s][a][s2];
    }
    std::vector<double> next_x(O, 0.0);
    for (int s2 = 0; s2 < S; ++s2)
      for (int o = 0; o < O; ++o) next_x[o] += next_s[s2] * model.obs_model[s2][o];
    return next_x;
  };
  const std::vector<double> px = predict(m);
  const std::vector<double> px2 = predict(m2);

  auto dval = [div](const std::vector<double>& p, const std::vector<double>& q) {
    return div == FDivergence::TV ? tv_distance(p, q) : kl_divergence(p, q);
  };
  const double lhs = dval(px, px2);

  double avg_rhs = 0.0, max_rhs = 0.0;
  for (int s = 0; s < S; ++s) {
    if (belief[s] == 0.0) continue;
    const double d = dval(m.mdp.transition[s][a], m2.mdp.transition[s][a]);
    avg_rhs += belief[s] * d;
    max_rhs = std::max(max_rhs, d);
  }

  const char* tag = div == FDivergence::TV ? "tv" : "kl";
  std::vector<BoundCheck> out;
  BoundCheck avg;
  avg.name = std::string("thm2.") + tag + ".belief_avg";
  avg.lhs = lhs;
  avg.rhs_terms = {avg_rhs};
  avg.slack = avg_rhs - lhs;
  avg.pass = avg.slack >= -kBoundTol;
  out.push_back(std::move(avg));
  if (div == FDivergence::TV) {
    BoundCheck mx;
    mx.name = std::string("thm2.") + tag + ".supported_max";
    mx.lhs = lhs;
    mx.rhs_terms = {max_rhs};
    mx.slack = max_rhs - lhs;
    mx.pass = mx.slack >= -kBoundTol;
    out.push_back(std::move(mx));
  }
  return out;
}

BoundReport prop1_suite(std::uint64_t seed, int n_instances) {
  BoundReport report;
  Rng top(seed);
  for (int i = 0; i < n_instances; ++i) {
    const std::uint64_t inst_seed = top.raw();
    Rng rng(inst_seed);
    const int S = 2 + static_cast<int>(rng.randint(7));  // S <= 8
    const int A = 2 + static_cast<int>(rng.randint(3));  // A <= 4
    const TabularMDP m = random_tabular(inst_seed ^ 0x51u, S, A);
    TabularMDP m2 = m;
    // Same rewards and discount, independent transitions (Prop. 1 allows
    // arbitrary (policy, MDP) pairs with shared rewards).
    const TabularMDP other = random_tabular(inst_seed ^ 0x52u, S, A);
    m2.transition = other.transition;
    m2.initial = other.initial;
    const TabularPolicy pi = random_policy(rng, S, A);
    const TabularPolicy pi2 = random_policy(rng, S, A);
    BoundCheck c = verify_prop1(m, pi, pi2, m2);
    c.name = "prop1." + std::to_string(i);
    report.add(std::move(c));
  }
  return report;
}

BoundReport thm1_suite(std::uint64_t seed, int n_instances) {
  static constexpr double kEtas[3] = {0.01, 0.1, 0.3};
  BoundReport report;
  Rng top(seed);
  for (int i = 0; i < n_instances; ++i) {
    const std::uint64_t inst_seed = top.raw();
    Rng rng(inst_seed);
    const int S = 2 + static_cast<int>(rng.randint(7));
    const int A = 2 + static_cast<int>(rng.randint(3));
    const TabularMDP m = random_tabular(inst_seed ^ 0x61u, S, A);
    const TabularMDP model = perturb_transitions(m, kEtas[i % 3], rng);
    const TabularPolicy expert = soft_optimal_policy(m, 0.1);
    const TabularPolicy pi = random_policy(rng, S, A);
    for (BoundCheck c : verify_thm1(m, model, expert, pi)) {
      c.name = "thm1." + std::to_string(i) + "." + c.name;
      report.add(std::move(c));
    }
  }
  return report;
}

BoundReport thm2_suite(std::uint64_t seed, int n_instances) {
  BoundReport report;
  Rng top(seed);
  for (int i = 0; i < n_instances; ++i) {
    const std::uint64_t inst_seed = top.raw();
    Rng rng(inst_seed);
    const int S = 2 + static_cast<int>(rng.randint(4));  // S <= 5
    const int O = 2 + static_cast<int>(rng.randint(3));  // O <= 4
    const int A = 2 + static_cast<int>(rng.randint(2));  // A <= 3
    const TabularPOMDP m = random_tabular_pomdp(inst_seed ^ 0x71u, S, O, A);
    TabularPOMDP m2 = m;
    Rng prng(inst_seed ^ 0x72u);
    m2.mdp = perturb_transitions(m.mdp, 0.5, prng);

    // Sample the history from M itself, so it has positive probability
    // under M (and under M2, whose rows are strictly positive).
    const int len = 1 + static_cast<int>(rng.randint(3));
    History h;
    int s = 0;
    {
      double u = rng.uniform(), acc = 0.0;
      for (int k = 0; k < S; ++k) {
        acc += m.mdp.initial[k];
        if (u <= acc) {
          s = k;
          break;
        }
      }
    }
    auto draw = [&rng](const std::vector<double>& p) {
      double u = rng.uniform(), acc = 0.0;
      for (std::size_t k = 0; k < p.size(); ++k) {
        acc += p[k];
        if (u <= acc) return static_cast<int>(k);
      }
      return static_cast<int>(p.size()) - 1;
    };
    for (int t = 0; t < len; ++t) {
      h.observations.push_back(draw(m.obs_model[s]));
      const int a = static_cast<int>(rng.randint(A));
      h.actions.push_back(a);
      if (t + 1 < len) s = draw(m.mdp.transition[s][a]);
    }

    for (FDivergence div : {FDivergence::TV, FDivergence::KL})
      for (BoundCheck c : verify_thm2(m, m2, h, div)) {
        c.name = "thm2." + std::to_string(i) + "." + c.name;
        report.add(std::move(c));
      }
  }
  return report;
}

GapSuiteResult tabular_gap_suite(std::uint64_t seed, int n_instances, int n_steps,
                                 double perturbation) {
  if (n_instances < 1) throw std::invalid_argument("tabular_gap_suite: need n >= 1");
  GapSuiteResult out;
  Rng top(seed);
  for (int inst = 0; inst < n_instances; ++inst) {
    const std::uint64_t inst_seed = top.raw();
    Rng rng(inst_seed);
    const int S = 2 + static_cast<int>(rng.randint(6));
    const int A = 2 + static_cast<int>(rng.randint(3));
    const TabularMDP mdp = random_tabular(inst_seed ^ 0xabcdef12345ull, S, A);
    const TabularPolicy expert = soft_optimal_policy(mdp, 0.1);
    const TabularMDP model =
        perturbation > 0.0 ? perturb_transitions(mdp, perturbation, rng) : mdp;
    const TabularPolicy uniform = TabularPolicy::uniform(S, A);
    for (int step = 0; step < n_steps; ++step) {
      const double w = n_steps == 1 ? 1.0 : static_cast<double>(step) / (n_steps - 1);
      TabularPolicy pi = uniform;
      for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a)
          pi.probs[s][a] = (1.0 - w) * uniform.probs[s][a] + w * expert.probs[s][a];
      const Thm1Terms t = thm1_terms(mdp, model, expert, pi);
      GapCurvePoint p;
      p.instance = inst;
      p.step = step;
      p.oracle_gap = t.oracle_gap;
      p.distribution_match = t.distribution_match;
      p.model_mismatch = t.model_mismatch;
      p.pass = t.distribution_match + t.model_mismatch - t.oracle_gap >= -kBoundTol;
      out.points.push_back(p);

      BoundCheck c;
      c.name = "gap_curve." + std::to_string(inst) + "." + std::to_string(step);
      c.lhs = t.oracle_gap;
      c.rhs_terms = {t.distribution_match, t.model_mismatch};
      c.slack = t.distribution_match + t.model_mismatch - t.oracle_gap;
      c.pass = p.pass;
      out.report.add(std::move(c));
    }
  }
  return out;
}

}  // namespace cmil
