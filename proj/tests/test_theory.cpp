#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "cmil/theory.hpp"

using namespace cmil;

namespace {

// Two states, s0 -> s1 deterministically, s1 absorbing; one action.
TabularMDP chain_mdp(double gamma) {
  TabularMDP m;
  m.n_states = 2;
  m.n_actions = 1;
  m.transition = {{{0.0, 1.0}}, {{0.0, 1.0}}};
  m.reward = {{0.0}, {1.0}};
  m.initial = {1.0, 0.0};
  m.gamma = gamma;
  m.r_max = 1.0;
  return m;
}

}  // namespace

TEST_CASE("occupancy of the single self-loop is one") {
  const TabularMDP m = random_tabular(1, 1, 1);
  const TabularPolicy pi = TabularPolicy::uniform(1, 1);
  const OccupancyMeasure occ = occupancy(m, pi);
  CHECK(occ.rho[0][0] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("occupancy of the two-state chain at gamma 0.5 splits evenly") {
  const TabularMDP m = chain_mdp(0.5);
  const TabularPolicy pi = TabularPolicy::uniform(2, 1);
  const OccupancyMeasure occ = occupancy(m, pi);
  // (1-gamma) * [1, gamma + gamma^2 + ...] = [0.5, 0.5].
  CHECK(occ.rho[0][0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(occ.rho[1][0] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("occupancy sums to one on random instances") {
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    const int S = 2 + static_cast<int>(rng.randint(7));
    const int A = 1 + static_cast<int>(rng.randint(4));
    const TabularMDP m = random_tabular(rng.raw(), S, A);
    const TabularPolicy pi = random_policy(rng, S, A);
    CHECK(occupancy(m, pi).total() == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("exact_value trivial cases") {
  TabularMDP m = chain_mdp(0.9);
  const TabularPolicy pi = TabularPolicy::uniform(2, 1);

  SUBCASE("zero rewards give zero value") {
    m.reward = {{0.0}, {0.0}};
    CHECK(exact_value(m, pi) == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("absorbing reward 1 from inside gives the geometric sum") {
    m.initial = {0.0, 1.0};  // start in the absorbing state
    CHECK(exact_value(m, pi) == doctest::Approx(10.0).epsilon(1e-9));
  }
}

TEST_CASE("value duality: linear solve equals the occupancy form") {
  Rng rng(2);
  for (int i = 0; i < 100; ++i) {
    const int S = 2 + static_cast<int>(rng.randint(7));
    const int A = 1 + static_cast<int>(rng.randint(4));
    const TabularMDP m = random_tabular(rng.raw(), S, A);
    const TabularPolicy pi = random_policy(rng, S, A);
    const double direct = exact_value(m, pi);
    const OccupancyMeasure occ = occupancy(m, pi);
    double from_occ = 0.0;
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a)
        from_occ += occ.rho[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)] *
                    m.reward[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)];
    from_occ /= (1.0 - m.gamma);
    CHECK(direct == doctest::Approx(from_occ).epsilon(1e-8));
  }
}

TEST_CASE("tv_distance hand cases and input validation") {
  CHECK(tv_distance({0.5, 0.5}, {0.5, 0.5}) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(tv_distance({1.0, 0.0}, {0.0, 1.0}) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(tv_distance({0.5, 0.5}, {0.8, 0.2}) == doctest::Approx(0.3).epsilon(1e-15));
  CHECK_THROWS(tv_distance({0.5, 0.4}, {0.5, 0.5}));
}

TEST_CASE("tv_distance is a metric on random triples") {
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const int n = 2 + static_cast<int>(rng.randint(5));
    const auto p = random_simplex(rng, n);
    const auto q = random_simplex(rng, n);
    const auto r = random_simplex(rng, n);
    const double pq = tv_distance(p, q);
    const double qp = tv_distance(q, p);
    CHECK(pq == doctest::Approx(qp).epsilon(1e-12));             // symmetry
    CHECK(tv_distance(p, p) < 1e-12);                             // identity
    CHECK(tv_distance(p, r) <= pq + tv_distance(q, r) + 1e-12);   // triangle
    CHECK(pq >= 0.0);
    CHECK(pq <= 1.0);
  }
}

TEST_CASE("kl_divergence basic properties") {
  CHECK(kl_divergence({0.3, 0.7}, {0.3, 0.7}) == doctest::Approx(0.0).epsilon(1e-15));
  Rng rng(4);
  for (int i = 0; i < 100; ++i) {
    const auto p = random_simplex(rng, 4);
    const auto q = random_simplex(rng, 4);
    CHECK(kl_divergence(p, q) >= -1e-12);
  }
}

TEST_CASE("prop1 holds with equality for identical policy and model") {
  const TabularMDP m = random_tabular(7, 4, 2);
  Rng rng(5);
  const TabularPolicy pi = random_policy(rng, 4, 2);
  const BoundCheck c = verify_prop1(m, pi, pi, m);
  CHECK(c.pass);
  CHECK(c.lhs == doctest::Approx(0.0).epsilon(1e-12));
  double rhs = 0.0;
  for (double t : c.rhs_terms) rhs += t;
  CHECK(rhs == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("prop1 LHS vanishes on constant-reward MDPs") {
  Rng rng(6);
  TabularMDP m = random_tabular(11, 5, 3);
  for (auto& row : m.reward)
    for (double& r : row) r = 0.4;
  for (int i = 0; i < 20; ++i) {
    const TabularPolicy a = random_policy(rng, 5, 3);
    const TabularPolicy b = random_policy(rng, 5, 3);
    const BoundCheck c = verify_prop1(m, a, b, m);
    CHECK(c.lhs == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(c.pass);
  }
}

TEST_CASE("prop1 suite passes on 200 random instances") {
  const BoundReport report = prop1_suite(123, 200);
  CHECK(report.failed == 0);
  CHECK(report.passed == 200);
}

TEST_CASE("thm1 collapses when the model is exact") {
  const TabularMDP m = random_tabular(13, 5, 3);
  const TabularPolicy expert = soft_optimal_policy(m, 0.1);

  SUBCASE("exact model and expert policy: both sides zero") {
    const auto checks = verify_thm1(m, m, expert, expert);
    for (const BoundCheck& c : checks) {
      CHECK(c.pass);
      CHECK(c.lhs == doctest::Approx(0.0).epsilon(1e-10));
    }
  }
  SUBCASE("exact model, different policy: reduces to the prop1 bound") {
    Rng rng(7);
    const TabularPolicy pi = random_policy(rng, 5, 3);
    const Thm1Terms terms = thm1_terms(m, m, expert, pi);
    CHECK(terms.model_mismatch == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(terms.sim_lemma_lhs == doctest::Approx(0.0).epsilon(1e-12));
    const BoundCheck p1 = verify_prop1(m, pi, expert, m);
    double p1_rhs = 0.0;
    for (double t : p1.rhs_terms) p1_rhs += t;
    CHECK(terms.distribution_match == doctest::Approx(p1_rhs).epsilon(1e-9));
  }
}

TEST_CASE("thm1 suite passes on 200 random perturbed instances") {
  const BoundReport report = thm1_suite(77, 200);
  CHECK(report.failed == 0);
  // Two checks per instance: the full bound and the simulation lemma.
  CHECK(report.passed == 400);
}

TEST_CASE("thm2 both sides vanish for identical transitions") {
  const TabularPOMDP p = random_tabular_pomdp(17, 4, 3, 2);
  History h;
  h.observations = {0, 1};
  h.actions = {0, 1};
  for (FDivergence d : {FDivergence::TV, FDivergence::KL}) {
    const auto checks = verify_thm2(p, p, h, d);
    for (const BoundCheck& c : checks) {
      CHECK(c.pass);
      CHECK(c.lhs == doctest::Approx(0.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("thm2 degenerate single-state POMDP gives zero on both sides") {
  TabularPOMDP p;
  p.mdp.n_states = 1;
  p.mdp.n_actions = 2;
  p.mdp.transition = {{{1.0}, {1.0}}};
  p.mdp.reward = {{0.5, 0.5}};
  p.mdp.initial = {1.0};
  p.mdp.gamma = 0.9;
  p.n_obs = 2;
  p.obs_model = {{0.6, 0.4}};
  p.validate();
  TabularPOMDP p2 = p;  // transitions are forced equal by S=1
  History h;
  h.observations = {0};
  h.actions = {1};
  const auto checks = verify_thm2(p, p2, h, FDivergence::TV);
  for (const BoundCheck& c : checks) {
    CHECK(c.pass);
    CHECK(c.lhs == doctest::Approx(0.0).epsilon(1e-12));
  }
}

TEST_CASE("thm2 rejects zero-probability histories") {
  TabularPOMDP p = random_tabular_pomdp(19, 3, 2, 2);
  // Make observation 1 impossible in every state, then ask for it.
  for (auto& row : p.obs_model) {
    row[0] = 1.0;
    row[1] = 0.0;
  }
  History h;
  h.observations = {1};
  h.actions = {0};
  CHECK_THROWS(filter_belief(p, h));
}

TEST_CASE("thm2 suite passes on 100 random POMDP/history pairs") {
  const BoundReport report = thm2_suite(31, 100);
  CHECK(report.failed == 0);
  CHECK(report.passed > 0);
}

TEST_CASE("gap suite: zero perturbation with expert policy gives all-zero series") {
  const GapSuiteResult res = tabular_gap_suite(41, 1, /*n_steps=*/5, /*perturbation=*/0.0);
  // The final interpolation step is the expert itself under the exact model.
  const GapCurvePoint& last = res.points.back();
  CHECK(last.oracle_gap == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(last.model_mismatch == doctest::Approx(0.0).epsilon(1e-9));
  for (const GapCurvePoint& pt : res.points) CHECK(pt.pass);
}

TEST_CASE("gap suite bound holds at every step and row count is n times steps") {
  const GapSuiteResult res = tabular_gap_suite(43, 5, 7);
  CHECK(static_cast<int>(res.points.size()) == 5 * 7);
  for (const GapCurvePoint& pt : res.points) {
    CHECK(pt.pass);
    CHECK(pt.distribution_match + pt.model_mismatch + kBoundTol >= pt.oracle_gap);
  }
  CHECK(res.report.failed == 0);
}

TEST_CASE("perturb_transitions keeps rows stochastic and scales with eta") {
  Rng rng(8);
  const TabularMDP m = random_tabular(51, 5, 3);
  const TabularMDP zero = perturb_transitions(m, 0.0, rng);
  for (int s = 0; s < 5; ++s)
    for (int a = 0; a < 3; ++a)
      for (int s2 = 0; s2 < 5; ++s2)
        CHECK(zero.transition[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)]
                             [static_cast<std::size_t>(s2)] ==
              doctest::Approx(m.transition[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)]
                                          [static_cast<std::size_t>(s2)]).epsilon(1e-12));
  const TabularMDP big = perturb_transitions(m, 0.3, rng);
  big.validate();
}

TEST_CASE("soft_optimal_policy rows are stochastic and beat the uniform policy") {
  const TabularMDP m = random_tabular(61, 6, 3);
  const TabularPolicy expert = soft_optimal_policy(m, 0.1);
  expert.validate();
  const double v_expert = exact_value(m, expert);
  const double v_uniform = exact_value(m, TabularPolicy::uniform(6, 3));
  CHECK(v_expert >= v_uniform - 1e-9);
}
