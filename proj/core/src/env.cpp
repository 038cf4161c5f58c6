#include "cmil/env.hpp"

#include <cmath>
#include <stdexcept>

namespace cmil {

namespace {

double clip(double x, double lo, double hi) { return x < lo ? lo : (x > hi ? hi : x); }

int sample_categorical(const std::vector<double>& probs, Rng& rng) {
  double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size()) - 1;
}

}  // namespace

// ---- PointMassEnv ----

PointMassEnv::PointMassEnv(std::uint64_t seed, double sigma_obs)
    : rng_(seed), sigma_obs_(sigma_obs) {}

std::vector<double> PointMassEnv::observe() {
  return {pos_[0] + sigma_obs_ * rng_.normal(), pos_[1] + sigma_obs_ * rng_.normal()};
}

std::vector<double> PointMassEnv::reset() {
  // Random start away from the goal, with a random drift velocity so that
  // position and velocity decorrelate across episodes (expert demos then
  // exercise the damping response, not just the attraction to the goal).
  do {
    pos_[0] = rng_.uniform(-1.0, 1.0);
    pos_[1] = rng_.uniform(-1.0, 1.0);
  } while (std::hypot(pos_[0], pos_[1]) < 0.3);
  vel_[0] = rng_.uniform(-0.5, 0.5);
  vel_[1] = rng_.uniform(-0.5, 0.5);
  t_ = 0;
  in_goal_steps_ = 0;
  active_ = true;
  return observe();
}

StepResult PointMassEnv::step(const std::vector<double>& action) {
  if (!active_) throw std::logic_error("PointMassEnv::step: episode is terminated; call reset()");
  if (action.size() != 2) throw std::invalid_argument("PointMassEnv::step: action must be 2-D");
  const double ax = clip(action[0], -1.0, 1.0);
  const double ay = clip(action[1], -1.0, 1.0);
  // Semi-implicit Euler double integrator.
  vel_[0] += ax * kDt;
  vel_[1] += ay * kDt;
  pos_[0] += vel_[0] * kDt;
  pos_[1] += vel_[1] * kDt;
  ++t_;

  StepResult r;
  const bool in_goal = std::hypot(pos_[0], pos_[1]) < kGoalRadius;
  if (in_goal) ++in_goal_steps_;
  r.oracle_reward = in_goal ? 1.0 : 0.0;
  r.obs = observe();
  r.done = t_ >= kEpisodeLen;
  r.success = in_goal_steps_ >= kSuccessSteps;
  if (r.done) active_ = false;
  return r;
}

// ---- TabularEnv ----

TabularEnv::TabularEnv(TabularPOMDP pomdp, std::uint64_t seed, int episode_len)
    : pomdp_(std::move(pomdp)), rng_(seed), episode_len_(episode_len) {
  pomdp_.validate();
}

int TabularEnv::action_index(double a) const {
  const int n = pomdp_.mdp.n_actions;
  int idx = static_cast<int>((clip(a, -1.0, 1.0) + 1.0) * 0.5 * n);
  return idx >= n ? n - 1 : idx;
}

double TabularEnv::action_value(int index) const {
  const int n = pomdp_.mdp.n_actions;
  return -1.0 + (2.0 * index + 1.0) / n;
}

std::vector<double> TabularEnv::observe() {
  const int o = sample_categorical(pomdp_.obs_model[static_cast<std::size_t>(state_)], rng_);
  std::vector<double> obs(static_cast<std::size_t>(pomdp_.n_obs), 0.0);
  obs[static_cast<std::size_t>(o)] = 1.0;
  return obs;
}

std::vector<double> TabularEnv::reset() {
  state_ = sample_categorical(pomdp_.mdp.initial, rng_);
  t_ = 0;
  active_ = true;
  return observe();
}

StepResult TabularEnv::step(const std::vector<double>& action) {
  if (!active_) throw std::logic_error("TabularEnv::step: episode is terminated; call reset()");
  if (action.size() != 1) throw std::invalid_argument("TabularEnv::step: action must be 1-D");
  const int a = action_index(action[0]);
  StepResult r;
  r.oracle_reward = pomdp_.mdp.reward[static_cast<std::size_t>(state_)][static_cast<std::size_t>(a)];
  state_ = sample_categorical(
      pomdp_.mdp.transition[static_cast<std::size_t>(state_)][static_cast<std::size_t>(a)], rng_);
  ++t_;
  r.obs = observe();
  r.done = t_ >= episode_len_;
  r.success = false;  // no task notion on random tabular instances
  if (r.done) active_ = false;
  return r;
}

// ---- experts ----

void PointMassExpert::reset() {
  have_est_ = false;
  est_pos_[0] = est_pos_[1] = est_vel_[0] = est_vel_[1] = 0.0;
}

std::vector<double> PointMassExpert::act(const std::vector<double>& obs) {
  if (obs.size() != 2) throw std::invalid_argument("PointMassExpert: expected 2-D observation");
  // Heavier observation filtering and moderate gains keep the controller at
  // 100% success while producing smooth, low-jitter action sequences.
  constexpr double kPosBlend = 0.3;
  constexpr double kVelBlend = 0.25;
  constexpr double kP = 0.9;
  constexpr double kD = 1.2;
  // Commands cap below the actuator limit: saturated (exactly +-1) actions
  // are degenerate regression targets for squashed-Gaussian imitation.
  constexpr double kCmdLimit = 0.95;
  if (!have_est_) {
    est_pos_[0] = obs[0];
    est_pos_[1] = obs[1];
    est_vel_[0] = est_vel_[1] = 0.0;
    have_est_ = true;
  } else {
    for (int i = 0; i < 2; ++i) {
      const double prev = est_pos_[i];
      est_pos_[i] += kPosBlend * (obs[i] - est_pos_[i]);
      const double fd_vel = (est_pos_[i] - prev) / PointMassEnv::kDt;
      est_vel_[i] += kVelBlend * (fd_vel - est_vel_[i]);
    }
  }
  return {clip(-kP * est_pos_[0] - kD * est_vel_[0], -kCmdLimit, kCmdLimit),
          clip(-kP * est_pos_[1] - kD * est_vel_[1], -kCmdLimit, kCmdLimit)};
}

TabularExpert::TabularExpert(const TabularEnv& env, std::uint64_t seed)
    : env_(&env), policy_(soft_optimal_policy(env.pomdp().mdp, 0.1)), rng_(seed) {}

std::vector<double> TabularExpert::act(const std::vector<double>&) {
  const int a = sample_categorical(policy_.probs[static_cast<std::size_t>(env_->hidden_state())],
                                   rng_);
  return {env_->action_value(a)};
}

// ---- factory ----

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.push_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

}  // namespace

std::unique_ptr<Env> make_env(const std::string& id, std::uint64_t seed) {
  if (id == "pointmass") return std::make_unique<PointMassEnv>(seed);
  if (id.rfind("tabular:", 0) == 0) {
    auto parts = split(id, ':');
    if (parts.size() != 4)
      throw std::invalid_argument("make_env: expected tabular:<seed>:<S>:<A>, got '" + id + "'");
    const std::uint64_t inst_seed = std::stoull(parts[1]);
    const int S = std::stoi(parts[2]);
    const int A = std::stoi(parts[3]);
    return std::make_unique<TabularEnv>(random_tabular_pomdp(inst_seed, S, S, A), seed);
  }
  throw std::invalid_argument("make_env: unknown environment id '" + id + "'");
}

std::unique_ptr<Expert> make_expert(const std::string& id, const Env& env, std::uint64_t seed) {
  if (id == "pointmass") return std::make_unique<PointMassExpert>();
  if (id.rfind("tabular:", 0) == 0)
    return std::make_unique<TabularExpert>(dynamic_cast<const TabularEnv&>(env), seed);
  throw std::invalid_argument("make_expert: unknown environment id '" + id + "'");
}

}  // namespace cmil
