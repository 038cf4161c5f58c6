#pragma once

#include <memory>
#include <string>
#include <vector>

#include "cmil/rng.hpp"
#include "cmil/tabular.hpp"

namespace cmil {

struct StepResult {
  std::vector<double> obs;
  double oracle_reward = 0.0;  // evaluation only, never fed to the learner
  bool done = false;
  bool success = false;
};

// Episodic environment with vector observations and bounded continuous
// actions in [-1, 1]^act_dim. Each instance owns its RNG; independent copies
// never share state.
class Env {
 public:
  virtual ~Env() = default;
  virtual int obs_dim() const = 0;
  virtual int act_dim() const = 0;
  virtual int episode_len() const = 0;
  virtual void seed(std::uint64_t s) = 0;
  virtual std::vector<double> reset() = 0;
  // Throws if called on a terminated episode. Out-of-bounds actions are
  // clipped.
  virtual StepResult step(const std::vector<double>& action) = 0;
  virtual std::unique_ptr<Env> clone() const = 0;
};

// Scripted controller standing in for a trained expert. Observation-driven
// for continuous envs; the tabular expert reads the simulator's hidden state.
class Expert {
 public:
  virtual ~Expert() = default;
  virtual void reset() = 0;
  virtual std::vector<double> act(const std::vector<double>& obs) = 0;
};

// Partially observed double integrator. Hidden state is 2-D position plus
// 2-D velocity; only a noisy position is observed. Goal at the origin,
// episode length 100, success radius 0.1. An episode counts as a success
// once the position has been inside the goal radius for at least
// kSuccessSteps steps.
class PointMassEnv : public Env {
 public:
  static constexpr double kDt = 0.1;
  static constexpr double kGoalRadius = 0.1;
  static constexpr int kEpisodeLen = 100;
  static constexpr int kSuccessSteps = 10;

  explicit PointMassEnv(std::uint64_t seed, double sigma_obs = 0.05);

  int obs_dim() const override { return 2; }
  int act_dim() const override { return 2; }
  int episode_len() const override { return kEpisodeLen; }
  void seed(std::uint64_t s) override { rng_ = Rng(s); }
  std::vector<double> reset() override;
  StepResult step(const std::vector<double>& action) override;
  std::unique_ptr<Env> clone() const override { return std::make_unique<PointMassEnv>(*this); }

  double sigma_obs() const { return sigma_obs_; }
  const double* position() const { return pos_; }
  const double* velocity() const { return vel_; }

 private:
  std::vector<double> observe();

  Rng rng_;
  double sigma_obs_;
  double pos_[2] = {0, 0};
  double vel_[2] = {0, 0};
  int t_ = 0;
  int in_goal_steps_ = 0;
  bool active_ = false;
};

// Simulator around a TabularPOMDP. Observations are one-hot over the
// observation alphabet; the 1-D continuous action in [-1, 1] is binned
// uniformly into the discrete action set.
class TabularEnv : public Env {
 public:
  TabularEnv(TabularPOMDP pomdp, std::uint64_t seed, int episode_len = 100);

  int obs_dim() const override { return pomdp_.n_obs; }
  int act_dim() const override { return 1; }
  int episode_len() const override { return episode_len_; }
  void seed(std::uint64_t s) override { rng_ = Rng(s); }
  std::vector<double> reset() override;
  StepResult step(const std::vector<double>& action) override;
  std::unique_ptr<Env> clone() const override { return std::make_unique<TabularEnv>(*this); }

  int hidden_state() const { return state_; }
  const TabularPOMDP& pomdp() const { return pomdp_; }
  int action_index(double a) const;
  double action_value(int index) const;

 private:
  std::vector<double> observe();

  TabularPOMDP pomdp_;
  Rng rng_{0};
  int episode_len_;
  int state_ = 0;
  int t_ = 0;
  bool active_ = false;
};

// PD controller on a filtered state estimate (EMA position, finite-difference
// velocity); knows only the observations.
class PointMassExpert : public Expert {
 public:
  PointMassExpert() = default;
  void reset() override;
  std::vector<double> act(const std::vector<double>& obs) override;

 private:
  bool have_est_ = false;
  double est_pos_[2] = {0, 0};
  double est_vel_[2] = {0, 0};
};

// Soft-optimal tabular policy acting on the simulator's hidden state.
class TabularExpert : public Expert {
 public:
  TabularExpert(const TabularEnv& env, std::uint64_t seed);
  void reset() override {}
  std::vector<double> act(const std::vector<double>& obs) override;

 private:
  const TabularEnv* env_;
  TabularPolicy policy_;
  Rng rng_;
};

// Env ids: "pointmass" or "tabular:<seed>:<S>:<A>".
std::unique_ptr<Env> make_env(const std::string& id, std::uint64_t seed);
std::unique_ptr<Expert> make_expert(const std::string& id, const Env& env, std::uint64_t seed);

}  // namespace cmil
