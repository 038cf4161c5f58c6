#pragma once

#include <string>
#include <vector>

#include "cmil/env.hpp"

namespace cmil {

// One episode: T+1 observations, T actions. Oracle rewards are kept for
// evaluation only and are never serialized into demo files.
struct Trajectory {
  int obs_dim = 0;
  int act_dim = 0;
  std::vector<float> observations;    // (T+1) x obs_dim, row-major
  std::vector<float> actions;         // T x act_dim, row-major
  std::vector<double> oracle_rewards; // T, evaluation only
  bool success = false;

  int length() const {
    return act_dim == 0 ? 0 : static_cast<int>(actions.size()) / act_dim;
  }
  double oracle_return() const {
    double s = 0.0;
    for (double r : oracle_rewards) s += r;
    return s;
  }
  const float* obs_at(int t) const { return observations.data() + static_cast<std::size_t>(t) * obs_dim; }
  const float* act_at(int t) const { return actions.data() + static_cast<std::size_t>(t) * act_dim; }
  void check_consistent() const;
};

struct DemoSet {
  std::string env_name;  // in-memory metadata, not serialized
  int obs_dim = 0;
  int act_dim = 0;
  std::vector<Trajectory> episodes;

  int count() const { return static_cast<int>(episodes.size()); }
};

// Demo file: magic "CMILDEMO", version u32, obs_dim u32, act_dim u32,
// n_episodes u32; per episode: length u32, observations f32 row-major,
// actions f32 row-major, success u8. Little-endian.
inline constexpr char kDemoMagic[8] = {'C', 'M', 'I', 'L', 'D', 'E', 'M', 'O'};
inline constexpr std::uint32_t kDemoVersion = 1;

void write_demos(const std::string& path, const DemoSet& demos);
DemoSet read_demos(const std::string& path);

// Runs one full episode, recording observations, actions and oracle rewards.
Trajectory rollout_expert(Env& env, Expert& expert);

// Collects n successful expert episodes, resampling failures. Aborts with a
// diagnostic if the expert's success rate drops below 50%.
DemoSet collect_demos(Env& env, Expert& expert, int n, const std::string& env_name);

}  // namespace cmil
