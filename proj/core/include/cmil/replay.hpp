#pragma once

#include <deque>

#include "cmil/tensor.hpp"
#include "cmil/trajectory.hpp"

namespace cmil {

// Batch of aligned subsequences for model/discriminator/agent updates.
// obs[t] and actions[t] are [B x dim]; actions[t] is the action taken at
// step t. No reward field: the learner never sees oracle rewards.
struct SequenceBatch {
  std::vector<Tensor> obs;
  std::vector<Tensor> actions;
  std::vector<char> is_demo;  // per batch row

  int batch_size() const { return obs.empty() ? 0 : obs.front().rows(); }
  int seq_len() const { return static_cast<int>(obs.size()); }
};

// Ring buffer of whole episodes plus an immutable expert demo set. Sampling
// returns contiguous length-T subsequences; demos are never evicted.
class ReplayBuffer {
 public:
  ReplayBuffer(long capacity_steps, DemoSet demos);

  void add_episode(Trajectory episode);

  long replay_steps() const { return replay_steps_; }
  int replay_episodes() const { return static_cast<int>(episodes_.size()); }
  const DemoSet& demos() const { return demos_; }

  // Mixed batch: the first ceil(B/2) rows are demo subsequences, the rest
  // come from the replay ring (all demo while the ring is empty).
  SequenceBatch sample(int batch_size, int seq_len, Rng& rng) const;
  SequenceBatch sample_demo(int batch_size, int seq_len, Rng& rng) const;
  SequenceBatch sample_replay(int batch_size, int seq_len, Rng& rng) const;

 private:
  const Trajectory& pick(bool demo, int seq_len, Rng& rng) const;
  void fill_row(SequenceBatch& out, int row, const Trajectory& traj, int start) const;

  long capacity_steps_;
  DemoSet demos_;
  std::deque<Trajectory> episodes_;
  long replay_steps_ = 0;
};

}  // namespace cmil
