#include "cmil/replay.hpp"

#include <stdexcept>

namespace cmil {

ReplayBuffer::ReplayBuffer(long capacity_steps, DemoSet demos)
    : capacity_steps_(capacity_steps), demos_(std::move(demos)) {
  if (capacity_steps_ < 1) throw std::invalid_argument("replay: capacity must be positive");
  if (demos_.count() == 0) throw std::invalid_argument("replay: demo set is empty");
  for (const Trajectory& t : demos_.episodes) t.check_consistent();
}

void ReplayBuffer::add_episode(Trajectory episode) {
  episode.check_consistent();
  if (episode.obs_dim != demos_.obs_dim || episode.act_dim != demos_.act_dim)
    throw std::invalid_argument("replay: episode dims do not match demos");
  replay_steps_ += episode.length();
  episodes_.push_back(std::move(episode));
  while (replay_steps_ > capacity_steps_ && episodes_.size() > 1) {
    replay_steps_ -= episodes_.front().length();
    episodes_.pop_front();
  }
}

const Trajectory& ReplayBuffer::pick(bool demo, int seq_len, Rng& rng) const {
  const auto usable = [&](const Trajectory& t) { return t.length() >= seq_len; };
  // Rejection-sample an episode long enough; all point-mass episodes have a
  // fixed length so this resolves on the first draw.
  for (int tries = 0; tries < 1000; ++tries) {
    const Trajectory& t = demo ? demos_.episodes[rng.randint(demos_.count())]
                               : episodes_[rng.randint(static_cast<int>(episodes_.size()))];
    if (usable(t)) return t;
  }
  throw std::runtime_error("replay: no stored episode reaches the requested sequence length");
}

void ReplayBuffer::fill_row(SequenceBatch& out, int row, const Trajectory& traj,
                            int start) const {
  const int t_len = out.seq_len();
  const int od = demos_.obs_dim, ad = demos_.act_dim;
  for (int j = 0; j < t_len; ++j) {
    for (int c = 0; c < od; ++c)
      out.obs[j].data[static_cast<std::size_t>(row) * od + c] = traj.obs_at(start + j)[c];
    for (int c = 0; c < ad; ++c)
      out.actions[j].data[static_cast<std::size_t>(row) * ad + c] = traj.act_at(start + j)[c];
  }
}

SequenceBatch ReplayBuffer::sample(int batch_size, int seq_len, Rng& rng) const {
  if (batch_size < 1 || seq_len < 1) throw std::invalid_argument("replay: bad batch request");
  SequenceBatch out;
  out.obs.assign(seq_len, Tensor::zeros({batch_size, demos_.obs_dim}));
  out.actions.assign(seq_len, Tensor::zeros({batch_size, demos_.act_dim}));
  out.is_demo.assign(batch_size, 0);
  const int n_demo = episodes_.empty() ? batch_size : (batch_size + 1) / 2;
  for (int b = 0; b < batch_size; ++b) {
    const bool demo = b < n_demo;
    const Trajectory& traj = pick(demo, seq_len, rng);
    const int start = traj.length() > seq_len ? rng.randint(traj.length() - seq_len + 1) : 0;
    fill_row(out, b, traj, start);
    out.is_demo[b] = demo ? 1 : 0;
  }
  return out;
}

SequenceBatch ReplayBuffer::sample_demo(int batch_size, int seq_len, Rng& rng) const {
  SequenceBatch out;
  out.obs.assign(seq_len, Tensor::zeros({batch_size, demos_.obs_dim}));
  out.actions.assign(seq_len, Tensor::zeros({batch_size, demos_.act_dim}));
  out.is_demo.assign(batch_size, 1);
  for (int b = 0; b < batch_size; ++b) {
    const Trajectory& traj = pick(true, seq_len, rng);
    const int start = traj.length() > seq_len ? rng.randint(traj.length() - seq_len + 1) : 0;
    fill_row(out, b, traj, start);
  }
  return out;
}

SequenceBatch ReplayBuffer::sample_replay(int batch_size, int seq_len, Rng& rng) const {
  if (episodes_.empty()) throw std::runtime_error("replay: ring buffer is empty");
  SequenceBatch out;
  out.obs.assign(seq_len, Tensor::zeros({batch_size, demos_.obs_dim}));
  out.actions.assign(seq_len, Tensor::zeros({batch_size, demos_.act_dim}));
  out.is_demo.assign(batch_size, 0);
  for (int b = 0; b < batch_size; ++b) {
    const Trajectory& traj = pick(false, seq_len, rng);
    const int start = traj.length() > seq_len ? rng.randint(traj.length() - seq_len + 1) : 0;
    fill_row(out, b, traj, start);
  }
  return out;
}

}  // namespace cmil
