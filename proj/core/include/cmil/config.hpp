#pragma once

#include <cstdint>
#include <string>

namespace cmil {

// Every run hyperparameter, loadable from a flat key=value text file.
// Unknown keys are rejected; '#' starts a comment.
struct RunConfig {
  std::string env = "pointmass";
  std::string demos_path = "demos.bin";
  std::string out_dir = "run";
  std::uint64_t seed = 0;

  double gamma = 0.99;
  double lambda = 0.95;
  int horizon = 15;        // imagination length H
  int ensemble_size = 5;   // K
  int latent_dim = 16;     // d_s
  double alpha = 10.0;     // disagreement penalty weight
  double beta = 10.0;      // BC regularizer weight
  double noise_variance = 2.5;  // discriminator input-noise sigma^2
  double tau = 0.01;       // target soft-update rate
  double disc_eps = 1e-6;  // classifier output clamp

  double model_lr = 3e-4;
  double actor_lr = 8e-5;
  double critic_lr = 8e-5;
  double disc_lr = 3e-4;
  double free_nats = 1.0;

  int seq_len = 32;    // T_seq
  int batch_size = 8;  // sequences per batch (half demo, half replay)
  // Imagination starts per update, subsampled from the batch_size * seq_len
  // inferred latents; 0 means use all of them.
  int imagine_batch = 64;

  int model_warmup_steps = 1000;
  int bc_pretrain_steps = 1000;
  int seed_episodes = 5;
  int env_steps_per_update = 1;
  long total_env_steps = 150000;
  int eval_interval = 2000;
  int eval_episodes = 10;
  long replay_capacity = 200000;  // steps

  bool bc_only = false;  // ablation: skip adversarial training entirely

  void validate() const;  // throws std::invalid_argument with the bad key
};

RunConfig load_config(const std::string& path);
// Applies one "key=value" override in the config-file syntax.
void apply_override(RunConfig& cfg, const std::string& kv);
// The inverse of load_config, used for run provenance.
std::string dump_config(const RunConfig& cfg);

}  // namespace cmil
