#pragma once

#include "cmil/adam.hpp"
#include "cmil/agent.hpp"
#include "cmil/config.hpp"
#include "cmil/metrics.hpp"
#include "cmil/replay.hpp"

namespace cmil {

// All learned components of one run, built deterministically from the
// config and the environment dimensions.
struct AgentBundle {
  WorldModel model;
  Policy policy;
  CriticPair critics;
  CriticPair targets;
  Discriminator disc;

  AgentBundle(const RunConfig& cfg, int obs_dim, int act_dim, Rng& rng);

  std::vector<NamedParam> params();  // model.* actor.* critic.* target.* disc.*
  void save(const std::string& path);
  void load(const std::string& path);
};

struct EvalResult {
  double success_rate = 0.0;
  double mean_return = 0.0;
};

// Runs n full episodes acting with the policy mean on latents filtered from
// live observations; oracle reward is consumed only here.
EvalResult evaluate(const Policy& policy, const WorldModel& model, Env& env, int n_episodes);
EvalResult evaluate_expert(Env& env, Expert& expert, int n_episodes);

// Per-update diagnostics from one interleaved training iteration.
struct UpdateStats {
  double model_loss = 0.0;
  double disc_loss = 0.0;
  double actor_loss = 0.0;
  double critic_loss = 0.0;
  double bc_nll = 0.0;
  double gap_estimate = 0.0;
  double mean_disagreement = 0.0;
};

// One full iteration: model -> discriminator -> critic -> actor -> target
// blend, on a mixed demo/replay batch. Throws on non-finite losses.
UpdateStats update_once(const RunConfig& cfg, AgentBundle& agent, const ReplayBuffer& buffer,
                        Adam& opt_model, Adam& opt_disc, Adam& opt_critic, Adam& opt_actor,
                        Rng& rng);

struct TrainResult {
  std::string checkpoint_path;
  std::string metrics_path;
  long env_steps = 0;
  double final_success_rate = 0.0;
  double expert_return = 0.0;
  std::vector<MetricsRow> rows;
};

TrainResult run_training(const RunConfig& cfg);

// Fig.-3-style artifact: the tracked bound terms (empirical gap estimate,
// mean ensemble disagreement, oracle performance gap), each min-max
// normalized to [0, 1] over the run.
void write_bound_plot(const std::string& path, const std::vector<MetricsRow>& rows);

}  // namespace cmil
