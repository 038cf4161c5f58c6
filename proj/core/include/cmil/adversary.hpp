#pragma once

#include "cmil/world_model.hpp"

namespace cmil {

// Gaussian input-noise regularization for discriminator training; the same
// noise is applied to expert and policy inputs.
struct NoiseSpec {
  double variance = 2.5;
};

inline constexpr double kDiscClamp = 1e-6;  // D clamped to [eps, 1-eps] before any log

// State-action classifier; the (clamped) logit is the learned reward.
class Discriminator {
 public:
  Discriminator() = default;
  Discriminator(int latent_dim, int act_dim, std::vector<int> hidden, Rng& rng);

  int latent_dim() const { return latent_dim_; }
  int act_dim() const { return act_dim_; }

  Value logit(Tape& t, Value latents, Value actions) const;
  // sigmoid(logit) clamped to [kDiscClamp, 1 - kDiscClamp].
  Value prob(Tape& t, Value latents, Value actions) const;
  Tensor prob_eval(const Tensor& latents, const Tensor& actions) const;

  std::vector<NamedParam> params(const std::string& prefix = "disc");

 private:
  MLP net_;
  int latent_dim_ = 0;
  int act_dim_ = 0;
};

// Cross-entropy discriminator objective on noisy inputs: mean -log D over
// expert pairs plus mean -log(1-D) over policy pairs. Inputs are numeric
// (detached); only discriminator parameters receive gradients.
Value discriminator_loss(Tape& t, const Discriminator& disc, const Tensor& expert_latents,
                         const Tensor& expert_actions, const Tensor& policy_latents,
                         const Tensor& policy_actions, const NoiseSpec& noise, Rng& rng);

// Conservative reward: log D - log(1-D) minus alpha times the ensemble
// disagreement. The penalty applies only when the transition is
// model-generated.
Value conservative_reward(Tape& t, const Discriminator& disc, const WorldModel& model,
                          Value latents, Value actions, bool is_model_rollout, double alpha);
// Variant reusing a disagreement value already on the tape (penalty always
// applied; callers pass imagined transitions only).
Value penalized_reward(Tape& t, const Discriminator& disc, Value latents, Value actions,
                       Value disagreement, double alpha);
Tensor conservative_reward_eval(const Discriminator& disc, const WorldModel& model,
                                const Tensor& latents, const Tensor& actions,
                                bool is_model_rollout, double alpha);

// Mean D over the expert batch minus mean D over the policy batch, without
// input noise; tracks the distribution-matching term of the bound.
double empirical_gap_estimate(const Discriminator& disc, const Tensor& expert_latents,
                              const Tensor& expert_actions, const Tensor& policy_latents,
                              const Tensor& policy_actions);

// Spec'd estimator entry point; forwards to the ensemble (K >= 2 enforced
// by the world model).
inline Value ensemble_disagreement(Tape& t, const WorldModel& model, Value latents,
                                   Value actions) {
  return model.disagreement(t, latents, actions);
}

}  // namespace cmil
