#pragma once

#include <span>

#include "cmil/adversary.hpp"
#include "cmil/trajectory.hpp"
#include "cmil/world_model.hpp"

namespace cmil {

// Tanh-squashed Gaussian policy over latent states. Actions live in
// (-1, 1)^act_dim; log-probabilities carry the tanh change-of-variables
// correction.
class Policy {
 public:
  Policy() = default;
  Policy(int latent_dim, int act_dim, std::vector<int> hidden, Rng& rng);

  int act_dim() const { return act_dim_; }

  // Reparameterized sample tanh(mean + std * eps); differentiable in the
  // policy parameters and the input latents.
  Value rsample(Tape& t, Value latents, Rng& rng) const;
  Tensor sample_eval(const Tensor& latents, Rng& rng) const;
  Tensor mean_eval(const Tensor& latents) const;  // tanh(mean), exploration-free

  // Log-likelihood of given squashed actions, [B x 1]; actions are data.
  Value log_prob(Tape& t, Value latents, const Tensor& actions) const;
  Tensor log_prob_eval(const Tensor& latents, const Tensor& actions) const;

  std::vector<NamedParam> params(const std::string& prefix = "actor");

 private:
  GaussianMLP net_;
  int act_dim_ = 0;
};

class Critic {
 public:
  Critic() = default;
  Critic(int latent_dim, int act_dim, std::vector<int> hidden, Rng& rng);

  Value q(Tape& t, Value latents, Value actions) const;
  Tensor q_eval(const Tensor& latents, const Tensor& actions) const;
  std::vector<NamedParam> params(const std::string& prefix);

 private:
  MLP net_;
};

// Twin critics; targets are maintained as a second pair updated only by
// soft blending.
struct CriticPair {
  Critic q1, q2;

  CriticPair() = default;
  CriticPair(int latent_dim, int act_dim, std::vector<int> hidden, Rng& rng)
      : q1(latent_dim, act_dim, hidden, rng), q2(latent_dim, act_dim, hidden, rng) {}

  // V_0 = min over the two critic heads.
  Value min_q(Tape& t, Value latents, Value actions) const;
  Tensor min_q_eval(const Tensor& latents, const Tensor& actions) const;
  std::vector<NamedParam> params(const std::string& prefix);
};

// target <- (1 - tau) * target + tau * online, per parameter.
void soft_update(CriticPair& target, CriticPair& online, double tau);

// Exact TD(lambda) mixture for one start index t. rewards[i] is the reward
// received entering state i+1; v0 has H+1 entries. Computed by backward
// recursion.
double td_lambda(std::span<const double> rewards, std::span<const double> v0, double gamma,
                 double lambda, int t);
// Independent explicit double-sum evaluation (oracle for the recursion).
double td_lambda_reference(std::span<const double> rewards, std::span<const double> v0,
                           double gamma, double lambda, int t);

// Taped recursion for all start indices at once ([B x 1] per step).
std::vector<Value> td_lambda_values(Tape& t, const std::vector<Value>& rewards,
                                    const std::vector<Value>& v0, double gamma, double lambda);

struct ReturnEstimate {
  std::vector<Value> v0;       // H+1 entries
  std::vector<Value> vlambda;  // H entries (start indices 0..H-1)
};

// Bootstrapped values and lambda-returns along an imagined rollout, using
// the given critics (online for the actor, targets for critic regression).
ReturnEstimate compute_returns(Tape& t, const CriticPair& critics, const Policy& policy,
                               const ImaginedRollout& rollout, const std::vector<Value>& rewards,
                               double gamma, double lambda, Rng& rng);

struct ActorLossResult {
  Value loss;
  double return_term = 0.0;  // mean mixed return being maximized
  double bc_nll = 0.0;
};

// Mixed-return actor objective plus the behavior-cloning regularizer:
// -(mean over rollout of lambda * V^lambda + (1-lambda) * V_0)
// + beta * NLL(expert actions | expert latents). With pure_lambda_return
// the mixture is replaced by V^lambda alone.
ActorLossResult actor_loss(Tape& t, const ReturnEstimate& returns, double lambda,
                           const Policy& policy, const Tensor& expert_latents,
                           const Tensor& expert_actions, double beta,
                           bool pure_lambda_return = false);

// Numeric lambda-return targets for the critic update, computed with the
// target networks along a numeric rollout.
struct CriticTargets {
  std::vector<Tensor> v0;       // H+1 entries [B x 1]
  std::vector<Tensor> vlambda;  // H entries
};

CriticTargets critic_targets(const CriticPair& targets, const Policy& policy,
                             const ImaginedRolloutEval& rollout,
                             const std::vector<Tensor>& rewards, double gamma, double lambda,
                             Rng& rng);

struct DataTransitionBatch {
  Tensor latents;       // [N x d_s]   s_j
  Tensor actions;       // [N x act]   a_j
  Tensor rewards;       // [N x 1]     learned reward at (s_j, a_j), no penalty
  Tensor next_v0;       // [N x 1]     Vbar_0 at the successor state
  Tensor next_vlambda;  // [N x 1]     Vbar^lambda at the successor state
};

// Model regression term plus the real-data Bellman term, summed over both
// critics. Targets are detached numeric tensors.
Value critic_loss(Tape& t, const CriticPair& critics, const ImaginedRolloutEval& rollout,
                  const CriticTargets& targets, const DataTransitionBatch& data, double gamma,
                  double lambda);

// Behavior-cloning NLL of expert actions under the policy, [scalar].
Value bc_nll(Tape& t, const Policy& policy, const Tensor& expert_latents,
             const Tensor& expert_actions);

struct BcPretrainResult {
  double initial_nll = 0.0;
  double final_nll = 0.0;
};

// Supervised warm start: maximizes expert-action likelihood on latents
// inferred by the (already warmed-up) model over whole demo episodes,
// filtering from the initial zero latent exactly as at act time.
BcPretrainResult bc_pretrain(Policy& policy, const WorldModel& model, const DemoSet& demos,
                             int steps, double lr, int batch_size, Rng& rng);

}  // namespace cmil
