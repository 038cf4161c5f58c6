#include "cmil/adversary.hpp"

#include <cmath>
#include <stdexcept>

namespace cmil {

Discriminator::Discriminator(int latent_dim, int act_dim, std::vector<int> hidden, Rng& rng)
    : latent_dim_(latent_dim), act_dim_(act_dim) {
  std::vector<int> sizes;
  sizes.push_back(latent_dim + act_dim);
  for (int h : hidden) sizes.push_back(h);
  sizes.push_back(1);
  net_ = MLP(std::move(sizes), rng);
}

Value Discriminator::logit(Tape& t, Value latents, Value actions) const {
  return net_.forward(t, t.concat_cols(latents, actions));
}

Value Discriminator::prob(Tape& t, Value latents, Value actions) const {
  return t.clamp(t.sigmoid(logit(t, latents, actions)), kDiscClamp, 1.0 - kDiscClamp);
}

Tensor Discriminator::prob_eval(const Tensor& latents, const Tensor& actions) const {
  Tape t;
  return t.val(prob(t, t.constant(latents), t.constant(actions)));
}

std::vector<NamedParam> Discriminator::params(const std::string& prefix) {
  return net_.params(prefix);
}

namespace {

Tensor add_noise(const Tensor& x, double stddev, Rng& rng) {
  Tensor out = x;
  if (stddev > 0.0)
    for (double& v : out.data) v += stddev * rng.normal();
  return out;
}

}  // namespace

Value discriminator_loss(Tape& t, const Discriminator& disc, const Tensor& expert_latents,
                         const Tensor& expert_actions, const Tensor& policy_latents,
                         const Tensor& policy_actions, const NoiseSpec& noise, Rng& rng) {
  if (expert_latents.data.empty() || policy_latents.data.empty())
    throw std::invalid_argument("discriminator_loss: both batches must be non-empty");
  if (noise.variance < 0.0)
    throw std::invalid_argument("discriminator_loss: noise variance must be >= 0");
  const double stddev = std::sqrt(noise.variance);
  Value d_expert = disc.prob(t, t.constant(add_noise(expert_latents, stddev, rng)),
                             t.constant(add_noise(expert_actions, stddev, rng)));
  Value d_policy = disc.prob(t, t.constant(add_noise(policy_latents, stddev, rng)),
                             t.constant(add_noise(policy_actions, stddev, rng)));
  Value expert_term = t.neg(t.mean_all(t.log_(d_expert)));
  Value policy_term = t.neg(t.mean_all(t.log_(t.add_scalar(t.neg(d_policy), 1.0))));
  return t.add(expert_term, policy_term);
}

namespace {

Value clamped_logit(Tape& t, const Discriminator& disc, Value latents, Value actions) {
  Value d = disc.prob(t, latents, actions);
  return t.sub(t.log_(d), t.log_(t.add_scalar(t.neg(d), 1.0)));
}

}  // namespace

Value conservative_reward(Tape& t, const Discriminator& disc, const WorldModel& model,
                          Value latents, Value actions, bool is_model_rollout, double alpha) {
  Value r = clamped_logit(t, disc, latents, actions);
  if (is_model_rollout && alpha != 0.0)
    r = t.sub(r, t.mul_scalar(model.disagreement(t, latents, actions), alpha));
  return r;
}

Value penalized_reward(Tape& t, const Discriminator& disc, Value latents, Value actions,
                       Value disagreement, double alpha) {
  Value r = clamped_logit(t, disc, latents, actions);
  if (alpha != 0.0) r = t.sub(r, t.mul_scalar(disagreement, alpha));
  return r;
}

Tensor conservative_reward_eval(const Discriminator& disc, const WorldModel& model,
                                const Tensor& latents, const Tensor& actions,
                                bool is_model_rollout, double alpha) {
  Tape t;
  return t.val(conservative_reward(t, disc, model, t.constant(latents), t.constant(actions),
                                   is_model_rollout, alpha));
}

double empirical_gap_estimate(const Discriminator& disc, const Tensor& expert_latents,
                              const Tensor& expert_actions, const Tensor& policy_latents,
                              const Tensor& policy_actions) {
  if (expert_latents.data.empty() || policy_latents.data.empty())
    throw std::invalid_argument("empirical_gap_estimate: both batches must be non-empty");
  const Tensor d_e = disc.prob_eval(expert_latents, expert_actions);
  const Tensor d_p = disc.prob_eval(policy_latents, policy_actions);
  double me = 0.0, mp = 0.0;
  for (double x : d_e.data) me += x;
  for (double x : d_p.data) mp += x;
  return me / static_cast<double>(d_e.size()) - mp / static_cast<double>(d_p.size());
}

}  // namespace cmil
