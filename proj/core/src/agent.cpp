#include "cmil/agent.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cmil/adam.hpp"

namespace cmil {

namespace {

constexpr double kAtanhClip = 1.0 - 1e-6;

Tensor atanh_clipped(const Tensor& a) {
  Tensor u = a;
  for (double& v : u.data) v = std::atanh(std::clamp(v, -kAtanhClip, kAtanhClip));
  return u;
}

// sum_i log(1 - a_i^2) per row, on clipped actions; [B x d] -> [B x 1].
Tensor tanh_correction(const Tensor& a) {
  const int rows = a.rows(), cols = a.cols();
  Tensor out = Tensor::zeros({rows, 1});
  for (int r = 0; r < rows; ++r) {
    double s = 0.0;
    for (int c = 0; c < cols; ++c) {
      const double v = std::clamp(a.data[static_cast<std::size_t>(r) * cols + c], -kAtanhClip,
                                  kAtanhClip);
      s += std::log(1.0 - v * v);
    }
    out.data[r] = s;
  }
  return out;
}

}  // namespace

Policy::Policy(int latent_dim, int act_dim, std::vector<int> hidden, Rng& rng)
    : net_(latent_dim, std::move(hidden), act_dim, rng), act_dim_(act_dim) {}

Value Policy::rsample(Tape& t, Value latents, Rng& rng) const {
  GaussianValue g = net_.forward(t, latents);
  const Tensor& mean = t.val(g.mean);
  Tensor eps = Tensor::zeros(mean.shape);
  for (double& v : eps.data) v = rng.normal();
  return t.tanh_(gaussian_rsample(t, g, eps));
}

Tensor Policy::sample_eval(const Tensor& latents, Rng& rng) const {
  Tensor u = net_.forward_eval(latents).sample(rng);
  for (double& v : u.data) v = std::tanh(v);
  return u;
}

Tensor Policy::mean_eval(const Tensor& latents) const {
  Tensor a = net_.forward_eval(latents).mean;
  for (double& v : a.data) v = std::tanh(v);
  return a;
}

Value Policy::log_prob(Tape& t, Value latents, const Tensor& actions) const {
  GaussianValue g = net_.forward(t, latents);
  Value lp = gaussian_logprob(t, g, t.constant(atanh_clipped(actions)));
  return t.sub(lp, t.constant(tanh_correction(actions)));
}

Tensor Policy::log_prob_eval(const Tensor& latents, const Tensor& actions) const {
  Tape t;
  return t.val(log_prob(t, t.constant(latents), actions));
}

std::vector<NamedParam> Policy::params(const std::string& prefix) {
  return net_.params(prefix);
}

Critic::Critic(int latent_dim, int act_dim, std::vector<int> hidden, Rng& rng) {
  std::vector<int> sizes;
  sizes.push_back(latent_dim + act_dim);
  for (int h : hidden) sizes.push_back(h);
  sizes.push_back(1);
  net_ = MLP(std::move(sizes), rng);
}

Value Critic::q(Tape& t, Value latents, Value actions) const {
  return net_.forward(t, t.concat_cols(latents, actions));
}

Tensor Critic::q_eval(const Tensor& latents, const Tensor& actions) const {
  Tape t;
  return t.val(q(t, t.constant(latents), t.constant(actions)));
}

std::vector<NamedParam> Critic::params(const std::string& prefix) {
  return net_.params(prefix);
}

Value CriticPair::min_q(Tape& t, Value latents, Value actions) const {
  return t.minimum(q1.q(t, latents, actions), q2.q(t, latents, actions));
}

Tensor CriticPair::min_q_eval(const Tensor& latents, const Tensor& actions) const {
  Tensor a = q1.q_eval(latents, actions);
  const Tensor b = q2.q_eval(latents, actions);
  for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] = std::min(a.data[i], b.data[i]);
  return a;
}

std::vector<NamedParam> CriticPair::params(const std::string& prefix) {
  std::vector<NamedParam> out = q1.params(prefix + ".q1");
  for (NamedParam& p : q2.params(prefix + ".q2")) out.push_back(p);
  return out;
}

void soft_update(CriticPair& target, CriticPair& online, double tau) {
  std::vector<NamedParam> tp = target.params("t");
  std::vector<NamedParam> op = online.params("t");
  if (tp.size() != op.size()) throw std::logic_error("soft_update: parameter count mismatch");
  for (std::size_t i = 0; i < tp.size(); ++i) {
    if (tp[i].name != op[i].name || !tp[i].tensor->same_shape(*op[i].tensor))
      throw std::logic_error("soft_update: parameter layout mismatch at " + tp[i].name);
    for (std::size_t k = 0; k < tp[i].tensor->data.size(); ++k)
      tp[i].tensor->data[k] =
          (1.0 - tau) * tp[i].tensor->data[k] + tau * op[i].tensor->data[k];
  }
}

namespace {

void check_td_inputs(std::size_t n_rewards, std::size_t n_values, int t) {
  if (n_values != n_rewards + 1)
    throw std::invalid_argument("td_lambda: need one more value than rewards");
  if (n_rewards == 0) throw std::invalid_argument("td_lambda: empty horizon");
  if (t < 0 || t >= static_cast<int>(n_rewards))
    throw std::invalid_argument("td_lambda: start index out of range");
}

}  // namespace

double td_lambda(std::span<const double> rewards, std::span<const double> v0, double gamma,
                 double lambda, int t) {
  check_td_inputs(rewards.size(), v0.size(), t);
  const int h = static_cast<int>(rewards.size());
  double vlam = rewards[h - 1] + gamma * v0[h];
  for (int i = h - 2; i >= t; --i)
    vlam = rewards[i] + gamma * ((1.0 - lambda) * v0[i + 1] + lambda * vlam);
  return vlam;
}

double td_lambda_reference(std::span<const double> rewards, std::span<const double> v0,
                           double gamma, double lambda, int t) {
  check_td_inputs(rewards.size(), v0.size(), t);
  const int h = static_cast<int>(rewards.size());
  const int n_max = h - t;
  // n-step return G_n = sum_{k<n} gamma^k r[t+k] + gamma^n v0[t+n].
  auto g_n = [&](int n) {
    double acc = 0.0, disc = 1.0;
    for (int k = 0; k < n; ++k, disc *= gamma) acc += disc * rewards[t + k];
    return acc + disc * v0[t + n];
  };
  double out = 0.0, w = 1.0;
  for (int n = 1; n < n_max; ++n, w *= lambda) out += (1.0 - lambda) * w * g_n(n);
  return out + w * g_n(n_max);
}

std::vector<Value> td_lambda_values(Tape& t, const std::vector<Value>& rewards,
                                    const std::vector<Value>& v0, double gamma, double lambda) {
  if (v0.size() != rewards.size() + 1)
    throw std::invalid_argument("td_lambda_values: need one more value than rewards");
  if (rewards.empty()) throw std::invalid_argument("td_lambda_values: empty horizon");
  const int h = static_cast<int>(rewards.size());
  std::vector<Value> vlam(h);
  vlam[h - 1] = t.add(rewards[h - 1], t.mul_scalar(v0[h], gamma));
  for (int i = h - 2; i >= 0; --i) {
    Value mix = t.add(t.mul_scalar(v0[i + 1], 1.0 - lambda), t.mul_scalar(vlam[i + 1], lambda));
    vlam[i] = t.add(rewards[i], t.mul_scalar(mix, gamma));
  }
  return vlam;
}

ReturnEstimate compute_returns(Tape& t, const CriticPair& critics, const Policy& policy,
                               const ImaginedRollout& rollout, const std::vector<Value>& rewards,
                               double gamma, double lambda, Rng& rng) {
  const int h = static_cast<int>(rollout.actions.size());
  if (rollout.latents.size() != rollout.actions.size() + 1)
    throw std::invalid_argument("compute_returns: malformed rollout");
  if (static_cast<int>(rewards.size()) != h)
    throw std::invalid_argument("compute_returns: reward/action count mismatch");
  ReturnEstimate out;
  out.v0.resize(h + 1);
  for (int i = 0; i < h; ++i)
    out.v0[i] = critics.min_q(t, rollout.latents[i], rollout.actions[i]);
  Value boot_action = policy.rsample(t, rollout.latents[h], rng);
  out.v0[h] = critics.min_q(t, rollout.latents[h], boot_action);
  out.vlambda = td_lambda_values(t, rewards, out.v0, gamma, lambda);
  return out;
}

ActorLossResult actor_loss(Tape& t, const ReturnEstimate& returns, double lambda,
                           const Policy& policy, const Tensor& expert_latents,
                           const Tensor& expert_actions, double beta, bool pure_lambda_return) {
  const int h = static_cast<int>(returns.vlambda.size());
  if (h == 0) throw std::invalid_argument("actor_loss: empty return estimate");
  Value acc;
  for (int i = 0; i < h; ++i) {
    Value mixed = pure_lambda_return
                      ? returns.vlambda[i]
                      : t.add(t.mul_scalar(returns.vlambda[i], lambda),
                              t.mul_scalar(returns.v0[i], 1.0 - lambda));
    Value m = t.mean_all(mixed);
    acc = i == 0 ? m : t.add(acc, m);
  }
  Value avg_return = t.mul_scalar(acc, 1.0 / h);

  ActorLossResult out;
  out.return_term = t.val(avg_return).item();
  out.loss = t.neg(avg_return);
  if (beta != 0.0 && expert_latents.rows() > 0) {
    Value bc = bc_nll(t, policy, expert_latents, expert_actions);
    out.bc_nll = t.val(bc).item();
    out.loss = t.add(out.loss, t.mul_scalar(bc, beta));
  }
  return out;
}

CriticTargets critic_targets(const CriticPair& targets, const Policy& policy,
                             const ImaginedRolloutEval& rollout,
                             const std::vector<Tensor>& rewards, double gamma, double lambda,
                             Rng& rng) {
  const int h = static_cast<int>(rollout.actions.size());
  if (rollout.latents.size() != rollout.actions.size() + 1)
    throw std::invalid_argument("critic_targets: malformed rollout");
  if (static_cast<int>(rewards.size()) != h)
    throw std::invalid_argument("critic_targets: reward/action count mismatch");
  CriticTargets out;
  out.v0.resize(h + 1);
  for (int i = 0; i < h; ++i)
    out.v0[i] = targets.min_q_eval(rollout.latents[i], rollout.actions[i]);
  out.v0[h] = targets.min_q_eval(rollout.latents[h], policy.sample_eval(rollout.latents[h], rng));

  out.vlambda.resize(h);
  out.vlambda[h - 1] = rewards[h - 1];
  for (std::size_t k = 0; k < out.vlambda[h - 1].data.size(); ++k)
    out.vlambda[h - 1].data[k] += gamma * out.v0[h].data[k];
  for (int i = h - 2; i >= 0; --i) {
    out.vlambda[i] = rewards[i];
    for (std::size_t k = 0; k < out.vlambda[i].data.size(); ++k)
      out.vlambda[i].data[k] += gamma * ((1.0 - lambda) * out.v0[i + 1].data[k] +
                                         lambda * out.vlambda[i + 1].data[k]);
  }
  return out;
}

Value critic_loss(Tape& t, const CriticPair& critics, const ImaginedRolloutEval& rollout,
                  const CriticTargets& targets, const DataTransitionBatch& data, double gamma,
                  double lambda) {
  const int h = static_cast<int>(targets.vlambda.size());
  if (h == 0) throw std::invalid_argument("critic_loss: empty targets");
  const Critic* heads[2] = {&critics.q1, &critics.q2};

  Value model_term;
  for (int i = 0; i < h; ++i) {
    Value s = t.constant(rollout.latents[i]);
    Value a = t.constant(rollout.actions[i]);
    Value y = t.constant(targets.vlambda[i]);
    for (const Critic* c : heads) {
      Value err = t.mean_all(t.square(t.sub(c->q(t, s, a), y)));
      model_term = model_term.valid() ? t.add(model_term, err) : err;
    }
  }
  Value loss = t.mul_scalar(model_term, 1.0 / h);

  if (data.latents.rows() > 0) {
    Tensor y = data.rewards;
    for (std::size_t k = 0; k < y.data.size(); ++k)
      y.data[k] += gamma * ((1.0 - lambda) * data.next_v0.data[k] +
                            lambda * data.next_vlambda.data[k]);
    Value s = t.constant(data.latents);
    Value a = t.constant(data.actions);
    Value yc = t.constant(y);
    for (const Critic* c : heads)
      loss = t.add(loss, t.mean_all(t.square(t.sub(c->q(t, s, a), yc))));
  }
  return loss;
}

Value bc_nll(Tape& t, const Policy& policy, const Tensor& expert_latents,
             const Tensor& expert_actions) {
  if (expert_latents.rows() == 0) throw std::invalid_argument("bc_nll: empty expert batch");
  return t.neg(t.mean_all(policy.log_prob(t, t.constant(expert_latents), expert_actions)));
}

BcPretrainResult bc_pretrain(Policy& policy, const WorldModel& model, const DemoSet& demos,
                             int steps, double lr, int batch_size, Rng& rng) {
  if (demos.count() == 0) throw std::invalid_argument("bc_pretrain: no demonstrations");
  const int obs_dim = demos.obs_dim, act_dim = demos.act_dim;
  std::vector<NamedParam> params = policy.params();
  Adam opt(lr);
  BcPretrainResult out;
  int max_len = 0;
  for (const Trajectory& traj : demos.episodes) max_len = std::max(max_len, traj.length());

  for (int step = 0; step < steps; ++step) {
    // Infer latents over whole episodes, filtering from the initial zero
    // latent exactly as at act time. Mid-episode windows would train the
    // policy on cold-start latents that still lack velocity information,
    // teaching it to ignore those features. Shorter episodes are padded by
    // repeating their final frame; padded rows are dropped from the loss.
    std::vector<Tensor> obs_seq(max_len, Tensor::zeros({batch_size, obs_dim}));
    std::vector<Tensor> act_seq(max_len, Tensor::zeros({batch_size, act_dim}));
    std::vector<int> lens(batch_size);
    for (int b = 0; b < batch_size; ++b) {
      const Trajectory& traj = demos.episodes[rng.randint(demos.count())];
      lens[b] = traj.length();
      for (int j = 0; j < max_len; ++j) {
        const int src = std::min(j, lens[b] - 1);
        for (int c = 0; c < obs_dim; ++c)
          obs_seq[j].data[static_cast<std::size_t>(b) * obs_dim + c] = traj.obs_at(src)[c];
        for (int c = 0; c < act_dim; ++c)
          act_seq[j].data[static_cast<std::size_t>(b) * act_dim + c] = traj.act_at(src)[c];
      }
    }
    // Posterior means, not samples: the policy acts on the filter mean, and
    // regression targets fit against noisy inputs attenuate exactly the
    // low-amplitude latent features (velocity) the controller needs.
    std::vector<Tensor> latents(max_len);
    {
      Tensor lat = Tensor::zeros({batch_size, model.config().latent_dim});
      const Tensor zero_a = Tensor::zeros({batch_size, act_dim});
      for (int j = 0; j < max_len; ++j) {
        lat = model.filter_step(lat, j == 0 ? zero_a : act_seq[j - 1], obs_seq[j], nullptr);
        latents[j] = lat;
      }
    }

    int n_rows = 0;
    for (int b = 0; b < batch_size; ++b) n_rows += lens[b];
    Tensor flat_s = Tensor::zeros({n_rows, model.config().latent_dim});
    Tensor flat_a = Tensor::zeros({n_rows, act_dim});
    const int d = model.config().latent_dim;
    std::size_t row = 0;
    for (int j = 0; j < max_len; ++j)
      for (int b = 0; b < batch_size; ++b) {
        if (j >= lens[b]) continue;
        for (int c = 0; c < d; ++c)
          flat_s.data[row * d + c] = latents[j].data[static_cast<std::size_t>(b) * d + c];
        for (int c = 0; c < act_dim; ++c)
          flat_a.data[row * act_dim + c] =
              act_seq[j].data[static_cast<std::size_t>(b) * act_dim + c];
        ++row;
      }

    Tape t;
    Value loss = bc_nll(t, policy, flat_s, flat_a);
    const double nll = t.val(loss).item();
    if (step == 0) out.initial_nll = nll;
    out.final_nll = nll;
    t.backward(loss);
    opt.step(params, t);
  }
  return out;
}

}  // namespace cmil
