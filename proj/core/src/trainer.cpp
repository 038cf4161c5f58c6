#include "cmil/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "cmil/checkpoint.hpp"
#include "cmil/svg_plot.hpp"

namespace cmil {

namespace {

const std::vector<int> kHidden = {128, 128};

Tensor row_tensor(const std::vector<double>& v) {
  Tensor t = Tensor::zeros({1, static_cast<int>(v.size())});
  t.data = v;
  return t;
}

void ensure_finite(double v, const char* what) {
  if (!std::isfinite(v))
    throw std::runtime_error(std::string("training: ") + what + " became non-finite");
}

}  // namespace

AgentBundle::AgentBundle(const RunConfig& cfg, int obs_dim, int act_dim, Rng& rng)
    : model(
          [&] {
            WorldModelConfig mc;
            mc.obs_dim = obs_dim;
            mc.act_dim = act_dim;
            mc.latent_dim = cfg.latent_dim;
            mc.ensemble_size = cfg.ensemble_size;
            mc.hidden = kHidden;
            mc.free_nats = cfg.free_nats;
            return mc;
          }(),
          rng),
      policy(cfg.latent_dim, act_dim, kHidden, rng),
      critics(cfg.latent_dim, act_dim, kHidden, rng),
      targets(cfg.latent_dim, act_dim, kHidden, rng),
      disc(cfg.latent_dim, act_dim, kHidden, rng) {
  // Targets start as an exact copy of the online critics.
  soft_update(targets, critics, 1.0);
}

std::vector<NamedParam> AgentBundle::params() {
  std::vector<NamedParam> out = model.params();
  for (NamedParam& p : policy.params("actor")) out.push_back(p);
  for (NamedParam& p : critics.params("critic")) out.push_back(p);
  for (NamedParam& p : targets.params("target")) out.push_back(p);
  for (NamedParam& p : disc.params("disc")) out.push_back(p);
  return out;
}

void AgentBundle::save(const std::string& path) { save_checkpoint(path, params()); }
void AgentBundle::load(const std::string& path) { load_checkpoint(path, params()); }

EvalResult evaluate(const Policy& policy, const WorldModel& model, Env& env, int n_episodes) {
  if (n_episodes < 1) throw std::invalid_argument("evaluate: need at least one episode");
  const int d = model.config().latent_dim;
  EvalResult out;
  for (int ep = 0; ep < n_episodes; ++ep) {
    std::vector<double> obs = env.reset();
    Tensor latent = Tensor::zeros({1, d});
    Tensor prev_action = Tensor::zeros({1, env.act_dim()});
    bool success = false;
    double ret = 0.0;
    for (int t = 0; t < env.episode_len(); ++t) {
      latent = model.filter_step(latent, prev_action, row_tensor(obs), nullptr);
      const Tensor action = policy.mean_eval(latent);
      StepResult sr = env.step(action.data);
      ret += sr.oracle_reward;
      success = success || sr.success;
      prev_action = action;
      obs = sr.obs;
      if (sr.done) break;
    }
    out.success_rate += success ? 1.0 : 0.0;
    out.mean_return += ret;
  }
  out.success_rate /= n_episodes;
  out.mean_return /= n_episodes;
  return out;
}

EvalResult evaluate_expert(Env& env, Expert& expert, int n_episodes) {
  if (n_episodes < 1) throw std::invalid_argument("evaluate_expert: need at least one episode");
  EvalResult out;
  for (int ep = 0; ep < n_episodes; ++ep) {
    const Trajectory traj = rollout_expert(env, expert);
    out.success_rate += traj.success ? 1.0 : 0.0;
    out.mean_return += traj.oracle_return();
  }
  out.success_rate /= n_episodes;
  out.mean_return /= n_episodes;
  return out;
}

UpdateStats update_once(const RunConfig& cfg, AgentBundle& agent, const ReplayBuffer& buffer,
                        Adam& opt_model, Adam& opt_disc, Adam& opt_critic, Adam& opt_actor,
                        Rng& rng) {
  UpdateStats stats;
  const int d = cfg.latent_dim;
  const int ad = agent.disc.act_dim();
  const SequenceBatch batch = buffer.sample(cfg.batch_size, cfg.seq_len, rng);
  const int b_rows = batch.batch_size(), t_len = batch.seq_len();

  // 1. World model on the mixed batch.
  {
    Tape t;
    ElboResult elbo = agent.model.elbo_loss(t, batch.obs, batch.actions, rng);
    stats.model_loss = t.val(elbo.loss).item();
    ensure_finite(stats.model_loss, "model loss");
    t.backward(elbo.loss);
    opt_model.step(agent.model.params(), t);
  }

  // 2. Latent inference with the updated model; gradients never flow from
  // here back into the model.
  const std::vector<Tensor> latents =
      agent.model.infer_sequence_eval(batch.obs, batch.actions, nullptr);
  const int n_rows = b_rows * t_len;
  Tensor flat_s = Tensor::zeros({n_rows, d});
  Tensor flat_a = Tensor::zeros({n_rows, ad});
  for (int b = 0; b < b_rows; ++b)
    for (int j = 0; j < t_len; ++j) {
      const std::size_t r = static_cast<std::size_t>(b) * t_len + j;
      for (int c = 0; c < d; ++c)
        flat_s.data[r * d + c] = latents[j].data[static_cast<std::size_t>(b) * d + c];
      for (int c = 0; c < ad; ++c)
        flat_a.data[r * ad + c] = batch.actions[j].data[static_cast<std::size_t>(b) * ad + c];
    }

  const int n_demo_rows =
      static_cast<int>(std::count(batch.is_demo.begin(), batch.is_demo.end(), 1));
  Tensor demo_s = Tensor::zeros({n_demo_rows * t_len, d});
  Tensor demo_a = Tensor::zeros({n_demo_rows * t_len, ad});
  {
    int w = 0;
    for (int b = 0; b < b_rows; ++b) {
      if (!batch.is_demo[b]) continue;
      for (int j = 0; j < t_len; ++j, ++w) {
        const std::size_t r = static_cast<std::size_t>(b) * t_len + j;
        std::copy_n(flat_s.data.begin() + r * d, d, demo_s.data.begin() + static_cast<std::size_t>(w) * d);
        std::copy_n(flat_a.data.begin() + r * ad, ad, demo_a.data.begin() + static_cast<std::size_t>(w) * ad);
      }
    }
  }

  // Imagination starts: a random subset of the inferred latents.
  std::vector<int> start_idx(n_rows);
  std::iota(start_idx.begin(), start_idx.end(), 0);
  int m = n_rows;
  if (cfg.imagine_batch > 0 && cfg.imagine_batch < n_rows) {
    m = cfg.imagine_batch;
    for (int i = 0; i < m; ++i)
      std::swap(start_idx[i], start_idx[i + static_cast<int>(rng.randint(n_rows - i))]);
    start_idx.resize(m);
  }
  Tensor starts = Tensor::zeros({m, d});
  for (int i = 0; i < m; ++i)
    std::copy_n(flat_s.data.begin() + static_cast<std::size_t>(start_idx[i]) * d, d,
                starts.data.begin() + static_cast<std::size_t>(i) * d);

  // 3. One taped imagined rollout, shared by the discriminator's policy
  // side (as detached values), the critic targets, and the actor update.
  Tape at;
  PolicyFn pf = [&](Tape& t, Value s) { return agent.policy.rsample(t, s, rng); };
  ImaginedRollout roll =
      agent.model.imagine(at, pf, at.constant(starts), cfg.horizon, rng, true);
  if (roll.truncated_at >= 0)
    throw std::runtime_error("training: imagined rollout diverged at step " +
                             std::to_string(roll.truncated_at));
  const int h = cfg.horizon;
  ImaginedRolloutEval re;
  re.members = roll.members;
  re.latents.reserve(h + 1);
  for (int t = 0; t <= h; ++t) re.latents.push_back(at.val(roll.latents[t]));
  for (int t = 0; t < h; ++t) {
    re.actions.push_back(at.val(roll.actions[t]));
    re.disagreement.push_back(at.val(roll.disagreement[t]));
  }

  Tensor pol_s = Tensor::zeros({m * h, d});
  Tensor pol_a = Tensor::zeros({m * h, ad});
  for (int t = 0; t < h; ++t) {
    std::copy_n(re.latents[t].data.begin(), static_cast<std::size_t>(m) * d,
                pol_s.data.begin() + static_cast<std::size_t>(t) * m * d);
    std::copy_n(re.actions[t].data.begin(), static_cast<std::size_t>(m) * ad,
                pol_a.data.begin() + static_cast<std::size_t>(t) * m * ad);
  }

  // 4. Discriminator: expert pairs from demo rows only, policy pairs from
  // the imagined rollout only.
  {
    Tape dt;
    Value dloss = discriminator_loss(dt, agent.disc, demo_s, demo_a, pol_s, pol_a,
                                     NoiseSpec{cfg.noise_variance}, rng);
    stats.disc_loss = dt.val(dloss).item();
    ensure_finite(stats.disc_loss, "discriminator loss");
    dt.backward(dloss);
    opt_disc.step(agent.disc.params(), dt);
  }
  stats.gap_estimate = empirical_gap_estimate(agent.disc, demo_s, demo_a, pol_s, pol_a);
  {
    double acc = 0.0;
    for (const Tensor& dis : re.disagreement)
      for (double v : dis.data) acc += v;
    stats.mean_disagreement = acc / (static_cast<double>(m) * h);
  }

  // 5. Numeric rewards: penalized on imagined transitions, plain logit on
  // replayed data transitions.
  std::vector<Tensor> model_rewards(h);
  {
    Tape rt;
    for (int t = 0; t < h; ++t)
      model_rewards[t] =
          rt.val(penalized_reward(rt, agent.disc, rt.constant(re.latents[t]),
                                  rt.constant(re.actions[t]),
                                  rt.constant(re.disagreement[t]), cfg.alpha));
  }

  // 6. Critic regression on the rollout plus the real-data term: successor
  // values are read off the rollout that starts at the successor latent.
  const CriticTargets tg =
      critic_targets(agent.targets, agent.policy, re, model_rewards, cfg.gamma, cfg.lambda, rng);
  DataTransitionBatch data;
  {
    std::vector<int> data_rows;  // flat predecessor row per usable start
    std::vector<int> start_rows;
    for (int i = 0; i < m; ++i)
      if (start_idx[i] % t_len != 0) {
        data_rows.push_back(start_idx[i] - 1);
        start_rows.push_back(i);
      }
    const int n_data = static_cast<int>(data_rows.size());
    data.latents = Tensor::zeros({n_data, d});
    data.actions = Tensor::zeros({n_data, ad});
    data.next_v0 = Tensor::zeros({n_data, 1});
    data.next_vlambda = Tensor::zeros({n_data, 1});
    for (int i = 0; i < n_data; ++i) {
      std::copy_n(flat_s.data.begin() + static_cast<std::size_t>(data_rows[i]) * d, d,
                  data.latents.data.begin() + static_cast<std::size_t>(i) * d);
      std::copy_n(flat_a.data.begin() + static_cast<std::size_t>(data_rows[i]) * ad, ad,
                  data.actions.data.begin() + static_cast<std::size_t>(i) * ad);
      data.next_v0.data[i] = tg.v0[0].data[start_rows[i]];
      data.next_vlambda.data[i] = tg.vlambda[0].data[start_rows[i]];
    }
    if (n_data > 0)
      data.rewards = conservative_reward_eval(agent.disc, agent.model, data.latents,
                                              data.actions, false, cfg.alpha);
    else
      data.rewards = Tensor::zeros({0, 1});
  }
  {
    Tape ct;
    Value closs = critic_loss(ct, agent.critics, re, tg, data, cfg.gamma, cfg.lambda);
    stats.critic_loss = ct.val(closs).item();
    ensure_finite(stats.critic_loss, "critic loss");
    ct.backward(closs);
    opt_critic.step(agent.critics.params("critic"), ct);
  }

  // 7. Actor: rewards and returns go onto the imagination tape with the
  // freshly updated discriminator and critics; only policy parameters step.
  {
    std::vector<Value> rewards(h);
    for (int t = 0; t < h; ++t)
      rewards[t] = penalized_reward(at, agent.disc, roll.latents[t], roll.actions[t],
                                    roll.disagreement[t], cfg.alpha);
    ReturnEstimate ret = compute_returns(at, agent.critics, agent.policy, roll, rewards,
                                         cfg.gamma, cfg.lambda, rng);
    ActorLossResult al =
        actor_loss(at, ret, cfg.lambda, agent.policy, demo_s, demo_a, cfg.beta);
    stats.actor_loss = at.val(al.loss).item();
    stats.bc_nll = al.bc_nll;
    ensure_finite(stats.actor_loss, "actor loss");
    at.backward(al.loss);
    opt_actor.step(agent.policy.params(), at);
  }

  soft_update(agent.targets, agent.critics, cfg.tau);
  return stats;
}

void write_bound_plot(const std::string& path, const std::vector<MetricsRow>& rows) {
  if (rows.empty()) throw std::invalid_argument("bound plot: no metrics rows");
  PlotSeries gap{"gap estimate", {}, {}}, dis{"disagreement", {}, {}},
      oracle{"oracle gap", {}, {}};
  for (const MetricsRow& r : rows) {
    const double x = static_cast<double>(r.env_steps);
    gap.x.push_back(x);
    gap.y.push_back(r.gap_estimate);
    dis.x.push_back(x);
    dis.y.push_back(r.mean_disagreement);
    oracle.x.push_back(x);
    oracle.y.push_back(r.oracle_gap);
  }
  write_svg_lines(path, "Performance-gap bound terms (normalized)", {gap, dis, oracle}, true);
}

TrainResult run_training(const RunConfig& cfg) {
  cfg.validate();
  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);
  {
    std::ofstream cf(cfg.out_dir + "/config.cfg", std::ios::trunc);
    cf << dump_config(cfg);
  }

  if (!fs::exists(cfg.demos_path))
    throw std::runtime_error("training: demo file not found: " + cfg.demos_path);
  DemoSet demos = read_demos(cfg.demos_path);
  demos.env_name = cfg.env;

  std::unique_ptr<Env> env = make_env(cfg.env, cfg.seed);
  if (demos.obs_dim != env->obs_dim() || demos.act_dim != env->act_dim())
    throw std::runtime_error("training: demo dimensions do not match environment " + cfg.env);

  Rng root(cfg.seed);
  Rng init_rng = root.fork();
  Rng update_rng = root.fork();
  Rng act_rng = root.fork();

  AgentBundle agent(cfg, env->obs_dim(), env->act_dim(), init_rng);
  ReplayBuffer buffer(cfg.replay_capacity, demos);
  Adam opt_model(cfg.model_lr), opt_disc(cfg.disc_lr), opt_critic(cfg.critic_lr),
      opt_actor(cfg.actor_lr);

  TrainResult result;
  result.checkpoint_path = cfg.out_dir + "/final.ckpt";
  result.metrics_path = cfg.out_dir + "/metrics.csv";
  MetricsWriter metrics(result.metrics_path);
  const auto t_start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  };

  const std::uint64_t eval_seed = cfg.seed + 7777;
  std::unique_ptr<Env> eval_env = env->clone();

  // Oracle reference for the bound curves: the scripted expert's return.
  {
    std::unique_ptr<Env> expert_env = env->clone();
    expert_env->seed(eval_seed);
    std::unique_ptr<Expert> expert = make_expert(cfg.env, *expert_env, cfg.seed + 1);
    result.expert_return = evaluate_expert(*expert_env, *expert, cfg.eval_episodes).mean_return;
  }

  auto abort_with_checkpoint = [&](const std::exception& e) -> void {
    const std::string path = cfg.out_dir + "/abort.ckpt";
    agent.save(path);
    throw std::runtime_error(std::string(e.what()) + " (state saved to " + path + ")");
  };

  // (1) Model warm-up on demonstration sequences.
  try {
    for (int i = 0; i < cfg.model_warmup_steps; ++i) {
      const SequenceBatch batch = buffer.sample_demo(cfg.batch_size, cfg.seq_len, update_rng);
      Tape t;
      ElboResult elbo = agent.model.elbo_loss(t, batch.obs, batch.actions, update_rng);
      ensure_finite(t.val(elbo.loss).item(), "model warm-up loss");
      t.backward(elbo.loss);
      opt_model.step(agent.model.params(), t);
    }
  } catch (const std::exception& e) {
    abort_with_checkpoint(e);
  }

  // (2) Behavior-cloning warm start for the policy.
  BcPretrainResult bc{};
  if (cfg.bc_pretrain_steps > 0) {
    try {
      bc = bc_pretrain(agent.policy, agent.model, demos, cfg.bc_pretrain_steps, cfg.actor_lr,
                       cfg.batch_size, update_rng);
      ensure_finite(bc.final_nll, "behavior-cloning loss");
    } catch (const std::exception& e) {
      abort_with_checkpoint(e);
    }
  }

  UpdateStats last{};
  last.bc_nll = bc.final_nll;
  auto log_eval = [&](long steps) {
    eval_env->seed(eval_seed);
    const EvalResult ev = evaluate(agent.policy, agent.model, *eval_env, cfg.eval_episodes);
    MetricsRow row;
    row.env_steps = steps;
    row.success_rate = ev.success_rate;
    row.oracle_return = ev.mean_return;
    row.model_loss = last.model_loss;
    row.disc_loss = last.disc_loss;
    row.gap_estimate = last.gap_estimate;
    row.mean_disagreement = last.mean_disagreement;
    row.actor_loss = last.actor_loss;
    row.critic_loss = last.critic_loss;
    row.bc_nll = last.bc_nll;
    row.oracle_gap = result.expert_return - ev.mean_return;
    row.wall_clock_s = elapsed();
    metrics.append(row);
    result.rows.push_back(row);
    result.final_success_rate = ev.success_rate;
  };
  log_eval(0);

  long env_steps = 0;
  // Environment interaction state; episodes are recorded whole.
  std::vector<double> obs;
  Tensor latent, prev_action;
  Trajectory episode;
  bool episode_success = false;
  auto begin_episode = [&] {
    obs = env->reset();
    latent = Tensor::zeros({1, cfg.latent_dim});
    prev_action = Tensor::zeros({1, env->act_dim()});
    episode = Trajectory{};
    episode.obs_dim = env->obs_dim();
    episode.act_dim = env->act_dim();
    episode_success = false;
    for (double v : obs) episode.observations.push_back(static_cast<float>(v));
  };
  auto step_policy = [&] {
    latent = agent.model.filter_step(latent, prev_action, row_tensor(obs), &act_rng);
    const Tensor action = agent.policy.sample_eval(latent, act_rng);
    StepResult sr = env->step(action.data);
    ++env_steps;
    for (double v : action.data) episode.actions.push_back(static_cast<float>(v));
    for (double v : sr.obs) episode.observations.push_back(static_cast<float>(v));
    episode.oracle_rewards.push_back(sr.oracle_reward);
    episode_success = episode_success || sr.success;
    prev_action = action;
    obs = sr.obs;
    if (sr.done) {
      episode.success = episode_success;
      buffer.add_episode(std::move(episode));
      begin_episode();
    }
  };

  if (cfg.total_env_steps > 0) {
    begin_episode();
    // (3) Seed episodes from the BC-initialized policy.
    const long seed_steps =
        static_cast<long>(cfg.seed_episodes) * static_cast<long>(env->episode_len());
    for (long i = 0; i < seed_steps && env_steps < cfg.total_env_steps; ++i) step_policy();

    // (4) Interleaved collection and updates.
    long steps_since_update = 0;
    while (env_steps < cfg.total_env_steps) {
      step_policy();
      ++steps_since_update;
      if (!cfg.bc_only && steps_since_update >= cfg.env_steps_per_update) {
        steps_since_update = 0;
        try {
          last = update_once(cfg, agent, buffer, opt_model, opt_disc, opt_critic, opt_actor,
                             update_rng);
        } catch (const std::exception& e) {
          abort_with_checkpoint(e);
        }
        last.bc_nll = last.bc_nll == 0.0 ? bc.final_nll : last.bc_nll;
      }
      if (env_steps % cfg.eval_interval == 0 || env_steps == cfg.total_env_steps)
        log_eval(env_steps);
    }
    if (result.rows.empty() || result.rows.back().env_steps != env_steps) log_eval(env_steps);
  }

  result.env_steps = env_steps;
  agent.save(result.checkpoint_path);
  write_bound_plot(cfg.out_dir + "/bounds.svg", result.rows);
  return result;
}

}  // namespace cmil
