#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "cmil/adam.hpp"
#include "cmil/agent.hpp"
#include "cmil/world_model.hpp"
#include "test_util.hpp"

using namespace cmil;

namespace {

WorldModelConfig tiny_config() {
  WorldModelConfig cfg;
  cfg.obs_dim = 2;
  cfg.act_dim = 1;
  cfg.latent_dim = 3;
  cfg.ensemble_size = 2;
  cfg.hidden = {6};
  cfg.free_nats = 1.0;
  return cfg;
}

std::vector<Tensor> random_seq(int t_len, int batch, int dim, Rng& rng) {
  std::vector<Tensor> out(static_cast<std::size_t>(t_len));
  for (Tensor& x : out) x = Tensor::randn({batch, dim}, rng);
  return out;
}

}  // namespace

TEST_CASE("infer_sequence base case: one posterior from zero state and action") {
  Rng rng(1);
  WorldModel model(tiny_config(), rng);
  std::vector<Tensor> obs = random_seq(1, 2, 2, rng);
  std::vector<Tensor> act = random_seq(1, 2, 1, rng);
  Tape t;
  Rng draw(7);
  InferredSequence seq = model.infer_sequence(t, obs, act, draw);
  REQUIRE(seq.latents.size() == 1);
  REQUIRE(seq.posteriors.size() == 1);
  CHECK(t.val(seq.latents[0]).shape == std::vector<int>{2, 3});

  // Same posterior as feeding (zero latent, zero action, x) by hand.
  Tensor input = Tensor::zeros({2, 3 + 1 + 2});
  for (int b = 0; b < 2; ++b)
    for (int k = 0; k < 2; ++k) input.at(b, 4 + k) = obs[0].at(b, k);
  Gaussian direct = model.inference_net().forward_eval(input);
  for (int b = 0; b < 2; ++b)
    for (int k = 0; k < 3; ++k)
      CHECK(t.val(seq.posteriors[0].mean).at(b, k) == doctest::Approx(direct.mean.at(b, k)));
}

TEST_CASE("infer_sequence deterministic for identical inputs and noise seeds") {
  Rng rng(2);
  WorldModel model(tiny_config(), rng);
  std::vector<Tensor> obs = random_seq(4, 2, 2, rng);
  std::vector<Tensor> act = random_seq(4, 2, 1, rng);
  Rng d1(5), d2(5);
  std::vector<Tensor> a = model.infer_sequence_eval(obs, act, &d1);
  std::vector<Tensor> b = model.infer_sequence_eval(obs, act, &d2);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].data.size(); ++j) CHECK(a[i].data[j] == b[i].data[j]);
}

TEST_CASE("infer_sequence rejects mismatched sequence lengths") {
  Rng rng(3);
  WorldModel model(tiny_config(), rng);
  std::vector<Tensor> obs = random_seq(3, 1, 2, rng);
  std::vector<Tensor> act = random_seq(2, 1, 1, rng);
  Tape t;
  CHECK_THROWS(model.infer_sequence(t, obs, act, rng));
}

TEST_CASE("elbo with posterior equal to prior reduces to reconstruction NLL") {
  // Force inference net and every ensemble member to emit the same fixed
  // Gaussian regardless of input: zero all weights, then set matching output
  // biases. The KL is then 0, and with free_nats = 0 the loss is the
  // reconstruction term alone.
  Rng rng(4);
  WorldModelConfig cfg = tiny_config();
  cfg.free_nats = 0.0;  // the floor would otherwise hide the KL term's value
  WorldModel model(cfg, rng);
  for (NamedParam& p : model.params()) {
    const bool is_weight = p.tensor->shape[0] != 1;
    if (is_weight)
      for (double& v : p.tensor->data) v = 0.0;
  }
  std::vector<Tensor> obs = random_seq(3, 2, 2, rng);
  std::vector<Tensor> act = random_seq(3, 2, 1, rng);

  // Make posterior and all priors identical by copying the inference net's
  // output bias into each ensemble member's output bias.
  // With one hidden layer the output bias is ".b1".
  std::vector<NamedParam> params = model.params();
  Tensor* infer_bias = nullptr;
  for (NamedParam& p : params)
    if (p.name.find("inference") != std::string::npos && p.name.ends_with(".b1"))
      infer_bias = p.tensor;
  REQUIRE(infer_bias != nullptr);
  REQUIRE(infer_bias->shape == std::vector<int>{1, 2 * cfg.latent_dim});
  for (NamedParam& p : params)
    if (p.name.find("ensemble") != std::string::npos && p.name.ends_with(".b1"))
      *p.tensor = *infer_bias;

  Tape t;
  Rng draw(9);
  ElboResult res = model.elbo_loss(t, obs, act, draw);
  CHECK(res.kl == doctest::Approx(0.0).epsilon(1e-10));
  CHECK(t.val(res.loss).item() == doctest::Approx(res.recon_nll).epsilon(1e-9));
}

TEST_CASE("elbo KL diagnostic is nonnegative and the clipped term respects the floor") {
  Rng rng(5);
  WorldModelConfig cfg = tiny_config();
  WorldModel model(cfg, rng);
  std::vector<Tensor> obs = random_seq(4, 3, 2, rng);
  std::vector<Tensor> act = random_seq(4, 3, 1, rng);
  Tape t;
  ElboResult res = model.elbo_loss(t, obs, act, rng);
  CHECK(res.kl >= 0.0);
  // loss = recon + clipped KL; the clipped KL term never drops below free_nats.
  CHECK(t.val(res.loss).item() >= res.recon_nll + cfg.free_nats - 1e-9);
}

TEST_CASE("elbo gradient matches finite differences") {
  Rng rng(6);
  WorldModel model(tiny_config(), rng);
  std::vector<Tensor> obs = random_seq(2, 2, 2, rng);
  std::vector<Tensor> act = random_seq(2, 2, 1, rng);
  auto params = model.params();
  // Fixed draw stream so every loss evaluation uses identical member choices
  // and posterior noise.
  auto loss = [&] {
    Tape t;
    Rng draw(11);
    return t.val(model.elbo_loss(t, obs, act, draw).loss).item();
  };
  Tape t;
  Rng draw(11);
  t.backward(model.elbo_loss(t, obs, act, draw).loss);
  const auto res = test::finite_diff_check(params, t, loss);
  CHECK_MESSAGE(res.max_rel_err < 1e-3, res.worst_param);
}

TEST_CASE("ensemble member selection is uniform over timesteps") {
  // The member drawn per timestep comes from randint(K); measure the
  // frequency over many ELBO evaluations through the imagine() member list
  // proxy: use imagine, whose per-trajectory draws use the same randint.
  Rng rng(7);
  WorldModelConfig cfg = tiny_config();
  cfg.ensemble_size = 5;
  WorldModel model(cfg, rng);
  Policy policy(cfg.latent_dim, cfg.act_dim, {4}, rng);
  std::vector<int> counts(5, 0);
  int total = 0;
  Rng draw(13);
  for (int it = 0; it < 250; ++it) {
    Tensor starts = Tensor::randn({40, cfg.latent_dim}, draw);
    ImaginedRolloutEval roll = model.imagine_eval(
        [&](const Tensor& s) { return policy.sample_eval(s, draw); }, starts, 1, draw);
    for (int m : roll.members) {
      ++counts[static_cast<std::size_t>(m)];
      ++total;
    }
  }
  for (int c : counts) {
    const double freq = static_cast<double>(c) / total;
    CHECK(freq == doctest::Approx(0.2).epsilon(0.1));  // 1/K +- 0.02 absolute
    CHECK(std::abs(freq - 0.2) < 0.02);
  }
}

TEST_CASE("imagine H=1 yields one action and one successor per start latent") {
  Rng rng(8);
  WorldModelConfig cfg = tiny_config();
  WorldModel model(cfg, rng);
  Policy policy(cfg.latent_dim, cfg.act_dim, {4}, rng);
  Tape t;
  Tensor starts = Tensor::randn({6, cfg.latent_dim}, rng);
  ImaginedRollout roll = model.imagine(
      t, [&](Tape& tape, Value s) { return policy.rsample(tape, s, rng); }, t.constant(starts), 1,
      rng, true);
  REQUIRE(roll.latents.size() == 2);
  REQUIRE(roll.actions.size() == 1);
  REQUIRE(roll.disagreement.size() == 1);
  CHECK(roll.truncated_at == -1);
  CHECK(t.val(roll.latents[0]).shape == starts.shape);
  CHECK(t.val(roll.latents[1]).shape == starts.shape);
  CHECK(t.val(roll.actions[0]).shape == std::vector<int>{6, 1});
  CHECK(static_cast<int>(roll.members.size()) == 6);
}

TEST_CASE("imagine is reproducible given identical draw streams") {
  Rng rng(9);
  WorldModelConfig cfg = tiny_config();
  WorldModel model(cfg, rng);
  Policy policy(cfg.latent_dim, cfg.act_dim, {4}, rng);
  Tensor starts = Tensor::randn({3, cfg.latent_dim}, rng);
  auto run = [&](std::uint64_t seed) {
    Rng draw(seed);
    return model.imagine_eval([&](const Tensor& s) { return policy.sample_eval(s, draw); },
                              starts, 4, draw);
  };
  ImaginedRolloutEval a = run(21), b = run(21);
  for (std::size_t i = 0; i < a.latents.size(); ++i)
    for (std::size_t j = 0; j < a.latents[i].data.size(); ++j)
      CHECK(a.latents[i].data[j] == b.latents[i].data[j]);
}

TEST_CASE("taped and eval imagination agree on shapes and member draws") {
  Rng rng(10);
  WorldModelConfig cfg = tiny_config();
  WorldModel model(cfg, rng);
  Policy policy(cfg.latent_dim, cfg.act_dim, {4}, rng);
  Tensor starts = Tensor::randn({5, cfg.latent_dim}, rng);
  Tape t;
  Rng d1(33), d2(33);
  ImaginedRollout taped = model.imagine(
      t, [&](Tape& tape, Value s) { return policy.rsample(tape, s, d1); }, t.constant(starts), 3,
      d1, true);
  ImaginedRolloutEval ev = model.imagine_eval(
      [&](const Tensor& s) { return policy.sample_eval(s, d2); }, starts, 3, d2, true);
  REQUIRE(taped.members == ev.members);
  for (std::size_t i = 0; i < ev.latents.size(); ++i)
    for (std::size_t j = 0; j < ev.latents[i].data.size(); ++j)
      CHECK(t.val(taped.latents[i]).data[j] == doctest::Approx(ev.latents[i].data[j]).epsilon(1e-12));
}

TEST_CASE("imagined reward gradient reaches the policy parameters") {
  // Differentiability smoke check: a non-degenerate function of imagined
  // latents must produce nonzero gradients in the policy.
  Rng rng(12);
  WorldModelConfig cfg = tiny_config();
  WorldModel model(cfg, rng);
  Policy policy(cfg.latent_dim, cfg.act_dim, {4}, rng);
  Tape t;
  Tensor starts = Tensor::randn({4, cfg.latent_dim}, rng);
  ImaginedRollout roll = model.imagine(
      t, [&](Tape& tape, Value s) { return policy.rsample(tape, s, rng); }, t.constant(starts), 3,
      rng);
  Value loss = t.mean_all(t.square(roll.latents.back()));
  t.backward(loss);
  double grad_norm = 0.0;
  for (NamedParam& p : policy.params())
    if (const Tensor* g = t.grad_of(*p.tensor))
      for (double v : g->data) grad_norm += v * v;
  CHECK(grad_norm > 0.0);
}

TEST_CASE("disagreement is zero when all members are identical") {
  Rng rng(14);
  WorldModelConfig cfg = tiny_config();
  cfg.ensemble_size = 3;
  WorldModel model(cfg, rng);
  // Copy member 0's parameters into every other member.
  std::vector<NamedParam> params = model.params();
  for (int m = 1; m < 3; ++m)
    for (NamedParam& p : params) {
      const std::string from = "ensemble0";
      const std::string to = "ensemble" + std::to_string(m);
      if (p.name.find(to) == std::string::npos) continue;
      std::string src_name = p.name;
      src_name.replace(src_name.find(to), to.size(), from);
      for (NamedParam& q : params)
        if (q.name == src_name) *p.tensor = *q.tensor;
    }
  Tensor s = Tensor::randn({3, cfg.latent_dim}, rng);
  Tensor a = Tensor::randn({3, cfg.act_dim}, rng);
  Tensor d = model.disagreement_eval(s, a);
  for (double v : d.data) CHECK(std::abs(v) < 1e-12);
}

TEST_CASE("disagreement matches a direct population-std computation") {
  Rng rng(15);
  WorldModelConfig cfg = tiny_config();
  cfg.ensemble_size = 4;
  WorldModel model(cfg, rng);
  Tensor s = Tensor::randn({2, cfg.latent_dim}, rng);
  Tensor a = Tensor::randn({2, cfg.act_dim}, rng);
  Tensor d = model.disagreement_eval(s, a);

  // Oracle: evaluate each member's mean head numerically and reduce by hand.
  const int K = cfg.ensemble_size, B = 2, L = cfg.latent_dim;
  std::vector<Tensor> means;
  Tensor input = Tensor::zeros({B, L + cfg.act_dim});
  for (int b = 0; b < B; ++b) {
    for (int k = 0; k < L; ++k) input.at(b, k) = s.at(b, k);
    for (int k = 0; k < cfg.act_dim; ++k) input.at(b, L + k) = a.at(b, k);
  }
  for (int m = 0; m < K; ++m) means.push_back(model.ensemble()[static_cast<std::size_t>(m)]
                                                  .forward_eval(input)
                                                  .mean);
  for (int b = 0; b < B; ++b) {
    double avg_std = 0.0;
    for (int k = 0; k < L; ++k) {
      double mu = 0.0;
      for (int m = 0; m < K; ++m) mu += means[static_cast<std::size_t>(m)].at(b, k);
      mu /= K;
      double var = 0.0;
      for (int m = 0; m < K; ++m) {
        const double diff = means[static_cast<std::size_t>(m)].at(b, k) - mu;
        var += diff * diff;
      }
      avg_std += std::sqrt(var / K);
    }
    avg_std /= L;
    CHECK(d.at(b, 0) == doctest::Approx(avg_std).epsilon(1e-10));
  }
}

TEST_CASE("model learns a linear-Gaussian system: loss halves within 5k steps") {
  // Synthetic data: s' = 0.9 s + 0.2 a, x = s + noise, 1-D everything.
  Rng rng(16);
  WorldModelConfig cfg;
  cfg.obs_dim = 1;
  cfg.act_dim = 1;
  cfg.latent_dim = 4;
  cfg.ensemble_size = 2;
  cfg.hidden = {16};
  WorldModel model(cfg, rng);
  Adam opt(3e-4);
  auto params = model.params();

  auto make_batch = [&](std::vector<Tensor>& obs, std::vector<Tensor>& act) {
    const int T = 8, B = 4;
    obs.assign(T, Tensor::zeros({B, 1}));
    act.assign(T, Tensor::zeros({B, 1}));
    std::vector<double> state(B);
    for (double& s : state) s = rng.normal();
    for (int t = 0; t < T; ++t) {
      for (int b = 0; b < B; ++b) {
        obs[static_cast<std::size_t>(t)].at(b, 0) = state[static_cast<std::size_t>(b)] +
                                                     0.05 * rng.normal();
        const double a = rng.uniform(-1, 1);
        act[static_cast<std::size_t>(t)].at(b, 0) = a;
        state[static_cast<std::size_t>(b)] = 0.9 * state[static_cast<std::size_t>(b)] + 0.2 * a;
      }
    }
  };

  double first_losses = 0.0, last_losses = 0.0;
  const int steps = 5000;
  for (int i = 0; i < steps; ++i) {
    std::vector<Tensor> obs, act;
    make_batch(obs, act);
    Tape t;
    ElboResult res = model.elbo_loss(t, obs, act, rng);
    t.backward(res.loss);
    opt.step(params, t);
    const double l = t.val(res.loss).item();
    if (i < 100) first_losses += l;
    if (i >= steps - 100) last_losses += l;
  }
  CHECK(last_losses < 0.5 * first_losses);
}
