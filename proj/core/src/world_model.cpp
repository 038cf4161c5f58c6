#include "cmil/world_model.hpp"

#include <cmath>
#include <stdexcept>

namespace cmil {

WorldModel::WorldModel(const WorldModelConfig& cfg, Rng& rng) : cfg_(cfg) {
  if (cfg.obs_dim < 1 || cfg.act_dim < 1 || cfg.latent_dim < 1)
    throw std::invalid_argument("WorldModel: dimensions must be positive");
  if (cfg.ensemble_size < 2)
    throw std::invalid_argument("WorldModel: ensemble needs K >= 2");
  inference_ = GaussianMLP(cfg.latent_dim + cfg.act_dim + cfg.obs_dim, cfg.hidden,
                           cfg.latent_dim, rng);
  for (int i = 0; i < cfg.ensemble_size; ++i)
    ensemble_.emplace_back(cfg.latent_dim + cfg.act_dim, cfg.hidden, cfg.latent_dim, rng);
  decoder_ = GaussianMLP(cfg.latent_dim, cfg.hidden, cfg.obs_dim, rng);
}

InferredSequence WorldModel::infer_sequence(Tape& t, const std::vector<Tensor>& obs_seq,
                                            const std::vector<Tensor>& act_seq, Rng& rng) const {
  if (obs_seq.size() != act_seq.size())
    throw std::invalid_argument("infer_sequence: observation/action sequence length mismatch");
  if (obs_seq.empty()) throw std::invalid_argument("infer_sequence: empty sequence");
  const int B = obs_seq[0].rows();
  InferredSequence out;
  Value prev_latent = t.constant(Tensor::zeros({B, cfg_.latent_dim}));
  Value prev_action = t.constant(Tensor::zeros({B, cfg_.act_dim}));
  for (std::size_t step = 0; step < obs_seq.size(); ++step) {
    Value input = t.concat_cols(t.concat_cols(prev_latent, prev_action),
                                t.constant(obs_seq[step]));
    GaussianValue post = inference_.forward(t, input);
    Value latent = gaussian_rsample(t, post, Tensor::randn({B, cfg_.latent_dim}, rng));
    out.latents.push_back(latent);
    out.posteriors.push_back(post);
    prev_latent = latent;
    prev_action = t.constant(act_seq[step]);
  }
  return out;
}

std::vector<Tensor> WorldModel::infer_sequence_eval(const std::vector<Tensor>& obs_seq,
                                                    const std::vector<Tensor>& act_seq,
                                                    Rng* sample_rng) const {
  if (obs_seq.size() != act_seq.size())
    throw std::invalid_argument("infer_sequence_eval: sequence length mismatch");
  const int B = obs_seq[0].rows();
  std::vector<Tensor> latents;
  Tensor prev_latent = Tensor::zeros({B, cfg_.latent_dim});
  Tensor prev_action = Tensor::zeros({B, cfg_.act_dim});
  for (std::size_t step = 0; step < obs_seq.size(); ++step) {
    Tensor input = Tensor::zeros({B, cfg_.latent_dim + cfg_.act_dim + cfg_.obs_dim});
    for (int i = 0; i < B; ++i) {
      int c = 0;
      for (int j = 0; j < cfg_.latent_dim; ++j) input.at(i, c++) = prev_latent.at(i, j);
      for (int j = 0; j < cfg_.act_dim; ++j) input.at(i, c++) = prev_action.at(i, j);
      for (int j = 0; j < cfg_.obs_dim; ++j) input.at(i, c++) = obs_seq[step].at(i, j);
    }
    const Gaussian post = inference_.forward_eval(input);
    Tensor latent = sample_rng ? post.sample(*sample_rng) : post.mean;
    prev_latent = latent;
    prev_action = act_seq[step];
    latents.push_back(std::move(latent));
  }
  return latents;
}

Tensor WorldModel::filter_step(const Tensor& prev_latent, const Tensor& prev_action,
                               const Tensor& obs, Rng* sample_rng) const {
  const int B = obs.rows();
  Tensor input = Tensor::zeros({B, cfg_.latent_dim + cfg_.act_dim + cfg_.obs_dim});
  for (int i = 0; i < B; ++i) {
    int c = 0;
    for (int j = 0; j < cfg_.latent_dim; ++j) input.at(i, c++) = prev_latent.at(i, j);
    for (int j = 0; j < cfg_.act_dim; ++j) input.at(i, c++) = prev_action.at(i, j);
    for (int j = 0; j < cfg_.obs_dim; ++j) input.at(i, c++) = obs.at(i, j);
  }
  const Gaussian post = inference_.forward_eval(input);
  return sample_rng ? post.sample(*sample_rng) : post.mean;
}

ElboResult WorldModel::elbo_loss(Tape& t, const std::vector<Tensor>& obs_seq,
                                 const std::vector<Tensor>& act_seq, Rng& rng) const {
  const int B = obs_seq[0].rows();
  Value prev_latent = t.constant(Tensor::zeros({B, cfg_.latent_dim}));
  Value prev_action = t.constant(Tensor::zeros({B, cfg_.act_dim}));
  Value total;  // [B x 1]
  double recon_diag = 0.0, kl_diag = 0.0;
  for (std::size_t step = 0; step < obs_seq.size(); ++step) {
    Value input = t.concat_cols(t.concat_cols(prev_latent, prev_action),
                                t.constant(obs_seq[step]));
    GaussianValue post = inference_.forward(t, input);
    Value latent = gaussian_rsample(t, post, Tensor::randn({B, cfg_.latent_dim}, rng));

    // One uniformly drawn ensemble member evaluates this step's prior.
    const GaussianMLP& member = ensemble_[rng.randint(ensemble_.size())];
    GaussianValue prior = member.forward(t, t.concat_cols(prev_latent, prev_action));

    Value nll = t.neg(gaussian_logprob(t, decoder_.forward(t, latent),
                                       t.constant(obs_seq[step])));
    Value kl = gaussian_kl(t, post, prior);
    Value kl_clipped = cfg_.free_nats > 0.0
                           ? t.maximum(kl, t.constant(Tensor::full({B, 1}, cfg_.free_nats)))
                           : kl;
    Value step_loss = t.add(nll, kl_clipped);
    total = total.valid() ? t.add(total, step_loss) : step_loss;

    for (int i = 0; i < B; ++i) {
      recon_diag += t.val(nll).data[static_cast<std::size_t>(i)];
      kl_diag += t.val(kl).data[static_cast<std::size_t>(i)];
    }
    prev_latent = latent;
    prev_action = t.constant(act_seq[step]);
  }
  ElboResult out;
  out.loss = t.mul_scalar(t.mean_all(total), 1.0 / static_cast<double>(obs_seq.size()));
  const double denom = static_cast<double>(B) * static_cast<double>(obs_seq.size());
  out.recon_nll = recon_diag / denom;
  out.kl = kl_diag / denom;
  if (!std::isfinite(t.val(out.loss).item()))
    throw std::runtime_error("elbo_loss: non-finite loss (recon_nll=" +
                             std::to_string(out.recon_nll) + ", kl=" + std::to_string(out.kl) +
                             ")");
  return out;
}

Value WorldModel::disagreement_from_means(Tape& t, const std::vector<Value>& means) const {
  const std::size_t K = means.size();
  Value mean_bar = means[0];
  for (std::size_t k = 1; k < K; ++k) mean_bar = t.add(mean_bar, means[k]);
  mean_bar = t.mul_scalar(mean_bar, 1.0 / static_cast<double>(K));
  Value var;
  for (std::size_t k = 0; k < K; ++k) {
    Value d2 = t.square(t.sub(means[k], mean_bar));
    var = var.valid() ? t.add(var, d2) : d2;
  }
  var = t.mul_scalar(var, 1.0 / static_cast<double>(K));  // population variance
  Value stddev = t.sqrt_(var);
  return t.mul_scalar(t.rowsum(stddev), 1.0 / static_cast<double>(cfg_.latent_dim));
}

Value WorldModel::disagreement(Tape& t, Value latents, Value actions) const {
  Value input = t.concat_cols(latents, actions);
  std::vector<Value> means;
  means.reserve(ensemble_.size());
  for (const auto& member : ensemble_) means.push_back(member.mean_head(t, input));
  return disagreement_from_means(t, means);
}

Tensor WorldModel::disagreement_eval(const Tensor& latents, const Tensor& actions) const {
  Tape t;
  Value d = disagreement(t, t.constant(latents), t.constant(actions));
  return t.val(d);
}

ImaginedRollout WorldModel::imagine(Tape& t, const PolicyFn& policy, Value start_latents,
                                    int horizon, Rng& rng, bool with_disagreement) const {
  if (horizon < 1) throw std::invalid_argument("imagine: horizon must be >= 1");
  const int B = t.val(start_latents).rows();
  const int K = static_cast<int>(ensemble_.size());
  ImaginedRollout out;
  out.members.resize(B);
  // One member per trajectory; realized as a 0/1 row mask per member.
  std::vector<Tensor> masks(static_cast<std::size_t>(K), Tensor::zeros({B, 1}));
  for (int i = 0; i < B; ++i) {
    const int m = static_cast<int>(rng.randint(static_cast<std::uint64_t>(K)));
    out.members[i] = m;
    masks[static_cast<std::size_t>(m)].data[static_cast<std::size_t>(i)] = 1.0;
  }

  Value latent = start_latents;
  out.latents.push_back(latent);
  for (int step = 0; step < horizon; ++step) {
    Value action = policy(t, latent);
    out.actions.push_back(action);
    Value input = t.concat_cols(latent, action);
    const Tensor eps = Tensor::randn({B, cfg_.latent_dim}, rng);
    Value next;
    std::vector<Value> means;
    means.reserve(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k) {
      GaussianValue g = ensemble_[static_cast<std::size_t>(k)].forward(t, input);
      means.push_back(g.mean);
      Value sample = gaussian_rsample(t, g, eps);
      Value masked = t.row_scale(sample, t.constant(masks[static_cast<std::size_t>(k)]));
      next = next.valid() ? t.add(next, masked) : masked;
    }
    if (with_disagreement) out.disagreement.push_back(disagreement_from_means(t, means));
    if (!t.val(next).all_finite()) {
      out.truncated_at = step;
      out.actions.pop_back();
      if (with_disagreement) out.disagreement.pop_back();
      break;
    }
    latent = next;
    out.latents.push_back(latent);
  }
  return out;
}

ImaginedRolloutEval WorldModel::imagine_eval(const PolicyEvalFn& policy,
                                             const Tensor& start_latents, int horizon, Rng& rng,
                                             bool with_disagreement) const {
  if (horizon < 1) throw std::invalid_argument("imagine_eval: horizon must be >= 1");
  const int B = start_latents.rows();
  const int K = static_cast<int>(ensemble_.size());
  ImaginedRolloutEval out;
  out.members.resize(B);
  for (int i = 0; i < B; ++i)
    out.members[i] = static_cast<int>(rng.randint(static_cast<std::uint64_t>(K)));

  Tensor latent = start_latents;
  out.latents.push_back(latent);
  for (int step = 0; step < horizon; ++step) {
    Tensor action = policy(latent);
    Tensor input = Tensor::zeros({B, cfg_.latent_dim + cfg_.act_dim});
    for (int i = 0; i < B; ++i) {
      for (int j = 0; j < cfg_.latent_dim; ++j) input.at(i, j) = latent.at(i, j);
      for (int j = 0; j < cfg_.act_dim; ++j) input.at(i, cfg_.latent_dim + j) = action.at(i, j);
    }
    std::vector<Gaussian> gs;
    gs.reserve(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k) gs.push_back(ensemble_[static_cast<std::size_t>(k)].forward_eval(input));
    Tensor next = Tensor::zeros({B, cfg_.latent_dim});
    for (int i = 0; i < B; ++i) {
      const Gaussian& g = gs[static_cast<std::size_t>(out.members[i])];
      for (int j = 0; j < cfg_.latent_dim; ++j)
        next.at(i, j) = g.mean.at(i, j) + std::exp(g.logstd.at(i, j)) * rng.normal();
    }
    if (with_disagreement) {
      Tensor dis = Tensor::zeros({B, 1});
      for (int i = 0; i < B; ++i) {
        double acc = 0.0;
        for (int j = 0; j < cfg_.latent_dim; ++j) {
          double mb = 0.0;
          for (int k = 0; k < K; ++k) mb += gs[static_cast<std::size_t>(k)].mean.at(i, j);
          mb /= K;
          double var = 0.0;
          for (int k = 0; k < K; ++k) {
            const double d = gs[static_cast<std::size_t>(k)].mean.at(i, j) - mb;
            var += d * d;
          }
          acc += std::sqrt(var / K);
        }
        dis.data[static_cast<std::size_t>(i)] = acc / cfg_.latent_dim;
      }
      out.disagreement.push_back(std::move(dis));
    }
    out.actions.push_back(std::move(action));
    out.latents.push_back(next);
    latent = std::move(next);
  }
  return out;
}

std::vector<NamedParam> WorldModel::params() {
  std::vector<NamedParam> out;
  auto append = [&out](std::vector<NamedParam> v) {
    out.insert(out.end(), v.begin(), v.end());
  };
  append(inference_.params("model.inference"));
  for (std::size_t i = 0; i < ensemble_.size(); ++i)
    append(ensemble_[i].params("model.ensemble" + std::to_string(i)));
  append(decoder_.params("model.decoder"));
  return out;
}

}  // namespace cmil
