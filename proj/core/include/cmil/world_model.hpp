#pragma once

#include <functional>

#include "cmil/nn.hpp"

namespace cmil {

struct WorldModelConfig {
  int obs_dim = 0;
  int act_dim = 0;
  int latent_dim = 16;
  int ensemble_size = 5;
  std::vector<int> hidden = {128, 128};
  double free_nats = 1.0;
};

// Samples an action for a batch of latents; the taped variant must be
// reparameterized so imagination stays differentiable.
using PolicyFn = std::function<Value(Tape&, Value latents)>;
using PolicyEvalFn = std::function<Tensor(const Tensor& latents)>;

struct InferredSequence {
  std::vector<Value> latents;            // T entries, [B x d_s]
  std::vector<GaussianValue> posteriors; // T entries
};

struct ElboResult {
  Value loss;
  double recon_nll = 0.0;  // diagnostics, mean per timestep
  double kl = 0.0;         // pre-clip
};

struct ImaginedRollout {
  std::vector<Value> latents;       // H+1 entries, [B x d_s]; latents[0] data-inferred
  std::vector<Value> actions;       // H entries, [B x act_dim]
  std::vector<Value> disagreement;  // H entries, [B x 1]; empty unless requested
  std::vector<int> members;         // per-trajectory ensemble member
  int truncated_at = -1;            // step index where a non-finite latent appeared
};

struct ImaginedRolloutEval {
  std::vector<Tensor> latents;
  std::vector<Tensor> actions;
  std::vector<Tensor> disagreement;
  std::vector<int> members;
};

// Latent state-space model: shared inference network and decoder, plus an
// ensemble of Gaussian latent dynamics models. The ensemble members share
// the architecture and differ by initialization and by which member is
// trained at each timestep.
class WorldModel {
 public:
  WorldModel(const WorldModelConfig& cfg, Rng& rng);

  const WorldModelConfig& config() const { return cfg_; }

  // Filtered posterior samples for a batch of sequences. obs_seq[t] is
  // [B x obs_dim]; act_seq[t] is the action taken at step t (the posterior at
  // step t conditions on act_seq[t-1], with a zero action at t = 0).
  InferredSequence infer_sequence(Tape& t, const std::vector<Tensor>& obs_seq,
                                  const std::vector<Tensor>& act_seq, Rng& rng) const;
  // Numeric counterpart; used where gradients must not flow into the model
  // (discriminator, critic, and imagination-start inputs). Posterior means
  // if sample_rng is null, matching the act-time filter.
  std::vector<Tensor> infer_sequence_eval(const std::vector<Tensor>& obs_seq,
                                          const std::vector<Tensor>& act_seq,
                                          Rng* sample_rng) const;
  // Single filtering step for acting in the environment; posterior mean if
  // sample_rng is null.
  Tensor filter_step(const Tensor& prev_latent, const Tensor& prev_action, const Tensor& obs,
                     Rng* sample_rng) const;

  // Sequence ELBO: reconstruction NLL plus the latent forward KL, with a
  // uniformly drawn ensemble member evaluated at each timestep and the KL
  // term clipped below at free_nats.
  ElboResult elbo_loss(Tape& t, const std::vector<Tensor>& obs_seq,
                       const std::vector<Tensor>& act_seq, Rng& rng) const;

  // H-step rollout from start latents, one uniformly drawn ensemble member
  // per trajectory (redrawn each call). Fully reparameterized.
  ImaginedRollout imagine(Tape& t, const PolicyFn& policy, Value start_latents, int horizon,
                          Rng& rng, bool with_disagreement = false) const;
  ImaginedRolloutEval imagine_eval(const PolicyEvalFn& policy, const Tensor& start_latents,
                                   int horizon, Rng& rng, bool with_disagreement = false) const;

  // Ensemble-disagreement surrogate for model mismatch: per-dimension
  // population std across the K mean heads, averaged over latent dimensions.
  Value disagreement(Tape& t, Value latents, Value actions) const;
  Tensor disagreement_eval(const Tensor& latents, const Tensor& actions) const;

  const GaussianMLP& decoder() const { return decoder_; }
  const GaussianMLP& inference_net() const { return inference_; }
  const std::vector<GaussianMLP>& ensemble() const { return ensemble_; }

  std::vector<NamedParam> params();

 private:
  Value disagreement_from_means(Tape& t, const std::vector<Value>& means) const;

  WorldModelConfig cfg_;
  GaussianMLP inference_;  // (s_prev, a_prev, x) -> q(s)
  std::vector<GaussianMLP> ensemble_;  // (s, a) -> T_i(s')
  GaussianMLP decoder_;    // s -> p(x)
};

}  // namespace cmil
