#ifndef VRNN_MODEL_HPP
#define VRNN_MODEL_HPP

#include <string>
#include <vector>

#include "vrnn/data.hpp"
#include "vrnn/distributions.hpp"
#include "vrnn/nn.hpp"

namespace vrnn {

enum class Family { Rnn, Vrnn, VrnnI };
enum class Head { Gauss, Gmm, GmmBernoulli };

std::string family_name(Family f);
std::string head_name(Head h);
Family parse_family(const std::string& s);
Head parse_head(const std::string& s);

// Hidden-stage count and width of one feedforward net. For the feature
// extractors every stage is affine+relu and the last stage is the output; for
// enc/dec/prior `depth` hidden relu stages precede a bare affine output layer.
struct NetSpec {
  size_t depth = 1;
  size_t width = 32;

  bool operator==(const NetSpec&) const = default;
};

struct ModelConfig {
  Family family = Family::Vrnn;
  Head head = Head::Gauss;
  size_t d = 8;  // frame dim
  size_t p = 32; // LSTM hidden size
  size_t k = 8;  // latent dim, 0 for rnn
  size_t J = 1;  // mixture components
  NetSpec phi_x, phi_z, enc, dec, prior;

  void validate() const;
  bool latent() const { return family != Family::Rnn; }
  size_t gmm_dim() const;   // frame dims covered by the mixture
  size_t head_out() const;  // raw width of the output head
  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
  bool operator==(const ModelConfig&) const = default;
};

struct VrnnState {
  Tensor h, c;  // [batch x p]
};

VrnnState initial_state(const ModelConfig& cfg, size_t batch);

struct StepOutput {
  Tensor kl_t;         // [batch]
  Tensor recon_log_t;  // [batch]
  DiagGaussian posterior, prior;
  Tensor z_t;  // [batch x k]
};

struct LatentTrace {
  std::vector<double> delta;                 // T-1 entries, t >= 2
  std::vector<double> kl;                    // T entries
  std::vector<std::vector<double>> kl_dims;  // T x k
};

// Output density of one step; the populated members depend on `head`.
// GmmBernoulli puts the mixture over the first d-1 dims and an independent
// Bernoulli on the last (pen) dim.
struct OutputDensity {
  Head head = Head::Gauss;
  DiagGaussian gauss;
  MixtureDiagGaussian gmm;
  BernoulliParam bern;
};

// Layer handles plus the parameter store. Which nets exist depends on the
// family: rnn has phi_x/dec/lstm only; vrnn-i drops the prior net.
struct Model {
  ModelConfig cfg;
  ParamStore params;
  Mlp phi_x, phi_z, enc, dec, prior;
  LstmCell lstm;
};

Model build_model(const ModelConfig& cfg, uint64_t seed);

// Parameters not in the LSTM (the feature/encoder/decoder/prior nets).
size_t phi_param_count(const Model& m);

Tensor phi_x_forward(const Model& m, const Bound& p, const Tensor& x, Tape* tape = nullptr);
Tensor phi_z_forward(const Model& m, const Bound& p, const Tensor& z, Tape* tape = nullptr);

// Conditional prior from h_{t-1}; fixed standard normal for vrnn-i.
DiagGaussian vrnn_prior(const Model& m, const Bound& p, const VrnnState& s, Tape* tape = nullptr);
// Approximate posterior from (phi_x(x_t), h_{t-1}).
DiagGaussian vrnn_encode(const Model& m, const Bound& p, const Tensor& x_t, const VrnnState& s,
                         Tape* tape = nullptr);
// Output density from (phi_z(z_t), h_{t-1}).
OutputDensity vrnn_decode(const Model& m, const Bound& p, const Tensor& z_t, const VrnnState& s,
                          Tape* tape = nullptr);
// LSTM step on concat(phi_x(x_t), phi_z(z_t)).
VrnnState vrnn_recur(const Model& m, const Bound& p, const Tensor& x_t, const Tensor& z_t,
                     const VrnnState& s, Tape* tape = nullptr);

// log p(x | density) summed over frame dims -> [batch].
Tensor output_log_density(const OutputDensity& d, const Tensor& x, Tape* tape = nullptr);
// One frame draw per row; zero_noise takes the mean / argmax-weight component
// mean / thresholded pen instead of sampling.
Tensor output_sample(const OutputDensity& d, Rng& rng, bool zero_noise = false);

enum class KlMode { Analytic, Sampled };

struct ElboResult {
  Tensor elbo;  // scalar, mean of per-sequence totals
  std::vector<StepOutput> steps;
  VrnnState final_state;
};

// Teacher-forced pass; noise[t] is [batch x k], one reparameterized sample per
// step. Masked steps contribute exactly zero. `s0` starts the recurrence from
// a carried state (truncated BPTT); zero state when null.
ElboResult elbo(const Model& m, const Bound& p, const SequenceBatch& batch,
                const std::vector<Tensor>& noise, Tape* tape = nullptr,
                KlMode kl_mode = KlMode::Analytic, const VrnnState* s0 = nullptr);

// Per-step [batch x k] standard normals, drawn t-major then row-major.
std::vector<Tensor> draw_elbo_noise(const ModelConfig& cfg, size_t batch, size_t t_max, Rng rng);

// Mean negative log-likelihood (per-sequence totals) of the rnn family.
Tensor rnn_nll(const Model& m, const Bound& p, const SequenceBatch& batch, Tape* tape = nullptr,
               const VrnnState* s0 = nullptr, VrnnState* s_out = nullptr);

// Log importance weights of K posterior rollouts; noise[t] is [K x k].
Tensor is_log_weights(const Model& m, const Bound& p, const Sequence& seq,
                      const std::vector<Tensor>& noise);
// logsumexp(weights) - log K with noise drawn from `rng`.
double is_log_likelihood(const Model& m, const Sequence& seq, size_t K, Rng rng);

// Evaluation helpers over whole datasets (single batch, no gradients).
double eval_elbo(const Model& m, const SequenceDataset& ds, Rng rng);
double eval_rnn_nll(const Model& m, const SequenceDataset& ds);
double eval_is(const Model& m, const SequenceDataset& ds, size_t K, Rng rng);

// Prior-driven rollout; draw order per step is z noise (vrnn families), then
// the output draws. Deterministic given the rng state. `densities` collects
// the per-step output density parameters when non-null.
Sequence generate(const Model& m, size_t T, Rng rng, bool zero_noise = false,
                  std::vector<OutputDensity>* densities = nullptr);

// Teacher-forced read with z_t = posterior mean.
LatentTrace latent_trace(const Model& m, const Sequence& seq);

}  // namespace vrnn

#endif
