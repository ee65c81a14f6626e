#ifndef VRNN_DISTRIBUTIONS_HPP
#define VRNN_DISTRIBUTIONS_HPP

#include "vrnn/rng.hpp"
#include "vrnn/tensor.hpp"

namespace vrnn {

// Unconstrained head outputs map to standard deviations through
// softplus(raw) + kSigmaFloor, keeping densities bounded on near-constant data.
constexpr double kSigmaFloor = 1e-4;

// Diagonal Gaussian over [batch x k]; sigma is the standard deviation.
struct DiagGaussian {
  Tensor mu;
  Tensor sigma;
};

// Mixture of diagonal Gaussians. log_alpha is normalized (logsumexp over the
// component axis is 0); mu/sigma are stored flat as [batch x (J*k)] with
// component j occupying columns [j*k, (j+1)*k).
struct MixtureDiagGaussian {
  Tensor log_alpha;  // [batch x J]
  Tensor mu;         // [batch x J*k]
  Tensor sigma;      // [batch x J*k]
  size_t components = 0;
  size_t dim = 0;
};

struct BernoulliParam {
  Tensor p;  // [batch x 1], strictly inside (0, 1)
};

void check_sigma_positive(const Tensor& sigma);

// Per-row log N(x; mu, diag(sigma^2)) summed over the feature axis -> [batch].
Tensor gauss_log_density(const DiagGaussian& d, const Tensor& x, Tape* tape = nullptr);

// Closed-form KL(q || p) per row -> [batch].
Tensor gauss_kl(const DiagGaussian& q, const DiagGaussian& p, Tape* tape = nullptr);

// mu + sigma * eps; eps is treated as a constant.
Tensor reparam_sample(const DiagGaussian& d, const Tensor& eps, Tape* tape = nullptr);

// logsumexp_j(log alpha_j + log N_j(x)) -> [batch].
Tensor gmm_log_density(const MixtureDiagGaussian& m, const Tensor& x, Tape* tape = nullptr);

// Component chosen by inverse CDF on alpha with the uniform draws u [batch],
// then mu_j + sigma_j * eps. Draws are supplied externally.
Tensor gmm_sample(const MixtureDiagGaussian& m, const Tensor& u, const Tensor& eps);
// Deterministic mode: argmax-alpha component mean.
Tensor gmm_mode(const MixtureDiagGaussian& m);

// x log p + (1-x) log(1-p) for x in {0,1} -> [batch].
Tensor bernoulli_log_density(const BernoulliParam& b, const Tensor& x, Tape* tape = nullptr);

}  // namespace vrnn

#endif
