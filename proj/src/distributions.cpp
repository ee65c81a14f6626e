#include "vrnn/distributions.hpp"

#include <cmath>

namespace vrnn {

namespace {
constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * ln(2*pi)
}

void check_sigma_positive(const Tensor& sigma) {
  for (size_t i = 0; i < sigma.v.size(); ++i)
    if (!(sigma.v[i] > 0.0))
      throw DomainError("sigma must be positive, got " + std::to_string(sigma.v[i]) +
                        " at index " + std::to_string(i));
}

Tensor gauss_log_density(const DiagGaussian& d, const Tensor& x, Tape* tape) {
  if (x.shape != d.mu.shape || d.mu.shape != d.sigma.shape)
    throw ShapeError("gauss_log_density: x " + shape_str(x.shape) + ", mu " +
                     shape_str(d.mu.shape) + ", sigma " + shape_str(d.sigma.shape));
  check_sigma_positive(d.sigma);
  Tensor z = div(sub(x, d.mu, tape), d.sigma, tape);
  Tensor per_dim = add(affine(square(z, tape), -0.5, -kHalfLog2Pi, tape),
                       neg(log(d.sigma, tape), tape), tape);
  return sum(per_dim, 1, tape);
}

Tensor gauss_kl(const DiagGaussian& q, const DiagGaussian& p, Tape* tape) {
  if (q.mu.shape != p.mu.shape || q.mu.shape != q.sigma.shape || p.mu.shape != p.sigma.shape)
    throw ShapeError("gauss_kl: mismatched shapes");
  check_sigma_positive(q.sigma);
  check_sigma_positive(p.sigma);
  // log(sp/sq) + (sq^2 + (mq - mp)^2) / (2 sp^2) - 1/2 per dimension.
  Tensor log_ratio = sub(log(p.sigma, tape), log(q.sigma, tape), tape);
  Tensor num = add(square(q.sigma, tape), square(sub(q.mu, p.mu, tape), tape), tape);
  Tensor quad = div(num, affine(square(p.sigma, tape), 2.0, 0.0, tape), tape);
  Tensor per_dim = add(log_ratio, affine(quad, 1.0, -0.5, tape), tape);
  return sum(per_dim, 1, tape);
}

Tensor reparam_sample(const DiagGaussian& d, const Tensor& eps, Tape* tape) {
  if (eps.shape != d.mu.shape)
    throw ShapeError("reparam_sample: eps " + shape_str(eps.shape) + " vs mu " +
                     shape_str(d.mu.shape));
  Tensor noise = eps;
  noise.node = -1;  // constant even if the caller tracked it
  return add(d.mu, mul(d.sigma, noise, tape), tape);
}

Tensor gmm_log_density(const MixtureDiagGaussian& m, const Tensor& x, Tape* tape) {
  const size_t J = m.components, k = m.dim;
  if (J < 1) throw ContractError("gmm: needs at least one component");
  if (x.rank() != 2 || x.shape[1] != k || m.mu.shape[1] != J * k)
    throw ShapeError("gmm_log_density: x " + shape_str(x.shape) + " vs J=" + std::to_string(J) +
                     " k=" + std::to_string(k));
  std::vector<Tensor> terms;
  terms.reserve(J);
  for (size_t j = 0; j < J; ++j) {
    DiagGaussian comp{slice(m.mu, 1, j * k, (j + 1) * k, tape),
                      slice(m.sigma, 1, j * k, (j + 1) * k, tape)};
    Tensor lj = gauss_log_density(comp, x, tape);                       // [batch]
    Tensor la = reshape(slice(m.log_alpha, 1, j, j + 1, tape), {x.shape[0]}, tape);
    terms.push_back(reshape(add(lj, la, tape), {x.shape[0], 1}, tape));
  }
  return reshape(logsumexp(concat(terms, 1, tape), 1, tape), {x.shape[0]}, tape);
}

Tensor gmm_sample(const MixtureDiagGaussian& m, const Tensor& u, const Tensor& eps) {
  const size_t J = m.components, k = m.dim;
  const size_t batch = m.log_alpha.shape[0];
  if (u.numel() != batch || eps.shape != std::vector<size_t>{batch, k})
    throw ShapeError("gmm_sample: draw shapes");
  Tensor out = Tensor::zeros({batch, k});
  for (size_t b = 0; b < batch; ++b) {
    double target = u.v[b];
    double cum = 0.0;
    size_t pick = J - 1;
    for (size_t j = 0; j < J; ++j) {
      cum += std::exp(m.log_alpha.v[b * J + j]);
      if (target < cum) {
        pick = j;
        break;
      }
    }
    for (size_t i = 0; i < k; ++i)
      out.v[b * k + i] =
          m.mu.v[b * J * k + pick * k + i] + m.sigma.v[b * J * k + pick * k + i] * eps.v[b * k + i];
  }
  return out;
}

Tensor gmm_mode(const MixtureDiagGaussian& m) {
  const size_t J = m.components, k = m.dim;
  const size_t batch = m.log_alpha.shape[0];
  Tensor out = Tensor::zeros({batch, k});
  for (size_t b = 0; b < batch; ++b) {
    size_t pick = 0;
    for (size_t j = 1; j < J; ++j)
      if (m.log_alpha.v[b * J + j] > m.log_alpha.v[b * J + pick]) pick = j;
    for (size_t i = 0; i < k; ++i) out.v[b * k + i] = m.mu.v[b * J * k + pick * k + i];
  }
  return out;
}

Tensor bernoulli_log_density(const BernoulliParam& b, const Tensor& x, Tape* tape) {
  if (x.shape != b.p.shape) throw ShapeError("bernoulli_log_density: shape mismatch");
  for (size_t i = 0; i < b.p.v.size(); ++i)
    if (!(b.p.v[i] > 0.0 && b.p.v[i] < 1.0))
      throw DomainError("bernoulli: p outside (0,1) at index " + std::to_string(i));
  for (double xv : x.v)
    if (xv != 0.0 && xv != 1.0) throw DomainError("bernoulli: x must be 0 or 1");
  Tensor xc = x;
  xc.node = -1;
  Tensor one_minus_x = affine(xc, -1.0, 1.0, tape);
  Tensor one_minus_p = affine(b.p, -1.0, 1.0, tape);
  Tensor ll = add(mul(xc, log(b.p, tape), tape),
                  mul(one_minus_x, log(one_minus_p, tape), tape), tape);
  return reshape(sum(ll, 1, tape), {x.shape[0]}, tape);
}

}  // namespace vrnn
