#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "vrnn/data.hpp"
#include "vrnn/distributions.hpp"
#include "vrnn/model.hpp"
#include "vrnn/rng.hpp"

using namespace vrnn;

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

double norm_logpdf(double x, double mu, double sd) {
  double z = (x - mu) / sd;
  return -kHalfLog2Pi - std::log(sd) - 0.5 * z * z;
}

ModelConfig tiny_vrnn(size_t d = 2, size_t k = 2, Family fam = Family::Vrnn) {
  ModelConfig c;
  c.family = fam;
  c.head = Head::Gauss;
  c.d = d;
  c.p = 6;
  c.k = k;
  c.J = 1;
  c.phi_x = {1, 5};
  c.phi_z = {1, 4};
  c.enc = {1, 5};
  c.dec = {1, 5};
  c.prior = {1, 4};
  return c;
}

ModelConfig tiny_rnn(size_t d = 1) {
  ModelConfig c;
  c.family = Family::Rnn;
  c.head = Head::Gauss;
  c.d = d;
  c.p = 4;
  c.k = 0;
  c.J = 1;
  c.phi_x = {0, 0};  // feat = x
  c.dec = {0, 0};    // raw = W h + b
  return c;
}

Sequence make_seq(size_t t, size_t d, Rng& rng) {
  Sequence s;
  s.frames = t;
  s.dim = d;
  for (size_t i = 0; i < t * d; ++i) s.values.push_back(static_cast<float>(rng.normal()));
  return s;
}

SequenceBatch batch_of(const std::vector<Sequence>& seqs) {
  SequenceDataset ds;
  ds.seqs = seqs;
  std::vector<size_t> idx(seqs.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return make_batch(ds, idx);
}

VrnnState random_state(const ModelConfig& cfg, size_t batch, Rng& rng) {
  VrnnState s = initial_state(cfg, batch);
  for (double& v : s.h.v) v = rng.normal();
  for (double& v : s.c.v) v = rng.normal();
  return s;
}

void zero_net(Model& m, const Mlp& net) {
  for (const auto& layer : net.layers) {
    for (double& v : m.params.value(layer.W).v) v = 0.0;
    for (double& v : m.params.value(layer.b).v) v = 0.0;
  }
}

void set_bias(Model& m, int id, const std::vector<double>& vals) {
  Tensor& t = m.params.value(id);
  REQUIRE(t.numel() == vals.size());
  t.v = vals;
}

// Append `extra` fully masked timesteps to every sequence of a batch.
SequenceBatch pad_batch(const SequenceBatch& b, size_t extra) {
  SequenceBatch out = b;
  out.t_max = b.t_max + extra;
  out.values.assign(out.batch * out.t_max * out.dim, 0.0);
  out.mask.assign(out.batch * out.t_max, 0.0);
  for (size_t s = 0; s < b.batch; ++s)
    for (size_t t = 0; t < b.t_max; ++t) {
      out.mask[s * out.t_max + t] = b.mask[s * b.t_max + t];
      for (size_t i = 0; i < b.dim; ++i)
        out.values[(s * out.t_max + t) * b.dim + i] = b.values[(s * b.t_max + t) * b.dim + i];
    }
  return out;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  double worst = 0.0;
  for (size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

// Raw sigma bias whose softplus + floor is bitwise 1.0 through the library's
// own op sequence; found by a unit-in-last-place walk around the analytic
// preimage.
double sigma_one_bias() {
  double r0 = std::log(std::expm1(1.0 - kSigmaFloor));
  for (int i = -300; i <= 300; ++i) {
    double r = r0;
    for (int j = 0; j < std::abs(i); ++j)
      r = std::nextafter(r, i < 0 ? -std::numeric_limits<double>::infinity()
                                  : std::numeric_limits<double>::infinity());
    Tensor sig = affine(softplus(Tensor({1}, {r})), 1.0, kSigmaFloor);
    if (sig.v[0] == 1.0) return r;
  }
  FAIL("no raw bias maps to sigma == 1.0");
  return 0.0;
}

}  // namespace

TEST_CASE("model config round-trips through json and validates") {
  ModelConfig c = tiny_vrnn(3, 4);
  c.head = Head::GmmBernoulli;
  c.J = 5;
  ModelConfig back = ModelConfig::from_json(c.to_json());
  CHECK(back == c);

  ModelConfig bad = tiny_rnn();
  bad.k = 2;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = tiny_vrnn();
  bad.k = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = tiny_vrnn();
  bad.head = Head::Gmm;
  bad.J = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = tiny_vrnn(1, 2);
  bad.head = Head::GmmBernoulli;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_THROWS_AS(ModelConfig::from_json("{\"family\":\"vrnn\",\"surprise\":1}"), ConfigError);
  CHECK_THROWS_AS(parse_family("gru"), ConfigError);
  CHECK_THROWS_AS(parse_head("poisson"), ConfigError);
}

TEST_CASE("head widths follow the parameterization") {
  ModelConfig c = tiny_vrnn(4, 2);
  CHECK(c.head_out() == 8);  // 2d
  c.head = Head::Gmm;
  c.J = 3;
  CHECK(c.gmm_dim() == 4);
  CHECK(c.head_out() == 3 + 2 * 3 * 4);
  c.head = Head::GmmBernoulli;
  CHECK(c.gmm_dim() == 3);
  CHECK(c.head_out() == 3 + 2 * 3 * 3 + 1);
}

TEST_CASE("the initial state is zero") {
  VrnnState s = initial_state(tiny_vrnn(), 3);
  CHECK(s.h.shape == std::vector<size_t>{3, 6});
  for (double v : s.h.v) CHECK(v == 0.0);
  for (double v : s.c.v) CHECK(v == 0.0);
}

TEST_CASE("rnn nll at T=1 is the head density of the initial state") {
  Model m = build_model(tiny_rnn(2), 50);
  Bound p = bind(m.params, nullptr);
  Rng rng = root_rng(51).stream("x");
  Sequence s = make_seq(1, 2, rng);
  SequenceBatch b = batch_of({s});
  double nll = rnn_nll(m, p, b).item();
  // depth-0 decoder on h0 = 0 leaves only the (zero-initialized) bias:
  // mu = 0, sigma = softplus(0) + floor
  double sd = std::log(2.0) + kSigmaFloor;
  double want = 0.0;
  for (size_t i = 0; i < 2; ++i) want -= norm_logpdf(static_cast<double>(s.values[i]), 0.0, sd);
  CHECK(nll == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("rnn nll equals a hand-chained pass of head and lstm oracles") {
  const size_t d = 1, T = 3;
  Model m = build_model(tiny_rnn(d), 52);
  // give the biases some life so the test is not all zeros
  Rng prng = root_rng(53).stream("perturb");
  for (size_t id = 0; id < m.params.size(); ++id)
    for (double& v : m.params.value(static_cast<int>(id)).v) v += 0.1 * prng.normal();
  Bound p = bind(m.params, nullptr);
  Rng rng = root_rng(54).stream("x");
  Sequence s = make_seq(T, d, rng);
  double nll = rnn_nll(m, p, batch_of({s})).item();

  const Tensor& Wd = m.params.value(m.dec.layers[0].W);  // [2d x p]
  const Tensor& bd = m.params.value(m.dec.layers[0].b);
  const Tensor& Wl = m.params.value(m.lstm.gates.W);
  const Tensor& bl = m.params.value(m.lstm.gates.b);
  const size_t hp = m.cfg.p;
  std::vector<double> h(hp, 0.0), c(hp, 0.0);
  double ll = 0.0;
  for (size_t t = 0; t < T; ++t) {
    double raw_mu = bd.v[0], raw_sd = bd.v[1];
    for (size_t j = 0; j < hp; ++j) {
      raw_mu += Wd.at(0, j) * h[j];
      raw_sd += Wd.at(1, j) * h[j];
    }
    double sd = std::log1p(std::exp(raw_sd)) + kSigmaFloor;
    double x = static_cast<double>(s.values[t]);
    ll += norm_logpdf(x, raw_mu, sd);
    oracle::LstmRef next = oracle::lstm_step_ref(Wl.v, bl.v, {x}, h, c, d, hp);
    h = next.h;
    c = next.c;
  }
  CHECK(nll == doctest::Approx(-ll).epsilon(1e-10));
}

TEST_CASE("rnn nll is the mean of per-sequence totals") {
  Model m = build_model(tiny_rnn(2), 55);
  Bound p = bind(m.params, nullptr);
  Rng rng = root_rng(56).stream("x");
  Sequence s1 = make_seq(4, 2, rng), s2 = make_seq(2, 2, rng);
  double both = rnn_nll(m, p, batch_of({s1, s2})).item();
  double a = rnn_nll(m, p, batch_of({s1})).item();
  double b = rnn_nll(m, p, batch_of({s2})).item();
  CHECK(both == doctest::Approx(0.5 * (a + b)).epsilon(1e-12));
}

TEST_CASE("family preconditions are enforced") {
  Model rnn = build_model(tiny_rnn(), 57);
  Model vrnn = build_model(tiny_vrnn(), 58);
  Bound pr = bind(rnn.params, nullptr);
  Bound pv = bind(vrnn.params, nullptr);
  Rng rng = root_rng(59).stream("x");
  Sequence s = make_seq(2, 2, rng);
  Sequence s1 = make_seq(2, 1, rng);

  CHECK_THROWS_AS(rnn_nll(vrnn, pv, batch_of({s})), ContractError);
  std::vector<Tensor> noise = draw_elbo_noise(vrnn.cfg, 1, 2, rng.stream("n"));
  CHECK_THROWS_AS(elbo(rnn, pr, batch_of({s1}), noise), ContractError);
  VrnnState st = initial_state(rnn.cfg, 1);
  CHECK_THROWS_AS(vrnn_prior(rnn, pr, st), ContractError);
  CHECK_THROWS_AS(latent_trace(rnn, s1), ContractError);
}

TEST_CASE("the vrnn-i prior is the standard normal regardless of state") {
  Model m = build_model(tiny_vrnn(2, 3, Family::VrnnI), 60);
  Bound p = bind(m.params, nullptr);
  Rng rng = root_rng(61).stream("state");
  for (int rep = 0; rep < 3; ++rep) {
    VrnnState s = random_state(m.cfg, 2, rng);
    DiagGaussian prior = vrnn_prior(m, p, s);
    for (double v : prior.mu.v) CHECK(v == 0.0);
    for (double v : prior.sigma.v) CHECK(v == 1.0);
  }
}

TEST_CASE("a zero-weight prior net passes its bias through unchanged") {
  Model m = build_model(tiny_vrnn(2, 2), 62);
  zero_net(m, m.prior);
  // depth-1 prior: the hidden layer is zero, so the output layer sees relu(0)=0
  set_bias(m, m.prior.layers.back().b, {0.3, -0.2, 0.5, 1.0});
  Bound p = bind(m.params, nullptr);
  Rng rng = root_rng(63).stream("state");
  DiagGaussian a = vrnn_prior(m, p, random_state(m.cfg, 1, rng));
  DiagGaussian b = vrnn_prior(m, p, random_state(m.cfg, 1, rng));
  CHECK(a.mu.v == std::vector<double>{0.3, -0.2});
  CHECK(a.mu.v == b.mu.v);
  CHECK(a.sigma.v == b.sigma.v);
  CHECK(a.sigma.v[0] == doctest::Approx(std::log1p(std::exp(0.5)) + kSigmaFloor).epsilon(1e-15));
  CHECK(a.sigma.v[1] == doctest::Approx(std::log1p(std::exp(1.0)) + kSigmaFloor).epsilon(1e-15));
}

TEST_CASE("the vrnn prior depends on the state") {
  Model m = build_model(tiny_vrnn(2, 2), 64);
  Bound p = bind(m.params, nullptr);
  Rng rng = root_rng(65).stream("state");
  DiagGaussian a = vrnn_prior(m, p, random_state(m.cfg, 1, rng));
  DiagGaussian b = vrnn_prior(m, p, random_state(m.cfg, 1, rng));
  CHECK(max_abs_diff(a.mu.v, b.mu.v) > 1e-8);
}

TEST_CASE("a zero-weight encoder ignores both input and state") {
  Model m = build_model(tiny_vrnn(2, 2), 66);
  zero_net(m, m.enc);
  set_bias(m, m.enc.layers.back().b, {1.0, 2.0, -0.5, 0.5});
  Bound p = bind(m.params, nullptr);
  Rng rng = root_rng(67).stream("inputs");
  Tensor x1({1, 2}, {rng.normal(), rng.normal()});
  Tensor x2({1, 2}, {rng.normal(), rng.normal()});
  DiagGaussian a = vrnn_encode(m, p, x1, random_state(m.cfg, 1, rng));
  DiagGaussian b = vrnn_encode(m, p, x2, random_state(m.cfg, 1, rng));
  CHECK(a.mu.v == std::vector<double>{1.0, 2.0});
  CHECK(a.mu.v == b.mu.v);
  CHECK(a.sigma.v == b.sigma.v);
}

TEST_CASE("the posterior responds to the input and always has positive sigma") {
  Model m = build_model(tiny_vrnn(3, 2), 68);
  Bound p = bind(m.params, nullptr);
  Rng rng = root_rng(69).stream("inputs");
  VrnnState s = random_state(m.cfg, 1, rng);
  Tensor x1({1, 3}, {rng.normal(), rng.normal(), rng.normal()});
  Tensor x2({1, 3}, {rng.normal(), rng.normal(), rng.normal()});
  DiagGaussian a = vrnn_encode(m, p, x1, s);
  DiagGaussian b = vrnn_encode(m, p, x2, s);
  CHECK(max_abs_diff(a.mu.v, b.mu.v) > 1e-8);
  for (int rep = 0; rep < 5; ++rep) {
    Tensor x({1, 3}, {rng.normal() * 100.0, rng.normal() * 100.0, rng.normal() * 100.0});
    DiagGaussian q = vrnn_encode(m, p, x, random_state(m.cfg, 1, rng));
    for (double v : q.sigma.v) CHECK(v >= kSigmaFloor);
  }
}

TEST_CASE("a zero-weight decoder emits its biases") {
  Model m = build_model(tiny_vrnn(2, 2), 70);
  zero_net(m, m.dec);
  zero_net(m, m.phi_z);
  set_bias(m, m.dec.layers.back().b, {0.25, -0.75, 0.0, 0.3});
  Bound p = bind(m.params, nullptr);
  Rng rng = root_rng(71).stream("z");
  Tensor z({1, 2}, {rng.normal(), rng.normal()});
  OutputDensity d = vrnn_decode(m, p, z, random_state(m.cfg, 1, rng));
  CHECK(d.head == Head::Gauss);
  CHECK(d.gauss.mu.v == std::vector<double>{0.25, -0.75});
  CHECK(d.gauss.sigma.v[0] == doctest::Approx(std::log(2.0) + kSigmaFloor).epsilon(1e-15));
}

TEST_CASE("the decoder responds to z") {
  Model m = build_model(tiny_vrnn(2, 2), 72);
  Bound p = bind(m.params, nullptr);
  Rng rng = root_rng(73).stream("z");
  VrnnState s = random_state(m.cfg, 1, rng);
  OutputDensity a = vrnn_decode(m, p, Tensor({1, 2}, {rng.normal(), rng.normal()}), s);
  OutputDensity b = vrnn_decode(m, p, Tensor({1, 2}, {rng.normal(), rng.normal()}), s);
  CHECK(max_abs_diff(a.gauss.mu.v, b.gauss.mu.v) > 1e-8);
}

TEST_CASE("gmm heads emit normalized mixture weights") {
  ModelConfig cfg = tiny_vrnn(3, 2);
  cfg.head = Head::Gmm;
  cfg.J = 4;
  Model m = build_model(cfg, 74);
  Bound p = bind(m.params, nullptr);
  Rng rng = root_rng(75).stream("z");
  for (int rep = 0; rep < 3; ++rep) {
    OutputDensity d =
        vrnn_decode(m, p, Tensor({2, 2}, {rng.normal(), rng.normal(), rng.normal(), rng.normal()}),
                    random_state(m.cfg, 2, rng));
    REQUIRE(d.gmm.log_alpha.shape == std::vector<size_t>{2, 4});
    Tensor lse = logsumexp(d.gmm.log_alpha, 1);
    for (double v : lse.v) CHECK(std::abs(v) < 1e-9);
    CHECK(d.gmm.components == 4);
    CHECK(d.gmm.dim == 3);
  }
}

TEST_CASE("gmm-bernoulli heads keep the pen probability inside (0,1)") {
  ModelConfig cfg = tiny_vrnn(3, 2);
  cfg.head = Head::GmmBernoulli;
  cfg.J = 2;
  Model m = build_model(cfg, 76);
  Bound p = bind(m.params, nullptr);
  Rng rng = root_rng(77).stream("z");
  for (int rep = 0; rep < 5; ++rep) {
    VrnnState s = random_state(m.cfg, 1, rng);
    for (double& v : s.h.v) v *= 50.0;  // drive the logit hard
    OutputDensity d = vrnn_decode(m, p, Tensor({1, 2}, {rng.normal(), rng.normal()}), s);
    REQUIRE(d.bern.p.numel() == 1);
    CHECK(d.bern.p.v[0] >= 1e-7);
    CHECK(d.bern.p.v[0] <= 1.0 - 1e-7);
    CHECK(d.gmm.dim == 2);  // pen dim excluded from the mixture
  }
}

TEST_CASE("all-zero parameters map a zero state to a zero state") {
  Model m = build_model(tiny_vrnn(2, 2), 78);
  for (size_t id = 0; id < m.params.size(); ++id)
    for (double& v : m.params.value(static_cast<int>(id)).v) v = 0.0;
  Bound p = bind(m.params, nullptr);
  VrnnState s0 = initial_state(m.cfg, 1);
  VrnnState s1 = vrnn_recur(m, p, Tensor::zeros({1, 2}), Tensor::zeros({1, 2}), s0);
  for (double v : s1.h.v) CHECK(v == 0.0);
  for (double v : s1.c.v) CHECK(v == 0.0);
}

TEST_CASE("vrnn_recur equals hand-composed feature nets plus an lstm step") {
  Model m = build_model(tiny_vrnn(3, 2), 79);
  Bound p = bind(m.params, nullptr);
  Rng rng = root_rng(80).stream("inputs");
  Tensor x({2, 3}, {rng.normal(), rng.normal(), rng.normal(), rng.normal(), rng.normal(),
                    rng.normal()});
  Tensor z({2, 2}, {rng.normal(), rng.normal(), rng.normal(), rng.normal()});
  VrnnState s = random_state(m.cfg, 2, rng);
  VrnnState next = vrnn_recur(m, p, x, z, s);

  Tensor fx = relu(mlp_forward(m.phi_x, p, x));
  Tensor fz = relu(mlp_forward(m.phi_z, p, z));
  auto [h2, c2] = lstm_step(m.lstm, p, concat(fx, fz, 1), s.h, s.c);
  CHECK(max_abs_diff(next.h.v, h2.v) < 1e-12);
  CHECK(max_abs_diff(next.c.v, c2.v) < 1e-12);

  VrnnState again = vrnn_recur(m, p, x, z, s);
  CHECK(again.h.v == next.h.v);
  CHECK(again.c.v == next.c.v);
}

TEST_CASE("when q equals the prior the elbo is pure reconstruction") {
  Model m = build_model(tiny_vrnn(2, 2), 81);
  zero_net(m, m.enc);
  zero_net(m, m.prior);
  std::vector<double> head_bias = {0.2, -0.4, 0.1, 0.6};
  set_bias(m, m.enc.layers.back().b, head_bias);
  set_bias(m, m.prior.layers.back().b, head_bias);
  Bound p = bind(m.params, nullptr);
  Rng rng = root_rng(82).stream("data");
  SequenceBatch b = batch_of({make_seq(4, 2, rng), make_seq(3, 2, rng)});
  std::vector<Tensor> noise = draw_elbo_noise(m.cfg, 2, b.t_max, rng.stream("n"));
  ElboResult er = elbo(m, p, b, noise);
  for (const StepOutput& so : er.steps)
    for (double v : so.kl_t.v) CHECK(v == 0.0);
  double recon = 0.0;
  for (size_t s = 0; s < 2; ++s) {
    double tot = 0.0;
    for (size_t t = 0; t < b.t_max; ++t)
      tot += b.mask[s * b.t_max + t] * er.steps[t].recon_log_t.v[s];
    recon += tot;
  }
  CHECK(er.elbo.item() == doctest::Approx(recon / 2.0).epsilon(1e-14));
}

TEST_CASE("elbo contributions are invariant to extra padding and batch mixing") {
  Model m = build_model(tiny_vrnn(2, 2), 83);
  Bound p = bind(m.params, nullptr);
  Rng rng = root_rng(84).stream("data");
  Sequence s1 = make_seq(4, 2, rng), s2 = make_seq(2, 2, rng);
  SequenceBatch pair = batch_of({s1, s2});
  std::vector<Tensor> noise = draw_elbo_noise(m.cfg, 2, pair.t_max + 3, rng.stream("n"));
  std::vector<Tensor> prefix(noise.begin(), noise.begin() + static_cast<long>(pair.t_max));

  double joint = elbo(m, p, pair, prefix).elbo.item();
  double padded = elbo(m, p, pad_batch(pair, 3), noise).elbo.item();
  CHECK(joint == padded);  // masked steps contribute exactly zero

  // row r of the pair's noise drives the same sequence alone
  auto row_noise = [&](size_t r) {
    std::vector<Tensor> out;
    for (size_t t = 0; t < pair.t_max; ++t) out.push_back(slice(prefix[t], 0, r, r + 1));
    return out;
  };
  double a = elbo(m, p, batch_of({s1}), row_noise(0)).elbo.item();
  double b2 = elbo(m, p, batch_of({s2}), row_noise(1)).elbo.item();
  CHECK(joint == 0.5 * (a + b2));

  Model rm = build_model(tiny_rnn(2), 85);
  Bound rp = bind(rm.params, nullptr);
  CHECK(rnn_nll(rm, rp, pair).item() == rnn_nll(rm, rp, pad_batch(pair, 2)).item());
}

TEST_CASE("teacher-forced factorization matches per-step conditionals computed online") {
  Model m = build_model(tiny_vrnn(2, 2), 86);
  Bound p = bind(m.params, nullptr);
  Rng rng = root_rng(87).stream("data");
  Sequence s = make_seq(5, 2, rng);
  SequenceBatch b = batch_of({s});
  std::vector<Tensor> noise = draw_elbo_noise(m.cfg, 1, 5, rng.stream("n"));
  ElboResult er = elbo(m, p, b, noise, nullptr, KlMode::Sampled);

  VrnnState st = initial_state(m.cfg, 1);
  double sum_recon = 0.0, sum_lq = 0.0, sum_lp = 0.0;
  double step_recon = 0.0, step_klsub = 0.0;
  for (size_t t = 0; t < 5; ++t) {
    Tensor x_t = b.frames_at(t);
    DiagGaussian q = vrnn_encode(m, p, x_t, st);
    CHECK(max_abs_diff(q.mu.v, er.steps[t].posterior.mu.v) < 1e-12);
    Tensor z = reparam_sample(q, noise[t]);
    CHECK(max_abs_diff(z.v, er.steps[t].z_t.v) < 1e-12);
    DiagGaussian prior = vrnn_prior(m, p, st);
    OutputDensity dens = vrnn_decode(m, p, z, st);
    sum_recon += output_log_density(dens, x_t).item();
    sum_lq += gauss_log_density(q, z).item();
    sum_lp += gauss_log_density(prior, z).item();
    step_recon += er.steps[t].recon_log_t.item();
    step_klsub += er.steps[t].kl_t.item();
    st = vrnn_recur(m, p, x_t, z, st);
  }
  CHECK(std::abs(sum_recon - step_recon) < 1e-9);
  CHECK(std::abs((sum_lq - sum_lp) - step_klsub) < 1e-9);
  CHECK(er.elbo.item() == doctest::Approx(sum_recon - (sum_lq - sum_lp)).epsilon(1e-9));
}

TEST_CASE("analytic kl steps are nonnegative") {
  Model m = build_model(tiny_vrnn(2, 3), 88);
  Bound p = bind(m.params, nullptr);
  Rng rng = root_rng(89).stream("data");
  SequenceBatch b = batch_of({make_seq(6, 2, rng), make_seq(4, 2, rng)});
  std::vector<Tensor> noise = draw_elbo_noise(m.cfg, 2, b.t_max, rng.stream("n"));
  ElboResult er = elbo(m, p, b, noise);
  for (const StepOutput& so : er.steps)
    for (double v : so.kl_t.v) CHECK(v >= 0.0);
}

TEST_CASE("doctoring the vrnn prior head to emit N(0,1) reproduces vrnn-i bitwise") {
  ModelConfig cfg_v = tiny_vrnn(2, 2, Family::Vrnn);
  cfg_v.prior = {0, 0};  // bare affine head so zero weights silence the state
  ModelConfig cfg_i = cfg_v;
  cfg_i.family = Family::VrnnI;
  Model mv = build_model(cfg_v, 90);
  Model mi = build_model(cfg_i, 90);

  zero_net(mv, mv.prior);
  double raw = sigma_one_bias();
  set_bias(mv, mv.prior.layers.back().b, {0.0, 0.0, raw, raw});
  // confirm the doctored prior is exactly the standard normal
  Bound pv = bind(mv.params, nullptr);
  Rng srng = root_rng(91).stream("state");
  DiagGaussian prior = vrnn_prior(mv, pv, random_state(cfg_v, 1, srng));
  CHECK(prior.mu.v == std::vector<double>{0.0, 0.0});
  CHECK(prior.sigma.v == std::vector<double>{1.0, 1.0});

  Bound pi = bind(mi.params, nullptr);
  Rng rng = root_rng(92).stream("data");
  SequenceBatch b = batch_of({make_seq(5, 2, rng), make_seq(3, 2, rng)});
  std::vector<Tensor> noise = draw_elbo_noise(cfg_v, 2, b.t_max, rng.stream("n"));
  ElboResult ev = elbo(mv, pv, b, noise);
  ElboResult ei = elbo(mi, pi, b, noise);
  CHECK(ev.elbo.item() == ei.elbo.item());  // bitwise
  for (size_t t = 0; t < ev.steps.size(); ++t) {
    CHECK(ev.steps[t].kl_t.v == ei.steps[t].kl_t.v);
    CHECK(ev.steps[t].recon_log_t.v == ei.steps[t].recon_log_t.v);
    CHECK(ev.steps[t].z_t.v == ei.steps[t].z_t.v);
  }
}

TEST_CASE("a K=1 importance estimate is bitwise a single-sample elbo") {
  Model m = build_model(tiny_vrnn(2, 2), 93);
  Bound p = bind(m.params, nullptr);
  Rng rng = root_rng(94).stream("data");
  Sequence s = make_seq(6, 2, rng);
  std::vector<Tensor> noise = draw_elbo_noise(m.cfg, 1, 6, rng.stream("n"));
  Tensor w = is_log_weights(m, p, s, noise);
  REQUIRE(w.numel() == 1);
  double sampled = elbo(m, p, batch_of({s}), noise, nullptr, KlMode::Sampled).elbo.item();
  CHECK(w.v[0] == sampled);  // bitwise
}

TEST_CASE("the K=10^4-style importance estimate matches 1-D quadrature") {
  ModelConfig cfg = tiny_vrnn(1, 1);
  Model m = build_model(cfg, 95);
  Bound p = bind(m.params, nullptr);
  Rng rng = root_rng(96).stream("x");
  Sequence s = make_seq(1, 1, rng);
  double x = static_cast<double>(s.values[0]);

  VrnnState s0 = initial_state(cfg, 1);
  DiagGaussian prior = vrnn_prior(m, p, s0);
  double truth = std::log(oracle::gauss_expect(
      [&](double z) {
        OutputDensity d = vrnn_decode(m, p, Tensor({1, 1}, {z}), s0);
        return std::exp(norm_logpdf(x, d.gauss.mu.v[0], d.gauss.sigma.v[0]));
      },
      prior.mu.v[0], prior.sigma.v[0], 128));
  double est = is_log_likelihood(m, s, 4000, root_rng(97).stream("is"));
  CHECK(std::abs(est - truth) < std::max(0.01 * std::abs(truth), 0.02));
}

TEST_CASE("importance sampling dominates the elbo and improves with K on average") {
  Model m = build_model(tiny_vrnn(2, 2), 98);
  Rng drng = root_rng(99).stream("data");
  SequenceDataset ds;
  for (int i = 0; i < 3; ++i) ds.seqs.push_back(make_seq(4, 2, drng));

  const int seeds = 100;
  double mean_elbo = 0.0, mean_is5 = 0.0, mean_is40 = 0.0;
  for (int i = 0; i < seeds; ++i) {
    Rng r = root_rng(1000 + static_cast<uint64_t>(i));
    mean_elbo += eval_elbo(m, ds, r.stream("e"));
    mean_is5 += eval_is(m, ds, 5, r.stream("i5"));
    mean_is40 += eval_is(m, ds, 40, r.stream("i40"));
  }
  mean_elbo /= seeds;
  mean_is5 /= seeds;
  mean_is40 /= seeds;
  CAPTURE(mean_elbo);
  CAPTURE(mean_is5);
  CAPTURE(mean_is40);
  CHECK(mean_is40 >= mean_is5);
  CHECK(mean_is5 >= mean_elbo);
}

TEST_CASE("elbo noise must match the batch layout") {
  Model m = build_model(tiny_vrnn(2, 2), 110);
  Bound p = bind(m.params, nullptr);
  Rng rng = root_rng(111).stream("data");
  SequenceBatch b = batch_of({make_seq(3, 2, rng)});
  std::vector<Tensor> short_noise = draw_elbo_noise(m.cfg, 1, 2, rng.stream("n"));
  CHECK_THROWS_AS(elbo(m, p, b, short_noise), ShapeError);
  std::vector<Tensor> wrong = draw_elbo_noise(m.cfg, 2, 3, rng.stream("n2"));
  CHECK_THROWS_AS(elbo(m, p, b, wrong), ShapeError);
}

TEST_CASE("draw_elbo_noise is deterministic and t-major") {
  ModelConfig cfg = tiny_vrnn(2, 3);
  std::vector<Tensor> a = draw_elbo_noise(cfg, 2, 4, root_rng(112).stream("n"));
  std::vector<Tensor> b = draw_elbo_noise(cfg, 2, 4, root_rng(112).stream("n"));
  REQUIRE(a.size() == 4);
  for (size_t t = 0; t < 4; ++t) {
    REQUIRE(a[t].shape == std::vector<size_t>{2, 3});
    CHECK(a[t].v == b[t].v);
  }
}

TEST_CASE("generation is deterministic in the seed for every family") {
  Rng dummy = root_rng(0);
  for (ModelConfig cfg : {tiny_vrnn(2, 2, Family::Vrnn), tiny_vrnn(2, 2, Family::VrnnI)}) {
    Model m = build_model(cfg, 113);
    Sequence a = generate(m, 7, root_rng(114).stream("g"));
    Sequence b = generate(m, 7, root_rng(114).stream("g"));
    Sequence c = generate(m, 7, root_rng(115).stream("g"));
    REQUIRE(a.frames == 7);
    REQUIRE(a.dim == 2);
    CHECK(a.values == b.values);
    CHECK(a.values != c.values);
  }
  Model rm = build_model(tiny_rnn(2), 116);
  Sequence a = generate(rm, 5, root_rng(117).stream("g"));
  Sequence b = generate(rm, 5, root_rng(117).stream("g"));
  CHECK(a.values == b.values);
  (void)dummy;
}

TEST_CASE("zero-noise generation follows the decoder means and ignores the rng") {
  Model m = build_model(tiny_vrnn(2, 2), 118);
  std::vector<OutputDensity> dens;
  Sequence a = generate(m, 6, root_rng(119).stream("g"), true, &dens);
  Sequence b = generate(m, 6, root_rng(999).stream("other"), true);
  CHECK(a.values == b.values);  // no draws consumed
  REQUIRE(dens.size() == 6);
  for (size_t t = 0; t < 6; ++t)
    for (size_t i = 0; i < 2; ++i)
      CHECK(a.values[t * 2 + i] == static_cast<float>(dens[t].gauss.mu.v[i]));
}

TEST_CASE("gmm-bernoulli generation emits a binary pen channel") {
  ModelConfig cfg = tiny_vrnn(3, 2);
  cfg.head = Head::GmmBernoulli;
  cfg.J = 2;
  Model m = build_model(cfg, 120);
  std::vector<OutputDensity> dens;
  Sequence s = generate(m, 20, root_rng(121).stream("g"), false, &dens);
  for (size_t t = 0; t < 20; ++t) {
    float pen = s.values[t * 3 + 2];
    CHECK((pen == 0.0f || pen == 1.0f));
  }
  std::vector<OutputDensity> dz;
  Sequence z = generate(m, 8, root_rng(122).stream("g"), true, &dz);
  for (size_t t = 0; t < 8; ++t) {
    float pen = z.values[t * 3 + 2];
    CHECK(pen == (dz[t].bern.p.v[0] > 0.5 ? 1.0f : 0.0f));
  }
}

TEST_CASE("latent_trace has the contracted lengths and matches zero-noise elbo kls") {
  Model m = build_model(tiny_vrnn(2, 3), 123);
  Rng rng = root_rng(124).stream("data");
  Sequence s = make_seq(6, 2, rng);
  LatentTrace tr = latent_trace(m, s);
  REQUIRE(tr.delta.size() == 5);
  REQUIRE(tr.kl.size() == 6);
  REQUIRE(tr.kl_dims.size() == 6);
  for (double v : tr.delta) CHECK(v >= 0.0);
  for (double v : tr.kl) CHECK(v >= 0.0);

  // z_t = posterior mean is the same path the elbo takes with zero noise
  Bound p = bind(m.params, nullptr);
  SequenceBatch b = batch_of({s});
  std::vector<Tensor> zero_noise(6, Tensor::zeros({1, 3}));
  ElboResult er = elbo(m, p, b, zero_noise);
  for (size_t t = 0; t < 6; ++t) {
    CHECK(tr.kl[t] == doctest::Approx(er.steps[t].kl_t.item()).epsilon(1e-12));
    double row = 0.0;
    for (double v : tr.kl_dims[t]) row += v;
    CHECK(row == doctest::Approx(tr.kl[t]).epsilon(1e-12));
    if (t >= 1) {
      double want = 0.0;
      for (size_t j = 0; j < 3; ++j) {
        double diff = er.steps[t].posterior.mu.v[j] - er.steps[t - 1].posterior.mu.v[j];
        want += diff * diff;
      }
      CHECK(tr.delta[t - 1] == doctest::Approx(want).epsilon(1e-12));
    }
  }
}

TEST_CASE("a constant sequence through a zero-weight encoder has a flat trace") {
  Model m = build_model(tiny_vrnn(2, 2), 125);
  zero_net(m, m.enc);
  set_bias(m, m.enc.layers.back().b, {0.4, -0.1, 0.2, 0.2});
  Sequence s;
  s.frames = 5;
  s.dim = 2;
  s.values.assign(10, 1.5f);
  LatentTrace tr = latent_trace(m, s);
  for (double v : tr.delta) CHECK(v == 0.0);
}

TEST_CASE("phi_param_count splits the store into feature nets and lstm") {
  Model m = build_model(tiny_vrnn(2, 2), 126);
  size_t lstm_params = m.params.value(m.lstm.gates.W).numel() +
                       m.params.value(m.lstm.gates.b).numel();
  CHECK(phi_param_count(m) + lstm_params == m.params.param_count());
}
