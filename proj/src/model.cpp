#include "vrnn/model.hpp"

#include <cmath>
#include <cstring>

#include "json.hpp"

namespace vrnn {

using nlohmann::json;

std::string family_name(Family f) {
  switch (f) {
    case Family::Rnn: return "rnn";
    case Family::Vrnn: return "vrnn";
    case Family::VrnnI: return "vrnn-i";
  }
  throw ContractError("family_name: bad enum");
}

std::string head_name(Head h) {
  switch (h) {
    case Head::Gauss: return "gauss";
    case Head::Gmm: return "gmm";
    case Head::GmmBernoulli: return "gmm-bernoulli";
  }
  throw ContractError("head_name: bad enum");
}

Family parse_family(const std::string& s) {
  if (s == "rnn") return Family::Rnn;
  if (s == "vrnn") return Family::Vrnn;
  if (s == "vrnn-i") return Family::VrnnI;
  throw ConfigError("unknown model family '" + s + "' (rnn, vrnn, vrnn-i)");
}

Head parse_head(const std::string& s) {
  if (s == "gauss") return Head::Gauss;
  if (s == "gmm") return Head::Gmm;
  if (s == "gmm-bernoulli") return Head::GmmBernoulli;
  throw ConfigError("unknown output head '" + s + "' (gauss, gmm, gmm-bernoulli)");
}

void ModelConfig::validate() const {
  if (d == 0 || p == 0) throw ConfigError("model: frame_dim and hidden must be positive");
  if (family == Family::Rnn) {
    if (k != 0) throw ConfigError("model: rnn family takes latent = 0");
  } else if (k == 0) {
    throw ConfigError("model: " + family_name(family) + " needs latent >= 1");
  }
  if ((head == Head::Gmm || head == Head::GmmBernoulli) && J == 0)
    throw ConfigError("model: gmm heads need mixtures >= 1");
  if (head == Head::GmmBernoulli && d < 2)
    throw ConfigError("model: gmm-bernoulli needs frame_dim >= 2");
  for (const NetSpec* n : {&phi_x, &phi_z, &enc, &dec, &prior})
    if (n->depth > 0 && n->width == 0) throw ConfigError("model: net width must be positive");
}

size_t ModelConfig::gmm_dim() const { return head == Head::GmmBernoulli ? d - 1 : d; }

size_t ModelConfig::head_out() const {
  switch (head) {
    case Head::Gauss: return 2 * d;
    case Head::Gmm: return J + 2 * J * d;
    case Head::GmmBernoulli: return J + 2 * J * (d - 1) + 1;
  }
  throw ContractError("head_out: bad enum");
}

namespace {

size_t feat_dim(size_t input, const NetSpec& n) { return n.depth == 0 ? input : n.width; }

// depth == 0 means no extractor at all; forward passes the input through.
Mlp make_extractor(ParamStore& store, const std::string& name, size_t input, const NetSpec& n) {
  if (n.depth == 0) {
    Mlp identity;
    identity.in = input;
    identity.out = input;
    return identity;
  }
  std::vector<size_t> dims{input};
  for (size_t i = 0; i < n.depth; ++i) dims.push_back(n.width);
  return make_mlp(store, name, dims);
}

std::vector<size_t> head_dims(size_t input, const NetSpec& n, size_t out) {
  std::vector<size_t> dims{input};
  for (size_t i = 0; i < n.depth; ++i) dims.push_back(n.width);
  dims.push_back(out);
  return dims;
}

}  // namespace

std::string ModelConfig::to_json() const {
  json j;
  j["family"] = family_name(family);
  j["head"] = head_name(head);
  j["frame_dim"] = d;
  j["hidden"] = p;
  j["latent"] = k;
  j["mixtures"] = J;
  const std::pair<const char*, const NetSpec*> nets[] = {
      {"phi_x", &phi_x}, {"phi_z", &phi_z}, {"enc", &enc}, {"dec", &dec}, {"prior", &prior}};
  for (auto [name, spec] : nets) {
    j[std::string(name) + "_depth"] = spec->depth;
    j[std::string(name) + "_width"] = spec->width;
  }
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  ModelConfig cfg;
  const std::pair<const char*, NetSpec*> nets[] = {{"phi_x", &cfg.phi_x},
                                                   {"phi_z", &cfg.phi_z},
                                                   {"enc", &cfg.enc},
                                                   {"dec", &cfg.dec},
                                                   {"prior", &cfg.prior}};
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& key = it.key();
    try {
      if (key == "family") cfg.family = parse_family(it.value().get<std::string>());
      else if (key == "head") cfg.head = parse_head(it.value().get<std::string>());
      else if (key == "frame_dim") cfg.d = it.value().get<size_t>();
      else if (key == "hidden") cfg.p = it.value().get<size_t>();
      else if (key == "latent") cfg.k = it.value().get<size_t>();
      else if (key == "mixtures") cfg.J = it.value().get<size_t>();
      else {
        bool known = false;
        for (auto [name, spec] : nets) {
          if (key == std::string(name) + "_depth") {
            spec->depth = it.value().get<size_t>();
            known = true;
          } else if (key == std::string(name) + "_width") {
            spec->width = it.value().get<size_t>();
            known = true;
          }
        }
        if (!known) throw ConfigError("model config: unknown key '" + key + "'");
      }
    } catch (const json::exception& e) {
      throw ConfigError("model config: bad value for '" + key + "': " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

VrnnState initial_state(const ModelConfig& cfg, size_t batch) {
  return VrnnState{Tensor::zeros({batch, cfg.p}), Tensor::zeros({batch, cfg.p})};
}

Model build_model(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  Model m;
  m.cfg = cfg;
  const size_t wx = feat_dim(cfg.d, cfg.phi_x);
  m.phi_x = make_extractor(m.params, "phi_x", cfg.d, cfg.phi_x);
  if (cfg.latent()) {
    const size_t wz = feat_dim(cfg.k, cfg.phi_z);
    m.phi_z = make_extractor(m.params, "phi_z", cfg.k, cfg.phi_z);
    m.enc = make_mlp(m.params, "enc", head_dims(wx + cfg.p, cfg.enc, 2 * cfg.k));
    m.dec = make_mlp(m.params, "dec", head_dims(wz + cfg.p, cfg.dec, cfg.head_out()));
    if (cfg.family == Family::Vrnn)
      m.prior = make_mlp(m.params, "prior", head_dims(cfg.p, cfg.prior, 2 * cfg.k));
    m.lstm = make_lstm(m.params, "lstm", wx + wz, cfg.p);
  } else {
    m.dec = make_mlp(m.params, "dec", head_dims(cfg.p, cfg.dec, cfg.head_out()));
    m.lstm = make_lstm(m.params, "lstm", wx, cfg.p);
  }
  init_params(m.params, seed);
  return m;
}

size_t phi_param_count(const Model& m) {
  size_t n = 0;
  for (size_t i = 0; i < m.params.size(); ++i) {
    const auto& e = m.params.entry(static_cast<int>(i));
    if (e.name.rfind("lstm", 0) != 0) n += e.value.numel();
  }
  return n;
}

namespace {

Tensor extractor_forward(const Mlp& net, const Bound& p, const Tensor& x, Tape* tape) {
  if (net.layers.empty()) return x;
  return relu(mlp_forward(net, p, x, tape), tape);
}

// Unconstrained [mu, sigma_raw] halves into a diagonal Gaussian.
DiagGaussian gauss_from_raw(const Tensor& raw, size_t k, Tape* tape) {
  DiagGaussian d;
  d.mu = slice(raw, 1, 0, k, tape);
  d.sigma = affine(softplus(slice(raw, 1, k, 2 * k, tape), tape), 1.0, kSigmaFloor, tape);
  return d;
}

MixtureDiagGaussian gmm_from_raw(const Tensor& raw, size_t J, size_t gd, Tape* tape) {
  MixtureDiagGaussian g;
  g.components = J;
  g.dim = gd;
  Tensor alpha_raw = slice(raw, 1, 0, J, tape);
  g.log_alpha = sub(alpha_raw, tile_cols(logsumexp(alpha_raw, 1, tape), J, tape), tape);
  g.mu = slice(raw, 1, J, J + J * gd, tape);
  g.sigma = affine(softplus(slice(raw, 1, J + J * gd, J + 2 * J * gd, tape), tape), 1.0,
                   kSigmaFloor, tape);
  return g;
}

OutputDensity head_from_raw(const ModelConfig& cfg, const Tensor& raw, Tape* tape) {
  OutputDensity out;
  out.head = cfg.head;
  switch (cfg.head) {
    case Head::Gauss:
      out.gauss = gauss_from_raw(raw, cfg.d, tape);
      break;
    case Head::Gmm:
      out.gmm = gmm_from_raw(raw, cfg.J, cfg.d, tape);
      break;
    case Head::GmmBernoulli: {
      out.gmm = gmm_from_raw(raw, cfg.J, cfg.d - 1, tape);
      size_t h = cfg.head_out();
      Tensor logit = slice(raw, 1, h - 1, h, tape);
      out.bern.p = clamp(sigmoid(logit, tape), 1e-7, 1.0 - 1e-7, tape);
      break;
    }
  }
  return out;
}

void require_latent(const Model& m, const char* op) {
  if (!m.cfg.latent())
    throw ContractError(std::string(op) + ": rnn family has no latent variables");
}

DiagGaussian prior_of_state(const Model& m, const Bound& p, const VrnnState& s, Tape* tape) {
  if (m.cfg.family == Family::VrnnI) {
    size_t batch = s.h.shape[0];
    return DiagGaussian{Tensor::zeros({batch, m.cfg.k}), Tensor::full({batch, m.cfg.k}, 1.0)};
  }
  return gauss_from_raw(mlp_forward(m.prior, p, s.h, tape), m.cfg.k, tape);
}

DiagGaussian encode_from_feat(const Model& m, const Bound& p, const Tensor& fx,
                              const VrnnState& s, Tape* tape) {
  Tensor raw = mlp_forward(m.enc, p, concat(fx, s.h, 1, tape), tape);
  return gauss_from_raw(raw, m.cfg.k, tape);
}

OutputDensity decode_from_feat(const Model& m, const Bound& p, const Tensor& fz,
                               const VrnnState& s, Tape* tape) {
  Tensor raw = mlp_forward(m.dec, p, concat(fz, s.h, 1, tape), tape);
  return head_from_raw(m.cfg, raw, tape);
}

VrnnState recur_from_feat(const Model& m, const Bound& p, const Tensor& fx, const Tensor& fz,
                          const VrnnState& s, Tape* tape) {
  Tensor in = m.cfg.latent() ? concat(fx, fz, 1, tape) : fx;
  auto [h, c] = lstm_step(m.lstm, p, in, s.h, s.c, tape);
  return VrnnState{h, c};
}

}  // namespace

Tensor phi_x_forward(const Model& m, const Bound& p, const Tensor& x, Tape* tape) {
  return extractor_forward(m.phi_x, p, x, tape);
}

Tensor phi_z_forward(const Model& m, const Bound& p, const Tensor& z, Tape* tape) {
  require_latent(m, "phi_z");
  return extractor_forward(m.phi_z, p, z, tape);
}

DiagGaussian vrnn_prior(const Model& m, const Bound& p, const VrnnState& s, Tape* tape) {
  require_latent(m, "vrnn_prior");
  return prior_of_state(m, p, s, tape);
}

DiagGaussian vrnn_encode(const Model& m, const Bound& p, const Tensor& x_t, const VrnnState& s,
                         Tape* tape) {
  require_latent(m, "vrnn_encode");
  return encode_from_feat(m, p, phi_x_forward(m, p, x_t, tape), s, tape);
}

OutputDensity vrnn_decode(const Model& m, const Bound& p, const Tensor& z_t, const VrnnState& s,
                          Tape* tape) {
  require_latent(m, "vrnn_decode");
  return decode_from_feat(m, p, phi_z_forward(m, p, z_t, tape), s, tape);
}

VrnnState vrnn_recur(const Model& m, const Bound& p, const Tensor& x_t, const Tensor& z_t,
                     const VrnnState& s, Tape* tape) {
  require_latent(m, "vrnn_recur");
  return recur_from_feat(m, p, phi_x_forward(m, p, x_t, tape), phi_z_forward(m, p, z_t, tape), s,
                         tape);
}

Tensor output_log_density(const OutputDensity& d, const Tensor& x, Tape* tape) {
  switch (d.head) {
    case Head::Gauss:
      return gauss_log_density(d.gauss, x, tape);
    case Head::Gmm:
      return gmm_log_density(d.gmm, x, tape);
    case Head::GmmBernoulli: {
      size_t dim = x.shape[1];
      Tensor body = slice(x, 1, 0, dim - 1, tape);
      Tensor pen = slice(x, 1, dim - 1, dim, tape);
      return add(gmm_log_density(d.gmm, body, tape),
                 bernoulli_log_density(d.bern, pen, tape), tape);
    }
  }
  throw ContractError("output_log_density: bad head");
}

Tensor output_sample(const OutputDensity& d, Rng& rng, bool zero_noise) {
  switch (d.head) {
    case Head::Gauss: {
      if (zero_noise) {
        Tensor out = d.gauss.mu;
        out.node = -1;
        return out;
      }
      Tensor eps = Tensor::zeros(d.gauss.mu.shape);
      for (double& e : eps.v) e = rng.normal();
      Tensor out = reparam_sample(d.gauss, eps);
      out.node = -1;
      return out;
    }
    case Head::Gmm:
    case Head::GmmBernoulli: {
      size_t batch = d.gmm.log_alpha.shape[0];
      Tensor body;
      if (zero_noise) {
        body = gmm_mode(d.gmm);
      } else {
        Tensor u = Tensor::zeros({batch});
        for (double& x : u.v) x = rng.uniform();
        Tensor eps = Tensor::zeros({batch, d.gmm.dim});
        for (double& e : eps.v) e = rng.normal();
        body = gmm_sample(d.gmm, u, eps);
      }
      if (d.head == Head::Gmm) return body;
      Tensor pen = Tensor::zeros({batch, 1});
      for (size_t b = 0; b < batch; ++b) {
        double p = d.bern.p.v[b];
        pen.v[b] = zero_noise ? (p > 0.5 ? 1.0 : 0.0) : (rng.uniform() < p ? 1.0 : 0.0);
      }
      return concat(body, pen, 1);
    }
  }
  throw ContractError("output_sample: bad head");
}

// The sampled-KL accumulation below mirrors is_log_weights term for term so
// that a K=1 importance estimate reproduces the single-sample bound exactly.
ElboResult elbo(const Model& m, const Bound& p, const SequenceBatch& batch,
                const std::vector<Tensor>& noise, Tape* tape, KlMode kl_mode,
                const VrnnState* s0) {
  require_latent(m, "elbo");
  if (noise.size() < batch.t_max)
    throw ShapeError("elbo: " + std::to_string(noise.size()) + " noise steps for t_max " +
                     std::to_string(batch.t_max));
  ElboResult res;
  VrnnState s = s0 ? *s0 : initial_state(m.cfg, batch.batch);
  Tensor total;
  for (size_t t = 0; t < batch.t_max; ++t) {
    if (noise[t].shape != std::vector<size_t>{batch.batch, m.cfg.k})
      throw ShapeError("elbo: noise step " + std::to_string(t) + " has shape " +
                       shape_str(noise[t].shape));
    Tensor x_t = batch.frames_at(t);
    Tensor mask_t = batch.mask_at(t);
    Tensor fx = phi_x_forward(m, p, x_t, tape);
    DiagGaussian q = encode_from_feat(m, p, fx, s, tape);
    Tensor z = reparam_sample(q, noise[t], tape);
    DiagGaussian prior = prior_of_state(m, p, s, tape);
    Tensor fz = phi_z_forward(m, p, z, tape);
    OutputDensity out = decode_from_feat(m, p, fz, s, tape);
    Tensor recon = output_log_density(out, x_t, tape);
    Tensor kl;
    if (kl_mode == KlMode::Analytic) {
      kl = gauss_kl(q, prior, tape);
    } else {
      kl = sub(gauss_log_density(q, z, tape), gauss_log_density(prior, z, tape), tape);
    }
    Tensor step = mul(mask_t, sub(recon, kl, tape), tape);
    total = t == 0 ? step : add(total, step, tape);
    res.steps.push_back(StepOutput{kl, recon, q, prior, z});
    s = recur_from_feat(m, p, fx, fz, s, tape);
  }
  res.elbo = mean(total, 0, tape);
  res.final_state = s;
  return res;
}

std::vector<Tensor> draw_elbo_noise(const ModelConfig& cfg, size_t batch, size_t t_max, Rng rng) {
  std::vector<Tensor> noise;
  noise.reserve(t_max);
  for (size_t t = 0; t < t_max; ++t) {
    Tensor e = Tensor::zeros({batch, cfg.k});
    for (double& x : e.v) x = rng.normal();
    noise.push_back(std::move(e));
  }
  return noise;
}

Tensor rnn_nll(const Model& m, const Bound& p, const SequenceBatch& batch, Tape* tape,
               const VrnnState* s0, VrnnState* s_out) {
  if (m.cfg.family != Family::Rnn)
    throw ContractError("rnn_nll: model family is " + family_name(m.cfg.family));
  VrnnState s = s0 ? *s0 : initial_state(m.cfg, batch.batch);
  Tensor total;
  for (size_t t = 0; t < batch.t_max; ++t) {
    Tensor x_t = batch.frames_at(t);
    Tensor mask_t = batch.mask_at(t);
    OutputDensity out = head_from_raw(m.cfg, mlp_forward(m.dec, p, s.h, tape), tape);
    Tensor ll = output_log_density(out, x_t, tape);
    Tensor step = mul(mask_t, ll, tape);
    total = t == 0 ? step : add(total, step, tape);
    Tensor fx = phi_x_forward(m, p, x_t, tape);
    s = recur_from_feat(m, p, fx, Tensor(), s, tape);
  }
  if (s_out) *s_out = s;
  return neg(mean(total, 0, tape), tape);
}

Tensor is_log_weights(const Model& m, const Bound& p, const Sequence& seq,
                      const std::vector<Tensor>& noise) {
  require_latent(m, "is_log_weights");
  if (noise.size() < seq.frames)
    throw ShapeError("is_log_weights: " + std::to_string(noise.size()) + " noise steps for T " +
                     std::to_string(seq.frames));
  if (seq.frames == 0) throw ContractError("is_log_weights: empty sequence");
  const size_t K = noise[0].shape[0];
  VrnnState s = initial_state(m.cfg, K);
  Tensor w;
  for (size_t t = 0; t < seq.frames; ++t) {
    Tensor x_t = Tensor::zeros({K, seq.dim});
    for (size_t r = 0; r < K; ++r)
      for (size_t i = 0; i < seq.dim; ++i)
        x_t.v[r * seq.dim + i] = static_cast<double>(seq.at(t, i));
    Tensor fx = phi_x_forward(m, p, x_t, nullptr);
    DiagGaussian q = encode_from_feat(m, p, fx, s, nullptr);
    Tensor z = reparam_sample(q, noise[t], nullptr);
    DiagGaussian prior = prior_of_state(m, p, s, nullptr);
    Tensor fz = phi_z_forward(m, p, z, nullptr);
    OutputDensity out = decode_from_feat(m, p, fz, s, nullptr);
    Tensor recon = output_log_density(out, x_t, nullptr);
    Tensor lp = gauss_log_density(prior, z, nullptr);
    Tensor lq = gauss_log_density(q, z, nullptr);
    Tensor step = add(recon, sub(lp, lq, nullptr), nullptr);
    w = t == 0 ? step : add(w, step, nullptr);
    s = recur_from_feat(m, p, fx, fz, s, nullptr);
  }
  return w;
}

double is_log_likelihood(const Model& m, const Sequence& seq, size_t K, Rng rng) {
  if (K == 0) throw ContractError("is_log_likelihood: K must be >= 1");
  std::vector<Tensor> noise;
  noise.reserve(seq.frames);
  for (size_t t = 0; t < seq.frames; ++t) {
    Tensor e = Tensor::zeros({K, m.cfg.k});
    for (double& x : e.v) x = rng.normal();
    noise.push_back(std::move(e));
  }
  Bound b = bind(m.params, nullptr);
  Tensor w = is_log_weights(m, b, seq, noise);
  Tensor w2 = reshape(w, {1, K});
  return logsumexp(w2, 1).item() - std::log(static_cast<double>(K));
}

double eval_elbo(const Model& m, const SequenceDataset& ds, Rng rng) {
  if (ds.size() == 0) throw ContractError("eval_elbo: empty dataset");
  std::vector<size_t> all(ds.size());
  for (size_t i = 0; i < all.size(); ++i) all[i] = i;
  SequenceBatch batch = make_batch(ds, all);
  std::vector<Tensor> noise = draw_elbo_noise(m.cfg, batch.batch, batch.t_max, rng);
  Bound b = bind(m.params, nullptr);
  return elbo(m, b, batch, noise, nullptr).elbo.item();
}

double eval_rnn_nll(const Model& m, const SequenceDataset& ds) {
  if (ds.size() == 0) throw ContractError("eval_rnn_nll: empty dataset");
  std::vector<size_t> all(ds.size());
  for (size_t i = 0; i < all.size(); ++i) all[i] = i;
  SequenceBatch batch = make_batch(ds, all);
  Bound b = bind(m.params, nullptr);
  return rnn_nll(m, b, batch).item();
}

double eval_is(const Model& m, const SequenceDataset& ds, size_t K, Rng rng) {
  if (ds.size() == 0) throw ContractError("eval_is: empty dataset");
  double total = 0.0;
  for (size_t i = 0; i < ds.size(); ++i)
    total += is_log_likelihood(m, ds.seqs[i], K, rng.stream(i));
  return total / static_cast<double>(ds.size());
}

Sequence generate(const Model& m, size_t T, Rng rng, bool zero_noise,
                  std::vector<OutputDensity>* densities) {
  Bound p = bind(m.params, nullptr);
  VrnnState s = initial_state(m.cfg, 1);
  Sequence out;
  out.dim = m.cfg.d;
  out.frames = T;
  out.values.reserve(T * m.cfg.d);
  for (size_t t = 0; t < T; ++t) {
    Tensor x_t;
    if (m.cfg.latent()) {
      DiagGaussian prior = prior_of_state(m, p, s, nullptr);
      Tensor z;
      if (zero_noise) {
        z = prior.mu;
      } else {
        Tensor eps = Tensor::zeros({1, m.cfg.k});
        for (double& e : eps.v) e = rng.normal();
        z = reparam_sample(prior, eps);
      }
      Tensor fz = phi_z_forward(m, p, z, nullptr);
      OutputDensity od = decode_from_feat(m, p, fz, s, nullptr);
      if (densities) densities->push_back(od);
      x_t = output_sample(od, rng, zero_noise);
      Tensor fx = phi_x_forward(m, p, x_t, nullptr);
      s = recur_from_feat(m, p, fx, fz, s, nullptr);
    } else {
      OutputDensity od = head_from_raw(m.cfg, mlp_forward(m.dec, p, s.h, nullptr), nullptr);
      if (densities) densities->push_back(od);
      x_t = output_sample(od, rng, zero_noise);
      Tensor fx = phi_x_forward(m, p, x_t, nullptr);
      s = recur_from_feat(m, p, fx, Tensor(), s, nullptr);
    }
    for (size_t i = 0; i < m.cfg.d; ++i) out.values.push_back(static_cast<float>(x_t.v[i]));
  }
  return out;
}

LatentTrace latent_trace(const Model& m, const Sequence& seq) {
  require_latent(m, "latent_trace");
  if (seq.dim != m.cfg.d)
    throw ShapeError("latent_trace: sequence dim " + std::to_string(seq.dim) +
                     " vs model frame_dim " + std::to_string(m.cfg.d));
  Bound p = bind(m.params, nullptr);
  VrnnState s = initial_state(m.cfg, 1);
  LatentTrace trace;
  std::vector<double> prev_mu;
  for (size_t t = 0; t < seq.frames; ++t) {
    Tensor x_t = Tensor::zeros({1, seq.dim});
    for (size_t i = 0; i < seq.dim; ++i) x_t.v[i] = static_cast<double>(seq.at(t, i));
    Tensor fx = phi_x_forward(m, p, x_t, nullptr);
    DiagGaussian q = encode_from_feat(m, p, fx, s, nullptr);
    DiagGaussian prior = prior_of_state(m, p, s, nullptr);
    double kl_total = 0.0;
    std::vector<double> kl_dims(m.cfg.k);
    for (size_t j = 0; j < m.cfg.k; ++j) {
      double mq = q.mu.v[j], sq = q.sigma.v[j];
      double mp = prior.mu.v[j], sp = prior.sigma.v[j];
      double term = std::log(sp / sq) + (sq * sq + (mq - mp) * (mq - mp)) / (2.0 * sp * sp) - 0.5;
      kl_dims[j] = term;
      kl_total += term;
    }
    trace.kl.push_back(kl_total);
    trace.kl_dims.push_back(std::move(kl_dims));
    if (t > 0) {
      double delta = 0.0;
      for (size_t j = 0; j < m.cfg.k; ++j) {
        double diff = q.mu.v[j] - prev_mu[j];
        delta += diff * diff;
      }
      trace.delta.push_back(delta);
    }
    prev_mu = q.mu.v;
    Tensor z = q.mu;
    Tensor fz = phi_z_forward(m, p, z, nullptr);
    s = recur_from_feat(m, p, fx, fz, s, nullptr);
  }
  return trace;
}

}  // namespace vrnn
