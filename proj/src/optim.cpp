#include "vrnn/optim.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "json.hpp"

namespace vrnn {

AdamState make_adam(const ParamStore& store, AdamConfig cfg) {
  AdamState st;
  st.cfg = cfg;
  for (size_t i = 0; i < store.size(); ++i) {
    const Tensor& p = store.value(static_cast<int>(i));
    st.m.push_back(Tensor::zeros(p.shape));
    st.v.push_back(Tensor::zeros(p.shape));
  }
  return st;
}

void adam_step(AdamState& st, ParamStore& params, const std::vector<Tensor>& grads) {
  if (st.m.size() != params.size() || grads.size() != params.size())
    throw ContractError("adam_step: state/grads not aligned with parameters");
  st.t += 1;
  const double b1 = st.cfg.beta1, b2 = st.cfg.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(st.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(st.t));
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params.value(static_cast<int>(i));
    Tensor& m = st.m[i];
    Tensor& v = st.v[i];
    const Tensor& g = grads[i];
    if (!g.v.empty() && g.shape != p.shape)
      throw ContractError("adam_step: gradient shape mismatch for " +
                          params.entry(static_cast<int>(i)).name);
    for (size_t j = 0; j < p.v.size(); ++j) {
      double gj = g.v.empty() ? 0.0 : g.v[j];
      m.v[j] = b1 * m.v[j] + (1.0 - b1) * gj;
      v.v[j] = b2 * v.v[j] + (1.0 - b2) * gj * gj;
      double mhat = m.v[j] / c1;
      double vhat = v.v[j] / c2;
      p.v[j] -= st.cfg.lr * mhat / (std::sqrt(vhat) + st.cfg.eps);
    }
  }
}

double clip_grads(std::vector<Tensor>& grads, double max_norm) {
  if (!(max_norm > 0.0)) throw ContractError("clip_grads: max_norm must be positive");
  double sq = 0.0;
  for (const Tensor& g : grads)
    for (double x : g.v) sq += x * x;
  double norm = std::sqrt(sq);
  if (norm > max_norm) {
    double scale = max_norm / norm;
    for (Tensor& g : grads)
      for (double& x : g.v) x *= scale;
  }
  return norm;
}

void TrainConfig::validate() const {
  if (batch_size == 0 || max_epochs == 0) throw ConfigError("train: batch_size and max_epochs must be positive");
  if (patience > max_epochs) throw ConfigError("train: patience exceeds max_epochs");
  if (!(clip_norm > 0.0)) throw ConfigError("train: clip_norm must be positive");
  if (!(lr > 0.0)) throw ConfigError("train: lr must be positive");
  if (metric != "elbo" && metric != "nll")
    throw ConfigError("train: metric must be elbo or nll, got '" + metric + "'");
}

namespace {

VrnnState detach(const VrnnState& s) {
  VrnnState out = s;
  out.h.node = -1;
  out.c.node = -1;
  return out;
}

std::vector<Tensor> collect_grads(const Tape& tape, const Bound& bound, size_t count) {
  std::vector<Tensor> grads(count);
  for (size_t i = 0; i < count; ++i)
    if (tape.has_grad(bound.tensors[i])) grads[i] = tape.grad(bound.tensors[i]);
  return grads;
}

double train_batch(Model& model, AdamState& adam, const SequenceBatch& batch, Rng noise_rng,
                   const TrainConfig& tc) {
  const bool latent = model.cfg.latent();
  const size_t window = tc.truncate == 0 ? batch.t_max : tc.truncate;
  double total = 0.0;
  VrnnState carry = initial_state(model.cfg, batch.batch);
  for (size_t lo = 0; lo < batch.t_max; lo += window) {
    const size_t hi = std::min(lo + window, batch.t_max);
    SequenceBatch chunk = (lo == 0 && hi == batch.t_max) ? batch : time_slice(batch, lo, hi);
    Tape tape;
    Bound bp = bind(model.params, &tape);
    Tensor loss;
    VrnnState s_next;
    if (latent) {
      std::vector<Tensor> noise =
          draw_elbo_noise(model.cfg, chunk.batch, chunk.t_max, noise_rng.stream(lo));
      ElboResult er = elbo(model, bp, chunk, noise, &tape, KlMode::Analytic, &carry);
      loss = neg(er.elbo, &tape);
      s_next = er.final_state;
    } else {
      loss = rnn_nll(model, bp, chunk, &tape, &carry, &s_next);
    }
    tape.backward(loss);
    std::vector<Tensor> grads = collect_grads(tape, bp, model.params.size());
    clip_grads(grads, tc.clip_norm);
    adam_step(adam, model.params, grads);
    total += loss.item();
    carry = detach(s_next);
  }
  return total;
}

}  // namespace

FitResult fit(Model& model, const SequenceDataset& train, const SequenceDataset& valid,
              const TrainConfig& tc, TrainState* state, const EpochHook& hook) {
  tc.validate();
  if (train.size() == 0 || valid.size() == 0) throw ContractError("fit: empty dataset");
  const bool latent = model.cfg.latent();
  if (latent && tc.metric != "elbo")
    throw ConfigError("train: " + family_name(model.cfg.family) + " family validates with elbo");
  if (!latent && tc.metric != "nll") throw ConfigError("train: rnn family validates with nll");

  TrainState local;
  TrainState& st = state ? *state : local;
  if (st.adam.m.empty()) {
    st.adam = make_adam(model.params, AdamConfig{tc.lr, 0.9, 0.999, 1e-8});
  } else {
    if (st.adam.m.size() != model.params.size())
      throw ContractError("fit: resumed optimizer state does not match the model");
    st.adam.cfg.lr = tc.lr;
  }

  FitResult res;
  res.best_params = model.params;
  res.best_epoch = st.best_epoch;
  res.best_metric = latent ? st.best_score : -st.best_score;

  Rng troot = root_rng(tc.seed).stream("train");
  for (size_t epoch = st.next_epoch; epoch < tc.max_epochs; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    std::vector<size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle = troot.stream("shuffle").stream(epoch);
    for (size_t i = order.size() - 1; i > 0; --i) {
      size_t j = static_cast<size_t>(shuffle.next_u64() % (i + 1));
      std::swap(order[i], order[j]);
    }
    double loss_sum = 0.0;
    for (size_t b0 = 0, bi = 0; b0 < order.size(); b0 += tc.batch_size, ++bi) {
      const size_t b1 = std::min(b0 + tc.batch_size, order.size());
      std::vector<size_t> idx(order.begin() + static_cast<long>(b0),
                              order.begin() + static_cast<long>(b1));
      SequenceBatch batch = make_batch(train, idx);
      double batch_loss =
          train_batch(model, st.adam, batch, troot.stream("noise").stream(epoch).stream(bi), tc);
      if (!std::isfinite(batch_loss))
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch + 1) +
                           ", batch " + std::to_string(bi));
      loss_sum += batch_loss * static_cast<double>(idx.size());
    }

    double vmetric = latent ? eval_elbo(model, valid, troot.stream("valid").stream(epoch))
                            : eval_rnn_nll(model, valid);
    if (!std::isfinite(vmetric))
      throw NumericError("non-finite validation metric at epoch " + std::to_string(epoch + 1));
    double score = latent ? vmetric : -vmetric;
    auto t1 = std::chrono::steady_clock::now();
    EpochMetric em;
    em.epoch = epoch + 1;
    em.train_loss = loss_sum / static_cast<double>(train.size());
    em.valid_metric = vmetric;
    em.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
    res.history.push_back(em);

    bool improved = st.best_epoch == 0 || score > st.best_score;
    if (improved) {
      st.best_score = score;
      st.best_epoch = epoch + 1;
      st.bad_epochs = 0;
      res.best_params = model.params;
      res.best_epoch = epoch + 1;
      res.best_metric = vmetric;
    } else {
      st.bad_epochs += 1;
    }
    st.next_epoch = epoch + 1;
    if (hook) hook(em, model.params, improved, st);
    if (st.bad_epochs >= tc.patience) {
      res.stopped_early = true;
      break;
    }
  }
  return res;
}

// ---------------------------------------------------------------- state io

namespace {

constexpr char kTrainMagic[4] = {'V', 'T', 'R', 'N'};
constexpr uint32_t kTrainVersion = 1;

void write_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace

void save_train_state(const std::string& path, const TrainState& st, const ParamStore& store) {
  if (st.adam.m.size() != store.size())
    throw ContractError("train state: not aligned with parameters");
  uint64_t score_bits;
  static_assert(sizeof(double) == sizeof(uint64_t));
  std::memcpy(&score_bits, &st.best_score, 8);
  nlohmann::json header;
  header["format"] = "vrnn-train-state";
  header["version"] = kTrainVersion;
  header["t"] = st.adam.t;
  header["next_epoch"] = st.next_epoch;
  header["best_epoch"] = st.best_epoch;
  header["bad_epochs"] = st.bad_epochs;
  header["best_score_bits"] = score_bits;
  nlohmann::json params = nlohmann::json::array();
  for (size_t i = 0; i < store.size(); ++i) {
    const ParamStore::Entry& e = store.entry(static_cast<int>(i));
    params.push_back({{"name", e.name}, {"shape", e.value.shape}});
  }
  header["params"] = params;
  std::string htext = header.dump();

  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("train state: cannot open " + path + " for writing");
  os.write(kTrainMagic, 4);
  write_u32(os, kTrainVersion);
  write_u32(os, static_cast<uint32_t>(htext.size()));
  os.write(htext.data(), static_cast<std::streamsize>(htext.size()));
  for (size_t i = 0; i < store.size(); ++i) {
    os.write(reinterpret_cast<const char*>(st.adam.m[i].v.data()),
             static_cast<std::streamsize>(st.adam.m[i].v.size() * 8));
    os.write(reinterpret_cast<const char*>(st.adam.v[i].v.data()),
             static_cast<std::streamsize>(st.adam.v[i].v.size() * 8));
  }
  if (!os) throw FormatError("train state: write failed for " + path);
}

TrainState load_train_state(const std::string& path, const ParamStore& store) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("train state: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kTrainMagic, 4) != 0)
    throw FormatError("train state: bad magic in " + path);
  uint32_t version = read_u32(is);
  if (version != kTrainVersion)
    throw FormatError("train state: unsupported version " + std::to_string(version));
  uint32_t hlen = read_u32(is);
  std::string htext(hlen, '\0');
  is.read(htext.data(), hlen);
  if (!is) throw FormatError("train state: truncated header");
  nlohmann::json header = nlohmann::json::parse(htext, nullptr, false);
  if (header.is_discarded()) throw FormatError("train state: malformed header JSON");

  const auto& params = header["params"];
  if (params.size() != store.size())
    throw FormatError("train state: parameter count mismatch");
  TrainState st;
  st.adam.t = header["t"].get<size_t>();
  st.next_epoch = header["next_epoch"].get<size_t>();
  st.best_epoch = header["best_epoch"].get<size_t>();
  st.bad_epochs = header["bad_epochs"].get<size_t>();
  uint64_t score_bits = header["best_score_bits"].get<uint64_t>();
  std::memcpy(&st.best_score, &score_bits, 8);
  for (size_t i = 0; i < store.size(); ++i) {
    const ParamStore::Entry& e = store.entry(static_cast<int>(i));
    if (params[i]["name"].get<std::string>() != e.name)
      throw FormatError("train state: parameter order mismatch at " + e.name);
    if (params[i]["shape"].get<std::vector<size_t>>() != e.value.shape)
      throw FormatError("train state: shape mismatch for " + e.name);
    Tensor m = Tensor::zeros(e.value.shape);
    Tensor v = Tensor::zeros(e.value.shape);
    is.read(reinterpret_cast<char*>(m.v.data()), static_cast<std::streamsize>(m.v.size() * 8));
    is.read(reinterpret_cast<char*>(v.v.data()), static_cast<std::streamsize>(v.v.size() * 8));
    if (!is) throw FormatError("train state: truncated moments for " + e.name);
    st.adam.m.push_back(std::move(m));
    st.adam.v.push_back(std::move(v));
  }
  return st;
}

}  // namespace vrnn
