#ifndef VRNN_NN_HPP
#define VRNN_NN_HPP

#include <string>
#include <utility>
#include <vector>

#include "vrnn/rng.hpp"
#include "vrnn/tensor.hpp"

namespace vrnn {

enum class ParamKind { Weight, Bias, LstmGateWeight, LstmGateBias };

// Ordered, named parameter registry. Names are stable paths like
// "enc.body.0.W"; iteration order is registration order. Read-shared during
// evaluation, exclusive during optimizer updates.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor value;
    ParamKind kind;
    size_t fan_in = 0;
    size_t fan_out = 0;  // per-gate hidden size for LSTM entries
  };

  int add(std::string name, Tensor value, ParamKind kind, size_t fan_in, size_t fan_out);
  const Entry& entry(int id) const { return entries_[static_cast<size_t>(id)]; }
  Entry& entry(int id) { return entries_[static_cast<size_t>(id)]; }
  Tensor& value(int id) { return entries_[static_cast<size_t>(id)].value; }
  const Tensor& value(int id) const { return entries_[static_cast<size_t>(id)].value; }
  int find(const std::string& name) const;  // -1 if absent
  size_t size() const { return entries_.size(); }
  size_t param_count() const;

 private:
  std::vector<Entry> entries_;
};

// Weights uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)), biases zero,
// LSTM forget-gate bias 1.0. Each parameter draws from a stream derived from
// (seed, name), so shared submodules initialize identically across models.
void init_params(ParamStore& store, uint64_t seed);

// Per-pass binding of store values, either as tape leaves (training) or plain
// constants (evaluation). Indexed by param id.
struct Bound {
  std::vector<Tensor> tensors;
};

Bound bind(const ParamStore& store, Tape* tape);

// y = x W^T + b with b broadcast per row.
struct LinearLayer {
  int W = -1;  // [out x in]
  int b = -1;  // [out]
  size_t in = 0, out = 0;
};

LinearLayer make_linear(ParamStore& store, const std::string& name, size_t in, size_t out);
Tensor linear_forward(const LinearLayer& layer, const Bound& p, const Tensor& x,
                      Tape* tape = nullptr);

// Stack of affine layers with relu between them; the final affine has no
// activation, output heads are applied downstream.
struct Mlp {
  std::vector<LinearLayer> layers;
  size_t in = 0, out = 0;
};

// dims = {in, hidden..., out}; hidden may be empty (single affine).
Mlp make_mlp(ParamStore& store, const std::string& name, const std::vector<size_t>& dims);
Tensor mlp_forward(const Mlp& mlp, const Bound& p, const Tensor& x, Tape* tape = nullptr);

// Gate order in the fused weight/bias is [input, forget, candidate, output].
struct LstmCell {
  LinearLayer gates;  // in: input+hidden, out: 4p
  size_t input = 0, hidden = 0;
};

LstmCell make_lstm(ParamStore& store, const std::string& name, size_t input, size_t hidden);

// i,f,o = sigmoid, g = tanh; c' = f*c + i*g; h' = o * tanh(c').
std::pair<Tensor, Tensor> lstm_step(const LstmCell& cell, const Bound& p, const Tensor& x,
                                    const Tensor& h, const Tensor& c, Tape* tape = nullptr);

// --- checkpoint io ---
// Layout: magic "VCKP", u32 version, u32 header length, JSON header (format,
// version, config echo, ordered parameter names/shapes), then all values as
// 64-bit little-endian floats in header order. Round-trips are bit-exact.

void save_checkpoint(const std::string& path, const ParamStore& store,
                     const std::string& config_json);

struct LoadedCheckpoint {
  std::string config_json;
  std::vector<std::string> names;
  std::vector<Tensor> values;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

// Copy loaded values into a constructed store; names and shapes must match.
void restore_params(ParamStore& store, const LoadedCheckpoint& ckpt);

}  // namespace vrnn

#endif
