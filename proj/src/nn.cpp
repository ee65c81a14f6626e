#include "vrnn/nn.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace vrnn {

int ParamStore::add(std::string name, Tensor value, ParamKind kind, size_t fan_in,
                    size_t fan_out) {
  if (find(name) >= 0) throw ContractError("param store: duplicate name " + name);
  entries_.push_back(Entry{std::move(name), std::move(value), kind, fan_in, fan_out});
  return static_cast<int>(entries_.size()) - 1;
}

int ParamStore::find(const std::string& name) const {
  for (size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].name == name) return static_cast<int>(i);
  return -1;
}

size_t ParamStore::param_count() const {
  size_t n = 0;
  for (const Entry& e : entries_) n += e.value.numel();
  return n;
}

void init_params(ParamStore& store, uint64_t seed) {
  Rng root = root_rng(seed).stream("init");
  for (size_t i = 0; i < store.size(); ++i) {
    ParamStore::Entry& e = store.entry(static_cast<int>(i));
    Rng r = root.stream(e.name);
    switch (e.kind) {
      case ParamKind::Weight: {
        double a = std::sqrt(6.0 / static_cast<double>(e.fan_in + e.fan_out));
        for (double& w : e.value.v) w = r.uniform(-a, a);
        break;
      }
      case ParamKind::Bias:
        for (double& w : e.value.v) w = 0.0;
        break;
      case ParamKind::LstmGateWeight: {
        // fan_out holds the per-gate hidden size, so the scale is per gate block.
        double a = std::sqrt(6.0 / static_cast<double>(e.fan_in + e.fan_out));
        for (double& w : e.value.v) w = r.uniform(-a, a);
        break;
      }
      case ParamKind::LstmGateBias: {
        size_t p = e.fan_out;
        for (size_t j = 0; j < e.value.numel(); ++j)
          e.value.v[j] = (j >= p && j < 2 * p) ? 1.0 : 0.0;  // forget gate block
        break;
      }
    }
  }
}

Bound bind(const ParamStore& store, Tape* tape) {
  Bound b;
  b.tensors.reserve(store.size());
  for (size_t i = 0; i < store.size(); ++i) {
    const Tensor& value = store.value(static_cast<int>(i));
    b.tensors.push_back(tape ? tape->leaf(value) : value);
  }
  return b;
}

LinearLayer make_linear(ParamStore& store, const std::string& name, size_t in, size_t out) {
  LinearLayer l;
  l.in = in;
  l.out = out;
  l.W = store.add(name + ".W", Tensor::zeros({out, in}), ParamKind::Weight, in, out);
  l.b = store.add(name + ".b", Tensor::zeros({out}), ParamKind::Bias, in, out);
  return l;
}

Tensor linear_forward(const LinearLayer& layer, const Bound& p, const Tensor& x, Tape* tape) {
  if (x.rank() != 2 || x.shape[1] != layer.in)
    throw ShapeError("linear: input " + shape_str(x.shape) + " does not match in=" +
                     std::to_string(layer.in));
  Tensor y = matmul(x, transpose(p.tensors[static_cast<size_t>(layer.W)], tape), tape);
  return add(y, p.tensors[static_cast<size_t>(layer.b)], tape);
}

Mlp make_mlp(ParamStore& store, const std::string& name, const std::vector<size_t>& dims) {
  if (dims.size() < 2) throw ContractError("mlp: need at least in/out dims");
  Mlp m;
  m.in = dims.front();
  m.out = dims.back();
  for (size_t i = 0; i + 1 < dims.size(); ++i)
    m.layers.push_back(make_linear(store, name + "." + std::to_string(i), dims[i], dims[i + 1]));
  return m;
}

Tensor mlp_forward(const Mlp& mlp, const Bound& p, const Tensor& x, Tape* tape) {
  Tensor h = x;
  for (size_t i = 0; i < mlp.layers.size(); ++i) {
    h = linear_forward(mlp.layers[i], p, h, tape);
    if (i + 1 < mlp.layers.size()) h = relu(h, tape);
  }
  return h;
}

LstmCell make_lstm(ParamStore& store, const std::string& name, size_t input, size_t hidden) {
  LstmCell cell;
  cell.input = input;
  cell.hidden = hidden;
  cell.gates.in = input + hidden;
  cell.gates.out = 4 * hidden;
  cell.gates.W = store.add(name + ".W", Tensor::zeros({4 * hidden, input + hidden}),
                           ParamKind::LstmGateWeight, input + hidden, hidden);
  cell.gates.b = store.add(name + ".b", Tensor::zeros({4 * hidden}), ParamKind::LstmGateBias,
                           input + hidden, hidden);
  return cell;
}

std::pair<Tensor, Tensor> lstm_step(const LstmCell& cell, const Bound& p, const Tensor& x,
                                    const Tensor& h, const Tensor& c, Tape* tape) {
  if (x.rank() != 2 || x.shape[1] != cell.input)
    throw ShapeError("lstm: input " + shape_str(x.shape) + " does not match in=" +
                     std::to_string(cell.input));
  if (h.shape != c.shape || h.rank() != 2 || h.shape[1] != cell.hidden)
    throw ShapeError("lstm: state shape " + shape_str(h.shape));
  const size_t hp = cell.hidden;
  Tensor z = linear_forward(cell.gates, p, concat(x, h, 1, tape), tape);
  Tensor i = sigmoid(slice(z, 1, 0, hp, tape), tape);
  Tensor f = sigmoid(slice(z, 1, hp, 2 * hp, tape), tape);
  Tensor g = tanh(slice(z, 1, 2 * hp, 3 * hp, tape), tape);
  Tensor o = sigmoid(slice(z, 1, 3 * hp, 4 * hp, tape), tape);
  Tensor c_next = add(mul(f, c, tape), mul(i, g, tape), tape);
  Tensor h_next = mul(o, tanh(c_next, tape), tape);
  return {h_next, c_next};
}

// ---------------------------------------------------------------- checkpoint

namespace {

constexpr char kMagic[4] = {'V', 'C', 'K', 'P'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw FormatError("checkpoint: truncated header");
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore& store,
                     const std::string& config_json) {
  nlohmann::json header;
  header["format"] = "vrnn-checkpoint";
  header["version"] = kVersion;
  header["config"] = config_json.empty() ? nlohmann::json(nullptr)
                                         : nlohmann::json::parse(config_json);
  nlohmann::json params = nlohmann::json::array();
  for (size_t i = 0; i < store.size(); ++i) {
    const ParamStore::Entry& e = store.entry(static_cast<int>(i));
    params.push_back({{"name", e.name}, {"shape", e.value.shape}});
  }
  header["params"] = params;
  std::string htext = header.dump();

  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("checkpoint: cannot open " + path + " for writing");
  os.write(kMagic, 4);
  write_u32(os, kVersion);
  write_u32(os, static_cast<uint32_t>(htext.size()));
  os.write(htext.data(), static_cast<std::streamsize>(htext.size()));
  for (size_t i = 0; i < store.size(); ++i) {
    const Tensor& t = store.value(static_cast<int>(i));
    static_assert(sizeof(double) == 8);
    os.write(reinterpret_cast<const char*>(t.v.data()),
             static_cast<std::streamsize>(t.v.size() * 8));
  }
  if (!os) throw FormatError("checkpoint: write failed for " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("checkpoint: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError("checkpoint: bad magic in " + path);
  uint32_t version = read_u32(is);
  if (version != kVersion)
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  uint32_t hlen = read_u32(is);
  std::string htext(hlen, '\0');
  is.read(htext.data(), hlen);
  if (!is) throw FormatError("checkpoint: truncated header");
  nlohmann::json header = nlohmann::json::parse(htext, nullptr, false);
  if (header.is_discarded()) throw FormatError("checkpoint: malformed header JSON");

  LoadedCheckpoint out;
  if (header.contains("config") && !header["config"].is_null())
    out.config_json = header["config"].dump();
  for (const auto& p : header["params"]) {
    std::vector<size_t> shape = p["shape"].get<std::vector<size_t>>();
    size_t n = 1;
    for (size_t d : shape) n *= d;
    std::vector<double> values(n);
    is.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(n * 8));
    if (!is) throw FormatError("checkpoint: truncated values for " + p["name"].get<std::string>());
    out.names.push_back(p["name"].get<std::string>());
    out.values.emplace_back(shape, std::move(values));
  }
  return out;
}

void restore_params(ParamStore& store, const LoadedCheckpoint& ckpt) {
  if (ckpt.names.size() != store.size())
    throw FormatError("checkpoint: parameter count mismatch (" + std::to_string(ckpt.names.size()) +
                      " vs " + std::to_string(store.size()) + ")");
  for (size_t i = 0; i < ckpt.names.size(); ++i) {
    const ParamStore::Entry& e = store.entry(static_cast<int>(i));
    if (e.name != ckpt.names[i])
      throw FormatError("checkpoint: parameter order mismatch at " + ckpt.names[i] + " vs " +
                        e.name);
    if (e.value.shape != ckpt.values[i].shape)
      throw FormatError("checkpoint: shape mismatch for " + e.name);
    store.value(static_cast<int>(i)).v = ckpt.values[i].v;
  }
}

}  // namespace vrnn
