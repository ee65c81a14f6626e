#include "vrnn/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

namespace vrnn {

size_t SequenceDataset::total_frames() const {
  size_t n = 0;
  for (const Sequence& s : seqs) n += s.frames;
  return n;
}

Tensor SequenceBatch::frames_at(size_t t) const {
  Tensor out = Tensor::zeros({batch, dim});
  for (size_t b = 0; b < batch; ++b)
    for (size_t i = 0; i < dim; ++i) out.v[b * dim + i] = values[(b * t_max + t) * dim + i];
  return out;
}

Tensor SequenceBatch::mask_at(size_t t) const {
  Tensor out = Tensor::zeros({batch});
  for (size_t b = 0; b < batch; ++b) out.v[b] = mask[b * t_max + t];
  return out;
}

size_t SequenceBatch::frame_count() const {
  return std::accumulate(lengths.begin(), lengths.end(), size_t{0});
}

SequenceBatch make_batch(const SequenceDataset& ds, const std::vector<size_t>& indices) {
  if (indices.empty()) throw ContractError("make_batch: empty index list");
  SequenceBatch b;
  b.batch = indices.size();
  b.dim = ds.dim();
  for (size_t idx : indices) b.t_max = std::max(b.t_max, ds.seqs[idx].frames);
  b.values.assign(b.batch * b.t_max * b.dim, 0.0);
  b.mask.assign(b.batch * b.t_max, 0.0);
  for (size_t bi = 0; bi < indices.size(); ++bi) {
    const Sequence& s = ds.seqs[indices[bi]];
    if (s.dim != b.dim) throw ShapeError("make_batch: mixed frame dims");
    b.lengths.push_back(s.frames);
    for (size_t t = 0; t < s.frames; ++t) {
      b.mask[bi * b.t_max + t] = 1.0;
      for (size_t i = 0; i < b.dim; ++i)
        b.values[(bi * b.t_max + t) * b.dim + i] = static_cast<double>(s.at(t, i));
    }
  }
  return b;
}

SequenceBatch time_slice(const SequenceBatch& b, size_t lo, size_t hi) {
  if (lo >= hi || hi > b.t_max) throw ContractError("time_slice: bad window");
  SequenceBatch out;
  out.batch = b.batch;
  out.dim = b.dim;
  out.t_max = hi - lo;
  out.values.resize(out.batch * out.t_max * out.dim);
  out.mask.resize(out.batch * out.t_max);
  for (size_t bi = 0; bi < b.batch; ++bi) {
    size_t len = b.lengths[bi];
    out.lengths.push_back(len <= lo ? 0 : std::min(len, hi) - lo);
    for (size_t t = lo; t < hi; ++t) {
      out.mask[bi * out.t_max + (t - lo)] = b.mask[bi * b.t_max + t];
      for (size_t i = 0; i < b.dim; ++i)
        out.values[(bi * out.t_max + (t - lo)) * out.dim + i] =
            b.values[(bi * b.t_max + t) * out.dim + i];
    }
  }
  return out;
}

// ---------------------------------------------------------------- WAV

namespace {

uint32_t rd_u32(const std::vector<uint8_t>& b, size_t off) {
  return static_cast<uint32_t>(b[off]) | (static_cast<uint32_t>(b[off + 1]) << 8) |
         (static_cast<uint32_t>(b[off + 2]) << 16) | (static_cast<uint32_t>(b[off + 3]) << 24);
}

uint16_t rd_u16(const std::vector<uint8_t>& b, size_t off) {
  return static_cast<uint16_t>(static_cast<uint16_t>(b[off]) |
                               (static_cast<uint16_t>(b[off + 1]) << 8));
}

}  // namespace

WavFile load_wav(const std::vector<uint8_t>& bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0)
    throw ParseError("wav: missing RIFF magic", 0);
  if (std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw ParseError("wav: missing WAVE form type", 8);

  WavFile out;
  bool have_fmt = false;
  uint16_t bits = 0;
  size_t off = 12;
  while (off + 8 <= bytes.size()) {
    char id[5] = {0};
    std::memcpy(id, bytes.data() + off, 4);
    uint32_t len = rd_u32(bytes, off + 4);
    size_t body = off + 8;
    if (body + len > bytes.size())
      throw ParseError(std::string("wav: truncated '") + id + "' chunk",
                       static_cast<long long>(off));
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (len < 16) throw ParseError("wav: fmt chunk too short", static_cast<long long>(off));
      uint16_t format = rd_u16(bytes, body);
      if (format != 1)
        throw ParseError("wav: unsupported format code " + std::to_string(format),
                         static_cast<long long>(body));
      out.channels = rd_u16(bytes, body + 2);
      out.sample_rate = rd_u32(bytes, body + 4);
      bits = rd_u16(bytes, body + 14);
      if (bits != 16)
        throw ParseError("wav: unsupported bit depth " + std::to_string(bits),
                         static_cast<long long>(body + 14));
      if (out.channels == 0)
        throw ParseError("wav: zero channels", static_cast<long long>(body + 2));
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      if (!have_fmt) throw ParseError("wav: data chunk before fmt", static_cast<long long>(off));
      size_t n_total = len / 2;
      size_t n_frames = n_total / out.channels;
      out.samples.reserve(n_frames);
      for (size_t f = 0; f < n_frames; ++f) {
        long long acc = 0;
        for (size_t c = 0; c < out.channels; ++c) {
          size_t p = body + (f * out.channels + c) * 2;
          int16_t s = static_cast<int16_t>(rd_u16(bytes, p));
          acc += s;
        }
        double mean = static_cast<double>(acc) / static_cast<double>(out.channels);
        out.samples.push_back(static_cast<int16_t>(std::llround(mean)));
      }
      return out;
    }
    // chunks are word-aligned
    off = body + len + (len & 1);
  }
  throw ParseError("wav: no data chunk", static_cast<long long>(bytes.size()));
}

WavFile load_wav_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("wav: cannot open " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                             std::istreambuf_iterator<char>());
  return load_wav(bytes);
}

Sequence frame_wav(const WavFile& wav, size_t frame_len) {
  if (wav.samples.size() < frame_len)
    throw ContractError("frame: input has " + std::to_string(wav.samples.size()) +
                        " samples, need at least " + std::to_string(frame_len));
  Sequence s;
  s.dim = frame_len;
  s.frames = wav.samples.size() / frame_len;
  s.values.resize(s.frames * frame_len);
  for (size_t i = 0; i < s.frames * frame_len; ++i)
    s.values[i] = static_cast<float>(static_cast<double>(wav.samples[i]) / 32768.0);
  return s;
}

// ---------------------------------------------------------------- normalization

NormalizationStats compute_stats(const SequenceDataset& ds, bool exclude_last_dim) {
  const size_t d = ds.dim();
  if (d == 0) throw ContractError("compute_stats: empty dataset");
  NormalizationStats st;
  st.mean.assign(d, 0.0);
  st.std.assign(d, 1.0);
  std::vector<double> sum(d, 0.0), sumsq(d, 0.0);
  size_t n = 0;
  for (const Sequence& s : ds.seqs)
    for (size_t t = 0; t < s.frames; ++t) {
      for (size_t i = 0; i < d; ++i) {
        double x = static_cast<double>(s.at(t, i));
        sum[i] += x;
        sumsq[i] += x * x;
      }
      ++n;
    }
  for (size_t i = 0; i < d; ++i) {
    if (exclude_last_dim && i == d - 1) continue;
    st.mean[i] = sum[i] / static_cast<double>(n);
    double var = sumsq[i] / static_cast<double>(n) - st.mean[i] * st.mean[i];
    st.std[i] = std::max(std::sqrt(std::max(var, 0.0)), 1e-8);
  }
  return st;
}

namespace {

SequenceDataset apply_affine(const SequenceDataset& ds, const NormalizationStats& st,
                             bool forward) {
  const size_t d = ds.dim();
  if (st.mean.size() != d)
    throw ShapeError("normalize: stats dim " + std::to_string(st.mean.size()) + " vs data dim " +
                     std::to_string(d));
  SequenceDataset out = ds;
  for (Sequence& s : out.seqs)
    for (size_t t = 0; t < s.frames; ++t)
      for (size_t i = 0; i < d; ++i) {
        double x = static_cast<double>(s.at(t, i));
        double y = forward ? (x - st.mean[i]) / st.std[i] : x * st.std[i] + st.mean[i];
        s.values[t * d + i] = static_cast<float>(y);
      }
  return out;
}

}  // namespace

SequenceDataset normalize(const SequenceDataset& ds, const NormalizationStats& stats) {
  return apply_affine(ds, stats, true);
}

SequenceDataset denormalize(const SequenceDataset& ds, const NormalizationStats& stats) {
  return apply_affine(ds, stats, false);
}

void save_stats(const std::string& path, const NormalizationStats& stats) {
  std::ofstream os(path);
  if (!os) throw FormatError("stats: cannot open " + path + " for writing");
  os << "VSTATS 1\n" << stats.mean.size() << "\n";
  os.precision(17);
  for (size_t i = 0; i < stats.mean.size(); ++i) os << (i ? " " : "") << stats.mean[i];
  os << "\n";
  for (size_t i = 0; i < stats.std.size(); ++i) os << (i ? " " : "") << stats.std[i];
  os << "\n";
}

NormalizationStats load_stats(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("stats: cannot open " + path);
  std::string magic;
  int version = 0;
  size_t d = 0;
  is >> magic >> version >> d;
  if (!is || magic != "VSTATS" || version != 1) throw FormatError("stats: bad header in " + path);
  NormalizationStats st;
  st.mean.resize(d);
  st.std.resize(d);
  for (double& x : st.mean) is >> x;
  for (double& x : st.std) is >> x;
  if (!is) throw FormatError("stats: truncated " + path);
  return st;
}

// ---------------------------------------------------------------- splits

Splits split_dataset(const SequenceDataset& ds, uint64_t seed) {
  const size_t n = ds.size();
  if (n < 20) throw ContractError("split: need at least 20 sequences, got " + std::to_string(n));
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng r = root_rng(seed).stream("split");
  // Fisher-Yates
  for (size_t i = n - 1; i > 0; --i) {
    size_t j = static_cast<size_t>(r.next_u64() % (i + 1));
    std::swap(order[i], order[j]);
  }
  size_t cut1 = (n * 9) / 10;
  size_t cut2 = (n * 95) / 100;
  Splits out;
  for (size_t i = 0; i < n; ++i) {
    const Sequence& s = ds.seqs[order[i]];
    if (i < cut1)
      out.train.seqs.push_back(s);
    else if (i < cut2)
      out.valid.seqs.push_back(s);
    else
      out.test.seqs.push_back(s);
  }
  return out;
}

// ---------------------------------------------------------------- synth

SequenceDataset synth_regime_switching(const SynthConfig& cfg, uint64_t seed) {
  SequenceDataset ds;
  Rng base = root_rng(seed).stream("synth");
  constexpr double kTwoPi = 6.283185307179586476925286766559;
  for (size_t si = 0; si < cfg.n; ++si) {
    Rng r = base.stream(si);
    Sequence s;
    s.frames = cfg.frames;
    s.dim = cfg.dim;
    s.values.resize(cfg.frames * cfg.dim);
    s.labels.resize(cfg.frames);
    uint8_t state = r.uniform() < 0.5 ? 0 : 1;
    double phase = r.uniform(0.0, kTwoPi);
    for (size_t t = 0; t < cfg.frames; ++t) {
      if (t > 0 && r.uniform() >= cfg.stay_prob) state = 1 - state;
      s.labels[t] = state;
      double freq = state == 0 ? cfg.freq0 : cfg.freq1;
      double dphase = kTwoPi * freq / static_cast<double>(cfg.dim);
      for (size_t i = 0; i < cfg.dim; ++i) {
        double clean = cfg.amplitude * std::sin(phase);
        s.values[t * cfg.dim + i] = static_cast<float>(clean + cfg.noise_sigma * r.normal());
        phase += dphase;
        if (phase > kTwoPi) phase -= kTwoPi;
      }
    }
    ds.seqs.push_back(std::move(s));
  }
  return ds;
}

// ---------------------------------------------------------------- container

namespace {

constexpr char kVseqMagic[4] = {'V', 'S', 'E', 'Q'};
constexpr uint32_t kVseqVersion = 1;

void wr_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t rd_u32_stream(std::istream& is, const char* what) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw FormatError(std::string("vseq: truncated ") + what);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace

void container_write(const SequenceDataset& ds, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("vseq: cannot open " + path + " for writing");
  os.write(kVseqMagic, 4);
  wr_u32(os, kVseqVersion);
  wr_u32(os, static_cast<uint32_t>(ds.size()));
  for (const Sequence& s : ds.seqs) {
    wr_u32(os, static_cast<uint32_t>(s.frames));
    wr_u32(os, static_cast<uint32_t>(s.dim));
  }
  static_assert(sizeof(float) == 4);
  for (const Sequence& s : ds.seqs)
    os.write(reinterpret_cast<const char*>(s.values.data()),
             static_cast<std::streamsize>(s.values.size() * 4));
  if (!os) throw FormatError("vseq: write failed for " + path);
}

SequenceDataset container_read(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("vseq: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kVseqMagic, 4) != 0)
    throw FormatError("vseq: bad magic in " + path);
  uint32_t version = rd_u32_stream(is, "version");
  if (version != kVseqVersion)
    throw FormatError("vseq: unsupported version " + std::to_string(version));
  uint32_t count = rd_u32_stream(is, "count");
  SequenceDataset ds;
  ds.seqs.resize(count);
  for (uint32_t i = 0; i < count; ++i) {
    ds.seqs[i].frames = rd_u32_stream(is, "sequence length");
    ds.seqs[i].dim = rd_u32_stream(is, "frame dim");
  }
  for (uint32_t i = 0; i < count; ++i) {
    Sequence& s = ds.seqs[i];
    s.values.resize(s.frames * s.dim);
    is.read(reinterpret_cast<char*>(s.values.data()),
            static_cast<std::streamsize>(s.values.size() * 4));
    if (!is) throw FormatError("vseq: truncated frame data in " + path);
  }
  return ds;
}

// ---------------------------------------------------------------- strokes

SequenceDataset load_strokes(const std::string& text) {
  SequenceDataset ds;
  std::vector<std::array<double, 3>> points;
  auto flush = [&]() {
    if (points.empty()) return;
    Sequence s;
    s.dim = 3;
    s.frames = points.size();
    s.values.resize(points.size() * 3);
    double px = 0.0, py = 0.0;
    for (size_t t = 0; t < points.size(); ++t) {
      s.values[t * 3 + 0] = static_cast<float>(points[t][0] - px);
      s.values[t * 3 + 1] = static_cast<float>(points[t][1] - py);
      s.values[t * 3 + 2] = static_cast<float>(points[t][2]);
      px = points[t][0];
      py = points[t][1];
    }
    ds.seqs.push_back(std::move(s));
    points.clear();
  };

  std::istringstream is(text);
  std::string line;
  long long line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    // trim trailing CR and whitespace-only lines separate sequences
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t'))
      line.pop_back();
    if (line.empty()) {
      flush();
      continue;
    }
    std::istringstream ls(line);
    double x, y, pen;
    if (!(ls >> x >> y >> pen)) throw ParseError("strokes: malformed line", line_no);
    std::string extra;
    if (ls >> extra) throw ParseError("strokes: trailing tokens", line_no);
    if (pen != 0.0 && pen != 1.0) throw ParseError("strokes: pen must be 0 or 1", line_no);
    points.push_back({x, y, pen});
  }
  flush();
  return ds;
}

}  // namespace vrnn
