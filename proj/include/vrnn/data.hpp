#ifndef VRNN_DATA_HPP
#define VRNN_DATA_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vrnn/rng.hpp"
#include "vrnn/tensor.hpp"

namespace vrnn {

// One variable-length sequence of d-dimensional frames, stored as 32-bit
// floats. `labels` is an optional side channel for synthetic data (hidden
// regime per frame); it is diagnostics-only and never serialized.
struct Sequence {
  size_t frames = 0;  // T
  size_t dim = 0;     // d
  std::vector<float> values;  // row-major [T x d]
  std::vector<uint8_t> labels;

  float at(size_t t, size_t i) const { return values[t * dim + i]; }
};

struct NormalizationStats {
  std::vector<double> mean;
  std::vector<double> std;  // floored at 1e-8
};

struct SequenceDataset {
  std::vector<Sequence> seqs;
  size_t dim() const { return seqs.empty() ? 0 : seqs[0].dim; }
  size_t size() const { return seqs.size(); }
  size_t total_frames() const;
};

// Padded minibatch with prefix masks; values promoted to doubles for the
// numeric core. Masked entries are zero.
struct SequenceBatch {
  size_t batch = 0, t_max = 0, dim = 0;
  std::vector<double> values;  // [batch x t_max x dim]
  std::vector<double> mask;    // [batch x t_max], 1 while t < length
  std::vector<size_t> lengths;

  Tensor frames_at(size_t t) const;  // [batch x dim] constant
  Tensor mask_at(size_t t) const;    // [batch] constant
  size_t frame_count() const;        // sum of lengths
};

SequenceBatch make_batch(const SequenceDataset& ds, const std::vector<size_t>& indices);

// Time window [lo, hi) of a batch for truncated BPTT; lengths clip to the
// window.
SequenceBatch time_slice(const SequenceBatch& b, size_t lo, size_t hi);

// --- WAV ingestion ---

struct WavFile {
  uint32_t sample_rate = 0;
  uint16_t channels = 0;             // channel count of the source file
  std::vector<int16_t> samples;      // mono after ingestion
};

// RIFF/WAVE with PCM format code 1, 16-bit. Multi-channel input is averaged
// to mono. Parse errors carry the byte offset.
WavFile load_wav(const std::vector<uint8_t>& bytes);
WavFile load_wav_file(const std::string& path);

// Non-overlapping windows of `frame_len` consecutive samples, scaled to
// [-1, 1) by 1/32768; the trailing remainder is dropped.
Sequence frame_wav(const WavFile& wav, size_t frame_len = 200);

// --- normalization ---

// Global per-dimension mean/std over all frames. When `exclude_last_dim` is
// set (pen channel of stroke data) that dimension keeps mean 0 / std 1.
NormalizationStats compute_stats(const SequenceDataset& ds, bool exclude_last_dim = false);
SequenceDataset normalize(const SequenceDataset& ds, const NormalizationStats& stats);
SequenceDataset denormalize(const SequenceDataset& ds, const NormalizationStats& stats);

void save_stats(const std::string& path, const NormalizationStats& stats);
NormalizationStats load_stats(const std::string& path);

// --- splits ---

struct Splits {
  SequenceDataset train, valid, test;
};

// Seeded shuffle, then floor cuts at 90% / 95%. Requires >= 20 sequences.
Splits split_dataset(const SequenceDataset& ds, uint64_t seed);

// --- synthetic generator ---

struct SynthConfig {
  size_t n = 100, frames = 100, dim = 8;
  double stay_prob = 0.95;
  double noise_sigma = 0.05;
  // Cycles per frame for the two hidden regimes.
  double freq0 = 1.0, freq1 = 3.0;
  double amplitude = 1.0;
};

// Hidden 2-state Markov chain emitting sinusoid frames with state-dependent
// frequency plus Gaussian noise; phase is continuous across frames. Hidden
// states are recorded in Sequence::labels.
SequenceDataset synth_regime_switching(const SynthConfig& cfg, uint64_t seed);

// --- container io ---
// "VSEQ" magic, u32 version 1, u32 count, then count x (u32 T_i, u32 d_i),
// then all frames as little-endian 32-bit floats. Bit-exact round trip.

void container_write(const SequenceDataset& ds, const std::string& path);
SequenceDataset container_read(const std::string& path);

// --- handwriting strokes ---
// One "x y pen" triple per line, blank line between sequences. Absolute
// coordinates become per-step offsets; the first row is the offset from the
// origin. Pen must be 0 or 1.

SequenceDataset load_strokes(const std::string& text);

}  // namespace vrnn

#endif
