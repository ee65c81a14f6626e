#ifndef VRNN_OPTIM_HPP
#define VRNN_OPTIM_HPP

#include <functional>
#include <string>
#include <vector>

#include "vrnn/model.hpp"
#include "vrnn/nn.hpp"

namespace vrnn {

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig cfg;
  std::vector<Tensor> m, v;  // aligned with ParamStore ids
  size_t t = 0;
};

AdamState make_adam(const ParamStore& store, AdamConfig cfg);

// Grads are indexed by param id; empty entries count as zero.
void adam_step(AdamState& st, ParamStore& params, const std::vector<Tensor>& grads);

// Rescale so the global L2 norm is at most max_norm. Returns the pre-clip
// norm.
double clip_grads(std::vector<Tensor>& grads, double max_norm);

struct TrainConfig {
  size_t batch_size = 128;
  size_t max_epochs = 500;
  size_t patience = 20;
  double clip_norm = 5.0;
  double lr = 0.001;
  uint64_t seed = 0;
  std::string metric = "elbo";  // or "nll" (rnn family)
  size_t truncate = 0;          // BPTT window, 0 = full sequence

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct EpochMetric {
  size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double valid_metric = 0.0;
  double wall_seconds = 0.0;
};

// Optimizer and early-stopping position; serializable so an interrupted run
// resumes bitwise.
struct TrainState {
  AdamState adam;
  size_t next_epoch = 0;  // epochs already completed
  size_t best_epoch = 0;  // 0 = none yet
  double best_score = 0.0;
  size_t bad_epochs = 0;
};

struct FitResult {
  std::vector<EpochMetric> history;
  size_t best_epoch = 0;  // 1-based index into overall training
  double best_metric = 0.0;
  ParamStore best_params;
  bool stopped_early = false;
};

// Called after each epoch; `improved` marks a new validation best.
using EpochHook =
    std::function<void(const EpochMetric&, const ParamStore&, bool improved, const TrainState&)>;

// Seeded shuffle each epoch, minibatch Adam on -ELBO (latent families) or NLL
// (rnn), per-epoch validation, early stop after `patience` epochs without
// improvement. All draws are keyed by absolute epoch/batch index so a resumed
// run replays the remaining epochs bitwise. Throws NumericError on non-finite
// loss, naming epoch and batch.
FitResult fit(Model& model, const SequenceDataset& train, const SequenceDataset& valid,
              const TrainConfig& tc, TrainState* state = nullptr, const EpochHook& hook = {});

// "VTRN" binary sidecar holding the Adam moments and loop counters bit-exact.
void save_train_state(const std::string& path, const TrainState& st, const ParamStore& store);
TrainState load_train_state(const std::string& path, const ParamStore& store);

}  // namespace vrnn

#endif
