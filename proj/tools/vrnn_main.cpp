#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "vrnn/data.hpp"
#include "vrnn/model.hpp"
#include "vrnn/optim.hpp"
#include "vrnn/runconfig.hpp"

namespace fs = std::filesystem;
using namespace std::string_literals;

namespace {

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::vector<std::string> expand_inputs(const std::vector<std::string>& paths) {
  std::vector<std::string> files;
  for (const std::string& p : paths) {
    if (fs::is_directory(p)) {
      std::vector<std::string> inside;
      for (const auto& e : fs::directory_iterator(p))
        if (e.is_regular_file()) inside.push_back(e.path().string());
      std::sort(inside.begin(), inside.end());
      files.insert(files.end(), inside.begin(), inside.end());
    } else if (fs::exists(p)) {
      files.push_back(p);
    } else {
      throw vrnn::FormatError("prepare: input " + p + " does not exist");
    }
  }
  return files;
}

struct PrepareArgs {
  std::string kind;
  std::string out;
  std::vector<std::string> inputs;
  uint64_t seed = 0;
  size_t frame_len = 200;
  vrnn::SynthConfig synth;
};

void cmd_prepare(const PrepareArgs& a) {
  vrnn::SequenceDataset ds;
  if (a.kind == "synth") {
    if (!a.inputs.empty())
      throw vrnn::ConfigError("prepare: synth kind takes no input files");
    ds = vrnn::synth_regime_switching(a.synth, a.seed);
  } else {
    std::vector<std::string> files = expand_inputs(a.inputs);
    if (files.empty()) throw vrnn::FormatError("prepare: no input files");
    for (const std::string& f : files) {
      try {
        if (a.kind == "wav") {
          ds.seqs.push_back(vrnn::frame_wav(vrnn::load_wav_file(f), a.frame_len));
        } else {
          vrnn::SequenceDataset part = vrnn::load_strokes(vrnn::read_text_file(f));
          for (auto& s : part.seqs) ds.seqs.push_back(std::move(s));
        }
      } catch (const vrnn::ParseError& e) {
        throw vrnn::ParseError(f + ": " + e.what(), e.offset);
      }
    }
  }

  vrnn::Splits sp = vrnn::split_dataset(ds, a.seed);
  bool strokes = a.kind == "strokes";
  vrnn::NormalizationStats stats = vrnn::compute_stats(sp.train, strokes);
  fs::create_directories(a.out);
  vrnn::container_write(vrnn::normalize(sp.train, stats), a.out + "/train.vseq");
  vrnn::container_write(vrnn::normalize(sp.valid, stats), a.out + "/valid.vseq");
  vrnn::container_write(vrnn::normalize(sp.test, stats), a.out + "/test.vseq");
  vrnn::save_stats(a.out + "/stats.txt", stats);
  std::cout << "prepared " << ds.size() << " sequences (dim " << ds.dim() << "): "
            << sp.train.size() << " train, " << sp.valid.size() << " valid, " << sp.test.size()
            << " test -> " << a.out << "\n";
}

struct TrainArgs {
  std::string config;
  std::string data;
  std::string out;
  int64_t seed = -1;
  bool resume = false;
};

void cmd_train(const TrainArgs& a) {
  vrnn::RunConfig rc =
      a.config.empty() ? vrnn::RunConfig{} : vrnn::RunConfig::load_file(a.config);
  if (!a.data.empty()) rc.data_dir = a.data;
  if (!a.out.empty()) rc.out_dir = a.out;
  if (a.seed >= 0) rc.seed = static_cast<uint64_t>(a.seed);
  rc.train.seed = rc.seed;
  rc.validate();
  if (rc.data_dir.empty()) throw vrnn::ConfigError("train: no data_dir configured");

  vrnn::SequenceDataset train = vrnn::container_read(rc.data_dir + "/train.vseq");
  vrnn::SequenceDataset valid = vrnn::container_read(rc.data_dir + "/valid.vseq");
  if (train.dim() != rc.model.d)
    throw vrnn::ShapeError("train: dataset dim " + std::to_string(train.dim()) +
                           " vs model frame_dim " + std::to_string(rc.model.d));

  fs::create_directories(rc.out_dir);
  vrnn::write_text_file(rc.out_dir + "/config.json", rc.to_json());

  vrnn::Model model = vrnn::build_model(rc.model, rc.seed);
  vrnn::TrainState state;
  const std::string metrics_path = rc.out_dir + "/metrics.log";
  const std::string best_path = rc.out_dir + "/best.ckpt";
  const std::string final_path = rc.out_dir + "/final.ckpt";
  const std::string state_path = rc.out_dir + "/train_state.bin";

  if (a.resume) {
    vrnn::LoadedCheckpoint ckpt = vrnn::load_checkpoint(final_path);
    vrnn::restore_params(model.params, ckpt);
    state = vrnn::load_train_state(state_path, model.params);
  } else {
    vrnn::write_text_file(metrics_path, "epoch train_loss valid_metric wall_seconds\n");
  }

  auto hook = [&](const vrnn::EpochMetric& em, const vrnn::ParamStore& params, bool improved,
                  const vrnn::TrainState& st) {
    std::ofstream log(metrics_path, std::ios::app);
    log << em.epoch << ' ' << fmt(em.train_loss) << ' ' << fmt(em.valid_metric) << ' '
        << fmt(em.wall_seconds) << '\n';
    if (improved) vrnn::save_checkpoint(best_path, params, rc.to_json());
    vrnn::save_checkpoint(final_path, params, rc.to_json());
    vrnn::save_train_state(state_path, st, params);
    std::cout << "epoch " << em.epoch << " train_loss " << em.train_loss << " valid "
              << em.valid_metric << (improved ? " *" : "") << "\n";
  };
  vrnn::FitResult res = vrnn::fit(model, train, valid, rc.train, &state, hook);
  std::cout << "best epoch " << res.best_epoch << " valid " << res.best_metric << " -> "
            << best_path << "\n";
}

struct EvalArgs {
  std::string ckpt;
  std::string data;
  std::string split = "test";
  std::string out;
  int64_t k = -1;
  uint64_t seed = 0;
};

vrnn::Model model_from_checkpoint(const std::string& path, vrnn::RunConfig* rc_out = nullptr) {
  vrnn::LoadedCheckpoint ckpt = vrnn::load_checkpoint(path);
  if (ckpt.config_json.empty())
    throw vrnn::FormatError("checkpoint " + path + " carries no config");
  vrnn::RunConfig rc = vrnn::RunConfig::from_json(ckpt.config_json);
  vrnn::Model model = vrnn::build_model(rc.model, rc.seed);
  vrnn::restore_params(model.params, ckpt);
  if (rc_out) *rc_out = rc;
  return model;
}

void cmd_eval(const EvalArgs& a) {
  vrnn::RunConfig rc;
  vrnn::Model model = model_from_checkpoint(a.ckpt, &rc);
  vrnn::SequenceDataset ds = vrnn::container_read(a.data + "/" + a.split + ".vseq");
  if (ds.dim() != model.cfg.d)
    throw vrnn::ShapeError("eval: dataset dim " + std::to_string(ds.dim()) +
                           " vs model frame_dim " + std::to_string(model.cfg.d));
  size_t K = a.k >= 0 ? static_cast<size_t>(a.k) : rc.eval_k;
  if (K == 0) throw vrnn::ConfigError("eval: K must be >= 1");
  double frames = static_cast<double>(ds.total_frames()) / static_cast<double>(ds.size());

  std::ostringstream report;
  report << "family " << vrnn::family_name(model.cfg.family) << ", head "
         << vrnn::head_name(model.cfg.head) << ", " << ds.size() << " sequences, split "
         << a.split << "\n";
  report << "tag per_sequence per_frame\n";
  vrnn::Rng eroot = vrnn::root_rng(a.seed).stream("eval");
  if (model.cfg.family == vrnn::Family::Rnn) {
    double ll = -vrnn::eval_rnn_nll(model, ds);
    report << "=  " << fmt(ll) << ' ' << fmt(ll / frames) << "\n";
  } else {
    double lb = vrnn::eval_elbo(model, ds, eroot.stream("elbo"));
    double is = vrnn::eval_is(model, ds, K, eroot.stream("is"));
    report << ">= " << fmt(lb) << ' ' << fmt(lb / frames) << "\n";
    report << "~= " << fmt(is) << ' ' << fmt(is / frames) << " (K=" << K << ")\n";
  }
  std::cout << report.str();
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    vrnn::write_text_file(a.out + "/eval.txt", report.str());
  }
}

struct SampleArgs {
  std::string ckpt;
  std::string out;
  size_t T = 100;
  size_t n = 1;
  uint64_t seed = 0;
  bool zero_noise = false;
  bool dump = false;
};

void cmd_sample(const SampleArgs& a) {
  vrnn::Model model = model_from_checkpoint(a.ckpt);
  fs::create_directories(a.out);
  vrnn::SequenceDataset out;
  vrnn::Rng sroot = vrnn::root_rng(a.seed).stream("sample");
  std::ostringstream dump;
  for (size_t i = 0; i < a.n; ++i) {
    std::vector<vrnn::OutputDensity> dens;
    out.seqs.push_back(
        vrnn::generate(model, a.T, sroot.stream(i), a.zero_noise, a.dump ? &dens : nullptr));
    if (a.dump) {
      dump << "sequence " << i << "\n";
      for (size_t t = 0; t < dens.size(); ++t) {
        dump << "t " << (t + 1);
        const vrnn::OutputDensity& d = dens[t];
        if (d.head == vrnn::Head::Gauss) {
          dump << " mu";
          for (double x : d.gauss.mu.v) dump << ' ' << fmt(x);
          dump << " sigma";
          for (double x : d.gauss.sigma.v) dump << ' ' << fmt(x);
        } else {
          dump << " log_alpha";
          for (double x : d.gmm.log_alpha.v) dump << ' ' << fmt(x);
          dump << " mu";
          for (double x : d.gmm.mu.v) dump << ' ' << fmt(x);
          dump << " sigma";
          for (double x : d.gmm.sigma.v) dump << ' ' << fmt(x);
          if (d.head == vrnn::Head::GmmBernoulli) dump << " pen " << fmt(d.bern.p.v[0]);
        }
        dump << "\n";
      }
    }
  }
  vrnn::container_write(out, a.out + "/samples.vseq");
  if (a.dump) vrnn::write_text_file(a.out + "/samples_params.txt", dump.str());
  std::cout << "wrote " << a.n << " sequences of " << a.T << " frames to " << a.out
            << "/samples.vseq\n";
}

struct AnalyzeArgs {
  std::string ckpt;
  std::string data;
  std::string split = "test";
  std::string out;
};

void cmd_analyze(const AnalyzeArgs& a) {
  vrnn::Model model = model_from_checkpoint(a.ckpt);
  if (model.cfg.family == vrnn::Family::Rnn)
    throw vrnn::ConfigError("analyze: the rnn family has no latent trace");
  vrnn::SequenceDataset ds = vrnn::container_read(a.data + "/" + a.split + ".vseq");
  if (ds.dim() != model.cfg.d)
    throw vrnn::ShapeError("analyze: dataset dim " + std::to_string(ds.dim()) +
                           " vs model frame_dim " + std::to_string(model.cfg.d));
  fs::create_directories(a.out);
  for (size_t i = 0; i < ds.size(); ++i) {
    vrnn::LatentTrace tr = vrnn::latent_trace(model, ds.seqs[i]);
    std::ostringstream os;
    os << "t delta kl";
    for (size_t j = 0; j < model.cfg.k; ++j) os << " kl_" << j;
    os << "\n";
    for (size_t t = 0; t < tr.kl.size(); ++t) {
      os << (t + 1) << ' ' << (t == 0 ? "-"s : fmt(tr.delta[t - 1])) << ' ' << fmt(tr.kl[t]);
      for (double x : tr.kl_dims[t]) os << ' ' << fmt(x);
      os << "\n";
    }
    char name[32];
    std::snprintf(name, sizeof name, "/trace_%04zu.txt", i);
    vrnn::write_text_file(a.out + name, os.str());
  }
  std::cout << "wrote " << ds.size() << " trace tables to " << a.out << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sequence generative modelling with variational recurrent networks"};
  app.require_subcommand(1);

  PrepareArgs pa;
  CLI::App* prep = app.add_subcommand("prepare", "Ingest raw data into VSEQ splits");
  prep->add_option("--kind", pa.kind, "Input kind")
      ->required()
      ->check(CLI::IsMember({"wav", "strokes", "synth"}));
  prep->add_option("--out", pa.out, "Output directory")->required();
  prep->add_option("--seed", pa.seed, "Root seed");
  prep->add_option("--frame-len", pa.frame_len, "Samples per frame (wav)");
  prep->add_option("--count", pa.synth.n, "Synthetic sequence count");
  prep->add_option("--frames", pa.synth.frames, "Synthetic frames per sequence");
  prep->add_option("--dim", pa.synth.dim, "Synthetic frame dim");
  prep->add_option("--stay-prob", pa.synth.stay_prob, "Synthetic regime stay probability");
  prep->add_option("--noise", pa.synth.noise_sigma, "Synthetic observation noise");
  prep->add_option("inputs", pa.inputs, "Input files or directories");

  TrainArgs ta;
  CLI::App* tr = app.add_subcommand("train", "Train a model on a prepared dataset");
  tr->add_option("--config", ta.config, "Run config JSON");
  tr->add_option("--data", ta.data, "Prepared dataset directory");
  tr->add_option("--out", ta.out, "Output directory");
  tr->add_option("--seed", ta.seed, "Root seed (overrides config)");
  tr->add_flag("--resume", ta.resume, "Continue from final.ckpt and train_state.bin");

  EvalArgs ea;
  CLI::App* ev = app.add_subcommand("eval", "Report bound and importance-sampled likelihood");
  ev->add_option("--ckpt", ea.ckpt, "Checkpoint path")->required();
  ev->add_option("--data", ea.data, "Prepared dataset directory")->required();
  ev->add_option("--split", ea.split, "Dataset split name");
  ev->add_option("--out", ea.out, "Directory for eval.txt (optional)");
  ev->add_option("-K,--samples", ea.k, "Importance samples");
  ev->add_option("--seed", ea.seed, "Evaluation seed");

  SampleArgs sa;
  CLI::App* sm = app.add_subcommand("sample", "Generate sequences from a checkpoint");
  sm->add_option("--ckpt", sa.ckpt, "Checkpoint path")->required();
  sm->add_option("--out", sa.out, "Output directory")->required();
  sm->add_option("-T,--frames", sa.T, "Frames per sequence");
  sm->add_option("-n,--count", sa.n, "Sequence count");
  sm->add_option("--seed", sa.seed, "Generation seed");
  sm->add_flag("--zero-noise", sa.zero_noise, "Deterministic mean/mode rollout");
  sm->add_flag("--dump-params", sa.dump, "Also write per-step density parameters");

  AnalyzeArgs aa;
  CLI::App* an = app.add_subcommand("analyze", "Write latent transition traces");
  an->add_option("--ckpt", aa.ckpt, "Checkpoint path")->required();
  an->add_option("--data", aa.data, "Prepared dataset directory")->required();
  an->add_option("--split", aa.split, "Dataset split name");
  an->add_option("--out", aa.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (prep->parsed()) cmd_prepare(pa);
    else if (tr->parsed()) cmd_train(ta);
    else if (ev->parsed()) cmd_eval(ea);
    else if (sm->parsed()) cmd_sample(sa);
    else if (an->parsed()) cmd_analyze(aa);
  } catch (const vrnn::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const vrnn::NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const vrnn::DomainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
