#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <string>
#include <vector>

#include "json.hpp"
#include "vrnn/data.hpp"
#include "vrnn/model.hpp"
#include "vrnn/nn.hpp"
#include "vrnn/optim.hpp"
#include "vrnn/rng.hpp"
#include "vrnn/runconfig.hpp"

namespace py = pybind11;
using namespace vrnn;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Sequence sequence_from_array(const FloatArray& a) {
  if (a.ndim() != 2) throw ShapeError("sequence array must be 2-d [frames x dim]");
  Sequence s;
  s.frames = static_cast<size_t>(a.shape(0));
  s.dim = static_cast<size_t>(a.shape(1));
  if (s.frames == 0 || s.dim == 0) throw ShapeError("sequence array must be non-empty");
  const float* p = a.data();
  s.values.assign(p, p + s.frames * s.dim);
  return s;
}

py::array_t<float> sequence_to_array(const Sequence& s) {
  py::array_t<float> a({s.frames, s.dim});
  std::memcpy(a.mutable_data(), s.values.data(), s.values.size() * sizeof(float));
  return a;
}

ModelConfig config_from_json(const std::string& text) {
  // accept either a bare model config or a full run config with a model group
  auto j = nlohmann::json::parse(text, nullptr, false);
  if (!j.is_discarded() && j.is_object() && j.contains("model"))
    return RunConfig::from_json(text).model;
  return ModelConfig::from_json(text);
}

std::string config_text(const py::object& config) {
  if (py::isinstance<py::dict>(config))
    return py::module_::import("json").attr("dumps")(config).cast<std::string>();
  return config.cast<std::string>();
}

py::dict fit_model(Model& m, const SequenceDataset& train, const SequenceDataset& valid,
                   size_t batch_size, size_t max_epochs, size_t patience, double clip_norm,
                   double lr, uint64_t seed, const std::string& metric, size_t truncate,
                   bool keep_best) {
  TrainConfig tc;
  tc.batch_size = batch_size;
  tc.max_epochs = max_epochs;
  tc.patience = patience;
  tc.clip_norm = clip_norm;
  tc.lr = lr;
  tc.seed = seed;
  tc.metric = metric.empty() ? (m.cfg.latent() ? "elbo" : "nll") : metric;
  tc.truncate = truncate;

  FitResult res;
  {
    py::gil_scoped_release release;
    res = fit(m, train, valid, tc);
    if (keep_best)
      for (size_t id = 0; id < m.params.size(); ++id)
        m.params.value(static_cast<int>(id)) = res.best_params.value(static_cast<int>(id));
  }

  py::list history;
  for (const EpochMetric& em : res.history) {
    py::dict row;
    row["epoch"] = em.epoch;
    row["train_loss"] = em.train_loss;
    row["valid_metric"] = em.valid_metric;
    row["wall_seconds"] = em.wall_seconds;
    history.append(row);
  }
  py::dict out;
  out["history"] = history;
  out["best_epoch"] = res.best_epoch;
  out["best_metric"] = res.best_metric;
  out["stopped_early"] = res.stopped_early;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Variational recurrent sequence models: core operations";

  py::register_exception<ShapeError>(m, "ShapeError");
  py::register_exception<DomainError>(m, "DomainError");
  py::register_exception<ContractError>(m, "ContractError");
  py::register_exception<ParseError>(m, "ParseError");
  py::register_exception<FormatError>(m, "FormatError");
  py::register_exception<ConfigError>(m, "ConfigError");
  py::register_exception<NumericError>(m, "NumericError");

  py::class_<NormalizationStats>(m, "Stats")
      .def(py::init<>())
      .def_readwrite("mean", &NormalizationStats::mean)
      .def_readwrite("std", &NormalizationStats::std);

  py::class_<SequenceDataset>(m, "Dataset")
      .def(py::init<>())
      .def("__len__", &SequenceDataset::size)
      .def_property_readonly("dim", &SequenceDataset::dim)
      .def("total_frames", &SequenceDataset::total_frames)
      .def("append",
           [](SequenceDataset& ds, const FloatArray& a) {
             ds.seqs.push_back(sequence_from_array(a));
           },
           py::arg("values"))
      .def("sequence",
           [](const SequenceDataset& ds, size_t i) {
             if (i >= ds.size()) throw ContractError("sequence index out of range");
             return sequence_to_array(ds.seqs[i]);
           },
           py::arg("i"))
      .def("labels",
           [](const SequenceDataset& ds, size_t i) {
             if (i >= ds.size()) throw ContractError("sequence index out of range");
             const std::vector<uint8_t>& l = ds.seqs[i].labels;
             py::array_t<uint8_t> a(l.size());
             std::memcpy(a.mutable_data(), l.data(), l.size());
             return a;
           },
           py::arg("i"))
      .def("sequences", [](const SequenceDataset& ds) {
        py::list out;
        for (const Sequence& s : ds.seqs) out.append(sequence_to_array(s));
        return out;
      })
      .def_static("from_arrays", [](const std::vector<FloatArray>& arrays) {
        SequenceDataset ds;
        for (const FloatArray& a : arrays) ds.seqs.push_back(sequence_from_array(a));
        return ds;
      });

  m.def(
      "synth_dataset",
      [](size_t n, size_t frames, size_t dim, double stay_prob, double noise_sigma, double freq0,
         double freq1, double amplitude, uint64_t seed) {
        SynthConfig sc;
        sc.n = n;
        sc.frames = frames;
        sc.dim = dim;
        sc.stay_prob = stay_prob;
        sc.noise_sigma = noise_sigma;
        sc.freq0 = freq0;
        sc.freq1 = freq1;
        sc.amplitude = amplitude;
        return synth_regime_switching(sc, seed);
      },
      py::arg("n") = 100, py::arg("frames") = 100, py::arg("dim") = 8,
      py::arg("stay_prob") = 0.95, py::arg("noise_sigma") = 0.05, py::arg("freq0") = 1.0,
      py::arg("freq1") = 3.0, py::arg("amplitude") = 1.0, py::arg("seed") = 0);

  m.def(
      "split_dataset",
      [](const SequenceDataset& ds, uint64_t seed) {
        Splits sp = split_dataset(ds, seed);
        return py::make_tuple(sp.train, sp.valid, sp.test);
      },
      py::arg("dataset"), py::arg("seed") = 0);

  m.def("compute_stats", &compute_stats, py::arg("dataset"), py::arg("exclude_last_dim") = false);
  m.def("normalize", &normalize, py::arg("dataset"), py::arg("stats"));
  m.def("denormalize", &denormalize, py::arg("dataset"), py::arg("stats"));
  m.def("save_stats", &save_stats, py::arg("path"), py::arg("stats"));
  m.def("load_stats", &load_stats, py::arg("path"));

  m.def("read_vseq", &container_read, py::arg("path"));
  m.def("write_vseq", &container_write, py::arg("dataset"), py::arg("path"));

  m.def(
      "load_wav",
      [](const std::string& path, size_t frame_len) {
        SequenceDataset ds;
        ds.seqs.push_back(frame_wav(load_wav_file(path), frame_len));
        return ds;
      },
      py::arg("path"), py::arg("frame_len") = 200);
  m.def("load_strokes", &load_strokes, py::arg("text"));

  py::class_<Model>(m, "Model")
      .def(py::init([](const py::object& config, uint64_t seed) {
             ModelConfig cfg = config_from_json(config_text(config));
             cfg.validate();
             return build_model(cfg, seed);
           }),
           py::arg("config"), py::arg("seed") = 0)
      .def_property_readonly("config_json", [](const Model& mm) { return mm.cfg.to_json(); })
      .def_property_readonly("config",
                             [](const Model& mm) {
                               return py::module_::import("json").attr("loads")(
                                   mm.cfg.to_json());
                             })
      .def_property_readonly("family", [](const Model& mm) { return family_name(mm.cfg.family); })
      .def_property_readonly("head", [](const Model& mm) { return head_name(mm.cfg.head); })
      .def_property_readonly("frame_dim", [](const Model& mm) { return mm.cfg.d; })
      .def_property_readonly("latent_dim", [](const Model& mm) { return mm.cfg.k; })
      .def_property_readonly("param_count",
                             [](const Model& mm) { return mm.params.param_count(); })
      .def("fit", &fit_model, py::arg("train"), py::arg("valid"), py::arg("batch_size") = 128,
           py::arg("max_epochs") = 500, py::arg("patience") = 20, py::arg("clip_norm") = 5.0,
           py::arg("lr") = 0.001, py::arg("seed") = 0, py::arg("metric") = std::string(),
           py::arg("truncate") = 0, py::arg("keep_best") = true)
      .def(
          "elbo",
          [](const Model& mm, const SequenceDataset& ds, uint64_t seed) {
            py::gil_scoped_release release;
            return eval_elbo(mm, ds, root_rng(seed).stream("eval").stream("elbo"));
          },
          py::arg("dataset"), py::arg("seed") = 0)
      .def(
          "log_likelihood",
          [](const Model& mm, const SequenceDataset& ds, size_t k, uint64_t seed) {
            py::gil_scoped_release release;
            if (mm.cfg.family == Family::Rnn) return -eval_rnn_nll(mm, ds);
            return eval_is(mm, ds, k, root_rng(seed).stream("eval").stream("is"));
          },
          py::arg("dataset"), py::arg("k") = 40, py::arg("seed") = 0)
      .def(
          "nll",
          [](const Model& mm, const SequenceDataset& ds) {
            py::gil_scoped_release release;
            return eval_rnn_nll(mm, ds);
          },
          py::arg("dataset"))
      .def(
          "generate",
          [](const Model& mm, size_t frames, uint64_t seed, bool zero_noise) {
            Sequence s;
            {
              py::gil_scoped_release release;
              s = generate(mm, frames, root_rng(seed).stream("sample"), zero_noise);
            }
            return sequence_to_array(s);
          },
          py::arg("frames"), py::arg("seed") = 0, py::arg("zero_noise") = false)
      .def(
          "latent_trace",
          [](const Model& mm, const FloatArray& a) {
            Sequence s = sequence_from_array(a);
            LatentTrace tr;
            {
              py::gil_scoped_release release;
              tr = latent_trace(mm, s);
            }
            py::dict out;
            out["delta"] = tr.delta;
            out["kl"] = tr.kl;
            out["kl_dims"] = tr.kl_dims;
            return out;
          },
          py::arg("sequence"))
      .def(
          "save",
          [](const Model& mm, const std::string& path) {
            save_checkpoint(path, mm.params, mm.cfg.to_json());
          },
          py::arg("path"))
      .def_static(
          "load",
          [](const std::string& path) {
            LoadedCheckpoint ckpt = load_checkpoint(path);
            if (ckpt.config_json.empty())
              throw FormatError("checkpoint " + path + " carries no config");
            Model mm = build_model(config_from_json(ckpt.config_json), 0);
            restore_params(mm.params, ckpt);
            return mm;
          },
          py::arg("path"));
}
