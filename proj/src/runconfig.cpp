#include "vrnn/runconfig.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace vrnn {

using nlohmann::json;

namespace {

json train_to_json(const TrainConfig& tc) {
  json j;
  j["batch_size"] = tc.batch_size;
  j["max_epochs"] = tc.max_epochs;
  j["patience"] = tc.patience;
  j["clip_norm"] = tc.clip_norm;
  j["lr"] = tc.lr;
  j["metric"] = tc.metric;
  j["truncate"] = tc.truncate;
  return j;
}

TrainConfig train_from_json(const json& j) {
  TrainConfig tc;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& key = it.key();
    try {
      if (key == "batch_size") tc.batch_size = it.value().get<size_t>();
      else if (key == "max_epochs") tc.max_epochs = it.value().get<size_t>();
      else if (key == "patience") tc.patience = it.value().get<size_t>();
      else if (key == "clip_norm") tc.clip_norm = it.value().get<double>();
      else if (key == "lr") tc.lr = it.value().get<double>();
      else if (key == "metric") tc.metric = it.value().get<std::string>();
      else if (key == "truncate") tc.truncate = it.value().get<size_t>();
      else throw ConfigError("train config: unknown key '" + key + "'");
    } catch (const json::exception& e) {
      throw ConfigError("train config: bad value for '" + key + "': " + e.what());
    }
  }
  return tc;
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  train.validate();
  if (eval_k == 0) throw ConfigError("config: eval_k must be >= 1");
}

std::string RunConfig::to_json() const {
  json j;
  j["model"] = json::parse(model.to_json());
  j["train"] = train_to_json(train);
  j["data_dir"] = data_dir;
  j["out_dir"] = out_dir;
  j["eval_k"] = eval_k;
  j["seed"] = seed;
  return j.dump(2) + "\n";
}

RunConfig RunConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  RunConfig rc;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& key = it.key();
    try {
      if (key == "model") rc.model = ModelConfig::from_json(it.value().dump());
      else if (key == "train") rc.train = train_from_json(it.value());
      else if (key == "data_dir") rc.data_dir = it.value().get<std::string>();
      else if (key == "out_dir") rc.out_dir = it.value().get<std::string>();
      else if (key == "eval_k") rc.eval_k = it.value().get<size_t>();
      else if (key == "seed") rc.seed = it.value().get<uint64_t>();
      else throw ConfigError("config: unknown key '" + key + "'");
    } catch (const json::exception& e) {
      throw ConfigError("config: bad value for '" + key + "': " + e.what());
    }
  }
  rc.train.seed = rc.seed;
  return rc;
}

RunConfig RunConfig::load_file(const std::string& path) {
  return from_json(read_text_file(path));
}

std::string read_text_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path + " for writing");
  os << text;
  if (!os) throw FormatError("write failed for " + path);
}

}  // namespace vrnn
