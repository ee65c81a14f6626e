#ifndef VRNN_RUNCONFIG_HPP
#define VRNN_RUNCONFIG_HPP

#include <string>

#include "vrnn/model.hpp"
#include "vrnn/optim.hpp"

namespace vrnn {

// Full description of one run: the model and training groups plus dataset
// location, output directory, evaluation sample count and the root seed. The
// on-disk form is JSON with one nesting level (model/train groups); the
// effective config is echoed into the output directory and reparses equal.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  std::string data_dir;
  std::string out_dir = "out";
  size_t eval_k = 40;
  uint64_t seed = 0;

  void validate() const;
  std::string to_json() const;
  static RunConfig from_json(const std::string& text);
  static RunConfig load_file(const std::string& path);
  bool operator==(const RunConfig&) const = default;
};

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace vrnn

#endif
