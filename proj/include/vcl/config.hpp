#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "vcl/training.hpp"

namespace vcl {

// Fully-resolved run configuration. Defaults come from the preset and the
// protocol; a config file overrides defaults; command-line overrides win.
struct RunConfig {
  std::string protocol;        // pretext | linear | semi | finetune
  std::string preset;          // desk | paper
  std::uint64_t seed = 1;
  std::string out_dir;
  std::string data_path;
  std::string checkpoint;      // required for eval protocols; resume for pretext
  std::string stream;          // joint | bone | motion | all
  std::string encoder_preset;  // desk | paper-quarter
  std::size_t embed_dim = 16;
  double tau = 0.07;
  double momentum = 0.99;
  std::size_t queue_size = 512;
  double shear_beta = 0.5;
  std::size_t crop_gamma = 6;
  double lr = 1e-3;
  double weight_decay = 1e-4;
  std::size_t epochs = 30;
  std::size_t batch = 32;
  double fraction = 0.1;
  bool variational = true;
  std::vector<double> fusion_weights = {0.6, 0.6, 0.4};
  std::size_t workers = 1;
  std::size_t split_mod = 4;
  std::size_t lr_milestone = 25;

  // Canonical "key = value" text, keys sorted; its FNV-1a hash is the config
  // hash stored in checkpoints.
  std::string resolved_text() const;
  std::uint64_t hash() const;

  TrainOptions train_options(Stream s) const;
  std::vector<Stream> selected_streams() const;
};

// Flat "key = value" file with '#' comments. Returns pairs in file order.
std::vector<std::pair<std::string, std::string>> parse_config_file(
    const std::string& path);

// Applies defaults, file values, then overrides; rejects unknown keys and
// out-of-range values with ConfigError.
RunConfig resolve_config(
    const std::vector<std::pair<std::string, std::string>>& file_values,
    const std::vector<std::pair<std::string, std::string>>& overrides);

}  // namespace vcl
