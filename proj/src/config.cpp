#include "vcl/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <sstream>

#include "vcl/checkpoint.hpp"
#include "vcl/errors.hpp"

namespace vcl {

namespace {

const std::set<std::string> kKnownKeys = {
    "protocol",    "preset",       "seed",          "out_dir",
    "data.path",   "checkpoint",   "stream",        "encoder.preset",
    "embed_dim",   "tau",          "momentum",      "queue_size",
    "shear_beta",  "crop_gamma",   "lr",            "weight_decay",
    "epochs",      "batch",        "fraction",      "variational",
    "fusion_weights", "workers",   "split_mod",     "lr_milestone",
};

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': not a number: '" + v + "'");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const unsigned long long u = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return u;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': not a non-negative integer: '" +
                      v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "': expected true/false: '" + v + "'");
}

std::vector<double> parse_weights(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string part;
  while (std::getline(ss, part, ',')) {
    out.push_back(parse_double(key, trim(part)));
  }
  return out;
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::vector<std::pair<std::string, std::string>> parse_config_file(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected key = value");
    }
    out.emplace_back(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return out;
}

RunConfig resolve_config(
    const std::vector<std::pair<std::string, std::string>>& file_values,
    const std::vector<std::pair<std::string, std::string>>& overrides) {
  std::map<std::string, std::string> kv;
  for (const auto& src : {file_values, overrides}) {
    for (const auto& [key, value] : src) {
      if (kKnownKeys.find(key) == kKnownKeys.end()) {
        throw ConfigError("unknown config key '" + key + "'");
      }
      kv[key] = value;
    }
  }
  auto take = [&](const char* key) {
    auto it = kv.find(key);
    if (it == kv.end()) return std::string();
    return it->second;
  };
  auto has = [&](const char* key) { return kv.count(key) != 0; };

  RunConfig c;
  c.protocol = has("protocol") ? take("protocol") : "pretext";
  if (c.protocol != "pretext" && c.protocol != "linear" && c.protocol != "semi" &&
      c.protocol != "finetune") {
    throw ConfigError("config key 'protocol': unknown protocol '" + c.protocol +
                      "'");
  }
  c.preset = has("preset") ? take("preset") : "desk";
  if (c.preset != "desk" && c.preset != "paper") {
    throw ConfigError("config key 'preset': expected desk or paper");
  }
  const bool paper = c.preset == "paper";
  const bool pretext = c.protocol == "pretext";

  // Preset- and protocol-dependent defaults.
  c.encoder_preset = paper ? "paper-quarter" : "desk";
  c.momentum = paper ? 0.999 : 0.99;
  c.queue_size = paper ? 30000 : 512;
  c.lr = pretext ? 1e-3 : 0.03;
  c.epochs = pretext ? (paper ? 300 : 30) : (paper ? 100 : 20);

  if (has("encoder.preset")) c.encoder_preset = take("encoder.preset");
  c.embed_dim = StgcnConfig::preset(c.encoder_preset).embed_dim;

  if (has("seed")) c.seed = parse_u64("seed", take("seed"));
  c.out_dir = has("out_dir") ? take("out_dir") : "run_out";
  c.data_path = take("data.path");
  c.checkpoint = take("checkpoint");
  c.stream = has("stream") ? take("stream") : "joint";
  if (c.stream != "joint" && c.stream != "bone" && c.stream != "motion" &&
      c.stream != "all") {
    throw ConfigError("config key 'stream': unknown stream '" + c.stream + "'");
  }
  if (has("embed_dim")) {
    c.embed_dim = static_cast<std::size_t>(parse_u64("embed_dim", take("embed_dim")));
  }
  if (has("tau")) c.tau = parse_double("tau", take("tau"));
  if (has("momentum")) c.momentum = parse_double("momentum", take("momentum"));
  if (has("queue_size")) {
    c.queue_size = static_cast<std::size_t>(parse_u64("queue_size", take("queue_size")));
  }
  if (has("shear_beta")) c.shear_beta = parse_double("shear_beta", take("shear_beta"));
  if (has("crop_gamma")) {
    c.crop_gamma = static_cast<std::size_t>(parse_u64("crop_gamma", take("crop_gamma")));
  }
  if (has("lr")) c.lr = parse_double("lr", take("lr"));
  if (has("weight_decay")) {
    c.weight_decay = parse_double("weight_decay", take("weight_decay"));
  }
  if (has("epochs")) {
    c.epochs = static_cast<std::size_t>(parse_u64("epochs", take("epochs")));
  }
  if (has("batch")) {
    c.batch = static_cast<std::size_t>(parse_u64("batch", take("batch")));
  }
  if (has("fraction")) c.fraction = parse_double("fraction", take("fraction"));
  if (has("variational")) c.variational = parse_bool("variational", take("variational"));
  if (has("fusion_weights")) {
    c.fusion_weights = parse_weights("fusion_weights", take("fusion_weights"));
  }
  if (has("workers")) {
    c.workers = static_cast<std::size_t>(parse_u64("workers", take("workers")));
  }
  if (has("split_mod")) {
    c.split_mod = static_cast<std::size_t>(parse_u64("split_mod", take("split_mod")));
  }

  // Learning-rate drop: paper pins absolute epochs (250 pretext, 80 linear);
  // the desk preset scales with the epoch budget.
  if (has("lr_milestone")) {
    c.lr_milestone =
        static_cast<std::size_t>(parse_u64("lr_milestone", take("lr_milestone")));
  } else if (paper) {
    c.lr_milestone = pretext ? 250 : 80;
  } else {
    c.lr_milestone = pretext ? c.epochs * 5 / 6 : c.epochs * 4 / 5;
  }

  // Range checks.
  if (c.data_path.empty()) throw ConfigError("config key 'data.path' is required");
  if (c.protocol != "pretext" && c.checkpoint.empty()) {
    throw ConfigError("config key 'checkpoint' is required for protocol " +
                      c.protocol);
  }
  if (c.tau <= 0.0) throw ConfigError("config key 'tau' must be positive");
  if (c.momentum < 0.0 || c.momentum > 1.0) {
    throw ConfigError("config key 'momentum' must lie in [0, 1]");
  }
  if (c.queue_size == 0) throw ConfigError("config key 'queue_size' must be >= 1");
  if (c.shear_beta < 0.0) throw ConfigError("config key 'shear_beta' must be >= 0");
  if (c.crop_gamma < 1) throw ConfigError("config key 'crop_gamma' must be >= 1");
  if (c.lr <= 0.0) throw ConfigError("config key 'lr' must be positive");
  if (c.weight_decay < 0.0) {
    throw ConfigError("config key 'weight_decay' must be >= 0");
  }
  if (c.batch == 0) throw ConfigError("config key 'batch' must be >= 1");
  if (c.fraction <= 0.0 || c.fraction > 1.0) {
    throw ConfigError("config key 'fraction' must lie in (0, 1]");
  }
  if (c.embed_dim < 2) throw ConfigError("config key 'embed_dim' must be >= 2");
  if (c.fusion_weights.size() != 3) {
    throw ConfigError("config key 'fusion_weights' must list 3 weights");
  }
  for (double w : c.fusion_weights) {
    if (w <= 0.0) throw ConfigError("config key 'fusion_weights' must be positive");
  }
  if (c.workers == 0) throw ConfigError("config key 'workers' must be >= 1");
  if (c.split_mod < 2) throw ConfigError("config key 'split_mod' must be >= 2");
  if (c.epochs > 0 && c.lr_milestone > c.epochs) {
    throw ConfigError("config key 'lr_milestone' must not exceed epochs");
  }
  return c;
}

std::string RunConfig::resolved_text() const {
  std::map<std::string, std::string> kv;
  kv["protocol"] = protocol;
  kv["preset"] = preset;
  kv["seed"] = std::to_string(seed);
  kv["out_dir"] = out_dir;
  kv["data.path"] = data_path;
  kv["checkpoint"] = checkpoint;
  kv["stream"] = stream;
  kv["encoder.preset"] = encoder_preset;
  kv["embed_dim"] = std::to_string(embed_dim);
  kv["tau"] = fmt_double(tau);
  kv["momentum"] = fmt_double(momentum);
  kv["queue_size"] = std::to_string(queue_size);
  kv["shear_beta"] = fmt_double(shear_beta);
  kv["crop_gamma"] = std::to_string(crop_gamma);
  kv["lr"] = fmt_double(lr);
  kv["weight_decay"] = fmt_double(weight_decay);
  kv["epochs"] = std::to_string(epochs);
  kv["batch"] = std::to_string(batch);
  kv["fraction"] = fmt_double(fraction);
  kv["variational"] = variational ? "true" : "false";
  std::string w;
  for (std::size_t i = 0; i < fusion_weights.size(); ++i) {
    w += (i ? "," : "") + fmt_double(fusion_weights[i]);
  }
  kv["fusion_weights"] = w;
  kv["workers"] = std::to_string(workers);
  kv["split_mod"] = std::to_string(split_mod);
  kv["lr_milestone"] = std::to_string(lr_milestone);

  std::string out;
  for (const auto& [k, v] : kv) {
    out += k + " = " + v + "\n";
  }
  return out;
}

std::uint64_t RunConfig::hash() const {
  // The hash pins the training trajectory, so the two pure-location keys
  // (checkpoint source, output directory) are excluded: resuming a run from
  // its own checkpoint, possibly into another directory, must hash equal.
  std::istringstream in(resolved_text());
  std::string line, kept;
  while (std::getline(in, line)) {
    if (line.rfind("checkpoint ", 0) == 0 || line.rfind("out_dir ", 0) == 0) {
      continue;
    }
    kept += line;
    kept += '\n';
  }
  return fnv1a64(kept);
}

TrainOptions RunConfig::train_options(Stream s) const {
  TrainOptions o;
  o.encoder = StgcnConfig::preset(encoder_preset);
  o.encoder.embed_dim = embed_dim;
  o.tau = tau;
  o.momentum = momentum;
  o.queue_capacity = queue_size;
  o.shear_beta = shear_beta;
  o.crop_gamma = crop_gamma;
  o.lr = lr;
  o.weight_decay = weight_decay;
  o.epochs = epochs;
  o.batch = batch;
  o.seed = seed;
  o.variational = variational;
  o.workers = workers;
  o.split_mod = split_mod;
  o.fraction = fraction;
  if (lr_milestone < epochs) o.lr_milestones = {{lr_milestone, 0.1}};
  o.config_hash = hash();
  o.stream = s;
  return o;
}

std::vector<Stream> RunConfig::selected_streams() const {
  if (stream == "all") {
    return {Stream::kJoint, Stream::kBone, Stream::kMotion};
  }
  return {stream_from_name(stream)};
}

}  // namespace vcl
