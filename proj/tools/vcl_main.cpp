// Command-line front end: dataset generation, training/evaluation runs,
// saliency maps, embedding dumps and multi-stream fusion.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vcl/config.hpp"
#include "vcl/dataset.hpp"
#include "vcl/errors.hpp"
#include "vcl/saliency.hpp"
#include "vcl/training.hpp"

namespace fs = std::filesystem;

namespace {

vcl::SkeletonTopology topology_from_arg(const std::string& arg) {
  if (arg == "17") return vcl::default_topology17();
  if (arg == "ntu25") return vcl::topology_ntu25();
  return vcl::load_topology(arg);
}

std::string output_path(const std::string& out_dir) {
  fs::path p(out_dir);
  if (p.is_relative()) {
    if (const char* root = std::getenv("VCL_OUTPUT_ROOT")) {
      p = fs::path(root) / p;
    }
  }
  return p.string();
}

int cmd_gen_data(const std::string& out, std::size_t classes,
                 std::size_t per_class, std::size_t frames, std::uint64_t seed,
                 double jitter, const std::string& topology,
                 const std::string& manifest) {
  vcl::SynthConfig cfg;
  cfg.n_classes = classes;
  cfg.per_class = per_class;
  cfg.frames = frames;
  cfg.seed = seed;
  cfg.jitter = jitter;
  vcl::Dataset d = vcl::synth_generate(cfg, topology_from_arg(topology));
  vcl::save_dataset(d, out);
  if (!manifest.empty()) vcl::save_manifest(d, manifest);
  const auto hist = d.class_histogram();
  std::cout << "wrote " << d.samples.size() << " samples to " << out << "\n";
  for (std::size_t c = 0; c < hist.size(); ++c) {
    std::cout << d.class_names[c] << ": " << hist[c] << "\n";
  }
  return 0;
}

vcl::ModelCheckpoint load_model(const std::string& path) {
  std::uint64_t hash = 0;
  return vcl::model_from_tensors(vcl::read_checkpoint(path, &hash));
}

std::string stream_checkpoint_path(const std::string& checkpoint,
                                   vcl::Stream s) {
  if (fs::is_directory(checkpoint)) {
    return (fs::path(checkpoint) /
            ("checkpoint_" + std::string(vcl::stream_name(s)) + ".vclc"))
        .string();
  }
  return checkpoint;
}

int cmd_run(const std::string& config_path,
            const std::vector<std::string>& sets,
            const std::vector<std::pair<std::string, std::string>>& flags) {
  std::vector<std::pair<std::string, std::string>> file_values;
  if (!config_path.empty()) file_values = vcl::parse_config_file(config_path);
  std::vector<std::pair<std::string, std::string>> overrides;
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) {
      throw vcl::ConfigError("--set expects key=value, got '" + s + "'");
    }
    overrides.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  overrides.insert(overrides.end(), flags.begin(), flags.end());

  vcl::RunConfig cfg = vcl::resolve_config(file_values, overrides);
  const std::string out_dir = output_path(cfg.out_dir);
  fs::create_directories(out_dir);

  {
    std::ofstream resolved(fs::path(out_dir) /
                           ("resolved_" + cfg.protocol + ".cfg"));
    resolved << cfg.resolved_text();
  }

  vcl::Dataset base = vcl::load_dataset(cfg.data_path);
  vcl::MetricsWriter metrics((fs::path(out_dir) / "metrics.jsonl").string(),
                             /*append=*/true);

  const bool fuse = cfg.stream == "all" && cfg.protocol != "pretext";
  std::vector<std::vector<std::vector<double>>> stream_logits;
  std::vector<std::size_t> test_idx;

  for (vcl::Stream s : cfg.selected_streams()) {
    vcl::Dataset data = vcl::derive_stream(base, s);
    vcl::TrainOptions opts = cfg.train_options(s);
    const std::string ckpt_out =
        (fs::path(out_dir) /
         ("checkpoint_" + std::string(vcl::stream_name(s)) + ".vclc"))
            .string();

    if (cfg.protocol == "pretext") {
      vcl::PretextTrainer trainer(data, opts);
      if (!cfg.checkpoint.empty()) {
        std::uint64_t stored_hash = 0;
        vcl::NamedTensors t = vcl::read_checkpoint(
            stream_checkpoint_path(cfg.checkpoint, s), &stored_hash);
        if (stored_hash != cfg.hash()) {
          throw vcl::ConfigError(
              "resume: checkpoint config hash does not match this config");
        }
        trainer.restore(t);
      }
      trainer.train(&metrics);
      vcl::write_checkpoint(ckpt_out, cfg.hash(), trainer.snapshot());
    } else {
      vcl::ModelCheckpoint model =
          load_model(stream_checkpoint_path(cfg.checkpoint, s));
      if (model.stream != s && cfg.stream != "all") {
        // A single-stream eval may repurpose a checkpoint across streams only
        // explicitly; warn rather than fail.
        std::cerr << "note: checkpoint was pretrained on stream "
                  << vcl::stream_name(model.stream) << ", evaluating on "
                  << vcl::stream_name(s) << "\n";
      }
      vcl::ModelCheckpoint trained;
      if (cfg.protocol == "linear") {
        vcl::linear_eval(model, data, opts, &metrics, &trained);
      } else if (cfg.protocol == "semi") {
        vcl::semi_supervised(model, data, cfg.fraction, opts, &metrics,
                             &trained);
      } else {
        vcl::finetune(model, data, opts, &metrics, &trained);
      }
      vcl::write_checkpoint(ckpt_out, cfg.hash(),
                            vcl::model_to_tensors(trained));
      if (fuse) {
        const vcl::SplitView split = vcl::subject_split(data, cfg.split_mod);
        test_idx = split.test;
        stream_logits.push_back(
            vcl::compute_logits(trained, data, split.test, cfg.workers));
      }
    }
  }

  if (fuse) {
    std::vector<std::size_t> preds, labels;
    for (std::size_t i = 0; i < test_idx.size(); ++i) {
      std::vector<std::vector<double>> per_stream;
      for (const auto& sl : stream_logits) per_stream.push_back(sl[i]);
      preds.push_back(vcl::fuse_predictions(per_stream, cfg.fusion_weights));
      labels.push_back(base.samples[test_idx[i]].label);
    }
    vcl::MetricsRecord rec;
    rec.epoch = cfg.epochs;
    rec.split = "test";
    rec.protocol = "fuse";
    rec.top1 = vcl::top1_accuracy(preds, labels);
    metrics.write(rec);
    std::cout << "fused top-1: " << *rec.top1 << "\n";
  }
  return 0;
}

int cmd_saliency(const std::string& checkpoint, const std::string& data_path,
                 long sample_index, long target_class,
                 const std::string& out) {
  vcl::Dataset data = vcl::load_dataset(data_path);
  if (sample_index < 0 ||
      static_cast<std::size_t>(sample_index) >= data.samples.size()) {
    throw vcl::ConfigError("--sample-index out of range");
  }
  vcl::ModelCheckpoint model = load_model(checkpoint);
  vcl::Dataset streamed = vcl::derive_stream(data, model.stream);
  const std::size_t target =
      target_class < 0 ? streamed.samples[sample_index].label
                       : static_cast<std::size_t>(target_class);
  if (model.has_classifier && target >= model.clf_w.extent(0)) {
    throw vcl::ConfigError("--target-class out of range");
  }
  vcl::SaliencyMap map = vcl::joint_saliency(
      model, streamed, static_cast<std::size_t>(sample_index), target);
  vcl::save_saliency_csv(map, out);
  std::cout << "wrote " << map.frames << "x" << map.joints << " map to " << out
            << "\n";
  return 0;
}

int cmd_dump(const std::string& checkpoint, const std::string& data_path,
             const std::string& out, std::size_t workers) {
  vcl::ModelCheckpoint model = load_model(checkpoint);
  vcl::Dataset data =
      vcl::derive_stream(vcl::load_dataset(data_path), model.stream);
  vcl::embedding_dump(model, data, out, workers);
  std::cout << "wrote " << data.samples.size() << " rows to " << out << "\n";
  return 0;
}

int cmd_fuse(const std::string& data_path,
             const std::vector<std::string>& checkpoints,
             const std::string& weights_arg, std::size_t split_mod,
             std::size_t workers) {
  vcl::Dataset base = vcl::load_dataset(data_path);
  std::vector<double> weights;
  {
    std::stringstream ss(weights_arg);
    std::string part;
    while (std::getline(ss, part, ',')) weights.push_back(std::stod(part));
  }
  if (checkpoints.size() != weights.size()) {
    throw vcl::ConfigError("need one weight per checkpoint");
  }
  std::vector<std::size_t> test_idx;
  std::vector<std::vector<std::vector<double>>> stream_logits;
  for (const auto& path : checkpoints) {
    vcl::ModelCheckpoint model = load_model(path);
    vcl::Dataset data = vcl::derive_stream(base, model.stream);
    const vcl::SplitView split = vcl::subject_split(data, split_mod);
    test_idx = split.test;
    stream_logits.push_back(
        vcl::compute_logits(model, data, split.test, workers));
  }
  std::vector<std::size_t> preds, labels;
  for (std::size_t i = 0; i < test_idx.size(); ++i) {
    std::vector<std::vector<double>> per_stream;
    for (const auto& sl : stream_logits) per_stream.push_back(sl[i]);
    preds.push_back(vcl::fuse_predictions(per_stream, weights));
    labels.push_back(base.samples[test_idx[i]].label);
  }
  std::cout << "fused top-1: " << vcl::top1_accuracy(preds, labels) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"variational contrastive learning for skeleton sequences"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  std::string gen_out, gen_topology = "17", gen_manifest;
  std::size_t gen_classes = 8, gen_per_class = 100, gen_frames = 32;
  std::uint64_t gen_seed = 1;
  double gen_jitter = 1.0;
  gen->add_option("--out", gen_out, "output .skl path")->required();
  gen->add_option("--classes", gen_classes, "number of classes");
  gen->add_option("--per-class", gen_per_class, "samples per class");
  gen->add_option("--frames", gen_frames, "frames per sequence");
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("--jitter", gen_jitter, "per-sample perturbation scale");
  gen->add_option("--topology", gen_topology, "17, ntu25, or a manifest path");
  gen->add_option("--manifest", gen_manifest, "also write a text manifest");

  // run
  auto* run = app.add_subcommand("run", "execute a training/evaluation run");
  std::string run_config;
  std::vector<std::string> run_sets;
  std::string run_protocol, run_data, run_out, run_stream, run_checkpoint;
  std::int64_t run_seed = -1, run_epochs = -1, run_workers = -1;
  run->add_option("--config", run_config, "key = value config file");
  run->add_option("--set", run_sets, "override: key=value (repeatable)");
  run->add_option("--protocol", run_protocol, "pretext|linear|semi|finetune");
  run->add_option("--data", run_data, "dataset path");
  run->add_option("--out", run_out, "output directory");
  run->add_option("--stream", run_stream, "joint|bone|motion|all");
  run->add_option("--checkpoint", run_checkpoint, "checkpoint file or directory");
  run->add_option("--seed", run_seed, "run seed");
  run->add_option("--epochs", run_epochs, "epoch budget");
  run->add_option("--workers", run_workers, "worker threads");

  // saliency
  auto* sal = app.add_subcommand("saliency", "write a joint-importance map");
  std::string sal_ckpt, sal_data, sal_out;
  long sal_index = 0, sal_target = -1;
  sal->add_option("--checkpoint", sal_ckpt)->required();
  sal->add_option("--data", sal_data)->required();
  sal->add_option("--sample-index", sal_index)->required();
  sal->add_option("--target-class", sal_target,
                  "defaults to the sample's label");
  sal->add_option("--out", sal_out)->required();

  // dump-embeddings
  auto* dump = app.add_subcommand("dump-embeddings",
                                  "write per-sample head means as CSV");
  std::string dump_ckpt, dump_data, dump_out;
  std::size_t dump_workers = 1;
  dump->add_option("--checkpoint", dump_ckpt)->required();
  dump->add_option("--data", dump_data)->required();
  dump->add_option("--out", dump_out)->required();
  dump->add_option("--workers", dump_workers);

  // fuse
  auto* fu = app.add_subcommand("fuse", "fuse per-stream classifier logits");
  std::string fuse_data, fuse_weights = "0.6,0.6,0.4";
  std::vector<std::string> fuse_ckpts;
  std::size_t fuse_split_mod = 4, fuse_workers = 1;
  fu->add_option("--data", fuse_data)->required();
  fu->add_option("--checkpoint", fuse_ckpts, "one per stream (repeatable)")
      ->required();
  fu->add_option("--weights", fuse_weights, "comma-separated stream weights");
  fu->add_option("--split-mod", fuse_split_mod);
  fu->add_option("--workers", fuse_workers);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed()) {
      return cmd_gen_data(gen_out, gen_classes, gen_per_class, gen_frames,
                          gen_seed, gen_jitter, gen_topology, gen_manifest);
    }
    if (run->parsed()) {
      std::vector<std::pair<std::string, std::string>> flags;
      if (!run_protocol.empty()) flags.emplace_back("protocol", run_protocol);
      if (!run_data.empty()) flags.emplace_back("data.path", run_data);
      if (!run_out.empty()) flags.emplace_back("out_dir", run_out);
      if (!run_stream.empty()) flags.emplace_back("stream", run_stream);
      if (!run_checkpoint.empty()) {
        flags.emplace_back("checkpoint", run_checkpoint);
      }
      if (run_seed >= 0) flags.emplace_back("seed", std::to_string(run_seed));
      if (run_epochs >= 0) {
        flags.emplace_back("epochs", std::to_string(run_epochs));
      }
      if (run_workers >= 0) {
        flags.emplace_back("workers", std::to_string(run_workers));
      }
      return cmd_run(run_config, run_sets, flags);
    }
    if (sal->parsed()) {
      return cmd_saliency(sal_ckpt, sal_data, sal_index, sal_target, sal_out);
    }
    if (dump->parsed()) {
      return cmd_dump(dump_ckpt, dump_data, dump_out, dump_workers);
    }
    if (fu->parsed()) {
      return cmd_fuse(fuse_data, fuse_ckpts, fuse_weights, fuse_split_mod,
                      fuse_workers);
    }
  } catch (const vcl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
