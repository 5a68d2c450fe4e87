#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "vcl/checkpoint.hpp"
#include "vcl/contrastive.hpp"
#include "vcl/dataset.hpp"
#include "vcl/encoder.hpp"
#include "vcl/metrics.hpp"
#include "vcl/optim.hpp"

namespace vcl {

struct TrainOptions {
  StgcnConfig encoder = StgcnConfig::desk();
  double tau = 0.07;
  double momentum = 0.99;  // key EMA coefficient
  std::size_t queue_capacity = 512;
  double shear_beta = 0.5;
  std::size_t crop_gamma = 6;
  double lr = 1e-3;
  double weight_decay = 1e-4;
  std::size_t epochs = 30;
  std::size_t batch = 32;
  std::uint64_t seed = 1;
  bool variational = true;  // false drops sampling and the KL terms
  std::size_t workers = 1;
  std::size_t split_mod = 4;  // test = subject_id % split_mod == split_mod - 1
  double fraction = 1.0;      // labeled fraction for the semi protocol
  std::vector<std::pair<std::size_t, double>> lr_milestones;
  std::uint64_t config_hash = 0;
  Stream stream = Stream::kJoint;
};

// Everything a downstream protocol needs from a trained model.
struct ModelCheckpoint {
  StgcnConfig cfg;
  std::size_t in_channels = 3;
  EncoderParams query;
  bool variational = true;
  Stream stream = Stream::kJoint;
  std::size_t epochs_done = 0;
  bool has_classifier = false;
  Tensor clf_w, clf_b;
};

ModelCheckpoint model_from_tensors(const NamedTensors& t);

// Pretext training with full state: query/key parameters, AdamW moments, the
// memory queue and the epoch counter, so a run can stop and resume bit-exactly.
class PretextTrainer {
 public:
  PretextTrainer(const Dataset& data, const TrainOptions& opts);

  // Continues until opts.epochs, emitting one record per epoch.
  void train(MetricsWriter* metrics);
  void train_epochs(std::size_t n, MetricsWriter* metrics);

  NamedTensors snapshot() const;
  void restore(const NamedTensors& t);

  const EncoderPair& pair() const { return pair_; }
  std::size_t epochs_done() const { return epochs_done_; }
  std::uint64_t optimizer_steps() const { return opt_->step_count(); }
  const MemoryQueue& queue() const { return *queue_; }
  ModelCheckpoint model() const;

 private:
  void run_epoch(MetricsWriter* metrics);

  const Dataset& data_;
  TrainOptions opts_;
  std::vector<std::size_t> train_indices_;
  Tensor adjacency_;
  EncoderPair pair_;
  std::unique_ptr<MemoryQueue> queue_;
  std::unique_ptr<AdamW> opt_;
  Schedule schedule_;
  std::size_t epochs_done_ = 0;
};

// Frozen-encoder linear probe: embeddings are the Gaussian head means of the
// query branch, computed once; only the affine classifier trains. Returns the
// final test record.
MetricsRecord linear_eval(const ModelCheckpoint& model, const Dataset& data,
                          const TrainOptions& opts, MetricsWriter* metrics,
                          ModelCheckpoint* trained_out = nullptr);

// The classifier trainer behind linear_eval, on raw feature vectors:
// cross-entropy, AdamW, per-batch steps, the configured lr schedule.
struct LinearProbe {
  Tensor w, b;
};
LinearProbe train_linear_probe(
    const std::vector<std::vector<double>>& features,
    const std::vector<std::size_t>& labels, std::size_t n_classes,
    const TrainOptions& opts,
    const std::function<void(std::size_t, double, const LinearProbe&)>&
        per_epoch = {});

// Encoder initialized from the checkpoint and trained end-to-end together
// with the classifier on a category-balanced labeled fraction of the train
// split; evaluation always runs on the full test split.
MetricsRecord semi_supervised(const ModelCheckpoint& model, const Dataset& data,
                              double fraction, const TrainOptions& opts,
                              MetricsWriter* metrics,
                              ModelCheckpoint* trained_out = nullptr);

// Full-label fine-tuning (the fraction-1.0 special case).
MetricsRecord finetune(const ModelCheckpoint& model, const Dataset& data,
                       const TrainOptions& opts, MetricsWriter* metrics,
                       ModelCheckpoint* trained_out = nullptr);

// -log_softmax(logits)[label].
Tensor cross_entropy(Tape* tape, const Tensor& logits, std::size_t label);

// Fraction of positions where prediction equals label; empty input is a
// contract error.
double top1_accuracy(const std::vector<std::size_t>& predictions,
                     const std::vector<std::size_t>& labels);

// Argmax of the weighted sum of per-stream logits; ties break to the lowest
// class index.
std::size_t fuse_predictions(const std::vector<std::vector<double>>& logits,
                             const std::vector<double>& weights);

// Head means for every sample, deterministic path (center, no augmentation).
std::vector<std::vector<double>> compute_embeddings(
    const ModelCheckpoint& model, const Dataset& data,
    const std::vector<std::size_t>& indices, std::size_t workers);

// Classifier logits for every requested sample.
std::vector<std::vector<double>> compute_logits(
    const ModelCheckpoint& model, const Dataset& data,
    const std::vector<std::size_t>& indices, std::size_t workers);

// Writes "label,dim=<d>" then one "label,v1,...,vd" row per sample.
void embedding_dump(const ModelCheckpoint& model, const Dataset& data,
                    const std::string& path, std::size_t workers = 1);

NamedTensors model_to_tensors(const ModelCheckpoint& model);

}  // namespace vcl
