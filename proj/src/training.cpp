#include "vcl/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <thread>

#include "vcl/errors.hpp"
#include "vcl/ops.hpp"

namespace vcl {

namespace {

Tensor to_tensor(const SkeletonSequence& s) {
  return Tensor::from_data({s.channels, s.frames, s.joints}, s.coords);
}

Tensor normal_tensor(std::size_t d, RngStream rng) {
  std::vector<double> v(d);
  for (auto& x : v) x = rng.normal();
  return Tensor::from_data({d}, std::move(v));
}

std::vector<double> unit_of(const std::vector<double>& v) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  const double n = std::sqrt(sq);
  if (n == 0.0) throw DegenerateInputError("cannot normalize a zero latent");
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / n;
  return out;
}

// Contiguous shards over [0, n); fn(first, last) runs on its own thread for
// every shard but shard 0, which runs on the caller.
void sharded(std::size_t n, std::size_t workers,
             const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
  const std::size_t w = std::max<std::size_t>(1, std::min(workers, n));
  if (w == 1) {
    if (n > 0) fn(0, 0, n);
    return;
  }
  const std::size_t chunk = (n + w - 1) / w;
  std::vector<std::thread> threads;
  for (std::size_t s = 1; s < w; ++s) {
    const std::size_t first = s * chunk;
    const std::size_t last = std::min(n, first + chunk);
    if (first >= last) break;
    threads.emplace_back([=, &fn] { fn(s, first, last); });
  }
  fn(0, 0, std::min(chunk, n));
  for (auto& t : threads) t.join();
}

std::size_t argmax_lowest(const std::vector<double>& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

void shuffle_indices(std::vector<std::size_t>& idx, RngStream rng) {
  for (std::size_t i = idx.size(); i > 1; --i) {
    std::swap(idx[i - 1], idx[rng.uniform_int(i)]);
  }
}

SkeletonSequence augment_view(const SkeletonSequence& raw,
                              const SkeletonTopology& topo,
                              const TrainOptions& opts, std::size_t epoch,
                              std::size_t sample, std::size_t view) {
  auto rng = stream_for(opts.seed, StreamTag::kAugment, epoch, sample, view);
  SkeletonSequence s = center_on_root(raw, topo.root);
  s = shear_augment(s, opts.shear_beta, rng);
  s = temporal_crop_augment(s, opts.crop_gamma, rng);
  return s;
}

void seed_to_halves(std::uint64_t seed, double* hi, double* lo) {
  *hi = static_cast<double>(seed >> 32);
  *lo = static_cast<double>(seed & 0xffffffffull);
}

std::uint64_t seed_from_halves(double hi, double lo) {
  return (static_cast<std::uint64_t>(hi) << 32) |
         static_cast<std::uint64_t>(lo);
}

void add_arch_meta(NamedTensors& t, const StgcnConfig& cfg,
                   std::size_t in_channels) {
  t.add_value("meta.in_channels", static_cast<double>(in_channels));
  t.add_value("meta.kernel", static_cast<double>(cfg.temporal_kernel));
  t.add_value("meta.embed_dim", static_cast<double>(cfg.embed_dim));
  std::vector<double> widths(cfg.widths.begin(), cfg.widths.end());
  std::vector<double> strides(cfg.strides.begin(), cfg.strides.end());
  t.add_values("meta.widths", widths);
  t.add_values("meta.strides", strides);
}

void read_arch_meta(const NamedTensors& t, StgcnConfig* cfg,
                    std::size_t* in_channels) {
  *in_channels = static_cast<std::size_t>(t.value("meta.in_channels"));
  cfg->temporal_kernel = static_cast<std::size_t>(t.value("meta.kernel"));
  cfg->embed_dim = static_cast<std::size_t>(t.value("meta.embed_dim"));
  cfg->widths.clear();
  for (double v : t.require("meta.widths").data()) {
    cfg->widths.push_back(static_cast<std::size_t>(v));
  }
  cfg->strides.clear();
  for (double v : t.require("meta.strides").data()) {
    cfg->strides.push_back(static_cast<std::size_t>(v));
  }
  cfg->validate();
}

EncoderParams params_from_tensors(const NamedTensors& t,
                                  const StgcnConfig& cfg,
                                  std::size_t in_channels,
                                  const std::string& prefix,
                                  bool requires_grad) {
  auto rng = stream_for(0, StreamTag::kParamInit);
  EncoderParams p = EncoderParams::init(cfg, in_channels, rng);
  for (auto& [name, tensor] : p.named()) {
    const Tensor& stored = t.require(prefix + name);
    if (stored.shape() != tensor.shape()) {
      throw FormatError("checkpoint: shape mismatch for " + prefix + name);
    }
    tensor.data() = stored.data();
    tensor.set_requires_grad(requires_grad);
  }
  return p;
}

}  // namespace

ModelCheckpoint model_from_tensors(const NamedTensors& t) {
  ModelCheckpoint m;
  read_arch_meta(t, &m.cfg, &m.in_channels);
  m.variational = t.value("meta.variational") != 0.0;
  m.stream = static_cast<Stream>(static_cast<int>(t.value("meta.stream")));
  m.epochs_done = static_cast<std::size_t>(t.value("meta.epoch"));
  m.query = params_from_tensors(t, m.cfg, m.in_channels, "q.",
                                /*requires_grad=*/false);
  if (t.has("clf.w")) {
    m.has_classifier = true;
    m.clf_w = t.require("clf.w").clone();
    m.clf_b = t.require("clf.b").clone();
  }
  return m;
}

NamedTensors model_to_tensors(const ModelCheckpoint& model) {
  NamedTensors t;
  add_arch_meta(t, model.cfg, model.in_channels);
  t.add_value("meta.stream", static_cast<double>(static_cast<int>(model.stream)));
  t.add_value("meta.variational", model.variational ? 1.0 : 0.0);
  t.add_value("meta.epoch", static_cast<double>(model.epochs_done));
  for (const auto& [name, tensor] : model.query.named()) {
    t.add("q." + name, tensor.clone());
  }
  if (model.has_classifier) {
    t.add("clf.w", model.clf_w.clone());
    t.add("clf.b", model.clf_b.clone());
  }
  return t;
}

PretextTrainer::PretextTrainer(const Dataset& data, const TrainOptions& opts)
    : data_(data), opts_(opts) {
  data_.validate();
  opts_.encoder.validate();
  if (opts_.batch == 0) throw ContractError("pretrain: batch must be positive");
  const SplitView split = subject_split(data_, opts_.split_mod);
  train_indices_ = split.train;
  if (train_indices_.empty()) {
    throw ContractError("pretrain: train split is empty");
  }
  adjacency_ = build_adjacency(data_.topology);
  auto init_rng = stream_for(opts_.seed, StreamTag::kParamInit);
  pair_ = EncoderPair::init(opts_.encoder, data_.samples.front().channels,
                            opts_.momentum, init_rng);
  queue_ = std::make_unique<MemoryQueue>(opts_.queue_capacity,
                                         opts_.encoder.embed_dim);
  auto queue_rng = stream_for(opts_.seed, StreamTag::kQueueInit);
  queue_->fill_random(queue_rng);
  opt_ = std::make_unique<AdamW>(
      pair_.query.tensors(),
      AdamWConfig{opts_.lr, 0.9, 0.999, 1e-8, opts_.weight_decay});
  schedule_ = Schedule{opts_.lr, opts_.lr_milestones};
  schedule_.validate();
}

void PretextTrainer::train(MetricsWriter* metrics) {
  while (epochs_done_ < opts_.epochs) run_epoch(metrics);
}

void PretextTrainer::train_epochs(std::size_t n, MetricsWriter* metrics) {
  for (std::size_t i = 0; i < n; ++i) run_epoch(metrics);
}

namespace {

struct SampleResult {
  double infonce = 0.0, kl_q = 0.0, kl_k = 0.0;
  std::vector<double> key_unit;
};

SampleResult pretext_sample(const Dataset& data, const TrainOptions& opts,
                            const Tensor& adjacency, EncoderParams& query,
                            const EncoderParams& key, const Tensor& negatives,
                            std::size_t epoch, std::size_t sample_index,
                            double grad_scale) {
  const SkeletonSequence& raw = data.samples[sample_index];
  const SkeletonSequence in_q =
      augment_view(raw, data.topology, opts, epoch, sample_index, 0);
  const SkeletonSequence in_k =
      augment_view(raw, data.topology, opts, epoch, sample_index, 1);

  Tape tape;
  Tensor hq = stgcn_forward(&tape, to_tensor(in_q), query, adjacency);
  GaussianOut gq = gaussian_head_forward(&tape, hq, query.head);

  Tensor hk = stgcn_forward(nullptr, to_tensor(in_k), key, adjacency);
  GaussianOut gk = gaussian_head_forward(nullptr, hk, key.head);

  Tensor zq, zk;
  if (opts.variational) {
    Tensor xi_q = normal_tensor(
        opts.encoder.embed_dim,
        stream_for(opts.seed, StreamTag::kLatentNoise, epoch, sample_index, 0));
    Tensor xi_k = normal_tensor(
        opts.encoder.embed_dim,
        stream_for(opts.seed, StreamTag::kLatentNoise, epoch, sample_index, 1));
    zq = reparameterize(&tape, gq.mu, gq.logvar, xi_q);
    zk = reparameterize(nullptr, gk.mu, gk.logvar, xi_k);
  } else {
    zq = gq.mu;
    zk = gk.mu;
  }

  SampleResult r;
  Tensor objective;
  if (opts.variational) {
    TotalLoss tl = total_loss(&tape, zq, zk, negatives, opts.tau, gq.mu,
                              gq.logvar, gk.mu, gk.logvar);
    objective = tl.total;
    r.infonce = tl.infonce;
    r.kl_q = tl.kl_query;
    r.kl_k = tl.kl_key;
  } else {
    objective = infonce_loss(&tape, zq, zk, negatives, opts.tau);
    r.infonce = objective.value();
  }
  backward(tape, ops::scale(&tape, objective, grad_scale));
  r.key_unit = unit_of(zk.data());
  return r;
}

}  // namespace

void PretextTrainer::run_epoch(MetricsWriter* metrics) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t epoch = epochs_done_;
  opt_->set_lr(schedule_.lr_at(epoch));

  std::vector<std::size_t> order = train_indices_;
  shuffle_indices(order, stream_for(opts_.seed, StreamTag::kShuffle, epoch));

  double sum_infonce = 0.0, sum_kl_q = 0.0, sum_kl_k = 0.0;

  for (std::size_t start = 0; start < order.size(); start += opts_.batch) {
    const std::size_t count = std::min(opts_.batch, order.size() - start);
    const Tensor negatives = queue_->snapshot();
    const double grad_scale = 1.0 / static_cast<double>(count);
    opt_->zero_grad();

    std::vector<SampleResult> results(count);
    const std::size_t workers = std::max<std::size_t>(1, opts_.workers);
    if (workers == 1) {
      for (std::size_t i = 0; i < count; ++i) {
        results[i] =
            pretext_sample(data_, opts_, adjacency_, pair_.query, pair_.key,
                           negatives, epoch, order[start + i], grad_scale);
      }
    } else {
      // Each shard accumulates into a private clone of the query parameters;
      // shard gradients are folded back in shard order so a fixed worker
      // count reproduces bit-identical sums.
      std::vector<EncoderParams> clones;
      clones.reserve(workers);
      for (std::size_t w = 0; w < workers; ++w) {
        clones.push_back(pair_.query.clone(/*requires_grad=*/true));
      }
      sharded(count, workers, [&](std::size_t shard, std::size_t first,
                                  std::size_t last) {
        for (std::size_t i = first; i < last; ++i) {
          results[i] = pretext_sample(data_, opts_, adjacency_, clones[shard],
                                      pair_.key, negatives, epoch,
                                      order[start + i], grad_scale);
        }
      });
      auto real = pair_.query.named();
      for (std::size_t w = 0; w < workers; ++w) {
        auto part = clones[w].named();
        for (std::size_t p = 0; p < real.size(); ++p) {
          auto& dst = real[p].second.grad();
          const auto& src = part[p].second.grad();
          for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
        }
      }
    }

    opt_->step();
    momentum_update(pair_);
    std::vector<std::vector<double>> keys;
    keys.reserve(count);
    for (auto& r : results) {
      sum_infonce += r.infonce;
      sum_kl_q += r.kl_q;
      sum_kl_k += r.kl_k;
      keys.push_back(std::move(r.key_unit));
    }
    queue_->push(keys);
  }

  ++epochs_done_;
  if (metrics != nullptr) {
    const double n = static_cast<double>(order.size());
    MetricsRecord rec;
    rec.epoch = epoch;
    rec.split = "train";
    rec.protocol = "pretext";
    rec.loss_infonce = sum_infonce / n;
    rec.loss_kl_q = sum_kl_q / n;
    rec.loss_kl_k = sum_kl_k / n;
    rec.loss_total = *rec.loss_infonce + *rec.loss_kl_q + *rec.loss_kl_k;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                                t0)
                      .count();
    metrics->write(rec);
  }
}

NamedTensors PretextTrainer::snapshot() const {
  NamedTensors t;
  add_arch_meta(t, opts_.encoder, data_.samples.front().channels);
  t.add_value("meta.stream",
              static_cast<double>(static_cast<int>(opts_.stream)));
  t.add_value("meta.variational", opts_.variational ? 1.0 : 0.0);
  t.add_value("meta.epoch", static_cast<double>(epochs_done_));
  t.add_value("meta.momentum", opts_.momentum);
  double hi, lo;
  seed_to_halves(opts_.seed, &hi, &lo);
  t.add_value("meta.seed_hi", hi);
  t.add_value("meta.seed_lo", lo);
  for (const auto& [name, tensor] : pair_.query.named()) {
    t.add("q." + name, tensor.clone());
  }
  for (const auto& [name, tensor] : pair_.key.named()) {
    t.add("k." + name, tensor.clone());
  }
  t.add_value("opt.step", static_cast<double>(opt_->step_count()));
  const auto names = pair_.query.named();
  for (std::size_t i = 0; i < names.size(); ++i) {
    t.add("opt.m." + names[i].first, opt_->first_moments()[i].clone());
    t.add("opt.v." + names[i].first, opt_->second_moments()[i].clone());
  }
  t.add("queue.entries",
        Tensor::from_data({queue_->capacity(), queue_->dim()},
                          queue_->storage()));
  t.add_value("queue.cursor", static_cast<double>(queue_->cursor()));
  t.add_value("queue.count", static_cast<double>(queue_->size()));
  t.add_value("queue.total_pushed",
              static_cast<double>(queue_->total_pushed()));
  return t;
}

void PretextTrainer::restore(const NamedTensors& t) {
  StgcnConfig cfg;
  std::size_t in_channels;
  read_arch_meta(t, &cfg, &in_channels);
  if (cfg.widths != opts_.encoder.widths ||
      cfg.strides != opts_.encoder.strides ||
      cfg.temporal_kernel != opts_.encoder.temporal_kernel ||
      cfg.embed_dim != opts_.encoder.embed_dim) {
    throw ContractError("restore: checkpoint architecture differs from config");
  }
  const std::uint64_t seed = seed_from_halves(t.value("meta.seed_hi"),
                                              t.value("meta.seed_lo"));
  if (seed != opts_.seed) {
    throw ContractError("restore: checkpoint seed differs from config");
  }
  for (auto& [name, tensor] : pair_.query.named()) {
    tensor.data() = t.require("q." + name).data();
    tensor.zero_grad();
  }
  for (auto& [name, tensor] : pair_.key.named()) {
    tensor.data() = t.require("k." + name).data();
  }
  const auto names = pair_.query.named();
  std::vector<Tensor> m, v;
  for (const auto& [name, tensor] : names) {
    (void)tensor;
    m.push_back(t.require("opt.m." + name).clone());
    v.push_back(t.require("opt.v." + name).clone());
  }
  opt_->restore(m, v, static_cast<std::uint64_t>(t.value("opt.step")));
  queue_->restore(t.require("queue.entries").data(),
                  static_cast<std::size_t>(t.value("queue.cursor")),
                  static_cast<std::size_t>(t.value("queue.count")),
                  static_cast<std::uint64_t>(t.value("queue.total_pushed")));
  epochs_done_ = static_cast<std::size_t>(t.value("meta.epoch"));
}

ModelCheckpoint PretextTrainer::model() const {
  ModelCheckpoint m;
  m.cfg = opts_.encoder;
  m.in_channels = data_.samples.front().channels;
  m.query = pair_.query.clone(/*requires_grad=*/false);
  m.variational = opts_.variational;
  m.stream = opts_.stream;
  m.epochs_done = epochs_done_;
  return m;
}

Tensor cross_entropy(Tape* tape, const Tensor& logits, std::size_t label) {
  if (logits.rank() != 1) throw DimError("cross_entropy: logits must be 1-D");
  if (label >= logits.numel()) {
    throw ContractError("cross_entropy: label out of range");
  }
  return ops::scale(tape, ops::pick(tape, ops::log_softmax(tape, logits), label),
                    -1.0);
}

double top1_accuracy(const std::vector<std::size_t>& predictions,
                     const std::vector<std::size_t>& labels) {
  if (predictions.empty() || predictions.size() != labels.size()) {
    throw ContractError("top1_accuracy: need matching non-empty lists");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i] == labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

std::size_t fuse_predictions(const std::vector<std::vector<double>>& logits,
                             const std::vector<double>& weights) {
  if (logits.empty() || logits.size() != weights.size()) {
    throw ContractError("fuse_predictions: stream/weight count mismatch");
  }
  const std::size_t classes = logits.front().size();
  std::vector<double> fused(classes, 0.0);
  for (std::size_t s = 0; s < logits.size(); ++s) {
    if (logits[s].size() != classes) {
      throw ContractError("fuse_predictions: class count mismatch");
    }
    for (std::size_t c = 0; c < classes; ++c) {
      fused[c] += weights[s] * logits[s][c];
    }
  }
  return argmax_lowest(fused);
}

namespace {

std::vector<double> head_mean(const ModelCheckpoint& model, const Tensor& adj,
                              const SkeletonSequence& s, std::uint32_t root) {
  SkeletonSequence centered = center_on_root(s, root);
  Tensor h = stgcn_forward(nullptr, to_tensor(centered), model.query, adj);
  GaussianOut g = gaussian_head_forward(nullptr, h, model.query.head);
  return g.mu.data();
}

}  // namespace

std::vector<std::vector<double>> compute_embeddings(
    const ModelCheckpoint& model, const Dataset& data,
    const std::vector<std::size_t>& indices, std::size_t workers) {
  const Tensor adj = build_adjacency(data.topology);
  std::vector<std::vector<double>> out(indices.size());
  sharded(indices.size(), workers,
          [&](std::size_t, std::size_t first, std::size_t last) {
            for (std::size_t i = first; i < last; ++i) {
              out[i] = head_mean(model, adj, data.samples[indices[i]],
                                 data.topology.root);
            }
          });
  return out;
}

std::vector<std::vector<double>> compute_logits(
    const ModelCheckpoint& model, const Dataset& data,
    const std::vector<std::size_t>& indices, std::size_t workers) {
  if (!model.has_classifier) {
    throw ContractError("compute_logits: checkpoint has no classifier");
  }
  const auto embeds = compute_embeddings(model, data, indices, workers);
  std::vector<std::vector<double>> out(indices.size());
  const std::size_t classes = model.clf_w.extent(0);
  const std::size_t d = model.clf_w.extent(1);
  for (std::size_t i = 0; i < embeds.size(); ++i) {
    std::vector<double> logits(classes, 0.0);
    for (std::size_t c = 0; c < classes; ++c) {
      double s = model.clf_b.data()[c];
      for (std::size_t j = 0; j < d; ++j) {
        s += model.clf_w.data()[c * d + j] * embeds[i][j];
      }
      logits[c] = s;
    }
    out[i] = std::move(logits);
  }
  return out;
}

namespace {

struct ClassifierInit {
  Tensor w, b;
};

ClassifierInit init_classifier(std::size_t classes, std::size_t d,
                               std::uint64_t seed) {
  auto rng = stream_for(seed, StreamTag::kParamInit, 1);
  const double bound = std::sqrt(1.0 / static_cast<double>(d));
  std::vector<double> w(classes * d), b(classes);
  for (auto& v : w) v = rng.uniform(-bound, bound);
  for (auto& v : b) v = rng.uniform(-bound, bound);
  ClassifierInit c;
  c.w = Tensor::from_data({classes, d}, std::move(w), /*requires_grad=*/true);
  c.b = Tensor::from_data({classes}, std::move(b), /*requires_grad=*/true);
  return c;
}

double test_top1(const ModelCheckpoint& model, const Dataset& data,
                 const std::vector<std::size_t>& test_idx,
                 std::size_t workers) {
  const auto logits = compute_logits(model, data, test_idx, workers);
  std::vector<std::size_t> preds, labels;
  for (std::size_t i = 0; i < test_idx.size(); ++i) {
    preds.push_back(argmax_lowest(logits[i]));
    labels.push_back(data.samples[test_idx[i]].label);
  }
  return top1_accuracy(preds, labels);
}

}  // namespace

LinearProbe train_linear_probe(
    const std::vector<std::vector<double>>& features,
    const std::vector<std::size_t>& labels, std::size_t n_classes,
    const TrainOptions& opts,
    const std::function<void(std::size_t, double, const LinearProbe&)>&
        per_epoch) {
  if (features.empty() || features.size() != labels.size()) {
    throw ContractError("train_linear_probe: features/labels mismatch");
  }
  const std::size_t d = features.front().size();
  ClassifierInit clf = init_classifier(n_classes, d, opts.seed);
  LinearProbe probe{clf.w, clf.b};
  AdamW opt({clf.w, clf.b},
            AdamWConfig{opts.lr, 0.9, 0.999, 1e-8, opts.weight_decay});
  Schedule schedule{opts.lr, opts.lr_milestones};
  schedule.validate();

  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    opt.set_lr(schedule.lr_at(epoch));
    std::vector<std::size_t> order(features.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle_indices(order, stream_for(opts.seed, StreamTag::kShuffle, epoch, 1));
    double ce_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += opts.batch) {
      const std::size_t count = std::min(opts.batch, order.size() - start);
      opt.zero_grad();
      for (std::size_t i = 0; i < count; ++i) {
        const std::size_t idx = order[start + i];
        Tape tape;
        Tensor feat = Tensor::from_data({d}, features[idx]);
        Tensor logits = ops::affine(&tape, clf.w, feat, clf.b);
        Tensor ce = cross_entropy(&tape, logits, labels[idx]);
        ce_sum += ce.value();
        backward(tape, ops::scale(&tape, ce, 1.0 / static_cast<double>(count)));
      }
      opt.step();
    }
    if (per_epoch) {
      per_epoch(epoch, ce_sum / static_cast<double>(features.size()), probe);
    }
  }
  return probe;
}

MetricsRecord linear_eval(const ModelCheckpoint& model, const Dataset& data,
                          const TrainOptions& opts, MetricsWriter* metrics,
                          ModelCheckpoint* trained_out) {
  data.validate();
  if (data.n_classes() == 0) throw ContractError("linear_eval: no classes");
  const SplitView split = subject_split(data, opts.split_mod);
  if (split.train.empty() || split.test.empty()) {
    throw ContractError("linear_eval: empty split");
  }
  for (const auto& s : data.samples) {
    if (s.label >= data.n_classes()) {
      throw ContractError("linear_eval: label exceeds class count");
    }
  }

  // Frozen encoder: embeddings computed once over the union of both splits.
  std::vector<std::size_t> all(data.samples.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const auto embeds = compute_embeddings(model, data, all, opts.workers);

  std::vector<std::vector<double>> train_feats;
  std::vector<std::size_t> train_labels;
  for (std::size_t i : split.train) {
    train_feats.push_back(embeds[i]);
    train_labels.push_back(data.samples[i].label);
  }

  ModelCheckpoint scored = model;
  scored.has_classifier = true;

  MetricsRecord last;
  last.split = "test";
  last.protocol = "linear";

  auto t_prev = std::chrono::steady_clock::now();
  auto epoch_end = [&](std::size_t epoch, double ce_mean,
                       const LinearProbe& probe) {
    scored.clf_w = probe.w;
    scored.clf_b = probe.b;
    MetricsRecord rec;
    rec.epoch = epoch;
    rec.split = "test";
    rec.protocol = "linear";
    rec.ce_loss = ce_mean;
    rec.top1 = test_top1(scored, data, split.test, opts.workers);
    const auto now = std::chrono::steady_clock::now();
    rec.seconds = std::chrono::duration<double>(now - t_prev).count();
    t_prev = now;
    if (metrics != nullptr) metrics->write(rec);
    last = rec;
  };

  LinearProbe probe = train_linear_probe(train_feats, train_labels,
                                         data.n_classes(), opts, epoch_end);
  scored.clf_w = probe.w;
  scored.clf_b = probe.b;
  if (!last.top1.has_value()) {
    // Zero-epoch runs still report the untrained accuracy.
    last.top1 = test_top1(scored, data, split.test, opts.workers);
  }

  if (trained_out != nullptr) {
    *trained_out = model;
    trained_out->has_classifier = true;
    trained_out->clf_w = probe.w.clone();
    trained_out->clf_b = probe.b.clone();
  }
  return last;
}

namespace {

MetricsRecord train_end_to_end(const ModelCheckpoint& model,
                               const Dataset& data, double fraction,
                               const char* protocol, const TrainOptions& opts,
                               MetricsWriter* metrics,
                               ModelCheckpoint* trained_out) {
  data.validate();
  const SplitView split = subject_split(data, opts.split_mod);
  if (split.train.empty() || split.test.empty()) {
    throw ContractError("train_end_to_end: empty split");
  }

  // The labeled pool: a category-balanced fraction of the train split.
  Dataset train_view;
  train_view.topology = data.topology;
  train_view.class_names = data.class_names;
  for (std::size_t i : split.train) train_view.samples.push_back(data.samples[i]);
  Dataset labeled = train_view;
  if (fraction < 1.0) {
    auto rng = stream_for(opts.seed, StreamTag::kSubset);
    labeled = category_balanced_subset(train_view, fraction, rng);
  }

  const Tensor adj = build_adjacency(data.topology);
  EncoderParams enc = model.query.clone(/*requires_grad=*/true);
  const std::size_t d = model.cfg.embed_dim;
  ClassifierInit clf = init_classifier(data.n_classes(), d, opts.seed);

  std::vector<Tensor> params = enc.tensors();
  params.push_back(clf.w);
  params.push_back(clf.b);
  AdamW opt(params, AdamWConfig{opts.lr, 0.9, 0.999, 1e-8, opts.weight_decay});
  Schedule schedule{opts.lr, opts.lr_milestones};
  schedule.validate();

  auto current_model = [&]() {
    ModelCheckpoint m;
    m.cfg = model.cfg;
    m.in_channels = model.in_channels;
    m.query = enc;  // shared storage: reflects training as it happens
    m.variational = model.variational;
    m.stream = model.stream;
    m.epochs_done = model.epochs_done;
    m.has_classifier = true;
    m.clf_w = clf.w;
    m.clf_b = clf.b;
    return m;
  };

  MetricsRecord last;
  last.split = "test";
  last.protocol = protocol;
  last.top1 = test_top1(current_model(), data, split.test, opts.workers);

  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    opt.set_lr(schedule.lr_at(epoch));
    std::vector<std::size_t> order(labeled.samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle_indices(order, stream_for(opts.seed, StreamTag::kShuffle, epoch, 2));

    double ce_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += opts.batch) {
      const std::size_t count = std::min(opts.batch, order.size() - start);
      opt.zero_grad();
      for (std::size_t i = 0; i < count; ++i) {
        const SkeletonSequence& s = labeled.samples[order[start + i]];
        Tape tape;
        SkeletonSequence centered = center_on_root(s, data.topology.root);
        Tensor h = stgcn_forward(&tape, to_tensor(centered), enc, adj);
        GaussianOut g = gaussian_head_forward(&tape, h, enc.head);
        Tensor logits = ops::affine(&tape, clf.w, g.mu, clf.b);
        Tensor ce = cross_entropy(&tape, logits, s.label);
        ce_sum += ce.value();
        backward(tape, ops::scale(&tape, ce, 1.0 / static_cast<double>(count)));
      }
      opt.step();
    }

    MetricsRecord rec;
    rec.epoch = epoch;
    rec.split = "test";
    rec.protocol = protocol;
    rec.ce_loss = ce_sum / static_cast<double>(labeled.samples.size());
    rec.top1 = test_top1(current_model(), data, split.test, opts.workers);
    rec.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    if (metrics != nullptr) metrics->write(rec);
    last = rec;
  }

  if (trained_out != nullptr) {
    *trained_out = current_model();
    trained_out->query = enc.clone(/*requires_grad=*/false);
    trained_out->clf_w = clf.w.clone();
    trained_out->clf_b = clf.b.clone();
  }
  return last;
}

}  // namespace

MetricsRecord semi_supervised(const ModelCheckpoint& model, const Dataset& data,
                              double fraction, const TrainOptions& opts,
                              MetricsWriter* metrics,
                              ModelCheckpoint* trained_out) {
  if (fraction <= 0.0 || fraction > 1.0) {
    throw ContractError("semi_supervised: fraction must be in (0, 1]");
  }
  return train_end_to_end(model, data, fraction, "semi", opts, metrics,
                          trained_out);
}

MetricsRecord finetune(const ModelCheckpoint& model, const Dataset& data,
                       const TrainOptions& opts, MetricsWriter* metrics,
                       ModelCheckpoint* trained_out) {
  return train_end_to_end(model, data, 1.0, "finetune", opts, metrics,
                          trained_out);
}

void embedding_dump(const ModelCheckpoint& model, const Dataset& data,
                    const std::string& path, std::size_t workers) {
  std::vector<std::size_t> all(data.samples.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const auto embeds = compute_embeddings(model, data, all, workers);
  std::ofstream out(path);
  if (!out) throw FormatError("embedding_dump: cannot write " + path);
  out << "label,dim=" << model.cfg.embed_dim << "\n";
  char buf[32];
  for (std::size_t i = 0; i < all.size(); ++i) {
    out << data.samples[i].label;
    for (double v : embeds[i]) {
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      out << "," << buf;
    }
    out << "\n";
  }
}

}  // namespace vcl
