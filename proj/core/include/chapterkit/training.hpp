#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "chapterkit/corpus.hpp"
#include "chapterkit/metrics.hpp"
#include "chapterkit/model.hpp"
#include "chapterkit/rng.hpp"

namespace chapterkit::train {

struct TrainConfig {
  double w0 = 1.0;  // loss weight, negative class
  double w1 = 2.0;  // loss weight, positive class
  double learning_rate = 2.5e-5;
  long token_budget = 115000;  // sentence-encoder tokens per batch
  int epochs = 15;
  std::string schedule = "cosine";
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 0.01;
  double eps = 1e-8;
  double dropout = 0.1;
  double gradient_sampling_rate = 0.5;
  uint64_t seed = 0;
  double threshold = 0.5;  // validation F1 decision threshold
  int jobs = 1;

  std::string to_json() const;
  static TrainConfig from_json(const std::string& text);
  // Flat key-value file, one `key = value` per line; keys match the field
  // names ("w" takes the pair, e.g. "w = 1,2").
  static TrainConfig from_key_value(const std::string& text);
};

// Independent Bernoulli(rate) flag per document; a false flag detaches the
// document's sentence vectors so no gradient reaches the sentence encoder.
std::vector<uint8_t> sample_gradient_flags(size_t doc_count, double rate,
                                           Rng& rng);

// base * 0.5 * (1 + cos(pi * step / total_steps)); no warmup.
double cosine_lr(long step, long total_steps, double base);

// Shuffles documents by seed and greedily packs them so each batch stays
// within the token budget. A document never splits across batches.
std::vector<std::vector<size_t>> make_batches(
    const std::vector<long>& doc_token_counts, long token_budget,
    uint64_t seed);

struct Checkpoint {
  model::ModelConfig config;
  std::vector<std::string> vocab_words;
  model::ParamMap params;       // current training state (for resume)
  model::ParamMap best_params;  // best-validation-F1 snapshot
  model::ParamMap opt_m, opt_v;
  long step = 0;
  int epochs_done = 0;
  double best_val_f1 = -1.0;
  TrainConfig train_config;

  const model::ParamMap& inference_params() const {
    return best_params.empty() ? params : best_params;
  }
  model::Segmenter make_segmenter() const;

  std::string to_json() const;
  static Checkpoint from_json(const std::string& text);
  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);
};

struct HistoryEntry {
  int epoch = 0;
  long step = 0;
  double loss = 0.0;
  double lr = 0.0;
  bool has_val = false;
  double val_f1 = 0.0;

  std::string to_json() const;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<HistoryEntry> history;
};

// Supervised training with weighted BCE over non-final sentence positions,
// per-document gradient sampling, AdamW, and a cosine schedule. Identical
// seeds and configs produce bit-identical checkpoints; resuming from a
// saved checkpoint continues the exact same run.
TrainResult train(const std::vector<corpus::Document>& train_docs,
                  const std::vector<corpus::Document>& val_docs,
                  const model::ModelConfig& model_config,
                  const TrainConfig& train_config,
                  const Checkpoint* resume_from = nullptr);

metrics::MetricReport evaluate_checkpoint(
    const Checkpoint& checkpoint, const std::vector<corpus::Document>& docs,
    const metrics::MetricConfig& metric_config, double threshold = 0.5,
    int jobs = 1);

// Pooled boundary F1 of a segmenter over documents at a threshold.
double validation_f1(const model::Segmenter& segmenter,
                     const std::vector<corpus::Document>& docs,
                     double threshold, int jobs = 1);

}  // namespace chapterkit::train
