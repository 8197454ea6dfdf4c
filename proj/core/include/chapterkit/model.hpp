#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "chapterkit/autograd.hpp"
#include "chapterkit/corpus.hpp"
#include "chapterkit/mask_schedule.hpp"
#include "chapterkit/rng.hpp"
#include "chapterkit/tensor.hpp"

namespace chapterkit::model {

struct ModelConfig {
  enum class SentenceSource { Scratch, FrozenFile };

  int vocab_size = 512;  // includes PAD and OOV
  int sent_layers = 2;
  int sent_heads = 2;
  int sent_width = 32;
  int max_tokens = 32;  // sentences are truncated beyond this
  int doc_layers = 4;
  int doc_heads = 4;
  int doc_width = 64;
  double dropout = 0.1;
  MaskSchedule schedule = MaskSchedule::offline();
  SentenceSource sentence_source = SentenceSource::Scratch;

  static ModelConfig toy();
  // The full-size configuration from the reference experiments (12-layer,
  // 8-head, 384-wide document encoder over a 6-layer sentence encoder).
  static ModelConfig reference();

  void validate() const;
  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
};

// Word-level vocabulary. Id 0 is PAD, id 1 is the reserved OOV id; unknown
// tokens map to OOV rather than erroring.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;

  Vocab() = default;
  static Vocab build(const std::vector<corpus::Document>& docs, int max_size);
  static Vocab from_words(std::vector<std::string> words);

  std::vector<int> encode(const std::string& sentence_text,
                          int max_tokens) const;
  const std::vector<std::string>& words() const { return words_; }
  int size() const { return static_cast<int>(words_.size()) + 2; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
};

// Pre-computed sentence vectors keyed by a 64-bit FNV-1a hash of the exact
// sentence text. Vectors looked up here enter the document encoder as
// constants.
class FrozenEmbeddings {
 public:
  static std::string hash_sentence(const std::string& text);

  void add(const std::string& text, std::vector<double> vector);
  const std::vector<double>* lookup(const std::string& text) const;
  size_t count() const { return table_.size(); }
  int width() const { return width_; }

  std::string to_jsonl() const;
  static FrozenEmbeddings from_jsonl(const std::string& text);

 private:
  std::unordered_map<std::string, std::vector<double>> table_;
  int width_ = 0;
};

using ParamMap = std::map<std::string, Tensor>;

struct ForwardOptions {
  bool training = false;
  double dropout = 0.0;
  Rng* dropout_rng = nullptr;
  // Gradient sampling: when false the sentence vectors enter the document
  // encoder as constants and no gradient reaches the sentence encoder.
  bool backprop_sentences = true;
};

// The hierarchical segmenter: a sentence encoder pools token states into
// sentence vectors; a rotary-position document encoder labels every
// sentence with a boundary probability under the configured mask schedule.
class Segmenter {
 public:
  Segmenter(ModelConfig config, uint64_t seed);  // fresh parameter init
  Segmenter(ModelConfig config, ParamMap params, Vocab vocab);

  const ModelConfig& config() const { return config_; }
  const ParamMap& params() const { return params_; }
  ParamMap& mutable_params() { return params_; }
  const Vocab& vocab() const { return vocab_; }
  void set_vocab(Vocab vocab) { vocab_ = std::move(vocab); }
  void set_frozen_embeddings(FrozenEmbeddings table);
  const FrozenEmbeddings* frozen_embeddings() const;

  // Differentiable sentence representation; tokens must be non-empty.
  autograd::Var encode_sentence(autograd::Tape& tape,
                                const std::vector<int>& tokens,
                                const ForwardOptions& opts) const;

  // Differentiable boundary probabilities [n] from token id sequences.
  autograd::Var forward_tokens(
      autograd::Tape& tape,
      const std::vector<std::vector<int>>& sentence_tokens,
      const ForwardOptions& opts) const;

  // Per-sentence boundary probabilities from already-encoded sentence
  // vectors (one row per sentence).
  autograd::Var encode_document(autograd::Tape& tape, autograd::Var vectors,
                                const ForwardOptions& opts) const;

  std::vector<std::vector<int>> tokenize(const corpus::Document& doc) const;
  std::vector<int> tokenize_sentence(const std::string& text) const;

  // Inference-path probabilities.
  std::vector<double> probabilities(
      const std::vector<std::vector<int>>& sentence_tokens) const;
  std::vector<double> probabilities(const corpus::Document& doc) const;

  // Thresholded labels; the final sentence is forced to 1.
  std::vector<int> predict(const corpus::Document& doc,
                           double threshold = 0.5) const;

 private:
  autograd::Var transformer_stack(autograd::Tape& tape, autograd::Var x,
                                  const std::string& prefix, int layers,
                                  int heads, int width, bool rotary,
                                  const std::vector<BoolMatrix>& masks,
                                  const ForwardOptions& opts) const;

  ModelConfig config_;
  ParamMap params_;
  Vocab vocab_;
  bool has_frozen_ = false;
  FrozenEmbeddings frozen_;
};

// Fresh parameter tensors for the configuration. Residual output
// projections, the boundary head, and all biases start at zero; the rest
// is Xavier-normal.
ParamMap init_params(const ModelConfig& config, uint64_t seed);

// Flat JSON (de)serialization of parameter maps, shared by checkpoints and
// the frozen-embedding tooling.
std::string params_to_json(const ParamMap& params);
ParamMap params_from_json(const std::string& text);

}  // namespace chapterkit::model
