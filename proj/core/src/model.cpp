#include "chapterkit/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "chapterkit/errors.hpp"
#include "chapterkit/version.hpp"

namespace chapterkit::model {

using autograd::Tape;
using autograd::Var;
using nlohmann::ordered_json;

ModelConfig ModelConfig::toy() { return ModelConfig{}; }

ModelConfig ModelConfig::reference() {
  ModelConfig c;
  c.vocab_size = 30522;
  c.sent_layers = 6;
  c.sent_heads = 12;
  c.sent_width = 384;
  c.max_tokens = 256;
  c.doc_layers = 12;
  c.doc_heads = 8;
  c.doc_width = 384;
  c.dropout = 0.1;
  return c;
}

void ModelConfig::validate() const {
  if (vocab_size < 3)
    throw Error(ErrorCode::BadConfig, "vocabulary must hold PAD, OOV, words");
  if (sent_width % sent_heads != 0 || doc_width % doc_heads != 0)
    throw Error(ErrorCode::BadConfig, "width not divisible by head count");
  if ((doc_width / doc_heads) % 2 != 0)
    throw Error(ErrorCode::OddDimension,
                "document head width must be even for rotary embeddings");
  if (dropout < 0.0 || dropout >= 1.0)
    throw Error(ErrorCode::BadConfig, "dropout must be in [0, 1)");
  if (max_tokens < 1)
    throw Error(ErrorCode::BadConfig, "max_tokens must be positive");
  schedule.validate(doc_layers);
}

std::string ModelConfig::to_json() const {
  ordered_json j;
  j["vocab_size"] = vocab_size;
  j["sent_layers"] = sent_layers;
  j["sent_heads"] = sent_heads;
  j["sent_width"] = sent_width;
  j["max_tokens"] = max_tokens;
  j["doc_layers"] = doc_layers;
  j["doc_heads"] = doc_heads;
  j["doc_width"] = doc_width;
  j["dropout"] = dropout;
  j["schedule"] = {{"mode", schedule.is_online() ? "online" : "offline"},
                   {"alpha", schedule.alpha}};
  j["sentence_source"] =
      sentence_source == SentenceSource::Scratch ? "scratch" : "frozen";
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  ordered_json j = ordered_json::parse(text);
  ModelConfig c;
  c.vocab_size = j.at("vocab_size").get<int>();
  c.sent_layers = j.at("sent_layers").get<int>();
  c.sent_heads = j.at("sent_heads").get<int>();
  c.sent_width = j.at("sent_width").get<int>();
  c.max_tokens = j.at("max_tokens").get<int>();
  c.doc_layers = j.at("doc_layers").get<int>();
  c.doc_heads = j.at("doc_heads").get<int>();
  c.doc_width = j.at("doc_width").get<int>();
  c.dropout = j.at("dropout").get<double>();
  std::string mode = j.at("schedule").at("mode").get<std::string>();
  std::vector<int> alpha =
      j.at("schedule").at("alpha").get<std::vector<int>>();
  c.schedule = mode == "online" ? MaskSchedule::online(std::move(alpha))
                                : MaskSchedule::offline();
  c.sentence_source = j.at("sentence_source").get<std::string>() == "frozen"
                          ? SentenceSource::FrozenFile
                          : SentenceSource::Scratch;
  return c;
}

namespace {

std::vector<std::string> lowercase_words(const std::string& text) {
  std::vector<std::string> words;
  std::string current;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!current.empty()) words.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(
          static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

}  // namespace

Vocab Vocab::build(const std::vector<corpus::Document>& docs, int max_size) {
  std::unordered_map<std::string, long> counts;
  for (const corpus::Document& doc : docs)
    for (const corpus::Sentence& s : doc.sentences)
      for (std::string& w : lowercase_words(s.text)) ++counts[w];
  std::vector<std::pair<std::string, long>> ranked(counts.begin(),
                                                   counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<std::string> words;
  size_t limit = max_size > 2 ? static_cast<size_t>(max_size - 2) : 0;
  for (size_t i = 0; i < ranked.size() && i < limit; ++i)
    words.push_back(ranked[i].first);
  return from_words(std::move(words));
}

Vocab Vocab::from_words(std::vector<std::string> words) {
  Vocab v;
  v.words_ = std::move(words);
  for (size_t i = 0; i < v.words_.size(); ++i)
    v.index_[v.words_[i]] = static_cast<int>(i) + 2;
  return v;
}

std::vector<int> Vocab::encode(const std::string& sentence_text,
                               int max_tokens) const {
  std::vector<int> ids;
  for (const std::string& w : lowercase_words(sentence_text)) {
    if (static_cast<int>(ids.size()) >= max_tokens) break;
    auto it = index_.find(w);
    ids.push_back(it == index_.end() ? kUnk : it->second);
  }
  return ids;
}

std::string FrozenEmbeddings::hash_sentence(const std::string& text) {
  uint64_t hash = 14695981039346656037ULL;
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(hash));
  return std::string(buf);
}

void FrozenEmbeddings::add(const std::string& text,
                           std::vector<double> vector) {
  if (width_ == 0) width_ = static_cast<int>(vector.size());
  if (static_cast<int>(vector.size()) != width_)
    throw Error(ErrorCode::ShapeMismatch, "embedding width mismatch");
  table_[hash_sentence(text)] = std::move(vector);
}

const std::vector<double>* FrozenEmbeddings::lookup(
    const std::string& text) const {
  auto it = table_.find(hash_sentence(text));
  return it == table_.end() ? nullptr : &it->second;
}

std::string FrozenEmbeddings::to_jsonl() const {
  // Sorted by hash for reproducible files.
  std::vector<std::string> keys;
  keys.reserve(table_.size());
  for (const auto& [k, v] : table_) keys.push_back(k);
  std::sort(keys.begin(), keys.end());
  std::string out;
  {
    ordered_json header;
    header["format"] = kEmbeddingTableFormatVersion;
    header["width"] = width_;
    out += header.dump();
    out.push_back('\n');
  }
  for (const std::string& k : keys) {
    ordered_json j;
    j["sentence_hash"] = k;
    j["vector"] = table_.at(k);
    out += j.dump();
    out.push_back('\n');
  }
  return out;
}

FrozenEmbeddings FrozenEmbeddings::from_jsonl(const std::string& text) {
  FrozenEmbeddings table;
  std::istringstream in(text);
  std::string line;
  bool saw_header = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ordered_json j = ordered_json::parse(line);
    if (!saw_header) {
      saw_header = true;
      if (!j.contains("format") ||
          j.at("format").get<std::string>() != kEmbeddingTableFormatVersion)
        throw Error(ErrorCode::InputError,
                    "unsupported frozen-embedding file format");
      table.width_ = j.at("width").get<int>();
      continue;
    }
    std::string hash = j.at("sentence_hash").get<std::string>();
    std::vector<double> vec = j.at("vector").get<std::vector<double>>();
    if (static_cast<int>(vec.size()) != table.width_)
      throw Error(ErrorCode::ShapeMismatch, "embedding width mismatch");
    table.table_[hash] = std::move(vec);
  }
  if (!saw_header)
    throw Error(ErrorCode::InputError, "empty frozen-embedding file");
  return table;
}

namespace {

Tensor xavier(std::vector<size_t> shape, Rng& rng) {
  double fan_in = static_cast<double>(shape[0]);
  double fan_out = static_cast<double>(shape.size() > 1 ? shape[1] : shape[0]);
  double std = std::sqrt(2.0 / (fan_in + fan_out));
  return Tensor::randn(std::move(shape), rng, std);
}

void init_block(ParamMap& params, const std::string& prefix, int layers,
                int width, Rng& rng) {
  size_t w = static_cast<size_t>(width);
  size_t hidden = 4 * w;
  for (int l = 0; l < layers; ++l) {
    std::string lp = prefix + ".l" + std::to_string(l);
    params[lp + ".ln1.gain"] = Tensor::full({w}, 1.0);
    params[lp + ".ln1.bias"] = Tensor({w});
    params[lp + ".attn.wq"] = xavier({w, w}, rng);
    params[lp + ".attn.bq"] = Tensor({w});
    params[lp + ".attn.wk"] = xavier({w, w}, rng);
    params[lp + ".attn.bk"] = Tensor({w});
    params[lp + ".attn.wv"] = xavier({w, w}, rng);
    params[lp + ".attn.bv"] = Tensor({w});
    params[lp + ".attn.wo"] = Tensor({w, w});  // zero residual branch
    params[lp + ".attn.bo"] = Tensor({w});
    params[lp + ".ln2.gain"] = Tensor::full({w}, 1.0);
    params[lp + ".ln2.bias"] = Tensor({w});
    params[lp + ".ffn.w1"] = xavier({w, hidden}, rng);
    params[lp + ".ffn.b1"] = Tensor({hidden});
    params[lp + ".ffn.w2"] = Tensor({hidden, w});  // zero residual branch
    params[lp + ".ffn.b2"] = Tensor({w});
  }
  params[prefix + ".final_ln.gain"] = Tensor::full({w}, 1.0);
  params[prefix + ".final_ln.bias"] = Tensor({w});
}

}  // namespace

ParamMap init_params(const ModelConfig& config, uint64_t seed) {
  config.validate();
  Rng rng(derive_seed(seed, 0x1217u));
  ParamMap params;
  if (config.sentence_source == ModelConfig::SentenceSource::Scratch) {
    params["sent.embed"] =
        Tensor::randn({static_cast<size_t>(config.vocab_size),
                       static_cast<size_t>(config.sent_width)},
                      rng, 0.02);
    params["sent.pos"] =
        Tensor::randn({static_cast<size_t>(config.max_tokens),
                       static_cast<size_t>(config.sent_width)},
                      rng, 0.02);
    init_block(params, "sent", config.sent_layers, config.sent_width, rng);
  }
  if (config.sent_width != config.doc_width) {
    params["proj.w"] = xavier({static_cast<size_t>(config.sent_width),
                               static_cast<size_t>(config.doc_width)},
                              rng);
    params["proj.b"] = Tensor({static_cast<size_t>(config.doc_width)});
  }
  init_block(params, "doc", config.doc_layers, config.doc_width, rng);
  params["head.w"] = Tensor({static_cast<size_t>(config.doc_width), 1});
  params["head.b"] = Tensor({1});
  return params;
}

Segmenter::Segmenter(ModelConfig config, uint64_t seed)
    : config_(std::move(config)), params_(init_params(config_, seed)) {}

Segmenter::Segmenter(ModelConfig config, ParamMap params, Vocab vocab)
    : config_(std::move(config)),
      params_(std::move(params)),
      vocab_(std::move(vocab)) {
  config_.validate();
}

void Segmenter::set_frozen_embeddings(FrozenEmbeddings table) {
  if (table.width() != config_.sent_width)
    throw Error(ErrorCode::ShapeMismatch,
                "frozen embedding width does not match sentence width");
  frozen_ = std::move(table);
  has_frozen_ = true;
}

const FrozenEmbeddings* Segmenter::frozen_embeddings() const {
  return has_frozen_ ? &frozen_ : nullptr;
}

Var Segmenter::transformer_stack(Tape& tape, Var x, const std::string& prefix,
                                 int layers, int heads, int width, bool rotary,
                                 const std::vector<BoolMatrix>& masks,
                                 const ForwardOptions& opts) const {
  auto P = [&](const std::string& name) -> Var {
    auto it = params_.find(name);
    if (it == params_.end())
      throw Error(ErrorCode::InputError, "missing parameter: " + name);
    return tape.param(&it->second);
  };
  auto drop = [&](Var v) -> Var {
    if (!opts.training || opts.dropout <= 0.0 || !opts.dropout_rng) return v;
    return tape.dropout(v, opts.dropout, *opts.dropout_rng, true);
  };

  size_t dh = static_cast<size_t>(width / heads);
  for (int l = 0; l < layers; ++l) {
    std::string lp = prefix + ".l" + std::to_string(l);
    Var normed = tape.layer_norm(x, P(lp + ".ln1.gain"), P(lp + ".ln1.bias"));
    Var q = tape.add_rowvec(tape.matmul(normed, P(lp + ".attn.wq")),
                            P(lp + ".attn.bq"));
    Var k = tape.add_rowvec(tape.matmul(normed, P(lp + ".attn.wk")),
                            P(lp + ".attn.bk"));
    Var v = tape.add_rowvec(tape.matmul(normed, P(lp + ".attn.wv")),
                            P(lp + ".attn.bv"));
    std::vector<Var> head_outputs;
    head_outputs.reserve(static_cast<size_t>(heads));
    for (int h = 0; h < heads; ++h) {
      Var qh = tape.col_slice(q, static_cast<size_t>(h) * dh, dh);
      Var kh = tape.col_slice(k, static_cast<size_t>(h) * dh, dh);
      Var vh = tape.col_slice(v, static_cast<size_t>(h) * dh, dh);
      if (rotary) {
        qh = tape.rope_rotate(qh);
        kh = tape.rope_rotate(kh);
      }
      head_outputs.push_back(
          tape.masked_attention(qh, kh, vh, masks[static_cast<size_t>(l)]));
    }
    Var merged = tape.col_concat(head_outputs);
    Var attn_out = tape.add_rowvec(tape.matmul(merged, P(lp + ".attn.wo")),
                                   P(lp + ".attn.bo"));
    x = tape.add(x, drop(attn_out));

    Var normed2 = tape.layer_norm(x, P(lp + ".ln2.gain"), P(lp + ".ln2.bias"));
    Var hidden = tape.gelu(tape.add_rowvec(
        tape.matmul(normed2, P(lp + ".ffn.w1")), P(lp + ".ffn.b1")));
    Var ffn_out = tape.add_rowvec(tape.matmul(hidden, P(lp + ".ffn.w2")),
                                  P(lp + ".ffn.b2"));
    x = tape.add(x, drop(ffn_out));
  }
  return tape.layer_norm(x, P(prefix + ".final_ln.gain"),
                         P(prefix + ".final_ln.bias"));
}

Var Segmenter::encode_sentence(Tape& tape, const std::vector<int>& tokens,
                               const ForwardOptions& opts) const {
  if (tokens.empty())
    throw Error(ErrorCode::EmptySentence, "cannot encode an empty sentence");
  std::vector<int> ids = tokens;
  if (static_cast<int>(ids.size()) > config_.max_tokens)
    ids.resize(static_cast<size_t>(config_.max_tokens));
  std::vector<uint8_t> valid(ids.size());
  size_t valid_count = 0;
  for (size_t i = 0; i < ids.size(); ++i) {
    valid[i] = ids[i] != Vocab::kPad ? 1 : 0;
    valid_count += valid[i];
  }
  if (valid_count == 0)
    throw Error(ErrorCode::EmptySentence, "sentence is all padding");

  auto P = [&](const std::string& name) -> Var {
    auto it = params_.find(name);
    if (it == params_.end())
      throw Error(ErrorCode::InputError, "missing parameter: " + name);
    return tape.param(&it->second);
  };

  Var h = tape.rows_gather(P("sent.embed"), ids);
  h = tape.add(h, tape.row_slice(P("sent.pos"), 0, ids.size()));

  BoolMatrix mask(ids.size(), false);
  for (size_t i = 0; i < ids.size(); ++i) {
    mask.set(i, i, true);
    if (!valid[i]) continue;
    for (size_t j = 0; j < ids.size(); ++j)
      if (valid[j]) mask.set(i, j, true);
  }
  std::vector<BoolMatrix> masks(static_cast<size_t>(config_.sent_layers),
                                mask);
  h = transformer_stack(tape, h, "sent", config_.sent_layers,
                        config_.sent_heads, config_.sent_width,
                        /*rotary=*/false, masks, opts);
  return tape.mean_pool(h, valid);
}

Var Segmenter::encode_document(Tape& tape, Var vectors,
                               const ForwardOptions& opts) const {
  Var x = vectors;
  size_t n = tape.value(vectors).shape()[0];
  if (config_.sent_width != config_.doc_width) {
    auto it_w = params_.find("proj.w");
    auto it_b = params_.find("proj.b");
    if (it_w == params_.end() || it_b == params_.end())
      throw Error(ErrorCode::InputError, "missing projection parameters");
    x = tape.add_rowvec(tape.matmul(x, tape.param(&it_w->second)),
                        tape.param(&it_b->second));
  }
  std::vector<BoolMatrix> masks;
  masks.reserve(static_cast<size_t>(config_.doc_layers));
  for (int l = 1; l <= config_.doc_layers; ++l)
    masks.push_back(mask_for_layer(l, config_.doc_layers, n, config_.schedule));
  x = transformer_stack(tape, x, "doc", config_.doc_layers, config_.doc_heads,
                        config_.doc_width, /*rotary=*/true, masks, opts);
  auto it_w = params_.find("head.w");
  auto it_b = params_.find("head.b");
  Var logits = tape.add_rowvec(tape.matmul(x, tape.param(&it_w->second)),
                               tape.param(&it_b->second));
  return tape.sigmoid(logits);  // [n x 1]
}

Var Segmenter::forward_tokens(
    Tape& tape, const std::vector<std::vector<int>>& sentence_tokens,
    const ForwardOptions& opts) const {
  if (sentence_tokens.empty())
    throw Error(ErrorCode::EmptyDocument, "no sentences to encode");
  if (config_.sentence_source == ModelConfig::SentenceSource::FrozenFile)
    throw Error(ErrorCode::InputError,
                "frozen-embedding models need sentence texts, not tokens");
  std::vector<Var> rows;
  rows.reserve(sentence_tokens.size());
  for (const std::vector<int>& tokens : sentence_tokens)
    rows.push_back(encode_sentence(tape, tokens, opts));
  Var stacked = tape.stack_rows(rows);
  if (!opts.backprop_sentences) stacked = tape.detach(stacked);
  return encode_document(tape, stacked, opts);
}

std::vector<std::vector<int>> Segmenter::tokenize(
    const corpus::Document& doc) const {
  std::vector<std::vector<int>> out;
  out.reserve(doc.sentences.size());
  for (const corpus::Sentence& s : doc.sentences)
    out.push_back(tokenize_sentence(s.text));
  return out;
}

std::vector<int> Segmenter::tokenize_sentence(const std::string& text) const {
  std::vector<int> ids = vocab_.encode(text, config_.max_tokens);
  if (ids.empty()) ids.push_back(Vocab::kUnk);
  return ids;
}

std::vector<double> Segmenter::probabilities(
    const std::vector<std::vector<int>>& sentence_tokens) const {
  Tape tape;
  ForwardOptions opts;
  Var probs = forward_tokens(tape, sentence_tokens, opts);
  const Tensor& t = tape.value(probs);
  return std::vector<double>(t.vec().begin(), t.vec().end());
}

std::vector<double> Segmenter::probabilities(
    const corpus::Document& doc) const {
  if (config_.sentence_source == ModelConfig::SentenceSource::FrozenFile) {
    if (!has_frozen_)
      throw Error(ErrorCode::InputError, "frozen-embedding table not loaded");
    size_t w = static_cast<size_t>(config_.sent_width);
    Tensor stacked({doc.sentences.size(), w});
    for (size_t i = 0; i < doc.sentences.size(); ++i) {
      const std::vector<double>* vec = frozen_.lookup(doc.sentences[i].text);
      if (!vec)
        throw Error(ErrorCode::InputError,
                    "sentence missing from frozen-embedding table");
      for (size_t c = 0; c < w; ++c) stacked.at(i, c) = (*vec)[c];
    }
    Tape tape;
    ForwardOptions opts;
    Var probs = encode_document(tape, tape.leaf(std::move(stacked)), opts);
    const Tensor& t = tape.value(probs);
    return std::vector<double>(t.vec().begin(), t.vec().end());
  }
  return probabilities(tokenize(doc));
}

std::vector<int> Segmenter::predict(const corpus::Document& doc,
                                    double threshold) const {
  std::vector<double> probs = probabilities(doc);
  std::vector<int> labels(probs.size(), 0);
  for (size_t i = 0; i < probs.size(); ++i)
    labels[i] = probs[i] > threshold ? 1 : 0;
  if (!labels.empty()) labels.back() = 1;
  return labels;
}

std::string params_to_json(const ParamMap& params) {
  ordered_json j;
  for (const auto& [name, tensor] : params) {
    ordered_json entry;
    entry["shape"] = tensor.shape();
    entry["data"] = tensor.vec();
    j[name] = std::move(entry);
  }
  return j.dump();
}

ParamMap params_from_json(const std::string& text) {
  ordered_json j = ordered_json::parse(text);
  ParamMap params;
  for (auto it = j.begin(); it != j.end(); ++it) {
    std::vector<size_t> shape = it.value().at("shape").get<std::vector<size_t>>();
    std::vector<double> data = it.value().at("data").get<std::vector<double>>();
    params[it.key()] = Tensor(std::move(shape), std::move(data));
  }
  return params;
}

}  // namespace chapterkit::model
