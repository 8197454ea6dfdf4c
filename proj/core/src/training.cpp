#include "chapterkit/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "chapterkit/errors.hpp"
#include "chapterkit/io.hpp"
#include "chapterkit/parallel.hpp"
#include "chapterkit/version.hpp"

namespace chapterkit::train {

using model::ParamMap;
using model::Segmenter;
using nlohmann::ordered_json;

namespace {

constexpr uint64_t kBatchTag = 0xba7c4;
constexpr uint64_t kFlagTag = 0xf1a65;
constexpr uint64_t kDropTag = 0xd409;

ordered_json train_config_json(const TrainConfig& c) {
  ordered_json j;
  j["w"] = {c.w0, c.w1};
  j["learning_rate"] = c.learning_rate;
  j["token_budget"] = c.token_budget;
  j["epochs"] = c.epochs;
  j["schedule"] = c.schedule;
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["weight_decay"] = c.weight_decay;
  j["eps"] = c.eps;
  j["dropout"] = c.dropout;
  j["gradient_sampling_rate"] = c.gradient_sampling_rate;
  j["seed"] = c.seed;
  j["threshold"] = c.threshold;
  j["jobs"] = c.jobs;
  return j;
}

TrainConfig train_config_from(const ordered_json& j) {
  TrainConfig c;
  c.w0 = j.at("w").at(0).get<double>();
  c.w1 = j.at("w").at(1).get<double>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.token_budget = j.at("token_budget").get<long>();
  c.epochs = j.at("epochs").get<int>();
  c.schedule = j.at("schedule").get<std::string>();
  c.beta1 = j.at("beta1").get<double>();
  c.beta2 = j.at("beta2").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.eps = j.at("eps").get<double>();
  c.dropout = j.at("dropout").get<double>();
  c.gradient_sampling_rate = j.at("gradient_sampling_rate").get<double>();
  c.seed = j.at("seed").get<uint64_t>();
  c.threshold = j.at("threshold").get<double>();
  if (j.contains("jobs")) c.jobs = j.at("jobs").get<int>();
  return c;
}

}  // namespace

std::string TrainConfig::to_json() const {
  return train_config_json(*this).dump();
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  return train_config_from(ordered_json::parse(text));
}

TrainConfig TrainConfig::from_key_value(const std::string& text) {
  TrainConfig c;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    size_t eq = line.find('=');
    if (eq == std::string::npos) {
      if (line.find_first_not_of(" \t\r") != std::string::npos)
        throw Error(ErrorCode::InputError,
                    "config line " + std::to_string(lineno) + " has no '='");
      continue;
    }
    auto trim = [](std::string s) {
      size_t b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string();
      size_t e = s.find_last_not_of(" \t\r");
      return s.substr(b, e - b + 1);
    };
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) continue;
    try {
      if (key == "w") {
        size_t comma = value.find(',');
        if (comma == std::string::npos)
          throw Error(ErrorCode::InputError, "w needs two values");
        c.w0 = std::stod(value.substr(0, comma));
        c.w1 = std::stod(value.substr(comma + 1));
      } else if (key == "learning_rate") {
        c.learning_rate = std::stod(value);
      } else if (key == "token_budget") {
        c.token_budget = std::stol(value);
      } else if (key == "epochs") {
        c.epochs = std::stoi(value);
      } else if (key == "schedule") {
        c.schedule = value;
      } else if (key == "beta1") {
        c.beta1 = std::stod(value);
      } else if (key == "beta2") {
        c.beta2 = std::stod(value);
      } else if (key == "weight_decay") {
        c.weight_decay = std::stod(value);
      } else if (key == "eps") {
        c.eps = std::stod(value);
      } else if (key == "dropout") {
        c.dropout = std::stod(value);
      } else if (key == "gradient_sampling_rate") {
        c.gradient_sampling_rate = std::stod(value);
      } else if (key == "seed") {
        c.seed = std::stoull(value);
      } else if (key == "threshold") {
        c.threshold = std::stod(value);
      } else if (key == "jobs") {
        c.jobs = std::stoi(value);
      } else {
        throw Error(ErrorCode::InputError, "unknown config key: " + key);
      }
    } catch (const std::invalid_argument&) {
      throw Error(ErrorCode::InputError,
                  "bad value for " + key + ": " + value);
    }
  }
  return c;
}

std::vector<uint8_t> sample_gradient_flags(size_t doc_count, double rate,
                                           Rng& rng) {
  std::vector<uint8_t> flags(doc_count);
  for (size_t i = 0; i < doc_count; ++i)
    flags[i] = rng.bernoulli(rate) ? 1 : 0;
  return flags;
}

double cosine_lr(long step, long total_steps, double base) {
  if (total_steps <= 0) return base;
  double frac = static_cast<double>(step) / static_cast<double>(total_steps);
  return base * 0.5 * (1.0 + std::cos(M_PI * frac));
}

std::vector<std::vector<size_t>> make_batches(
    const std::vector<long>& doc_token_counts, long token_budget,
    uint64_t seed) {
  std::vector<size_t> order(doc_token_counts.size());
  std::iota(order.begin(), order.end(), 0);
  for (size_t i = 0; i < doc_token_counts.size(); ++i)
    if (doc_token_counts[i] > token_budget)
      throw Error(ErrorCode::DocumentTooLarge,
                  "document " + std::to_string(i) + " exceeds token budget");
  Rng rng(derive_seed(seed, kBatchTag));
  rng.shuffle(order);

  std::vector<std::vector<size_t>> batches;
  long used = 0;
  for (size_t idx : order) {
    long need = doc_token_counts[idx];
    if (batches.empty() || used + need > token_budget) {
      batches.emplace_back();
      used = 0;
    }
    batches.back().push_back(idx);
    used += need;
  }
  return batches;
}

namespace {

// AdamW with decoupled weight decay; updates walk the parameter map in
// name order so accumulation is deterministic.
struct AdamW {
  double lr_base, beta1, beta2, eps, weight_decay;
  ParamMap m, v;

  void ensure_state(const ParamMap& params) {
    for (const auto& [name, p] : params) {
      if (!m.count(name)) m[name] = Tensor(p.shape());
      if (!v.count(name)) v[name] = Tensor(p.shape());
    }
  }

  void step(ParamMap& params, const ParamMap& grads, long t, double lr) {
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (auto& [name, p] : params) {
      Tensor& mm = m.at(name);
      Tensor& vv = v.at(name);
      auto git = grads.find(name);
      const Tensor* g = git == grads.end() ? nullptr : &git->second;
      for (size_t i = 0; i < p.numel(); ++i) {
        double gi = g ? g->at(i) : 0.0;
        mm.at(i) = beta1 * mm.at(i) + (1.0 - beta1) * gi;
        vv.at(i) = beta2 * vv.at(i) + (1.0 - beta2) * gi * gi;
        double mhat = mm.at(i) / bc1;
        double vhat = vv.at(i) / bc2;
        p.at(i) -=
            lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * p.at(i));
      }
    }
  }
};

struct DocGradient {
  ParamMap grads;
  double weighted_loss = 0.0;  // sum of w_i * term_i (unnormalized)
  double weight_sum = 0.0;
  bool has_loss = false;
};

}  // namespace

Segmenter Checkpoint::make_segmenter() const {
  return Segmenter(config, inference_params(),
                   model::Vocab::from_words(vocab_words));
}

std::string Checkpoint::to_json() const {
  ordered_json j;
  j["format"] = kCheckpointFormatVersion;
  j["config"] = ordered_json::parse(config.to_json());
  j["train_config"] = train_config_json(train_config);
  j["vocab"] = vocab_words;
  j["step"] = step;
  j["epochs_done"] = epochs_done;
  j["best_val_f1"] = best_val_f1;
  j["params"] = ordered_json::parse(model::params_to_json(params));
  j["best_params"] = ordered_json::parse(model::params_to_json(best_params));
  j["opt_m"] = ordered_json::parse(model::params_to_json(opt_m));
  j["opt_v"] = ordered_json::parse(model::params_to_json(opt_v));
  return j.dump();
}

Checkpoint Checkpoint::from_json(const std::string& text) {
  ordered_json j = ordered_json::parse(text);
  if (!j.contains("format") ||
      j.at("format").get<std::string>() != kCheckpointFormatVersion)
    throw Error(ErrorCode::InputError, "unsupported checkpoint format");
  Checkpoint c;
  c.config = model::ModelConfig::from_json(j.at("config").dump());
  c.train_config = train_config_from(j.at("train_config"));
  c.vocab_words = j.at("vocab").get<std::vector<std::string>>();
  c.step = j.at("step").get<long>();
  c.epochs_done = j.at("epochs_done").get<int>();
  c.best_val_f1 = j.at("best_val_f1").get<double>();
  c.params = model::params_from_json(j.at("params").dump());
  c.best_params = model::params_from_json(j.at("best_params").dump());
  c.opt_m = model::params_from_json(j.at("opt_m").dump());
  c.opt_v = model::params_from_json(j.at("opt_v").dump());
  return c;
}

void Checkpoint::save(const std::string& path) const {
  write_file(path, to_json());
}

Checkpoint Checkpoint::load(const std::string& path) {
  return from_json(read_file(path));
}

std::string HistoryEntry::to_json() const {
  ordered_json j;
  j["epoch"] = epoch;
  j["step"] = step;
  j["loss"] = loss;
  j["lr"] = lr;
  if (has_val) j["val_f1"] = val_f1;
  return j.dump();
}

double validation_f1(const Segmenter& segmenter,
                     const std::vector<corpus::Document>& docs,
                     double threshold, int jobs) {
  std::vector<long> tps(docs.size(), 0), fps(docs.size(), 0),
      fns(docs.size(), 0);
  parallel_for(docs.size(), jobs, [&](size_t i) {
    std::vector<int> hyp = segmenter.predict(docs[i], threshold);
    metrics::Segmentation ref = metrics::Segmentation::from_labels(docs[i].labels);
    metrics::Segmentation h = metrics::Segmentation::from_labels(hyp);
    std::vector<int> rb = ref.internal_boundaries();
    std::vector<int> hb = h.internal_boundaries();
    std::set<int> rset(rb.begin(), rb.end());
    std::set<int> hset(hb.begin(), hb.end());
    for (int b : hb)
      rset.count(b) ? ++tps[i] : ++fps[i];
    for (int b : rb)
      if (!hset.count(b)) ++fns[i];
  });
  long tp = std::accumulate(tps.begin(), tps.end(), 0L);
  long fp = std::accumulate(fps.begin(), fps.end(), 0L);
  long fn = std::accumulate(fns.begin(), fns.end(), 0L);
  double p = (tp + fp) > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
  double r = (tp + fn) > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
  return (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
}

TrainResult train(const std::vector<corpus::Document>& train_docs,
                  const std::vector<corpus::Document>& val_docs,
                  const model::ModelConfig& model_config,
                  const TrainConfig& train_config,
                  const Checkpoint* resume_from) {
  if (train_docs.empty() || val_docs.empty())
    throw Error(ErrorCode::EmptyInput, "train and validation splits required");
  if (train_config.gradient_sampling_rate < 0.0 ||
      train_config.gradient_sampling_rate > 1.0)
    throw Error(ErrorCode::BadConfig, "gradient sampling rate outside [0,1]");
  if (train_config.schedule != "cosine")
    throw Error(ErrorCode::BadConfig,
                "unknown schedule: " + train_config.schedule);

  Segmenter segmenter =
      resume_from
          ? Segmenter(resume_from->config, resume_from->params,
                      model::Vocab::from_words(resume_from->vocab_words))
          : Segmenter(model_config, train_config.seed);
  if (!resume_from)
    segmenter.set_vocab(
        model::Vocab::build(train_docs, segmenter.config().vocab_size));

  // Tokenize once; batching counts sentence-encoder tokens.
  std::vector<std::vector<std::vector<int>>> tokens(train_docs.size());
  std::vector<long> token_counts(train_docs.size(), 0);
  for (size_t d = 0; d < train_docs.size(); ++d) {
    tokens[d] = segmenter.tokenize(train_docs[d]);
    for (const auto& t : tokens[d])
      token_counts[d] += static_cast<long>(t.size());
  }

  std::vector<std::vector<std::vector<size_t>>> epoch_batches(
      static_cast<size_t>(train_config.epochs));
  long total_steps = 0;
  for (int e = 0; e < train_config.epochs; ++e) {
    epoch_batches[static_cast<size_t>(e)] = make_batches(
        token_counts, train_config.token_budget,
        derive_seed(train_config.seed, static_cast<uint64_t>(e), kBatchTag));
    total_steps +=
        static_cast<long>(epoch_batches[static_cast<size_t>(e)].size());
  }

  AdamW optimizer{train_config.learning_rate, train_config.beta1,
                  train_config.beta2, train_config.eps,
                  train_config.weight_decay};
  if (resume_from) {
    optimizer.m = resume_from->opt_m;
    optimizer.v = resume_from->opt_v;
  }
  optimizer.ensure_state(segmenter.params());

  long global_step = resume_from ? resume_from->step : 0;
  int start_epoch = resume_from ? resume_from->epochs_done : 0;
  double best_val_f1 = resume_from ? resume_from->best_val_f1 : -1.0;
  ParamMap best_params = resume_from ? resume_from->best_params : ParamMap{};

  std::vector<HistoryEntry> history;
  for (int e = start_epoch; e < train_config.epochs; ++e) {
    Rng flag_rng(
        derive_seed(train_config.seed, static_cast<uint64_t>(e), kFlagTag));
    std::vector<uint8_t> flags = sample_gradient_flags(
        train_docs.size(), train_config.gradient_sampling_rate, flag_rng);

    double epoch_loss = 0.0;
    long epoch_steps = 0;
    for (const std::vector<size_t>& batch :
         epoch_batches[static_cast<size_t>(e)]) {
      double lr =
          cosine_lr(global_step, total_steps, train_config.learning_rate);

      std::vector<DocGradient> doc_grads(batch.size());
      parallel_for(batch.size(), train_config.jobs, [&](size_t bi) {
        size_t di = batch[bi];
        size_t n = train_docs[di].sentences.size();
        if (n < 2) return;  // no non-final positions to score
        autograd::Tape tape;
        Rng drop_rng(derive_seed(train_config.seed, static_cast<uint64_t>(e),
                                 static_cast<uint64_t>(global_step) ^ kDropTag,
                                 static_cast<uint64_t>(di)));
        model::ForwardOptions opts;
        opts.training = true;
        opts.dropout = train_config.dropout;
        opts.dropout_rng = &drop_rng;
        opts.backprop_sentences = flags[di] != 0;
        autograd::Var probs = segmenter.forward_tokens(tape, tokens[di], opts);
        autograd::Var internal = tape.row_slice(probs, 0, n - 1);
        std::vector<int> labels(train_docs[di].labels.begin(),
                                train_docs[di].labels.begin() +
                                    static_cast<long>(n - 1));
        autograd::Var loss = tape.weighted_bce(internal, labels,
                                               train_config.w0,
                                               train_config.w1);
        tape.backward(loss);

        DocGradient& dg = doc_grads[bi];
        dg.has_loss = true;
        for (int l : labels)
          dg.weight_sum += l ? train_config.w1 : train_config.w0;
        dg.weighted_loss = tape.value(loss).item() * dg.weight_sum;
        for (const auto& [name, tensor] : segmenter.params()) {
          const Tensor* g = tape.param_grad(&tensor);
          if (g) dg.grads[name] = *g;
        }
      });

      // Accumulate in document order; per-document losses were normalized
      // by their own weight sums, so rescale to the batch weight sum.
      double batch_weight = 0.0;
      for (const DocGradient& dg : doc_grads) batch_weight += dg.weight_sum;
      if (batch_weight <= 0.0) {
        ++global_step;
        continue;
      }
      ParamMap master;
      double batch_loss = 0.0;
      for (const DocGradient& dg : doc_grads) {
        if (!dg.has_loss) continue;
        batch_loss += dg.weighted_loss;
        double scale = dg.weight_sum / batch_weight;
        for (const auto& [name, g] : dg.grads) {
          auto it = master.find(name);
          if (it == master.end()) it = master.emplace(name, Tensor(g.shape())).first;
          Tensor& acc = it->second;
          for (size_t i = 0; i < g.numel(); ++i)
            acc.at(i) += g.at(i) * scale;
        }
      }
      batch_loss /= batch_weight;
      if (!std::isfinite(batch_loss))
        throw Error(ErrorCode::NonFiniteLoss,
                    "non-finite loss at epoch " + std::to_string(e) +
                        " step " + std::to_string(global_step));

      optimizer.step(segmenter.mutable_params(), master, global_step + 1, lr);
      ++global_step;
      ++epoch_steps;
      epoch_loss += batch_loss;

      HistoryEntry entry;
      entry.epoch = e;
      entry.step = global_step;
      entry.loss = batch_loss;
      entry.lr = lr;
      history.push_back(entry);
    }

    // Validation and model selection.
    Segmenter view(segmenter.config(), segmenter.params(), segmenter.vocab());
    double val = validation_f1(view, val_docs, train_config.threshold,
                               train_config.jobs);
    if (val > best_val_f1) {
      best_val_f1 = val;
      best_params = segmenter.params();
    }
    HistoryEntry entry;
    entry.epoch = e;
    entry.step = global_step;
    entry.loss = epoch_steps > 0 ? epoch_loss / static_cast<double>(epoch_steps)
                                 : 0.0;
    entry.lr = cosine_lr(global_step, total_steps, train_config.learning_rate);
    entry.has_val = true;
    entry.val_f1 = val;
    history.push_back(entry);
  }

  TrainResult result;
  result.checkpoint.config = segmenter.config();
  result.checkpoint.vocab_words = segmenter.vocab().words();
  result.checkpoint.params = segmenter.params();
  result.checkpoint.best_params = std::move(best_params);
  result.checkpoint.opt_m = std::move(optimizer.m);
  result.checkpoint.opt_v = std::move(optimizer.v);
  result.checkpoint.step = global_step;
  result.checkpoint.epochs_done = train_config.epochs;
  result.checkpoint.best_val_f1 = best_val_f1;
  result.checkpoint.train_config = train_config;
  result.history = std::move(history);
  return result;
}

metrics::MetricReport evaluate_checkpoint(
    const Checkpoint& checkpoint, const std::vector<corpus::Document>& docs,
    const metrics::MetricConfig& metric_config, double threshold, int jobs) {
  if (docs.empty()) throw Error(ErrorCode::EmptyInput, "no documents");
  Segmenter segmenter = checkpoint.make_segmenter();
  std::vector<std::vector<int>> refs(docs.size()), hyps(docs.size());
  parallel_for(docs.size(), jobs, [&](size_t i) {
    refs[i] = docs[i].labels;
    hyps[i] = segmenter.predict(docs[i], threshold);
  });
  return metrics::evaluate_labels(refs, hyps, metric_config);
}

}  // namespace chapterkit::train
