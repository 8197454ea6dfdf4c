#include "chapterkit/stream.hpp"

#include "chapterkit/errors.hpp"

namespace chapterkit::model {

StreamSession::StreamSession(const Segmenter& model, double threshold)
    : model_(&model), threshold_(threshold) {
  const MaskSchedule& schedule = model.config().schedule;
  if (!schedule.is_online())
    throw Error(ErrorCode::BadSchedule,
                "streaming requires an online schedule with finite context");
  future_context_ = static_cast<size_t>(schedule.future_context());
}

std::vector<StreamSession::Emission> StreamSession::emit_ready(bool flush) {
  size_t total = tokens_.size();
  size_t ready = flush ? total
                       : (total > future_context_ ? total - future_context_
                                                  : 0);
  std::vector<Emission> emissions;
  if (ready <= emitted_) return emissions;

  // Rerun the masked forward over the current prefix; the schedule
  // guarantees positions <= total - c - 1 already see everything they
  // will ever see.
  std::vector<double> probs = model_->probabilities(tokens_);
  for (size_t i = emitted_; i < ready; ++i) {
    Emission e;
    e.index = i;
    e.probability = probs[i];
    e.decision = probs[i] > threshold_ ? 1 : 0;
    if (flush && i + 1 == total) e.decision = 1;  // forced final label
    emissions.push_back(e);
  }
  emitted_ = ready;
  return emissions;
}

std::vector<StreamSession::Emission> StreamSession::ingest(
    const std::string& sentence_text) {
  if (closed_)
    throw Error(ErrorCode::SessionClosed, "ingest after end-marker");
  tokens_.push_back(model_->tokenize_sentence(sentence_text));
  return emit_ready(/*flush=*/false);
}

std::vector<StreamSession::Emission> StreamSession::finish() {
  if (closed_)
    throw Error(ErrorCode::SessionClosed, "finish called twice");
  closed_ = true;
  if (tokens_.empty()) return {};
  return emit_ready(/*flush=*/true);
}

}  // namespace chapterkit::model
