#pragma once

#include <string>
#include <vector>

#include "chapterkit/model.hpp"

namespace chapterkit::model {

// Bounded-latency streaming inference. After ingesting sentence t the
// session emits the decision for position t - c, where c is the schedule's
// future context; finish() flushes the last c positions and forces the
// final label. Decisions match a batch run of the same online schedule
// because position t - c never attends past position t.
class StreamSession {
 public:
  struct Emission {
    size_t index = 0;
    int decision = 0;
    double probability = 0.0;
  };

  StreamSession(const Segmenter& model, double threshold = 0.5);

  std::vector<Emission> ingest(const std::string& sentence_text);
  std::vector<Emission> finish();
  bool closed() const { return closed_; }
  size_t ingested() const { return tokens_.size(); }

 private:
  std::vector<Emission> emit_ready(bool flush);

  const Segmenter* model_;
  double threshold_;
  size_t future_context_;
  std::vector<std::vector<int>> tokens_;
  size_t emitted_ = 0;
  bool closed_ = false;
};

}  // namespace chapterkit::model
