#pragma once

#include <cstdint>

#include "chapterkit/corpus.hpp"

namespace chapterkit::corpus {

// Synthetic topic-segmented corpus: documents are concatenations of
// topic-homogeneous segments, each topic drawing words uniformly from its
// own slice of the vocabulary. Consecutive segments always change topic.
struct SynthConfig {
  int topics = 5;
  int vocab_size = 500;
  int seg_len_min = 3;   // sentences
  int seg_len_max = 11;
  int segments_per_doc = 6;
  int words_min = 4;     // per sentence
  int words_max = 8;
  int documents = 100;
  int channels = 10;
  double seconds_per_word = 0.5;
};

std::vector<Document> gen_synthetic(const SynthConfig& config, uint64_t seed);

}  // namespace chapterkit::corpus
