#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "chapterkit/vtt.hpp"

namespace chapterkit::corpus {

struct Sentence {
  std::string text;
  double start = 0.0;  // seconds
  double end = 0.0;
};

// Splits text into sentence character spans [begin, end), trimmed of
// surrounding whitespace. Implementations must be deterministic.
class SentenceTokenizer {
 public:
  virtual ~SentenceTokenizer() = default;
  virtual std::vector<std::pair<size_t, size_t>> split(
      std::string_view text) const = 0;
};

// Rule-based splitter: a sentence ends at . ! ? (plus trailing closers)
// followed by whitespace and an uppercase letter, digit, or opening quote.
// A period after a stop-listed abbreviation or a single letter does not end
// a sentence.
class RuleSentenceSplitter : public SentenceTokenizer {
 public:
  std::vector<std::pair<size_t, size_t>> split(
      std::string_view text) const override;
};

// Joins repaired cues with single spaces, re-splits into sentences, and
// interpolates each sentence's timestamps from the character offsets of its
// span: within a cue of length L spanning [t0, t1], the character at local
// offset x sits at time t0 + (t1 - t0) * x / L.
//
// Throws Error(NoPunctuation) when the transcript has fewer than one
// terminal punctuation mark per 100 words.
std::vector<Sentence> split_sentences(const std::vector<CaptionCue>& cues,
                                      const SentenceTokenizer& tokenizer);

}  // namespace chapterkit::corpus
