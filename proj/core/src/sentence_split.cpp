#include "chapterkit/sentence_split.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "chapterkit/errors.hpp"

namespace chapterkit::corpus {

namespace {

bool is_terminal(char c) { return c == '.' || c == '!' || c == '?'; }

bool is_closer(char c) {
  return c == '"' || c == '\'' || c == ')' || c == ']';
}

bool is_opener(char c) {
  return c == '"' || c == '\'' || c == '(' || c == '[';
}

const std::set<std::string>& abbreviation_stoplist() {
  static const std::set<std::string> list = {
      "mr",  "mrs", "ms",   "dr",   "prof", "rev",  "gen",  "sen", "rep",
      "st",  "jr",  "sr",   "vs",   "etc",  "inc",  "ltd",  "co",  "corp",
      "dept", "univ", "approx", "fig", "no",  "al",  "eg",   "ie",  "cf",
      "sgt", "capt", "lt",  "col",  "maj",  "mt",   "vol",  "pp",  "ca",
  };
  return list;
}

// Word immediately before position `dot`, lowercased with dots removed.
std::string word_before(std::string_view text, size_t dot) {
  size_t end = dot;
  size_t begin = end;
  while (begin > 0 &&
         !std::isspace(static_cast<unsigned char>(text[begin - 1])))
    --begin;
  std::string word;
  for (size_t i = begin; i < end; ++i) {
    char c = text[i];
    if (c == '.') continue;
    word.push_back(
        static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return word;
}

}  // namespace

std::vector<std::pair<size_t, size_t>> RuleSentenceSplitter::split(
    std::string_view text) const {
  std::vector<std::pair<size_t, size_t>> spans;
  auto skip_space = [&](size_t i) {
    while (i < text.size() &&
           std::isspace(static_cast<unsigned char>(text[i])))
      ++i;
    return i;
  };

  size_t start = skip_space(0);
  size_t i = start;
  while (i < text.size()) {
    char c = text[i];
    if (!is_terminal(c)) {
      ++i;
      continue;
    }
    // Absorb a run of terminals and closing characters.
    size_t j = i;
    while (j < text.size() && (is_terminal(text[j]) || is_closer(text[j])))
      ++j;

    bool boundary = false;
    if (j >= text.size()) {
      boundary = true;
    } else if (std::isspace(static_cast<unsigned char>(text[j]))) {
      size_t next = skip_space(j);
      if (next >= text.size()) {
        boundary = true;
      } else {
        char n = text[next];
        boundary = std::isupper(static_cast<unsigned char>(n)) ||
                   std::isdigit(static_cast<unsigned char>(n)) || is_opener(n);
      }
    }
    if (boundary && c == '.') {
      std::string prev = word_before(text, i);
      if (abbreviation_stoplist().count(prev) > 0 || prev.size() == 1)
        boundary = false;
    }
    if (boundary) {
      spans.emplace_back(start, j);
      start = skip_space(j);
      i = start;
    } else {
      i = j > i ? j : i + 1;
    }
  }
  // Flush trailing text without a terminal mark.
  size_t tail_end = text.size();
  while (tail_end > start &&
         std::isspace(static_cast<unsigned char>(text[tail_end - 1])))
    --tail_end;
  if (tail_end > start) spans.emplace_back(start, tail_end);
  return spans;
}

std::vector<Sentence> split_sentences(const std::vector<CaptionCue>& cues,
                                      const SentenceTokenizer& tokenizer) {
  if (cues.empty()) return {};

  // Join cue texts; remember each cue's span in the joined transcript.
  std::string transcript;
  struct Span {
    size_t begin, end;  // character span
    double t0, t1;
  };
  std::vector<Span> spans;
  spans.reserve(cues.size());
  for (const CaptionCue& cue : cues) {
    if (!transcript.empty()) transcript.push_back(' ');
    size_t begin = transcript.size();
    transcript += cue.text;
    spans.push_back({begin, transcript.size(), cue.start, cue.end});
  }

  // Punctuation density guard: < 1 terminal mark per 100 words.
  {
    long words = 0;
    bool in_word = false;
    long marks = 0;
    for (char c : transcript) {
      bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
      if (!space && !in_word) ++words;
      in_word = !space;
      if (is_terminal(c)) ++marks;
    }
    if (marks * 100 < words)
      throw Error(ErrorCode::NoPunctuation,
                  "transcript has almost no terminal punctuation");
  }

  auto time_at = [&](size_t x, bool for_end) -> double {
    // Binary search the cue whose span contains x; offsets at the joining
    // spaces resolve to the neighbouring cue edge.
    size_t lo = 0, hi = spans.size();
    while (lo + 1 < hi) {
      size_t mid = (lo + hi) / 2;
      if (spans[mid].begin <= x)
        lo = mid;
      else
        hi = mid;
    }
    const Span& s = spans[lo];
    if (x <= s.begin) return for_end && lo > 0 ? spans[lo - 1].t1 : s.t0;
    if (x >= s.end) {
      if (!for_end && lo + 1 < spans.size()) return spans[lo + 1].t0;
      return s.t1;
    }
    double frac = static_cast<double>(x - s.begin) /
                  static_cast<double>(s.end - s.begin);
    return s.t0 + (s.t1 - s.t0) * frac;
  };

  std::vector<Sentence> sentences;
  for (auto [begin, end] : tokenizer.split(transcript)) {
    if (end <= begin) continue;
    Sentence s;
    s.text = transcript.substr(begin, end - begin);
    s.start = time_at(begin, /*for_end=*/false);
    s.end = time_at(end, /*for_end=*/true);
    sentences.push_back(std::move(s));
  }
  return sentences;
}

}  // namespace chapterkit::corpus
