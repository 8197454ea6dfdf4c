#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "chapterkit/sentence_split.hpp"
#include "chapterkit/vtt.hpp"

namespace chapterkit::corpus {

struct Chapter {
  std::string title;
  double start = 0.0;
  double end = 0.0;
};

// A sentence-aligned, boundary-labeled document. labels[i] == 1 marks the
// last sentence of a chapter; the final sentence always carries a 1.
struct Document {
  std::string id;
  std::string channel;
  std::vector<Sentence> sentences;
  std::vector<int> labels;
  std::vector<Chapter> chapters;
};

// Builds chapter spans from (title, start) pairs: each chapter ends where
// the next begins; the last ends at `doc_end` unless an explicit end was
// given (which is what makes a trailing Outro possible).
struct ChapterStub {
  std::string title;
  double start = 0.0;
  std::optional<double> end;
};
std::vector<Chapter> finalize_chapters(std::vector<ChapterStub> stubs,
                                       double doc_end);

// Assigns each sentence to the chapter with the greater time overlap
// (ties go to the earlier chapter), inserting an "Intro" or "Outro"
// chapter when sentences precede the first or outlast the last chapter,
// and derives segment-final labels. Empty chapters are removed.
Document align_chapters(std::vector<Sentence> sentences,
                        std::vector<Chapter> chapters);

enum class RejectReason {
  None,
  NoChapters,
  NoSentences,
  LabelMismatch,
  NonMonotoneTimes,
};

struct SanityResult {
  bool accepted = false;
  RejectReason reason = RejectReason::None;
};

const char* reject_reason_name(RejectReason reason);

SanityResult sanity_check(const Document& doc);

enum class Partition { Train, Validation, Test };
const char* partition_name(Partition p);

using SplitAssignment = std::map<std::string, Partition>;

// Channel-disjoint stratified split. Channels with a single document are
// pooled into one stratum; strata are shuffled by seed and greedily
// assigned to whichever partition is furthest below its target count.
SplitAssignment make_splits(
    const std::vector<std::pair<std::string, std::string>>& id_channel,
    double train_ratio, double val_ratio, double test_ratio, uint64_t seed);

// Fraction of all titles covered by the n most frequent ones. Titles are
// compared exactly after whitespace trimming.
double concentration_index(const std::vector<std::string>& titles, int n);

struct StatsReport {
  size_t documents = 0;
  double doc_len_mean = 0.0, doc_len_sd = 0.0;          // sentences
  double seg_len_mean = 0.0, seg_len_sd = 0.0;          // sentences
  double segs_per_doc_mean = 0.0, segs_per_doc_sd = 0.0;
  double seg_minutes_mean = 0.0, seg_minutes_sd = 0.0;
  double title_words_mean = 0.0, title_words_sd = 0.0;
  int concentration_n = 20;
  double concentration = 0.0;

  std::string to_json() const;
};

StatsReport corpus_stats(const std::vector<Document>& docs,
                         int concentration_n = 20);

struct TitleExample {
  std::string video_id;
  int section_index = 0;
  Partition partition = Partition::Train;
  std::string title;
  std::vector<std::string> previous_titles;
  std::vector<std::string> sentences;

  std::string text() const;  // sentences joined with single spaces
};

inline constexpr size_t kMaxTitleChars = 75;

// One example per chapter whose title fits kMaxTitleChars; every example
// inherits its video's partition. Dropped titles still appear in later
// examples' previous_titles.
std::vector<TitleExample> build_titles_view(const std::vector<Document>& docs,
                                            const SplitAssignment& split);

// Full single-document pipeline: parse -> repair -> sentence split ->
// chapter alignment. Callers run sanity_check afterwards.
Document ingest_document(std::string_view vtt_text,
                         std::string_view chapters_json,
                         const SentenceTokenizer& tokenizer, std::string id,
                         std::string channel);

// JSONL round trip for documents.
std::string document_to_json(const Document& doc);
Document document_from_json(const std::string& line);

std::string title_example_to_json(const TitleExample& ex);
TitleExample title_example_from_json(const std::string& line);

std::vector<ChapterStub> chapter_stubs_from_json(std::string_view json_text);

}  // namespace chapterkit::corpus
