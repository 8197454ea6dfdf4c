#include "chapterkit/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "chapterkit/errors.hpp"
#include "chapterkit/rng.hpp"

namespace chapterkit::corpus {

using nlohmann::ordered_json;

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

struct MeanSd {
  double mean = 0.0, sd = 0.0;
};

MeanSd mean_sd(const std::vector<double>& xs) {
  MeanSd out;
  if (xs.empty()) return out;
  out.mean = std::accumulate(xs.begin(), xs.end(), 0.0) /
             static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - out.mean) * (x - out.mean);
  out.sd = std::sqrt(var / static_cast<double>(xs.size()));
  return out;
}

size_t word_count(const std::string& text) {
  size_t words = 0;
  bool in_word = false;
  for (char c : text) {
    bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
    if (!space && !in_word) ++words;
    in_word = !space;
  }
  return words;
}

}  // namespace

std::vector<Chapter> finalize_chapters(std::vector<ChapterStub> stubs,
                                       double doc_end) {
  std::stable_sort(stubs.begin(), stubs.end(),
                   [](const ChapterStub& a, const ChapterStub& b) {
                     return a.start < b.start;
                   });
  std::vector<Chapter> chapters;
  chapters.reserve(stubs.size());
  for (size_t i = 0; i < stubs.size(); ++i) {
    Chapter c;
    c.title = stubs[i].title;
    c.start = stubs[i].start;
    if (i + 1 < stubs.size())
      c.end = stubs[i + 1].start;
    else
      c.end = stubs[i].end.value_or(doc_end);
    chapters.push_back(std::move(c));
  }
  return chapters;
}

Document align_chapters(std::vector<Sentence> sentences,
                        std::vector<Chapter> chapters) {
  if (sentences.empty())
    throw Error(ErrorCode::EmptyDocument, "no sentences to align");
  if (chapters.empty())
    throw Error(ErrorCode::EmptyInput, "no chapters to align against");

  double doc_start = sentences.front().start;
  double doc_end = sentences.back().end;
  if (chapters.front().start > doc_start) {
    Chapter intro;
    intro.title = "Intro";
    intro.start = doc_start;
    intro.end = chapters.front().start;
    chapters.insert(chapters.begin(), std::move(intro));
  }
  if (chapters.back().end < doc_end) {
    Chapter outro;
    outro.title = "Outro";
    outro.start = chapters.back().end;
    outro.end = doc_end;
    chapters.push_back(std::move(outro));
  }

  // Greater time overlap wins; ties go to the earlier chapter.
  std::vector<int> assignment(sentences.size(), 0);
  for (size_t s = 0; s < sentences.size(); ++s) {
    double best = -1.0;
    int best_c = 0;
    for (size_t c = 0; c < chapters.size(); ++c) {
      double overlap =
          std::max(0.0, std::min(sentences[s].end, chapters[c].end) -
                            std::max(sentences[s].start, chapters[c].start));
      if (overlap > best) {
        best = overlap;
        best_c = static_cast<int>(c);
      }
    }
    assignment[s] = best_c;
  }

  // Drop chapters that received no sentences, then relabel.
  std::vector<int> counts(chapters.size(), 0);
  for (int a : assignment) ++counts[static_cast<size_t>(a)];
  std::vector<int> remap(chapters.size(), -1);
  std::vector<Chapter> kept;
  for (size_t c = 0; c < chapters.size(); ++c) {
    if (counts[c] == 0) continue;
    remap[c] = static_cast<int>(kept.size());
    kept.push_back(chapters[c]);
  }
  for (int& a : assignment) a = remap[static_cast<size_t>(a)];

  Document doc;
  doc.sentences = std::move(sentences);
  doc.chapters = std::move(kept);
  doc.labels.resize(doc.sentences.size(), 0);
  for (size_t i = 0; i < doc.sentences.size(); ++i) {
    bool last = i + 1 == doc.sentences.size();
    if (last || assignment[i + 1] != assignment[i]) doc.labels[i] = 1;
  }
  return doc;
}

const char* reject_reason_name(RejectReason reason) {
  switch (reason) {
    case RejectReason::None: return "None";
    case RejectReason::NoChapters: return "NoChapters";
    case RejectReason::NoSentences: return "NoSentences";
    case RejectReason::LabelMismatch: return "LabelMismatch";
    case RejectReason::NonMonotoneTimes: return "NonMonotoneTimes";
  }
  return "Unknown";
}

SanityResult sanity_check(const Document& doc) {
  if (doc.chapters.empty()) return {false, RejectReason::NoChapters};
  if (doc.sentences.empty()) return {false, RejectReason::NoSentences};
  if (doc.labels.size() != doc.sentences.size())
    return {false, RejectReason::LabelMismatch};
  long ones = 0;
  for (int l : doc.labels) ones += l;
  if (ones != static_cast<long>(doc.chapters.size()) ||
      doc.labels.back() != 1)
    return {false, RejectReason::LabelMismatch};
  for (size_t i = 0; i + 1 < doc.sentences.size(); ++i)
    if (doc.sentences[i + 1].start < doc.sentences[i].start - 1e-9)
      return {false, RejectReason::NonMonotoneTimes};
  return {true, RejectReason::None};
}

const char* partition_name(Partition p) {
  switch (p) {
    case Partition::Train: return "train";
    case Partition::Validation: return "validation";
    case Partition::Test: return "test";
  }
  return "unknown";
}

SplitAssignment make_splits(
    const std::vector<std::pair<std::string, std::string>>& id_channel,
    double train_ratio, double val_ratio, double test_ratio, uint64_t seed) {
  double ratio_sum = train_ratio + val_ratio + test_ratio;
  if (std::abs(ratio_sum - 1.0) > 1e-9)
    throw Error(ErrorCode::BadConfig, "split ratios must sum to 1");

  // Strata: one per channel, all single-document channels pooled together.
  std::map<std::string, std::vector<std::string>> by_channel;
  for (const auto& [id, channel] : id_channel) by_channel[channel].push_back(id);

  std::vector<std::vector<std::string>> strata;
  std::vector<std::string> singletons;
  for (auto& [channel, ids] : by_channel) {
    if (ids.size() == 1)
      singletons.push_back(ids[0]);
    else
      strata.push_back(ids);
  }
  if (!singletons.empty()) strata.push_back(std::move(singletons));
  if (strata.size() < 3)
    throw Error(ErrorCode::InsufficientData,
                "need at least 3 channel strata to split");

  Rng rng(derive_seed(seed, 0x5114u));
  rng.shuffle(strata);

  double total = static_cast<double>(id_channel.size());
  double targets[3] = {train_ratio * total, val_ratio * total,
                       test_ratio * total};
  double counts[3] = {0.0, 0.0, 0.0};
  SplitAssignment out;
  for (const auto& ids : strata) {
    int best = 0;
    double best_deficit = targets[0] - counts[0];
    for (int p = 1; p < 3; ++p) {
      double deficit = targets[p] - counts[p];
      if (deficit > best_deficit) {
        best_deficit = deficit;
        best = p;
      }
    }
    counts[best] += static_cast<double>(ids.size());
    for (const std::string& id : ids)
      out[id] = static_cast<Partition>(best);
  }
  return out;
}

double concentration_index(const std::vector<std::string>& titles, int n) {
  if (titles.empty()) throw Error(ErrorCode::EmptyInput, "no titles");
  if (n < 1) throw Error(ErrorCode::BadConfig, "concentration n must be >= 1");
  std::unordered_map<std::string, long> freq;
  for (const std::string& t : titles) ++freq[trim(t)];
  std::vector<long> counts;
  counts.reserve(freq.size());
  for (const auto& [title, count] : freq) counts.push_back(count);
  std::sort(counts.rbegin(), counts.rend());
  long covered = 0;
  for (size_t i = 0; i < counts.size() && i < static_cast<size_t>(n); ++i)
    covered += counts[i];
  return static_cast<double>(covered) / static_cast<double>(titles.size());
}

StatsReport corpus_stats(const std::vector<Document>& docs,
                         int concentration_n) {
  if (docs.empty()) throw Error(ErrorCode::EmptyInput, "empty corpus");
  std::vector<double> doc_lens, seg_lens, segs_per_doc, seg_minutes,
      title_words;
  std::vector<std::string> titles;
  for (const Document& doc : docs) {
    doc_lens.push_back(static_cast<double>(doc.sentences.size()));
    segs_per_doc.push_back(static_cast<double>(doc.chapters.size()));
    size_t seg_start = 0;
    for (size_t i = 0; i < doc.sentences.size(); ++i) {
      if (doc.labels[i] != 1) continue;
      seg_lens.push_back(static_cast<double>(i - seg_start + 1));
      double minutes =
          (doc.sentences[i].end - doc.sentences[seg_start].start) / 60.0;
      seg_minutes.push_back(minutes);
      seg_start = i + 1;
    }
    for (const Chapter& c : doc.chapters) {
      titles.push_back(c.title);
      title_words.push_back(static_cast<double>(word_count(c.title)));
    }
  }
  StatsReport report;
  report.documents = docs.size();
  MeanSd m;
  m = mean_sd(doc_lens);
  report.doc_len_mean = m.mean;
  report.doc_len_sd = m.sd;
  m = mean_sd(seg_lens);
  report.seg_len_mean = m.mean;
  report.seg_len_sd = m.sd;
  m = mean_sd(segs_per_doc);
  report.segs_per_doc_mean = m.mean;
  report.segs_per_doc_sd = m.sd;
  m = mean_sd(seg_minutes);
  report.seg_minutes_mean = m.mean;
  report.seg_minutes_sd = m.sd;
  m = mean_sd(title_words);
  report.title_words_mean = m.mean;
  report.title_words_sd = m.sd;
  report.concentration_n = concentration_n;
  report.concentration = concentration_index(titles, concentration_n);
  return report;
}

std::string StatsReport::to_json() const {
  ordered_json j;
  j["documents"] = documents;
  j["document_length_sentences"] = {{"mean", doc_len_mean}, {"sd", doc_len_sd}};
  j["segment_length_sentences"] = {{"mean", seg_len_mean}, {"sd", seg_len_sd}};
  j["segments_per_document"] = {{"mean", segs_per_doc_mean},
                                {"sd", segs_per_doc_sd}};
  j["segment_duration_minutes"] = {{"mean", seg_minutes_mean},
                                   {"sd", seg_minutes_sd}};
  j["title_length_words"] = {{"mean", title_words_mean},
                             {"sd", title_words_sd}};
  j["concentration_index"] = {{"n", concentration_n}, {"value", concentration}};
  return j.dump();
}

std::string TitleExample::text() const {
  std::string out;
  for (const std::string& s : sentences) {
    if (!out.empty()) out.push_back(' ');
    out += s;
  }
  return out;
}

std::vector<TitleExample> build_titles_view(const std::vector<Document>& docs,
                                            const SplitAssignment& split) {
  std::vector<TitleExample> out;
  for (const Document& doc : docs) {
    Partition part = Partition::Train;
    auto it = split.find(doc.id);
    if (it == split.end())
      throw Error(ErrorCode::InputError,
                  "document missing from split assignment: " + doc.id);
    part = it->second;

    std::vector<std::string> previous;
    size_t seg_start = 0;
    int section = 0;
    for (size_t i = 0; i < doc.sentences.size(); ++i) {
      if (doc.labels[i] != 1) continue;
      const Chapter& chapter = doc.chapters[static_cast<size_t>(section)];
      if (chapter.title.size() <= kMaxTitleChars) {
        TitleExample ex;
        ex.video_id = doc.id;
        ex.section_index = section;
        ex.partition = part;
        ex.title = chapter.title;
        ex.previous_titles = previous;
        for (size_t s = seg_start; s <= i; ++s)
          ex.sentences.push_back(doc.sentences[s].text);
        out.push_back(std::move(ex));
      }
      previous.push_back(chapter.title);
      seg_start = i + 1;
      ++section;
    }
  }
  return out;
}

Document ingest_document(std::string_view vtt_text,
                         std::string_view chapters_json,
                         const SentenceTokenizer& tokenizer, std::string id,
                         std::string channel) {
  std::vector<CaptionCue> cues = repair_cues(parse_vtt(vtt_text));
  std::vector<Sentence> sentences = split_sentences(cues, tokenizer);
  if (sentences.empty())
    throw Error(ErrorCode::EmptyDocument, "no sentences after splitting");
  std::vector<ChapterStub> stubs = chapter_stubs_from_json(chapters_json);
  std::vector<Chapter> chapters =
      finalize_chapters(std::move(stubs), sentences.back().end);
  Document doc = align_chapters(std::move(sentences), std::move(chapters));
  doc.id = std::move(id);
  doc.channel = std::move(channel);
  return doc;
}

std::string document_to_json(const Document& doc) {
  ordered_json j;
  j["id"] = doc.id;
  j["channel"] = doc.channel;
  ordered_json sentences = ordered_json::array();
  for (const Sentence& s : doc.sentences)
    sentences.push_back(
        {{"text", s.text}, {"start", s.start}, {"end", s.end}});
  j["sentences"] = std::move(sentences);
  j["labels"] = doc.labels;
  ordered_json chapters = ordered_json::array();
  for (const Chapter& c : doc.chapters)
    chapters.push_back(
        {{"title", c.title}, {"start", c.start}, {"end", c.end}});
  j["chapters"] = std::move(chapters);
  return j.dump();
}

Document document_from_json(const std::string& line) {
  ordered_json j = ordered_json::parse(line);
  Document doc;
  doc.id = j.at("id").get<std::string>();
  doc.channel = j.at("channel").get<std::string>();
  for (const auto& s : j.at("sentences")) {
    Sentence sent;
    sent.text = s.at("text").get<std::string>();
    sent.start = s.at("start").get<double>();
    sent.end = s.at("end").get<double>();
    doc.sentences.push_back(std::move(sent));
  }
  doc.labels = j.at("labels").get<std::vector<int>>();
  for (const auto& c : j.at("chapters")) {
    Chapter chap;
    chap.title = c.at("title").get<std::string>();
    chap.start = c.at("start").get<double>();
    chap.end = c.at("end").get<double>();
    doc.chapters.push_back(std::move(chap));
  }
  return doc;
}

std::string title_example_to_json(const TitleExample& ex) {
  ordered_json j;
  j["video_id"] = ex.video_id;
  j["section_index"] = ex.section_index;
  j["split"] = partition_name(ex.partition);
  j["title"] = ex.title;
  j["previous_titles"] = ex.previous_titles;
  j["sentences"] = ex.sentences;
  j["text"] = ex.text();
  return j.dump();
}

TitleExample title_example_from_json(const std::string& line) {
  ordered_json j = ordered_json::parse(line);
  TitleExample ex;
  ex.video_id = j.at("video_id").get<std::string>();
  ex.section_index = j.at("section_index").get<int>();
  std::string split = j.at("split").get<std::string>();
  if (split == "train")
    ex.partition = Partition::Train;
  else if (split == "validation")
    ex.partition = Partition::Validation;
  else if (split == "test")
    ex.partition = Partition::Test;
  else
    throw Error(ErrorCode::InputError, "unknown split tag: " + split);
  ex.title = j.at("title").get<std::string>();
  ex.previous_titles = j.at("previous_titles").get<std::vector<std::string>>();
  ex.sentences = j.at("sentences").get<std::vector<std::string>>();
  return ex;
}

std::vector<ChapterStub> chapter_stubs_from_json(std::string_view json_text) {
  ordered_json j;
  try {
    j = ordered_json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::InputError,
                std::string("bad chapters JSON: ") + e.what());
  }
  if (!j.is_array())
    throw Error(ErrorCode::InputError, "chapters JSON must be an array");
  std::vector<ChapterStub> stubs;
  for (const auto& item : j) {
    ChapterStub stub;
    stub.title = item.at("title").get<std::string>();
    stub.start = item.at("start_seconds").get<double>();
    if (item.contains("end_seconds"))
      stub.end = item.at("end_seconds").get<double>();
    stubs.push_back(std::move(stub));
  }
  return stubs;
}

}  // namespace chapterkit::corpus
