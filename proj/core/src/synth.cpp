#include "chapterkit/synth.hpp"

#include <string>

#include "chapterkit/errors.hpp"
#include "chapterkit/rng.hpp"

namespace chapterkit::corpus {

namespace {

void validate(const SynthConfig& c) {
  if (c.topics < 2)
    throw Error(ErrorCode::BadConfig, "need at least 2 topics");
  if (c.vocab_size < c.topics)
    throw Error(ErrorCode::BadConfig, "vocabulary smaller than topic count");
  if (c.seg_len_min < 1 || c.seg_len_max < c.seg_len_min)
    throw Error(ErrorCode::BadConfig, "empty segment length range");
  if (c.words_min < 1 || c.words_max < c.words_min)
    throw Error(ErrorCode::BadConfig, "empty words-per-sentence range");
  if (c.segments_per_doc < 1)
    throw Error(ErrorCode::BadConfig, "need at least one segment per doc");
  if (c.documents < 1 || c.channels < 1)
    throw Error(ErrorCode::BadConfig, "need documents and channels");
}

}  // namespace

std::vector<Document> gen_synthetic(const SynthConfig& config, uint64_t seed) {
  validate(config);
  int slice = config.vocab_size / config.topics;

  std::vector<Document> docs;
  docs.reserve(static_cast<size_t>(config.documents));
  for (int d = 0; d < config.documents; ++d) {
    Rng rng(derive_seed(seed, static_cast<uint64_t>(d), 0xd0c5u));
    Document doc;
    doc.id = "synth-" + std::to_string(d);
    doc.channel = "synth-ch" + std::to_string(d % config.channels);

    double clock = 0.0;
    int prev_topic = -1;
    for (int seg = 0; seg < config.segments_per_doc; ++seg) {
      // Pick a topic different from the previous segment's.
      int topic =
          static_cast<int>(rng.uniform_int(static_cast<uint64_t>(
              prev_topic < 0 ? config.topics : config.topics - 1)));
      if (prev_topic >= 0 && topic >= prev_topic) ++topic;
      prev_topic = topic;

      int seg_len = config.seg_len_min +
                    static_cast<int>(rng.uniform_int(static_cast<uint64_t>(
                        config.seg_len_max - config.seg_len_min + 1)));
      double seg_start = clock;
      for (int s = 0; s < seg_len; ++s) {
        int words = config.words_min +
                    static_cast<int>(rng.uniform_int(static_cast<uint64_t>(
                        config.words_max - config.words_min + 1)));
        Sentence sent;
        for (int w = 0; w < words; ++w) {
          int word_id = topic * slice +
                        static_cast<int>(rng.uniform_int(
                            static_cast<uint64_t>(slice)));
          if (w > 0) sent.text.push_back(' ');
          sent.text += "t" + std::to_string(topic) + "w" +
                       std::to_string(word_id);
        }
        sent.start = clock;
        sent.end = clock + words * config.seconds_per_word;
        clock = sent.end;
        doc.sentences.push_back(std::move(sent));
        doc.labels.push_back(s + 1 == seg_len ? 1 : 0);
      }
      Chapter chapter;
      chapter.title = "Topic " + std::to_string(topic);
      chapter.start = seg_start;
      chapter.end = clock;
      doc.chapters.push_back(std::move(chapter));
    }
    docs.push_back(std::move(doc));
  }
  return docs;
}

}  // namespace chapterkit::corpus
