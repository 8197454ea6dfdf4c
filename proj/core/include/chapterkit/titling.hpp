#pragma once

#include <string>
#include <vector>

#include "chapterkit/corpus.hpp"

namespace chapterkit::titling {

struct TitlingConfig {
  int input_span = 0;  // leading sentences of the section; <= 0 means all
  enum class Context { None, PreviousTitles };
  Context context = Context::None;
  size_t max_input_chars = 0;  // 0 = unlimited; trims the section tail only
  std::string title_delimiter = " | ";
  std::string section_separator = "\n\n";
};

// Decoding settings of the reference generator, kept for a future neural
// titler; the extractive baseline ignores them.
struct GeneratorDecoding {
  int beam_size = 5;
  int top_k = 50;
  double top_p = 0.95;
};

// Serializes a title-generation input: previous titles joined by the
// delimiter (when enabled), a blank separator, then the first `input_span`
// sentences of the section. The character cap never truncates titles.
std::string build_title_input(const corpus::TitleExample& example,
                              const TitlingConfig& config);

// TF-IDF extractive baseline: scores content words of the leading
// sentences against a corpus-level IDF table and returns the top-k in
// their original order, title-cased.
class ExtractiveTitler {
 public:
  // IDF is built over sections (one document per TitleExample).
  explicit ExtractiveTitler(const std::vector<corpus::TitleExample>& corpus);

  std::string title(const std::vector<std::string>& section_sentences, int k,
                    int input_span = 0) const;

 private:
  std::unordered_map<std::string, double> idf_;
  size_t sections_ = 0;
};

}  // namespace chapterkit::titling
