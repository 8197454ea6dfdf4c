#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace chapterkit::corpus {

// A timed caption with inline markup already stripped.
struct CaptionCue {
  double start = 0.0;  // seconds
  double end = 0.0;
  std::string text;
};

// Parses WebVTT text into cues. Cue settings, identifiers, NOTE/STYLE/REGION
// blocks, inline tags, and basic entities are handled; cues left empty by
// markup stripping are dropped. Throws Error(MalformedVtt) on a missing
// header, content before the header, or an unparseable timestamp.
std::vector<CaptionCue> parse_vtt(std::string_view raw);

// Applies the timestamp repair rules: drop zero-duration cues and clamp a
// cue's end to the next cue's start when they overlap. Cues whose starts
// are out of order by more than one adjacent swap raise
// Error(UnfixableTimestamps).
std::vector<CaptionCue> repair_cues(std::vector<CaptionCue> cues);

// Parses "H:MM:SS.mmm" or "MM:SS.mmm" into seconds; returns false on
// malformed input.
bool parse_vtt_timestamp(std::string_view text, double* seconds);

}  // namespace chapterkit::corpus
