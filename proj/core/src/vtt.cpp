#include "chapterkit/vtt.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include "chapterkit/errors.hpp"

namespace chapterkit::corpus {

namespace {

bool is_blank(std::string_view line) {
  return line.find_first_not_of(" \t\r") == std::string_view::npos;
}

std::string_view strip_cr(std::string_view line) {
  while (!line.empty() && (line.back() == '\r')) line.remove_suffix(1);
  return line;
}

std::string strip_markup(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool in_tag = false;
  for (char c : text) {
    if (c == '<') {
      in_tag = true;
    } else if (c == '>') {
      in_tag = false;
    } else if (!in_tag) {
      out.push_back(c);
    }
  }
  // Basic entities seen in caption files.
  std::string decoded;
  decoded.reserve(out.size());
  for (size_t i = 0; i < out.size();) {
    if (out[i] == '&') {
      auto try_entity = [&](std::string_view name, char repl) {
        if (out.compare(i, name.size(), name) == 0) {
          decoded.push_back(repl);
          i += name.size();
          return true;
        }
        return false;
      };
      if (try_entity("&amp;", '&') || try_entity("&lt;", '<') ||
          try_entity("&gt;", '>') || try_entity("&quot;", '"') ||
          try_entity("&#39;", '\'') || try_entity("&nbsp;", ' '))
        continue;
    }
    decoded.push_back(out[i]);
    ++i;
  }
  return decoded;
}

std::string collapse_spaces(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
    } else {
      if (pending_space) out.push_back(' ');
      pending_space = false;
      out.push_back(c);
    }
  }
  return out;
}

bool all_digits(std::string_view s) {
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(), [](unsigned char c) {
    return std::isdigit(c) != 0;
  });
}

}  // namespace

bool parse_vtt_timestamp(std::string_view text, double* seconds) {
  // H:MM:SS.mmm with 1+ hour digits, or MM:SS.mmm.
  std::vector<std::string_view> parts;
  size_t pos = 0;
  while (true) {
    size_t colon = text.find(':', pos);
    if (colon == std::string_view::npos) {
      parts.push_back(text.substr(pos));
      break;
    }
    parts.push_back(text.substr(pos, colon - pos));
    pos = colon + 1;
  }
  if (parts.size() != 2 && parts.size() != 3) return false;

  double hours = 0.0;
  size_t idx = 0;
  if (parts.size() == 3) {
    if (!all_digits(parts[0])) return false;
    hours = static_cast<double>(std::stoll(std::string(parts[0])));
    idx = 1;
  }
  std::string_view minutes = parts[idx];
  std::string_view rest = parts[idx + 1];
  if (minutes.size() < 1 || minutes.size() > 2 || !all_digits(minutes))
    return false;
  size_t dot = rest.find('.');
  if (dot == std::string_view::npos) return false;
  std::string_view secs = rest.substr(0, dot);
  std::string_view frac = rest.substr(dot + 1);
  if (secs.size() < 1 || secs.size() > 2 || !all_digits(secs)) return false;
  if (frac.size() != 3 || !all_digits(frac)) return false;

  double m = static_cast<double>(std::stoll(std::string(minutes)));
  double s = static_cast<double>(std::stoll(std::string(secs)));
  double f = static_cast<double>(std::stoll(std::string(frac)));
  if (m >= 60.0 || s >= 60.0) return false;
  *seconds = hours * 3600.0 + m * 60.0 + s + f / 1000.0;
  return true;
}

std::vector<CaptionCue> parse_vtt(std::string_view raw) {
  // Strip a UTF-8 BOM if present.
  if (raw.size() >= 3 && raw.substr(0, 3) == "\xEF\xBB\xBF")
    raw.remove_prefix(3);

  std::vector<std::string> lines;
  {
    size_t pos = 0;
    while (pos <= raw.size()) {
      size_t nl = raw.find('\n', pos);
      if (nl == std::string_view::npos) {
        lines.emplace_back(strip_cr(raw.substr(pos)));
        break;
      }
      lines.emplace_back(strip_cr(raw.substr(pos, nl - pos)));
      pos = nl + 1;
    }
  }

  // Header: the first non-blank line must start with WEBVTT.
  size_t li = 0;
  while (li < lines.size() && is_blank(lines[li])) ++li;
  if (li >= lines.size())
    throw Error(ErrorCode::MalformedVtt, "missing WEBVTT header");
  const std::string& header = lines[li];
  if (header.rfind("WEBVTT", 0) != 0 ||
      (header.size() > 6 && header[6] != ' ' && header[6] != '\t'))
    throw Error(ErrorCode::MalformedVtt, "content before WEBVTT header");
  ++li;

  std::vector<CaptionCue> cues;
  while (li < lines.size()) {
    // Skip blank separators.
    while (li < lines.size() && is_blank(lines[li])) ++li;
    if (li >= lines.size()) break;
    // Gather the block.
    std::vector<std::string> block;
    while (li < lines.size() && !is_blank(lines[li])) {
      block.push_back(lines[li]);
      ++li;
    }
    const std::string& first = block[0];
    if (first.rfind("NOTE", 0) == 0 || first == "STYLE" || first == "REGION")
      continue;

    size_t timing_idx = 0;
    if (first.find("-->") == std::string::npos) {
      // Cue identifier line.
      if (block.size() < 2 || block[1].find("-->") == std::string::npos)
        throw Error(ErrorCode::MalformedVtt, "cue block without timing line");
      timing_idx = 1;
    }
    const std::string& timing = block[timing_idx];
    size_t arrow = timing.find("-->");
    std::string lhs = timing.substr(0, arrow);
    std::string rhs = timing.substr(arrow + 3);
    auto trim = [](std::string& s) {
      size_t b = s.find_first_not_of(" \t");
      size_t e = s.find_last_not_of(" \t");
      s = (b == std::string::npos) ? "" : s.substr(b, e - b + 1);
    };
    trim(lhs);
    trim(rhs);
    // Cue settings follow the end timestamp after whitespace.
    size_t space = rhs.find_first_of(" \t");
    if (space != std::string::npos) rhs = rhs.substr(0, space);

    CaptionCue cue;
    if (!parse_vtt_timestamp(lhs, &cue.start) ||
        !parse_vtt_timestamp(rhs, &cue.end))
      throw Error(ErrorCode::MalformedVtt, "unparseable timestamp: " + timing);
    if (cue.end < cue.start)
      throw Error(ErrorCode::MalformedVtt, "cue ends before it starts");

    std::string text;
    for (size_t i = timing_idx + 1; i < block.size(); ++i) {
      if (!text.empty()) text.push_back(' ');
      text += block[i];
    }
    cue.text = collapse_spaces(strip_markup(text));
    if (!cue.text.empty()) cues.push_back(std::move(cue));
  }
  return cues;
}

std::vector<CaptionCue> repair_cues(std::vector<CaptionCue> cues) {
  // Swap distance of the start sequence = inversion count.
  long long inversions = 0;
  for (size_t i = 0; i < cues.size() && inversions <= 1; ++i)
    for (size_t j = i + 1; j < cues.size(); ++j)
      if (cues[j].start < cues[i].start && ++inversions > 1) break;
  if (inversions > 1)
    throw Error(ErrorCode::UnfixableTimestamps,
                "cue starts out of order beyond one swap");

  std::stable_sort(cues.begin(), cues.end(),
                   [](const CaptionCue& a, const CaptionCue& b) {
                     return a.start < b.start;
                   });

  std::vector<CaptionCue> kept;
  kept.reserve(cues.size());
  for (CaptionCue& c : cues)
    if (c.end > c.start) kept.push_back(std::move(c));

  for (size_t i = 0; i + 1 < kept.size(); ++i)
    if (kept[i].end > kept[i + 1].start) kept[i].end = kept[i + 1].start;

  std::vector<CaptionCue> out;
  out.reserve(kept.size());
  for (CaptionCue& c : kept)
    if (c.end > c.start) out.push_back(std::move(c));
  return out;
}

}  // namespace chapterkit::corpus
