#pragma once

namespace chapterkit {

inline constexpr const char* kVersion = "0.1.0";

// Bumped whenever the on-disk checkpoint layout changes.
inline constexpr const char* kCheckpointFormatVersion = "ckpt-v1";

// Frozen sentence-embedding table layout.
inline constexpr const char* kEmbeddingTableFormatVersion = "embtab-v1";

}  // namespace chapterkit
