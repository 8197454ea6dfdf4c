#pragma once

#include <optional>
#include <vector>

#include "chapterkit/autograd.hpp"

namespace chapterkit::model {

// Per-layer attention masking for the document encoder. Offline mode uses
// full attention everywhere. Online mode spends the first M = |alpha|
// layers on causal masks widened by alpha[l] positions of future context;
// the remaining layers are strictly causal, so the total future context a
// prediction can see is c = sum(alpha).
struct MaskSchedule {
  enum class Mode { Offline, Online };
  Mode mode = Mode::Offline;
  std::vector<int> alpha;  // online only

  static MaskSchedule offline();
  static MaskSchedule online(std::vector<int> alpha);
  // The context sizes used in the reference experiments:
  // c in {0, 1, 3, 5, 8, 10, 20}.
  static std::optional<MaskSchedule> preset(int future_context);

  bool is_online() const { return mode == Mode::Online; }
  int accumulation_layers() const { return static_cast<int>(alpha.size()); }
  // Total future context; unbounded offline (represented as -1).
  int future_context() const;

  void validate(int total_layers) const;
};

// Attention mask for 1-based layer `layer` of `total_layers` over a
// sequence of `seq_len` positions.
BoolMatrix mask_for_layer(int layer, int total_layers, size_t seq_len,
                          const MaskSchedule& schedule);

// Future context visible to a position after `after_layer` layers: the
// prefix sum of alpha, saturating at c once the causal tail begins.
int receptive_field(const MaskSchedule& schedule, int after_layer);

}  // namespace chapterkit::model
