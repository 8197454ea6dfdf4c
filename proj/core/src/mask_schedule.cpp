#include "chapterkit/mask_schedule.hpp"

#include <algorithm>

#include "chapterkit/errors.hpp"

namespace chapterkit::model {

MaskSchedule MaskSchedule::offline() {
  MaskSchedule s;
  s.mode = Mode::Offline;
  return s;
}

MaskSchedule MaskSchedule::online(std::vector<int> alpha) {
  MaskSchedule s;
  s.mode = Mode::Online;
  s.alpha = std::move(alpha);
  return s;
}

std::optional<MaskSchedule> MaskSchedule::preset(int future_context) {
  switch (future_context) {
    case 0: return online({});
    case 1: return online({1});
    case 3: return online({2, 1});
    case 5: return online({2, 2, 1});
    case 8: return online({2, 2, 2, 2});
    case 10: return online({2, 2, 2, 2, 2});
    case 20: return online({4, 4, 4, 2, 2, 2, 2});
  }
  return std::nullopt;
}

int MaskSchedule::future_context() const {
  if (mode == Mode::Offline) return -1;
  int c = 0;
  for (int a : alpha) c += a;
  return c;
}

void MaskSchedule::validate(int total_layers) const {
  if (mode == Mode::Offline) {
    if (!alpha.empty())
      throw Error(ErrorCode::BadSchedule, "offline schedule carries alpha");
    return;
  }
  if (static_cast<int>(alpha.size()) > total_layers)
    throw Error(ErrorCode::BadSchedule,
                "more accumulation layers than encoder layers");
  for (int a : alpha)
    if (a < 0) throw Error(ErrorCode::BadSchedule, "negative alpha entry");
}

BoolMatrix mask_for_layer(int layer, int total_layers, size_t seq_len,
                          const MaskSchedule& schedule) {
  if (layer < 1 || layer > total_layers)
    throw Error(ErrorCode::BadSchedule, "layer index out of range");
  schedule.validate(total_layers);

  BoolMatrix mask(seq_len, false);
  if (!schedule.is_online()) {
    for (size_t i = 0; i < seq_len; ++i)
      for (size_t j = 0; j < seq_len; ++j) mask.set(i, j, true);
    return mask;
  }
  int offset = 0;
  if (layer <= schedule.accumulation_layers())
    offset = schedule.alpha[static_cast<size_t>(layer - 1)];
  for (size_t i = 0; i < seq_len; ++i) {
    size_t limit = std::min(seq_len - 1, i + static_cast<size_t>(offset));
    for (size_t j = 0; j <= limit; ++j) mask.set(i, j, true);
  }
  return mask;
}

int receptive_field(const MaskSchedule& schedule, int after_layer) {
  if (!schedule.is_online()) return -1;
  int layers = std::min(after_layer, schedule.accumulation_layers());
  int acc = 0;
  for (int l = 0; l < layers; ++l) acc += schedule.alpha[static_cast<size_t>(l)];
  return acc;
}

}  // namespace chapterkit::model
