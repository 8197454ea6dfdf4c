#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace chapterkit::metrics {

// A linear segmentation in mass form: one entry per segment, counting the
// sentences it spans. Interconvertible with a boundary-label sequence
// (1 marks the last sentence of a segment).
struct Segmentation {
  std::vector<int> masses;

  static Segmentation from_labels(const std::vector<int>& labels);
  std::vector<int> to_labels() const;

  int total_mass() const;
  // Boundary positions counted in sentences from the start, i.e. the
  // boundary after sentence p has position p, for p in [1, total-1].
  std::vector<int> internal_boundaries() const;
};

struct MetricConfig {
  int pk_window = 0;  // 0 = half the mean reference segment mass
  int transposition_window = 2;
  int bootstrap_count = 100;
  uint64_t bootstrap_seed = 0;
};

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

Prf boundary_prf(const Segmentation& ref, const Segmentation& hyp);

double pk(const Segmentation& ref, const Segmentation& hyp, int k = 0);

struct BoundaryEdit {
  int matches = 0;
  std::vector<std::pair<int, int>> transpositions;  // (ref pos, hyp pos)
  int additions = 0;                                // unmatched on either side

  double transposition_penalty(int n_t) const;
};

// Pairs up two boundary sets: exact matches first, then near misses with
// offset < n_t as transpositions (nearest first, ties resolved
// left-to-right), leaving the rest as additions.
BoundaryEdit boundary_edit_distance(const std::vector<int>& ref_bounds,
                                    const std::vector<int>& hyp_bounds,
                                    int n_t);

double boundary_similarity(const Segmentation& ref, const Segmentation& hyp,
                           int n_t = 2);

struct BootstrapStat {
  double mean = 0.0;
  double std = 0.0;
};

// Resamples document indices with replacement `count` times, applies
// `metric` to each resample, and reports mean and population std.
BootstrapStat bootstrap_std(
    size_t doc_count,
    const std::function<double(const std::vector<size_t>&)>& metric, int count,
    uint64_t seed);

struct ScoredValue {
  double value = 0.0;
  double std = 0.0;
};

struct MetricReport {
  ScoredValue precision;
  ScoredValue recall;
  ScoredValue f1;
  ScoredValue pk;
  ScoredValue boundary;

  std::string to_json() const;
};

// Corpus-level evaluation over per-document label sequences. P/R/F1 are
// pooled over boundary counts; P_k and boundary similarity are averaged
// per document. Bootstrap stds resample whole documents.
MetricReport evaluate_labels(const std::vector<std::vector<int>>& ref_labels,
                             const std::vector<std::vector<int>>& hyp_labels,
                             const MetricConfig& config);

}  // namespace chapterkit::metrics
