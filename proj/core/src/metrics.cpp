#include "chapterkit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <json.hpp>

#include "chapterkit/errors.hpp"
#include "chapterkit/rng.hpp"

namespace chapterkit::metrics {

namespace {

void check_masses(const Segmentation& seg) {
  if (seg.masses.empty())
    throw Error(ErrorCode::EmptyInput, "segmentation has no segments");
  for (int m : seg.masses)
    if (m < 1) throw Error(ErrorCode::MassMismatch, "segment mass below 1");
}

void check_pair(const Segmentation& ref, const Segmentation& hyp) {
  check_masses(ref);
  check_masses(hyp);
  if (ref.total_mass() != hyp.total_mass())
    throw Error(ErrorCode::MassMismatch, "total masses differ");
}

// Segment index per sentence position.
std::vector<int> position_segments(const Segmentation& seg) {
  std::vector<int> out;
  out.reserve(static_cast<size_t>(seg.total_mass()));
  for (size_t s = 0; s < seg.masses.size(); ++s)
    for (int i = 0; i < seg.masses[s]; ++i) out.push_back(static_cast<int>(s));
  return out;
}

}  // namespace

Segmentation Segmentation::from_labels(const std::vector<int>& labels) {
  if (labels.empty())
    throw Error(ErrorCode::EmptyInput, "empty label sequence");
  Segmentation seg;
  int run = 0;
  for (size_t i = 0; i < labels.size(); ++i) {
    ++run;
    if (labels[i] == 1) {
      seg.masses.push_back(run);
      run = 0;
    }
  }
  // A trailing run without a final 1 still closes a segment.
  if (run > 0) seg.masses.push_back(run);
  return seg;
}

std::vector<int> Segmentation::to_labels() const {
  check_masses(*this);
  std::vector<int> labels;
  labels.reserve(static_cast<size_t>(total_mass()));
  for (int m : masses) {
    for (int i = 0; i < m - 1; ++i) labels.push_back(0);
    labels.push_back(1);
  }
  return labels;
}

int Segmentation::total_mass() const {
  int total = 0;
  for (int m : masses) total += m;
  return total;
}

std::vector<int> Segmentation::internal_boundaries() const {
  std::vector<int> bounds;
  int acc = 0;
  for (size_t i = 0; i + 1 < masses.size(); ++i) {
    acc += masses[i];
    bounds.push_back(acc);
  }
  return bounds;
}

Prf boundary_prf(const Segmentation& ref, const Segmentation& hyp) {
  check_pair(ref, hyp);
  std::vector<int> rb = ref.internal_boundaries();
  std::vector<int> hb = hyp.internal_boundaries();
  std::set<int> rset(rb.begin(), rb.end());
  std::set<int> hset(hb.begin(), hb.end());
  int tp = 0;
  for (int b : hb)
    if (rset.count(b)) ++tp;
  int fp = static_cast<int>(hb.size()) - tp;
  int fn = static_cast<int>(rb.size()) - tp;
  Prf out;
  out.precision = (tp + fp) > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
  out.recall = (tp + fn) > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
  out.f1 = (out.precision + out.recall) > 0.0
               ? 2.0 * out.precision * out.recall /
                     (out.precision + out.recall)
               : 0.0;
  return out;
}

double pk(const Segmentation& ref, const Segmentation& hyp, int k) {
  check_pair(ref, hyp);
  int total = ref.total_mass();
  if (total < 2)
    throw Error(ErrorCode::DegenerateLength, "pk needs total mass >= 2");
  if (k <= 0) {
    double mean_mass =
        static_cast<double>(total) / static_cast<double>(ref.masses.size());
    k = std::max(1, static_cast<int>(std::llround(mean_mass / 2.0)));
  }
  if (total <= k)
    throw Error(ErrorCode::DegenerateLength, "pk window exceeds length");
  std::vector<int> rseg = position_segments(ref);
  std::vector<int> hseg = position_segments(hyp);
  int probes = total - k;
  int errors = 0;
  for (int i = 0; i < probes; ++i) {
    bool ref_same = rseg[i] == rseg[i + k];
    bool hyp_same = hseg[i] == hseg[i + k];
    if (ref_same != hyp_same) ++errors;
  }
  return static_cast<double>(errors) / static_cast<double>(probes);
}

double BoundaryEdit::transposition_penalty(int n_t) const {
  double acc = 0.0;
  for (const auto& [r, h] : transpositions)
    acc += std::abs(r - h) / static_cast<double>(n_t);
  return acc;
}

BoundaryEdit boundary_edit_distance(const std::vector<int>& ref_bounds,
                                    const std::vector<int>& hyp_bounds,
                                    int n_t) {
  BoundaryEdit edit;
  std::set<int> rset(ref_bounds.begin(), ref_bounds.end());
  std::set<int> hset(hyp_bounds.begin(), hyp_bounds.end());

  // Exact matches first.
  std::vector<int> rrest, hrest;
  for (int b : rset) {
    if (hset.count(b))
      ++edit.matches;
    else
      rrest.push_back(b);
  }
  for (int b : hset)
    if (!rset.count(b)) hrest.push_back(b);

  // Candidate near misses sorted by offset, then position.
  struct Cand {
    int offset;
    int r;
    int h;
  };
  std::vector<Cand> cands;
  for (int r : rrest)
    for (int h : hrest) {
      int off = std::abs(r - h);
      if (off < n_t) cands.push_back({off, r, h});
    }
  std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
    if (a.offset != b.offset) return a.offset < b.offset;
    if (a.r != b.r) return a.r < b.r;
    return a.h < b.h;
  });
  std::set<int> rused, hused;
  for (const Cand& c : cands) {
    if (rused.count(c.r) || hused.count(c.h)) continue;
    rused.insert(c.r);
    hused.insert(c.h);
    edit.transpositions.emplace_back(c.r, c.h);
  }
  edit.additions = static_cast<int>(rrest.size() - rused.size()) +
                   static_cast<int>(hrest.size() - hused.size());
  return edit;
}

double boundary_similarity(const Segmentation& ref, const Segmentation& hyp,
                           int n_t) {
  check_pair(ref, hyp);
  std::vector<int> rb = ref.internal_boundaries();
  std::vector<int> hb = hyp.internal_boundaries();
  if (rb.empty() && hb.empty()) return 1.0;  // vacuous agreement
  BoundaryEdit edit = boundary_edit_distance(rb, hb, n_t);
  double denom = static_cast<double>(edit.additions) +
                 static_cast<double>(edit.transpositions.size()) +
                 static_cast<double>(edit.matches);
  double num =
      static_cast<double>(edit.additions) + edit.transposition_penalty(n_t);
  return 1.0 - num / denom;
}

BootstrapStat bootstrap_std(
    size_t doc_count,
    const std::function<double(const std::vector<size_t>&)>& metric, int count,
    uint64_t seed) {
  if (doc_count < 2)
    throw Error(ErrorCode::TooFewDocuments, "bootstrap needs >= 2 documents");
  std::vector<double> values;
  values.reserve(static_cast<size_t>(count));
  std::vector<size_t> sample(doc_count);
  for (int r = 0; r < count; ++r) {
    Rng rng(derive_seed(seed, static_cast<uint64_t>(r), 0xb007));
    for (size_t i = 0; i < doc_count; ++i)
      sample[i] = static_cast<size_t>(rng.uniform_int(doc_count));
    values.push_back(metric(sample));
  }
  BootstrapStat stat;
  for (double v : values) stat.mean += v;
  stat.mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - stat.mean) * (v - stat.mean);
  var /= static_cast<double>(values.size());
  stat.std = std::sqrt(var);
  return stat;
}

std::string MetricReport::to_json() const {
  nlohmann::ordered_json j;
  auto put = [&](const char* name, const ScoredValue& v) {
    j[name] = {{"value", v.value}, {"std", v.std}};
  };
  put("precision", precision);
  put("recall", recall);
  put("f1", f1);
  put("pk", pk);
  put("boundary_similarity", boundary);
  return j.dump();
}

MetricReport evaluate_labels(const std::vector<std::vector<int>>& ref_labels,
                             const std::vector<std::vector<int>>& hyp_labels,
                             const MetricConfig& config) {
  if (ref_labels.size() != hyp_labels.size())
    throw Error(ErrorCode::ShapeMismatch, "ref/hyp document counts differ");
  if (ref_labels.empty())
    throw Error(ErrorCode::EmptyInput, "no documents to evaluate");

  struct DocCounts {
    int tp = 0, fp = 0, fn = 0;
    double pk = 0.0, b = 0.0;
    bool windowed = false;  // pk/b defined for this document
  };
  std::vector<DocCounts> per_doc(ref_labels.size());

  for (size_t d = 0; d < ref_labels.size(); ++d) {
    if (ref_labels[d].size() != hyp_labels[d].size())
      throw Error(ErrorCode::MassMismatch, "label lengths differ in doc " +
                                               std::to_string(d));
    Segmentation ref = Segmentation::from_labels(ref_labels[d]);
    Segmentation hyp = Segmentation::from_labels(hyp_labels[d]);
    std::vector<int> rb = ref.internal_boundaries();
    std::vector<int> hb = hyp.internal_boundaries();
    std::set<int> rset(rb.begin(), rb.end());
    DocCounts& c = per_doc[d];
    for (int b : hb)
      rset.count(b) ? ++c.tp : ++c.fp;
    std::set<int> hset(hb.begin(), hb.end());
    for (int b : rb)
      if (!hset.count(b)) ++c.fn;
    if (ref.total_mass() >= 2) {
      int k = config.pk_window;
      if (k <= 0) {
        double mean_mass = static_cast<double>(ref.total_mass()) /
                           static_cast<double>(ref.masses.size());
        k = std::max(1, static_cast<int>(std::llround(mean_mass / 2.0)));
      }
      if (ref.total_mass() > k) {
        c.pk = pk(ref, hyp, k);
        c.b = boundary_similarity(ref, hyp, config.transposition_window);
        c.windowed = true;
      }
    }
  }

  auto pooled = [&](const std::vector<size_t>& idx) {
    long tp = 0, fp = 0, fn = 0;
    for (size_t i : idx) {
      tp += per_doc[i].tp;
      fp += per_doc[i].fp;
      fn += per_doc[i].fn;
    }
    Prf out;
    out.precision = (tp + fp) > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
    out.recall = (tp + fn) > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
    out.f1 = (out.precision + out.recall) > 0.0
                 ? 2.0 * out.precision * out.recall /
                       (out.precision + out.recall)
                 : 0.0;
    return out;
  };
  auto macro_pk = [&](const std::vector<size_t>& idx) {
    double acc = 0.0;
    size_t n = 0;
    for (size_t i : idx)
      if (per_doc[i].windowed) {
        acc += per_doc[i].pk;
        ++n;
      }
    return n > 0 ? acc / static_cast<double>(n) : 0.0;
  };
  auto macro_b = [&](const std::vector<size_t>& idx) {
    double acc = 0.0;
    size_t n = 0;
    for (size_t i : idx)
      if (per_doc[i].windowed) {
        acc += per_doc[i].b;
        ++n;
      }
    return n > 0 ? acc / static_cast<double>(n) : 0.0;
  };

  std::vector<size_t> all(ref_labels.size());
  for (size_t i = 0; i < all.size(); ++i) all[i] = i;

  MetricReport report;
  Prf point = pooled(all);
  report.precision.value = point.precision;
  report.recall.value = point.recall;
  report.f1.value = point.f1;
  report.pk.value = macro_pk(all);
  report.boundary.value = macro_b(all);

  if (ref_labels.size() >= 2 && config.bootstrap_count > 0) {
    auto run = [&](const std::function<double(const std::vector<size_t>&)>& m) {
      return bootstrap_std(ref_labels.size(), m, config.bootstrap_count,
                           config.bootstrap_seed);
    };
    report.precision.std =
        run([&](const std::vector<size_t>& idx) { return pooled(idx).precision; })
            .std;
    report.recall.std =
        run([&](const std::vector<size_t>& idx) { return pooled(idx).recall; })
            .std;
    report.f1.std =
        run([&](const std::vector<size_t>& idx) { return pooled(idx).f1; }).std;
    report.pk.std = run(macro_pk).std;
    report.boundary.std = run(macro_b).std;
  }
  return report;
}

}  // namespace chapterkit::metrics
