#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <string>
#include <unordered_set>
#include <vector>

#include "moprior/container.hpp"
#include "moprior/errors.hpp"
#include "moprior/motion.hpp"
#include "moprior/rng.hpp"

namespace moprior {

// One joint's acceleration over a T-frame segment: the (T-2) second central
// differences of its positions, in meters per frame^2, flattened to
// (T-2)*3 components.
struct AccelVector {
  int joint_index = 0;
  std::vector<double> values;

  int dim() const { return static_cast<int>(values.size()); }
};

// a_t = p_{t+1} - 2 p_t + p_{t-1}, unit frame spacing.
inline AccelVector acceleration(const MotionSegment& segment, int joint) {
  if (segment.length < 3) throw ValidationError("acceleration needs at least 3 frames");
  if (joint < 0 || joint >= segment.joint_count) throw DimensionError("joint index out of range");
  AccelVector a;
  a.joint_index = joint;
  a.values.resize(static_cast<std::size_t>(segment.length - 2) * 3);
  for (int t = 1; t + 1 < segment.length; ++t) {
    const double* prev = segment.position(t - 1, joint);
    const double* cur = segment.position(t, joint);
    const double* next = segment.position(t + 1, joint);
    double* dst = a.values.data() + static_cast<std::size_t>(t - 1) * 3;
    for (int c = 0; c < 3; ++c) dst[c] = next[c] - 2.0 * cur[c] + prev[c];
  }
  return a;
}

// L1 distance between two acceleration vectors.
inline double accel_distance(const AccelVector& a, const AccelVector& b) {
  if (a.dim() != b.dim())
    throw DimensionError("acceleration vectors disagree in dimension: " +
                         std::to_string(a.dim()) + " vs " + std::to_string(b.dim()));
  double d = 0.0;
  for (int i = 0; i < a.dim(); ++i) d += std::abs(a.values[i] - b.values[i]);
  return d;
}

inline double accel_distance_raw(const double* a, const double* b, int dim) {
  double d = 0.0;
  for (int i = 0; i < dim; ++i) d += std::abs(a[i] - b[i]);
  return d;
}

// Per-dimension normalization statistics.
struct NormStats {
  std::vector<double> mean;
  std::vector<double> std;

  int dim() const { return static_cast<int>(mean.size()); }
};

// The stored on-manifold points for one joint: acceleration vectors of
// plausible motion, all carrying distance label 0.
struct ZeroLevelSet {
  int joint_index = 0;
  int dim = 0;
  int segment_length = 0;
  std::vector<double> points;  // count x dim, row-major
  NormStats stats;

  int count() const { return dim == 0 ? 0 : static_cast<int>(points.size() / dim); }
  const double* point(int i) const { return points.data() + static_cast<std::size_t>(i) * dim; }
};

// Sample windows of length T across the sequences (deterministically per
// seed), extract acceleration vectors for `joint`, drop exact bitwise
// duplicates, cap the count, and compute normalization stats over what is
// kept. `stride` thins the candidate window starts before sampling.
inline ZeroLevelSet build_zero_level(const std::vector<MotionSequence>& sequences, int T,
                                     int joint, int stride, int cap, std::uint64_t seed) {
  if (T < 5) throw ConfigError("segment length must be >= 5");
  if (stride < 1) throw ConfigError("stride must be >= 1");
  if (cap < 1) throw ConfigError("cap must be >= 1");
  std::vector<std::pair<int, int>> windows;  // (sequence, start)
  for (std::size_t s = 0; s < sequences.size(); ++s) {
    const MotionSequence& seq = sequences[s];
    seq.validate();
    if (seq.frame_count() < T)
      throw ValidationError("sequence " + std::to_string(s) + " is shorter than the segment length " +
                            std::to_string(T));
    for (int start = 0; start + T <= seq.frame_count(); start += stride)
      windows.emplace_back(static_cast<int>(s), start);
  }

  Rng rng(seed);
  rng.shuffle(windows);

  ZeroLevelSet zl;
  zl.joint_index = joint;
  zl.dim = (T - 2) * 3;
  zl.segment_length = T;

  // Exact bitwise dedup via byte-string keys.
  std::unordered_set<std::string> seen;
  for (const auto& [s, start] : windows) {
    if (zl.count() >= cap) break;
    AccelVector a = acceleration(extract_segment(sequences[s], start, T), joint);
    std::string key(reinterpret_cast<const char*>(a.values.data()),
                    a.values.size() * sizeof(double));
    if (!seen.insert(std::move(key)).second) continue;
    zl.points.insert(zl.points.end(), a.values.begin(), a.values.end());
  }
  if (zl.count() == 0) throw ValidationError("no zero-level points could be extracted");

  zl.stats.mean.assign(zl.dim, 0.0);
  zl.stats.std.assign(zl.dim, 0.0);
  const int n = zl.count();
  for (int i = 0; i < n; ++i)
    for (int d = 0; d < zl.dim; ++d) zl.stats.mean[d] += zl.point(i)[d];
  for (int d = 0; d < zl.dim; ++d) zl.stats.mean[d] /= n;
  for (int i = 0; i < n; ++i)
    for (int d = 0; d < zl.dim; ++d) {
      double c = zl.point(i)[d] - zl.stats.mean[d];
      zl.stats.std[d] += c * c;
    }
  for (int d = 0; d < zl.dim; ++d) zl.stats.std[d] = std::sqrt(zl.stats.std[d] / n);
  return zl;
}

namespace knn_detail {

struct Hit {
  double dist;
  int index;
  // Ordering used everywhere: distance first, stable index second.
  bool operator<(const Hit& o) const {
    return dist != o.dist ? dist < o.dist : index < o.index;
  }
};

// Mean of the k best hits, summed in (distance, index) order so that every
// search strategy returning the same hit set produces bit-identical labels.
inline double mean_of_hits(std::vector<Hit> hits, int k) {
  std::sort(hits.begin(), hits.end());
  hits.resize(k);
  double sum = 0.0;
  for (const Hit& h : hits) sum += h.dist;
  return sum / k;
}

}  // namespace knn_detail

// Exhaustive reference search: the k nearest stored points under the L1
// acceleration distance, ties broken by stable point index.
inline std::vector<knn_detail::Hit> knn_scan(const AccelVector& query, const ZeroLevelSet& zl,
                                             int k) {
  if (query.dim() != zl.dim) throw DimensionError("query dimension does not match zero-level set");
  if (k < 1 || k > zl.count())
    throw DimensionError("k = " + std::to_string(k) + " exceeds stored point count " +
                         std::to_string(zl.count()));
  std::vector<knn_detail::Hit> best;
  best.reserve(static_cast<std::size_t>(k) + 1);
  for (int i = 0; i < zl.count(); ++i) {
    knn_detail::Hit h{accel_distance_raw(query.values.data(), zl.point(i), zl.dim), i};
    if (static_cast<int>(best.size()) < k) {
      best.push_back(h);
      std::push_heap(best.begin(), best.end());
    } else if (h < best.front()) {
      std::pop_heap(best.begin(), best.end());
      best.back() = h;
      std::push_heap(best.begin(), best.end());
    }
  }
  std::sort(best.begin(), best.end());
  return best;
}

// Vantage-point tree over the zero-level points. Exact under the L1 metric
// (triangle inequality pruning only); results must match knn_scan
// bit-for-bit, which the tests enforce.
class VpTree {
 public:
  VpTree() = default;

  explicit VpTree(const ZeroLevelSet& zl, std::uint64_t seed = 0x9E3779B97F4A7C15ull)
      : zl_(&zl) {
    const int n = zl.count();
    items_.resize(n);
    for (int i = 0; i < n; ++i) items_[i] = i;
    nodes_.reserve(n);
    Rng rng(seed);
    root_ = build(0, n, rng);
  }

  std::vector<knn_detail::Hit> search(const AccelVector& query, int k) const {
    if (query.dim() != zl_->dim)
      throw DimensionError("query dimension does not match zero-level set");
    if (k < 1 || k > zl_->count())
      throw DimensionError("k = " + std::to_string(k) + " exceeds stored point count " +
                           std::to_string(zl_->count()));
    std::vector<knn_detail::Hit> heap;  // max-heap on (dist, index)
    heap.reserve(static_cast<std::size_t>(k) + 1);
    search_node(root_, query.values.data(), k, heap);
    std::sort(heap.begin(), heap.end());
    return heap;
  }

 private:
  struct Node {
    int point = -1;
    double radius = 0.0;
    int inside = -1;
    int outside = -1;
  };

  int build(int lo, int hi, Rng& rng) {
    if (lo >= hi) return -1;
    int idx = static_cast<int>(nodes_.size());
    nodes_.push_back(Node{});
    // Deterministic vantage choice.
    int pick = lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo)));
    std::swap(items_[lo], items_[pick]);
    int vp = items_[lo];
    nodes_[idx].point = vp;
    if (hi - lo == 1) return idx;

    int mid = (lo + 1 + hi) / 2;
    std::nth_element(items_.begin() + lo + 1, items_.begin() + mid, items_.begin() + hi,
                     [&](int a, int b) {
                       double da = dist_to(vp, a), db = dist_to(vp, b);
                       return da != db ? da < db : a < b;
                     });
    nodes_[idx].radius = dist_to(vp, items_[mid]);
    int inside = build(lo + 1, mid, rng);
    int outside = build(mid, hi, rng);
    nodes_[idx].inside = inside;
    nodes_[idx].outside = outside;
    return idx;
  }

  double dist_to(int a, int b) const {
    return accel_distance_raw(zl_->point(a), zl_->point(b), zl_->dim);
  }

  void consider(const knn_detail::Hit& h, int k, std::vector<knn_detail::Hit>& heap) const {
    if (static_cast<int>(heap.size()) < k) {
      heap.push_back(h);
      std::push_heap(heap.begin(), heap.end());
    } else if (h < heap.front()) {
      std::pop_heap(heap.begin(), heap.end());
      heap.back() = h;
      std::push_heap(heap.begin(), heap.end());
    }
  }

  void search_node(int node, const double* q, int k, std::vector<knn_detail::Hit>& heap) const {
    if (node < 0) return;
    const Node& nd = nodes_[node];
    double d = accel_distance_raw(q, zl_->point(nd.point), zl_->dim);
    consider({d, nd.point}, k, heap);
    if (nd.inside < 0 && nd.outside < 0) return;

    double worst = static_cast<int>(heap.size()) < k
                       ? std::numeric_limits<double>::infinity()
                       : heap.front().dist;
    if (d < nd.radius) {
      search_node(nd.inside, q, k, heap);
      worst = static_cast<int>(heap.size()) < k ? std::numeric_limits<double>::infinity()
                                                : heap.front().dist;
      // Outside can still hold ties at exactly worst distance with smaller
      // indices, so prune strictly.
      if (d + worst >= nd.radius) search_node(nd.outside, q, k, heap);
    } else {
      search_node(nd.outside, q, k, heap);
      worst = static_cast<int>(heap.size()) < k ? std::numeric_limits<double>::infinity()
                                                : heap.front().dist;
      if (d - worst <= nd.radius) search_node(nd.inside, q, k, heap);
    }
  }

  const ZeroLevelSet* zl_ = nullptr;
  std::vector<int> items_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

// Ground-truth distance of a query to the manifold: mean distance to the k
// nearest zero-level points.
inline double knn_label(const AccelVector& query, const ZeroLevelSet& zl, int k) {
  return knn_detail::mean_of_hits(knn_scan(query, zl, k), k);
}

inline double knn_label(const AccelVector& query, const VpTree& index, int k) {
  return knn_detail::mean_of_hits(index.search(query, k), k);
}

constexpr int kDefaultKnnK = 5;

// A training pair: raw distance d plus the log-scaled regression target.
struct LabeledSample {
  AccelVector accel;
  double d = 0.0;
  double target = 0.0;  // ln(d + 1)
};

inline LabeledSample make_labeled(AccelVector accel, double d) {
  LabeledSample s;
  s.accel = std::move(accel);
  s.d = d;
  s.target = std::log1p(d);
  return s;
}

// Order-preserving batch labeling.
inline std::vector<LabeledSample> label_dataset(const std::vector<AccelVector>& queries,
                                                const ZeroLevelSet& zl, int k) {
  std::vector<LabeledSample> out;
  out.reserve(queries.size());
  VpTree index(zl);
  for (const AccelVector& q : queries) out.push_back(make_labeled(q, knn_label(q, index, k)));
  return out;
}

// ---------------------------------------------------------------------------
// Serialization: container type "zero_level" holds one or more joints.

inline void write_zero_level(const std::vector<ZeroLevelSet>& sets, const std::string& path) {
  nlohmann::json header;
  auto& joints = header["joint_sets"] = nlohmann::json::array();
  std::vector<container::Blob> blobs;
  for (const ZeroLevelSet& zl : sets) {
    std::string tag = "j" + std::to_string(zl.joint_index);
    joints.push_back({{"joint_index", zl.joint_index},
                      {"dim", zl.dim},
                      {"segment_length", zl.segment_length},
                      {"count", zl.count()}});
    blobs.push_back(container::Blob::from_f64(tag + "_points", zl.points));
    blobs.push_back(container::Blob::from_f64(tag + "_mean", zl.stats.mean));
    blobs.push_back(container::Blob::from_f64(tag + "_std", zl.stats.std));
  }
  container::write(path, "zero_level", header, blobs);
}

inline std::vector<ZeroLevelSet> read_zero_level(const std::string& path) {
  container::File f = container::read(path, "zero_level");
  std::vector<ZeroLevelSet> sets;
  for (const auto& d : f.header.at("joint_sets")) {
    ZeroLevelSet zl;
    zl.joint_index = d.at("joint_index").get<int>();
    zl.dim = d.at("dim").get<int>();
    zl.segment_length = d.at("segment_length").get<int>();
    std::string tag = "j" + std::to_string(zl.joint_index);
    zl.points = f.blob(tag + "_points").as_f64();
    zl.stats.mean = f.blob(tag + "_mean").as_f64();
    zl.stats.std = f.blob(tag + "_std").as_f64();
    if (zl.count() != d.at("count").get<int>())
      throw ParseError("zero-level point count mismatch in " + path);
    sets.push_back(std::move(zl));
  }
  return sets;
}

}  // namespace moprior
