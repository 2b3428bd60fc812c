#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "aurora/error.hpp"
#include "aurora/replicate.hpp"

namespace aurora {

/// Dimension up to which NeighborIndex uses a kd-tree; above it, brute force.
inline constexpr std::size_t kDefaultTreeDimThreshold = 12;

/// Neighbor lists for every indexed point, self excluded, k per row, ordered
/// by increasing distance with ties broken by lower row index.
struct NeighborTable {
  std::size_t n = 0;
  std::size_t k = 0;
  std::vector<std::uint32_t> ids;

  std::span<const std::uint32_t> row(std::size_t i) const { return {ids.data() + i * k, k}; }
};

/// Exact Euclidean nearest-neighbor search over a fixed point set.
///
/// Results are ordered by (squared distance, row index). Both strategies
/// evaluate squared distances with the same operation sequence, so they return
/// identical lists, ties included.
class NeighborIndex {
 public:
  enum class Strategy { tree, brute };

  explicit NeighborIndex(RowMatrix points, std::size_t dim_threshold = kDefaultTreeDimThreshold)
      : points_(std::move(points)) {
    init(static_cast<std::size_t>(points_.cols()) <= dim_threshold ? Strategy::tree : Strategy::brute);
  }

  NeighborIndex(RowMatrix points, Strategy strategy) : points_(std::move(points)) { init(strategy); }

  Strategy strategy() const { return strategy_; }
  std::size_t size() const { return static_cast<std::size_t>(points_.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(points_.cols()); }
  const RowMatrix& points() const { return points_; }

  /// The k nearest indexed points to q, optionally skipping one row.
  std::vector<std::uint32_t> query(std::span<const double> q, std::size_t k,
                                   std::optional<std::size_t> exclude = std::nullopt) const {
    Search s;
    run_search(s, q, k, exclude ? static_cast<std::int64_t>(*exclude) : -1);
    std::vector<std::uint32_t> out(s.buf.size());
    for (std::size_t t = 0; t < out.size(); ++t) out[t] = s.buf[t].second;
    return out;
  }

  /// For each indexed point, its k nearest other points. Requires k < size().
  NeighborTable all_neighbors(std::size_t k) const {
    if (k >= size() && !(k == 0))
      throw Error(ErrorCode::KMaxTooLarge, "asked for " + std::to_string(k) + " neighbors among " +
                                               std::to_string(size()) + " points");
    NeighborTable table{size(), k, std::vector<std::uint32_t>(size() * k)};
    if (k == 0) return table;
    // Visiting queries in a spatially coherent order (tree order, or by
    // coordinate sum for brute force) lets the previous query's neighbors,
    // plus that query itself, bound the k-th distance of the next one.
    std::vector<std::uint32_t> visit = order_;
    if (strategy_ == Strategy::brute) {
      std::vector<std::pair<double, std::uint32_t>> keyed(size());
      for (std::size_t i = 0; i < size(); ++i) keyed[i] = {points_.row(static_cast<Eigen::Index>(i)).sum(), static_cast<std::uint32_t>(i)};
      std::sort(keyed.begin(), keyed.end());
      visit.resize(size());
      for (std::size_t t = 0; t < size(); ++t) visit[t] = keyed[t].second;
    }
    Search s;
    std::vector<double> seed;
    std::size_t prev = size();
    for (std::size_t t = 0; t < size(); ++t) {
      const std::size_t i = visit[t];
      const std::span<const double> q{points_.data() + i * dim(), dim()};
      double bound = std::numeric_limits<double>::infinity();
      if (prev < size()) {
        seed.clear();
        seed.push_back(distance2(q, prev));
        for (std::uint32_t id : table.row(prev))
          if (id != i) seed.push_back(distance2(q, id));
        if (seed.size() >= k) {
          std::nth_element(seed.begin(), seed.begin() + static_cast<std::ptrdiff_t>(k - 1), seed.end());
          bound = seed[k - 1];
        }
      }
      run_search(s, q, k, static_cast<std::int64_t>(i), bound);
      for (std::size_t r = 0; r < k; ++r) table.ids[i * k + r] = s.buf[r].second;
      prev = i;
    }
    return table;
  }

 private:
  using Candidate = std::pair<double, std::uint32_t>;  // (squared distance, row)

  struct Node {
    std::size_t begin = 0, end = 0;  // range in order_
    std::size_t left = 0, right = 0;  // children; 0 means leaf
    std::size_t split_dim = 0;
    double split_value = 0.0;
  };

  // Candidates below the current k-th smallest pair `bound`; compacted with
  // nth_element whenever the buffer reaches 2k.
  struct Search {
    std::span<const double> q;
    std::size_t k = 0;
    std::int64_t exclude = -1;
    std::vector<Candidate> buf, scratch;
    Candidate bound{std::numeric_limits<double>::infinity(), std::numeric_limits<std::uint32_t>::max()};
  };

  void run_search(Search& s, std::span<const double> q, std::size_t k, std::int64_t exclude,
                  double seed_bound = std::numeric_limits<double>::infinity()) const {
    if (q.size() != dim())
      throw Error(ErrorCode::DimensionMismatch, "query has dimension " + std::to_string(q.size()) +
                                                    ", index has " + std::to_string(dim()));
    const bool skips = exclude >= 0 && static_cast<std::size_t>(exclude) < size();
    s.q = q;
    s.k = std::min(k, size() - (skips ? 1 : 0));
    s.exclude = exclude;
    s.buf.clear();
    s.buf.reserve(2 * s.k + 1);
    s.bound = {seed_bound, std::numeric_limits<std::uint32_t>::max()};
    if (s.k == 0) return;
    if (strategy_ == Strategy::tree)
      search_tree(0, s);
    else
      search_brute(s);
    compact(s);
    sort_candidates(s.buf, s.scratch);
  }

  // LSD radix sort on the bit pattern of d2 (non-negative doubles order like
  // their bits), skipping constant bytes; equal distances are then ordered by row.
  static void sort_candidates(std::vector<Candidate>& v, std::vector<Candidate>& scratch) {
    scratch.resize(v.size());
    std::array<std::array<std::uint32_t, 256>, 8> hist{};
    for (const auto& c : v) {
      const auto bits = std::bit_cast<std::uint64_t>(c.first);
      for (int d = 0; d < 8; ++d) ++hist[d][(bits >> (8 * d)) & 0xFF];
    }
    for (int d = 0; d < 8; ++d) {
      auto& count = hist[d];
      if (std::find(count.begin(), count.end(), v.size()) != count.end()) continue;
      std::uint32_t sum = 0;
      for (auto& c : count) sum += std::exchange(c, sum);
      for (const auto& c : v) scratch[count[(std::bit_cast<std::uint64_t>(c.first) >> (8 * d)) & 0xFF]++] = c;
      v.swap(scratch);
    }
    for (std::size_t a = 0; a < v.size();) {
      std::size_t b = a + 1;
      while (b < v.size() && v[b].first == v[a].first) ++b;
      if (b - a > 1) std::sort(v.begin() + static_cast<std::ptrdiff_t>(a), v.begin() + static_cast<std::ptrdiff_t>(b));
      a = b;
    }
  }

  double distance2(std::span<const double> q, std::size_t row) const {
    const double* x = points_.data() + row * dim();
    double d2 = 0.0;
    for (std::size_t c = 0; c < dim(); ++c) {
      const double diff = x[c] - q[c];
      d2 += diff * diff;
    }
    return d2;
  }

  // Keeps the k smallest (d2, row) pairs. Selection runs on d2 alone; rows
  // tied at the cut are then resolved by index.
  static void compact(Search& s) {
    if (s.buf.size() < s.k) return;
    const auto first = s.buf.begin(), last = s.buf.end();
    const auto kth = first + static_cast<std::ptrdiff_t>(s.k - 1);
    std::nth_element(first, kth, last, [](const Candidate& a, const Candidate& b) { return a.first < b.first; });
    const double cut = kth->first;
    const auto below = std::partition(first, last, [cut](const Candidate& c) { return c.first < cut; });
    const auto ties = std::partition(below, last, [cut](const Candidate& c) { return c.first == cut; });
    const auto keep_end = first + static_cast<std::ptrdiff_t>(s.k);
    std::partial_sort(below, keep_end, ties);
    s.buf.resize(s.k);
    s.bound = s.buf.back();
  }

  static constexpr std::size_t kLeafSize = 16;

  void init(Strategy strategy) {
    if (points_.rows() < 1) throw Error(ErrorCode::Empty, "neighbor index needs at least one point");
    if (points_.rows() > std::numeric_limits<std::uint32_t>::max())
      throw Error(ErrorCode::InvalidArgument, "too many points for a neighbor index");
    strategy_ = strategy;
    if (strategy_ == Strategy::tree)
      build_tree();
    else
      columns_ = points_;
  }

  static void offer(Search& s, double d2, std::uint32_t row) {
    const Candidate c{d2, row};
    if (!(c < s.bound)) return;
    s.buf.push_back(c);
    const bool first_fill = s.bound.first == std::numeric_limits<double>::infinity() && s.buf.size() == s.k;
    if (first_fill || s.buf.size() >= 2 * s.k) compact(s);
  }

  void search_brute(Search& s) const {
    constexpr std::size_t kBlock = 8;  // points whose partial sums stay in registers
    const std::size_t n = size(), p = dim();
    const double* cols = columns_.data();
    std::array<double, kBlock> d2;
    for (std::size_t start = 0; start < n; start += kBlock) {
      const std::size_t len = std::min(kBlock, n - start);
      d2.fill(0.0);
      if (len == kBlock) {
        for (std::size_t c = 0; c < p; ++c) {
          const double* col = cols + c * n + start;
          const double qc = s.q[c];
          for (std::size_t u = 0; u < kBlock; ++u) {
            const double diff = col[u] - qc;
            d2[u] += diff * diff;
          }
        }
      } else {
        for (std::size_t c = 0; c < p; ++c)
          for (std::size_t u = 0; u < len; ++u) {
            const double diff = cols[c * n + start + u] - s.q[c];
            d2[u] += diff * diff;
          }
      }
      for (std::size_t u = 0; u < len; ++u)
        if (d2[u] <= s.bound.first && static_cast<std::int64_t>(start + u) != s.exclude)
          offer(s, d2[u], static_cast<std::uint32_t>(start + u));
    }
  }

  double box_distance(std::size_t node, std::span<const double> q) const {
    const std::size_t p = dim();
    const double* lo = box_lo_.data() + node * p;
    const double* hi = box_hi_.data() + node * p;
    double s = 0.0;
    for (std::size_t c = 0; c < p; ++c) {
      // At most one of the two gaps is positive, so the sum is exact.
      const double t = std::max(lo[c] - q[c], 0.0) + std::max(q[c] - hi[c], 0.0);
      s += t * t;
    }
    return s;
  }

  void search_tree(std::size_t node_id, Search& s) const {
    if (box_distance(node_id, s.q) > s.bound.first) return;
    const Node& node = nodes_[node_id];
    if (node.left == 0) {
      // Leaf coordinates are stored coordinate-major, so the distances of a
      // block of points accumulate without branches.
      const std::size_t p = dim(), len = node.end - node.begin;
      const double* base = leaf_points_.data() + node.begin * p;
      std::array<double, kLeafSize> d2;
      for (std::size_t u0 = 0; u0 < len; u0 += kLeafSize) {
        const std::size_t m = std::min(kLeafSize, len - u0);
        d2.fill(0.0);
        for (std::size_t c = 0; c < p; ++c) {
          const double* col = base + c * len + u0;
          const double qc = s.q[c];
          for (std::size_t u = 0; u < m; ++u) {
            const double diff = col[u] - qc;
            d2[u] += diff * diff;
          }
        }
        for (std::size_t u = 0; u < m; ++u) {
          const std::uint32_t row = order_[node.begin + u0 + u];
          if (d2[u] <= s.bound.first && static_cast<std::int64_t>(row) != s.exclude) offer(s, d2[u], row);
        }
      }
      return;
    }
    if (s.q[node.split_dim] < node.split_value) {
      search_tree(node.left, s);
      search_tree(node.right, s);
    } else {
      search_tree(node.right, s);
      search_tree(node.left, s);
    }
  }

  void build_tree() {
    const std::size_t n = size();
    order_.resize(n);
    for (std::size_t i = 0; i < n; ++i) order_[i] = static_cast<std::uint32_t>(i);
    nodes_.clear();
    build_node(0, n);
    const std::size_t p = dim();
    leaf_points_.resize(n * p);
    for (const Node& node : nodes_) {
      if (node.left != 0) continue;
      const std::size_t len = node.end - node.begin;
      for (std::size_t u = 0; u < len; ++u)
        for (std::size_t c = 0; c < p; ++c)
          leaf_points_[node.begin * p + c * len + u] = points_(order_[node.begin + u], static_cast<Eigen::Index>(c));
    }
  }

  std::size_t build_node(std::size_t begin, std::size_t end) {
    const std::size_t p = dim();
    const std::size_t id = nodes_.size();
    nodes_.push_back({begin, end, 0, 0, 0, 0.0});
    box_lo_.resize((id + 1) * p);
    box_hi_.resize((id + 1) * p);
    double* lo = box_lo_.data() + id * p;
    double* hi = box_hi_.data() + id * p;
    std::fill_n(lo, p, std::numeric_limits<double>::infinity());
    std::fill_n(hi, p, -std::numeric_limits<double>::infinity());
    for (std::size_t t = begin; t < end; ++t) {
      const double* x = points_.data() + order_[t] * p;
      for (std::size_t c = 0; c < p; ++c) {
        lo[c] = std::min(lo[c], x[c]);
        hi[c] = std::max(hi[c], x[c]);
      }
    }
    if (end - begin <= kLeafSize) return id;
    std::size_t split = 0;
    double spread = -1.0;
    for (std::size_t c = 0; c < p; ++c)
      if (hi[c] - lo[c] > spread) {
        spread = hi[c] - lo[c];
        split = c;
      }
    if (spread <= 0.0) return id;  // all points coincide
    const std::size_t mid = begin + (end - begin) / 2;
    auto coord = [&](std::uint32_t r) { return points_(r, static_cast<Eigen::Index>(split)); };
    std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                     order_.begin() + static_cast<std::ptrdiff_t>(mid),
                     order_.begin() + static_cast<std::ptrdiff_t>(end),
                     [&](std::uint32_t a, std::uint32_t b) { return coord(a) < coord(b); });
    const double value = coord(order_[mid]);
    const std::size_t left = build_node(begin, mid);
    const std::size_t right = build_node(mid, end);
    nodes_[id].left = left;
    nodes_[id].right = right;
    nodes_[id].split_dim = split;
    nodes_[id].split_value = value;
    return id;
  }

  RowMatrix points_;
  Strategy strategy_ = Strategy::brute;
  Eigen::MatrixXd columns_;  // column-major copy: each coordinate contiguous over points
  std::vector<Node> nodes_;
  std::vector<std::uint32_t> order_;
  std::vector<double> leaf_points_;
  std::vector<double> box_lo_, box_hi_;
};

/// Outcome of leave-one-out tuning of the neighbor count.
struct KSelection {
  std::size_t k_star = 1;
  std::vector<double> loo_curve;  // LOO(0) .. LOO(k_max - 1)
};

namespace detail {

inline void check_response(const Vector& y, std::size_t n) {
  if (static_cast<std::size_t>(y.size()) != n)
    throw Error(ErrorCode::DimensionMismatch,
                "response has " + std::to_string(y.size()) + " entries for " + std::to_string(n) + " points");
}

}  // namespace detail

/// Leave-one-out curve from precomputed neighbor lists. LOO(0) is the mean of
/// y^2 (predicting zero); LOO(k) averages (y_i - mean of k nearest others)^2.
/// Neighbor means are running sums extended one neighbor at a time.
inline KSelection select_k(const NeighborTable& table, const Vector& y, std::size_t k_max) {
  const std::size_t n = table.n;
  detail::check_response(y, n);
  if (k_max < 1) throw Error(ErrorCode::KOutOfRange, "k_max must be at least 1");
  if (k_max > n)
    throw Error(ErrorCode::KMaxTooLarge, "k_max=" + std::to_string(k_max) + " exceeds n=" + std::to_string(n));
  if (table.k + 1 < k_max)
    throw Error(ErrorCode::KMaxTooLarge, "neighbor table holds only " + std::to_string(table.k) + " neighbors");

  std::vector<double> acc(k_max, 0.0);
  for (std::size_t i = 0; i < n; ++i) acc[0] += y[static_cast<Eigen::Index>(i)] * y[static_cast<Eigen::Index>(i)];
  for (std::size_t i = 0; i < n; ++i) {
    const double yi = y[static_cast<Eigen::Index>(i)];
    const auto nb = table.row(i);
    double sum = 0.0;
    for (std::size_t k = 1; k < k_max; ++k) {
      sum += y[nb[k - 1]];
      const double err = yi - sum / static_cast<double>(k);
      acc[k] += err * err;
    }
  }
  KSelection sel;
  sel.loo_curve.resize(k_max);
  for (std::size_t k = 0; k < k_max; ++k) sel.loo_curve[k] = acc[k] / static_cast<double>(n);
  sel.k_star = 1 + static_cast<std::size_t>(std::min_element(sel.loo_curve.begin(), sel.loo_curve.end()) -
                                            sel.loo_curve.begin());
  return sel;
}

/// In-sample kNN prediction: the unit's own response plus its k - 1 nearest
/// other units, averaged.
inline Vector predict_in_sample(const NeighborTable& table, const Vector& y, std::size_t k) {
  const std::size_t n = table.n;
  detail::check_response(y, n);
  if (k < 1 || k > n)
    throw Error(ErrorCode::KOutOfRange, "k=" + std::to_string(k) + " not in [1, " + std::to_string(n) + "]");
  if (k - 1 > table.k)
    throw Error(ErrorCode::KOutOfRange, "neighbor table holds only " + std::to_string(table.k) + " neighbors");
  Vector out(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto nb = table.row(i);
    double sum = y[static_cast<Eigen::Index>(i)];
    for (std::size_t t = 0; t + 1 < k; ++t) sum += y[nb[t]];
    out[static_cast<Eigen::Index>(i)] = sum / static_cast<double>(k);
  }
  return out;
}

inline KSelection knn_select_k(const NeighborIndex& index, const Vector& y, std::size_t k_max) {
  const std::size_t n = index.size();
  if (n < 2) throw Error(ErrorCode::InvalidArgument, "leave-one-out selection needs at least 2 points");
  if (k_max > n)
    throw Error(ErrorCode::KMaxTooLarge, "k_max=" + std::to_string(k_max) + " exceeds n=" + std::to_string(n));
  if (k_max < 1) throw Error(ErrorCode::KOutOfRange, "k_max must be at least 1");
  detail::check_response(y, n);
  return select_k(index.all_neighbors(k_max - 1), y, k_max);
}

inline Vector knn_predict_in_sample(const NeighborIndex& index, const Vector& y, std::size_t k) {
  const std::size_t n = index.size();
  if (k < 1 || k > n)
    throw Error(ErrorCode::KOutOfRange, "k=" + std::to_string(k) + " not in [1, " + std::to_string(n) + "]");
  detail::check_response(y, n);
  return predict_in_sample(index.all_neighbors(k - 1), y, k);
}

/// Appends one coordinate drawn from U[0, eps] per row, breaking distance ties
/// at random instead of by row index.
inline RowMatrix jitter_features(const RowMatrix& features, double eps, std::uint64_t seed) {
  RowMatrix out(features.rows(), features.cols() + 1);
  out.leftCols(features.cols()) = features;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, eps);
  for (Eigen::Index i = 0; i < out.rows(); ++i) out(i, features.cols()) = u(rng);
  return out;
}

}  // namespace aurora
