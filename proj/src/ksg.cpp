#include "stib/ksg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <limits>
#include <thread>
#include <vector>

#include "stib/rng.hpp"

namespace stib {

double digamma(double x) {
  if (!(x > 0.0))
    throw DomainError("digamma: requires x > 0, got " + std::to_string(x));
  double acc = 0.0;
  while (x < 8.0) {
    acc -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  // psi(x) ~ ln x - 1/(2x) - 1/(12x^2) + 1/(120x^4) - 1/(252x^6) + 1/(240x^8)
  const double series =
      std::log(x) - 0.5 * inv -
      inv2 * (1.0 / 12.0 -
              inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0))));
  return acc + series;
}

double gaussian_mi_closed_form(double rho) {
  if (!(std::fabs(rho) < 1.0))
    throw DomainError("gaussian_mi_closed_form: requires |rho| < 1");
  return -0.5 * std::log2(1.0 - rho * rho);
}

namespace detail {

std::size_t eval_thread_budget() {
  std::size_t n = std::thread::hardware_concurrency();
  if (n == 0) n = 1;
  if (const char* env = std::getenv("STIB_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && v >= 1) n = std::min<std::size_t>(n, static_cast<std::size_t>(v));
  }
  return std::max<std::size_t>(1, n);
}

namespace {

// Points stored row-major, dim doubles per point.
struct PointSet {
  const double* data;
  std::size_t n;
  std::size_t dim;
  const double* point(std::size_t i) const { return data + i * dim; }
};

double max_norm_dist(const double* a, const double* b, std::size_t dim) {
  double d = 0.0;
  for (std::size_t c = 0; c < dim; ++c) {
    const double v = std::fabs(a[c] - b[c]);
    if (v > d) d = v;
  }
  return d;
}

// Axis-aligned kd-tree for max-norm k-NN and strict-radius counting.
// Splits the widest dimension at the median; leaves hold small runs.
class KdTree {
 public:
  KdTree(const PointSet& ps) : ps_(ps), idx_(ps.n) {
    for (std::size_t i = 0; i < ps.n; ++i) idx_[i] = i;
    nodes_.reserve(2 * ps.n / kLeafSize + 2);
    root_ = build(0, ps.n);
  }

  // Distance to the k-th nearest neighbor of query point q, self excluded.
  double kth_neighbor_dist(std::size_t q, int k) const {
    std::vector<double> heap;  // max-heap of current best distances
    heap.reserve(static_cast<std::size_t>(k));
    search(root_, q, k, heap);
    return heap.front();
  }

  // Number of points j != q with dist(j, q) < radius.
  std::size_t count_within(std::size_t q, double radius) const {
    std::size_t count = 0;
    count_rec(root_, q, radius, count);
    return count - 1;  // the query point itself is always inside
  }

 private:
  static constexpr std::size_t kLeafSize = 16;

  struct NodeRec {
    double lo[8];  // bounding box (dim <= 8 covers every caller here)
    double hi[8];
    std::size_t begin, end;   // range in idx_
    int left = -1, right = -1;
  };

  int build(std::size_t begin, std::size_t end) {
    NodeRec nd;
    nd.begin = begin;
    nd.end = end;
    for (std::size_t c = 0; c < ps_.dim; ++c) {
      nd.lo[c] = std::numeric_limits<double>::infinity();
      nd.hi[c] = -std::numeric_limits<double>::infinity();
    }
    for (std::size_t i = begin; i < end; ++i) {
      const double* p = ps_.point(idx_[i]);
      for (std::size_t c = 0; c < ps_.dim; ++c) {
        nd.lo[c] = std::min(nd.lo[c], p[c]);
        nd.hi[c] = std::max(nd.hi[c], p[c]);
      }
    }
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(nd);
    if (end - begin > kLeafSize) {
      std::size_t split_dim = 0;
      double widest = -1.0;
      for (std::size_t c = 0; c < ps_.dim; ++c) {
        const double w = nd.hi[c] - nd.lo[c];
        if (w > widest) {
          widest = w;
          split_dim = c;
        }
      }
      const std::size_t mid = begin + (end - begin) / 2;
      std::nth_element(idx_.begin() + begin, idx_.begin() + mid,
                       idx_.begin() + end,
                       [&](std::size_t a, std::size_t b) {
                         return ps_.point(a)[split_dim] < ps_.point(b)[split_dim];
                       });
      const int l = build(begin, mid);
      const int r = build(mid, end);
      nodes_[id].left = l;
      nodes_[id].right = r;
    }
    return id;
  }

  double box_min_dist(const NodeRec& nd, const double* p) const {
    double d = 0.0;
    for (std::size_t c = 0; c < ps_.dim; ++c) {
      double v = 0.0;
      if (p[c] < nd.lo[c]) v = nd.lo[c] - p[c];
      else if (p[c] > nd.hi[c]) v = p[c] - nd.hi[c];
      if (v > d) d = v;
    }
    return d;
  }

  double box_max_dist(const NodeRec& nd, const double* p) const {
    double d = 0.0;
    for (std::size_t c = 0; c < ps_.dim; ++c) {
      const double v = std::max(std::fabs(p[c] - nd.lo[c]),
                                std::fabs(p[c] - nd.hi[c]));
      if (v > d) d = v;
    }
    return d;
  }

  void search(int node, std::size_t q, int k, std::vector<double>& heap) const {
    const NodeRec& nd = nodes_[node];
    const double* p = ps_.point(q);
    if (heap.size() == static_cast<std::size_t>(k) &&
        box_min_dist(nd, p) >= heap.front())
      return;
    if (nd.left < 0) {
      for (std::size_t i = nd.begin; i < nd.end; ++i) {
        const std::size_t j = idx_[i];
        if (j == q) continue;
        const double d = max_norm_dist(p, ps_.point(j), ps_.dim);
        if (heap.size() < static_cast<std::size_t>(k)) {
          heap.push_back(d);
          std::push_heap(heap.begin(), heap.end());
        } else if (d < heap.front()) {
          std::pop_heap(heap.begin(), heap.end());
          heap.back() = d;
          std::push_heap(heap.begin(), heap.end());
        }
      }
      return;
    }
    // Visit the nearer child first for tighter pruning.
    const double dl = box_min_dist(nodes_[nd.left], p);
    const double dr = box_min_dist(nodes_[nd.right], p);
    if (dl <= dr) {
      search(nd.left, q, k, heap);
      search(nd.right, q, k, heap);
    } else {
      search(nd.right, q, k, heap);
      search(nd.left, q, k, heap);
    }
  }

  void count_rec(int node, std::size_t q, double radius, std::size_t& count) const {
    const NodeRec& nd = nodes_[node];
    const double* p = ps_.point(q);
    if (box_min_dist(nd, p) >= radius) return;
    if (box_max_dist(nd, p) < radius) {
      count += nd.end - nd.begin;
      return;
    }
    if (nd.left < 0) {
      for (std::size_t i = nd.begin; i < nd.end; ++i)
        if (max_norm_dist(p, ps_.point(idx_[i]), ps_.dim) < radius) ++count;
      return;
    }
    count_rec(nd.left, q, radius, count);
    count_rec(nd.right, q, radius, count);
  }

  const PointSet ps_;
  std::vector<std::size_t> idx_;
  std::vector<NodeRec> nodes_;
  int root_ = -1;
};

void run_chunked(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn) {
  const std::size_t threads = std::min(eval_thread_budget(), std::max<std::size_t>(1, n / 256));
  if (threads <= 1) {
    fn(0, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  const std::size_t chunk = (n + threads - 1) / threads;
  for (std::size_t t = 0; t < threads; ++t) {
    const std::size_t b = t * chunk;
    const std::size_t e = std::min(n, b + chunk);
    if (b >= e) break;
    pool.emplace_back(fn, b, e);
  }
  for (auto& th : pool) th.join();
}

// Largest per-coordinate spread; scales the duplicate-breaking jitter so the
// estimate is exactly invariant under translation and common scaling.
double joint_spread(const Matrix& x, const Matrix& y) {
  double spread = 0.0;
  auto scan = [&spread](const Matrix& m) {
    for (std::size_t c = 0; c < m.cols; ++c) {
      double lo = m(0, c), hi = m(0, c);
      for (std::size_t i = 1; i < m.rows; ++i) {
        lo = std::min(lo, m(i, c));
        hi = std::max(hi, m(i, c));
      }
      spread = std::max(spread, hi - lo);
    }
  };
  scan(x);
  scan(y);
  return spread;
}

bool zero_variance_block(const Matrix& m) {
  for (std::size_t c = 0; c < m.cols; ++c)
    for (std::size_t i = 1; i < m.rows; ++i)
      if (m(i, c) != m(0, c)) return false;
  return true;
}

}  // namespace

double ksg_mi_backend(const Matrix& x, const Matrix& y, const KsgConfig& cfg,
                      KnnBackend backend) {
  if (x.rows != y.rows)
    throw ShapeError("ksg_mi: row counts differ, " + x.shape_str() + " vs " +
                     y.shape_str());
  const std::size_t n = x.rows;
  if (cfg.k < 1) throw DomainError("ksg_mi: k must be >= 1");
  if (n <= static_cast<std::size_t>(cfg.k))
    throw DomainError("ksg_mi: need more than k=" + std::to_string(cfg.k) +
                      " samples, got " + std::to_string(n));
  if (x.cols == 0 || y.cols == 0)
    throw ShapeError("ksg_mi: empty marginal block");
  if (backend == KnnBackend::kdtree && x.cols + y.cols > 8)
    throw ShapeError("ksg_mi: kd-tree backend supports joint dimension <= 8");
  if (zero_variance_block(x) || zero_variance_block(y))
    throw DomainError("ksg_mi: a marginal block has zero variance");

  // Deterministic per-row jitter (same offset on every coordinate of a row)
  // separates duplicate joint points without disturbing neighbor structure.
  const double jig = 1e-13 * joint_spread(x, y);
  const std::size_t dx = x.cols, dy = y.cols, dj = dx + dy;
  std::vector<double> joint(n * dj), mx(n * dx), my(n * dy);
  for (std::size_t i = 0; i < n; ++i) {
    const double off =
        jig * (static_cast<double>(splitmix64(i) >> 11) * 0x1.0p-53);
    for (std::size_t c = 0; c < dx; ++c) {
      const double v = x(i, c) + off;
      joint[i * dj + c] = v;
      mx[i * dx + c] = v;
    }
    for (std::size_t c = 0; c < dy; ++c) {
      const double v = y(i, c) + off;
      joint[i * dj + dx + c] = v;
      my[i * dy + c] = v;
    }
  }
  const PointSet pj{joint.data(), n, dj};
  const PointSet px{mx.data(), n, dx};
  const PointSet py{my.data(), n, dy};

  const bool use_tree =
      backend == KnnBackend::kdtree ||
      (backend == KnnBackend::automatic && n > 4096 && dj <= 8);

  std::vector<double> eps(n);
  std::vector<std::size_t> nx(n), ny(n);

  if (use_tree) {
    const KdTree tj(pj), tx(px), ty(py);
    run_chunked(n, [&](std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i) {
        eps[i] = tj.kth_neighbor_dist(i, cfg.k);
        nx[i] = tx.count_within(i, eps[i]);
        ny[i] = ty.count_within(i, eps[i]);
      }
    });
  } else {
    run_chunked(n, [&](std::size_t b, std::size_t e) {
      std::vector<double> heap;
      for (std::size_t i = b; i < e; ++i) {
        heap.clear();
        const double* qi = pj.point(i);
        for (std::size_t j = 0; j < n; ++j) {
          if (j == i) continue;
          const double d = max_norm_dist(qi, pj.point(j), dj);
          if (heap.size() < static_cast<std::size_t>(cfg.k)) {
            heap.push_back(d);
            std::push_heap(heap.begin(), heap.end());
          } else if (d < heap.front()) {
            std::pop_heap(heap.begin(), heap.end());
            heap.back() = d;
            std::push_heap(heap.begin(), heap.end());
          }
        }
        eps[i] = heap.front();
        std::size_t cx = 0, cy = 0;
        const double* xi = px.point(i);
        const double* yi = py.point(i);
        for (std::size_t j = 0; j < n; ++j) {
          if (j == i) continue;
          if (max_norm_dist(xi, px.point(j), dx) < eps[i]) ++cx;
          if (max_norm_dist(yi, py.point(j), dy) < eps[i]) ++cy;
        }
        nx[i] = cx;
        ny[i] = cy;
      }
    });
  }

  // psi(k) + psi(N) - <psi(nx+1) + psi(ny+1)>, reduced in row order.
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    acc += digamma(static_cast<double>(nx[i] + 1)) +
           digamma(static_cast<double>(ny[i] + 1));
  const double nats = digamma(static_cast<double>(cfg.k)) +
                      digamma(static_cast<double>(n)) -
                      acc / static_cast<double>(n);
  return cfg.units == MiUnits::bits ? nats / std::log(2.0) : nats;
}

}  // namespace detail

double ksg_mi(const Matrix& x, const Matrix& y, const KsgConfig& cfg) {
  return detail::ksg_mi_backend(x, y, cfg, detail::KnnBackend::automatic);
}

}  // namespace stib
