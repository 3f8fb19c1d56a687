#pragma once

#include <Eigen/Dense>

#include <future>
#include <utility>

namespace pmk {

/// Worker threads used by the tree reductions (1 = serial). Set from the
/// CLI via --threads or PARTITION_MK_THREADS; the summation tree is fixed,
/// so results are bit-identical for every thread count.
void set_thread_count(int threads);
int thread_count();

namespace detail {

inline constexpr Eigen::Index kReduceLeaf = 64;
inline constexpr Eigen::Index kForkThreshold = 1 << 15;

template <class Leaf>
auto tree_reduce(Eigen::Index lo, Eigen::Index hi, const Leaf& leaf, int budget)
    -> decltype(leaf(lo, hi)) {
  if (hi - lo <= kReduceLeaf) return leaf(lo, hi);
  const Eigen::Index mid = lo + (hi - lo) / 2;
  if (budget > 1 && hi - lo >= kForkThreshold) {
    auto right = std::async(std::launch::async, [&] {
      return tree_reduce(mid, hi, leaf, budget / 2);
    });
    auto left = tree_reduce(lo, mid, leaf, budget - budget / 2);
    return left + right.get();
  }
  auto left = tree_reduce(lo, mid, leaf, 1);
  auto right = tree_reduce(mid, hi, leaf, 1);
  return left + right;
}

}  // namespace detail

/// Pairwise (tree) sum of per_item(i) for i in [0, n). The reduction tree
/// depends only on n, never on scheduling, so repeated runs agree exactly.
template <class F>
double tree_sum(Eigen::Index n, const F& per_item) {
  if (n <= 0) return 0.0;
  auto leaf = [&](Eigen::Index lo, Eigen::Index hi) {
    double s = 0.0;
    for (Eigen::Index i = lo; i < hi; ++i) s += per_item(i);
    return s;
  };
  return detail::tree_reduce(Eigen::Index{0}, n, leaf, thread_count());
}

/// Scalar-plus-vector payload for fused value/gradient reductions.
struct ValueGrad {
  double value = 0.0;
  Eigen::VectorXd grad;

  ValueGrad operator+(const ValueGrad& o) const {
    ValueGrad r;
    r.value = value + o.value;
    r.grad = grad + o.grad;
    return r;
  }
};

/// Tree sum of ValueGrad contributions; per_range(lo, hi) returns the exact
/// sequential sum over [lo, hi) and is called on fixed leaf ranges only.
template <class F>
ValueGrad tree_sum_valgrad(Eigen::Index n, Eigen::Index dim, const F& per_range) {
  if (n <= 0) return ValueGrad{0.0, Eigen::VectorXd::Zero(dim)};
  return detail::tree_reduce(Eigen::Index{0}, n, per_range, thread_count());
}

}  // namespace pmk
