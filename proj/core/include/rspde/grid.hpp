#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

namespace rspde {

/// Time grid on [0, T]. Most of the laboratory runs on uniform dyadic grids
/// (depth d -> 2^d steps); general strictly increasing node sets are allowed
/// wherever no dyadic refinement is required.
struct TimeGrid {
  double horizon_T = 1.0;
  std::vector<double> nodes;  // t_0 = 0 < ... < t_N = T
  int dyadic_depth = -1;      // >= 0 when built dyadically

  static TimeGrid dyadic(double T, int depth) {
    if (T <= 0.0) throw std::domain_error("TimeGrid: horizon must be positive");
    if (depth < 0) throw std::domain_error("TimeGrid: negative depth");
    TimeGrid g;
    g.horizon_T = T;
    g.dyadic_depth = depth;
    const std::int64_t n = std::int64_t{1} << depth;
    g.nodes.resize(n + 1);
    for (std::int64_t i = 0; i <= n; ++i)
      g.nodes[i] = T * static_cast<double>(i) / static_cast<double>(n);
    g.nodes.back() = T;
    return g;
  }

  static TimeGrid from_nodes(std::vector<double> ns) {
    if (ns.size() < 2 || ns.front() != 0.0)
      throw std::domain_error("TimeGrid: need t_0 = 0 < ... < t_N");
    for (std::size_t i = 1; i < ns.size(); ++i)
      if (!(ns[i] > ns[i - 1]))
        throw std::domain_error("TimeGrid: nodes must increase strictly");
    TimeGrid g;
    g.nodes = std::move(ns);
    g.horizon_T = g.nodes.back();
    return g;
  }

  int num_nodes() const { return static_cast<int>(nodes.size()); }
  int num_steps() const { return num_nodes() - 1; }
  double t(int i) const { return nodes[i]; }
  double dt(int i) const { return nodes[i + 1] - nodes[i]; }
};

/// Node index window [begin, end] (inclusive), used for sub-interval solves.
struct IndexWindow {
  int begin = 0;
  int end = 0;
  int count() const { return end - begin + 1; }
  static IndexWindow whole(const TimeGrid& g) { return {0, g.num_nodes() - 1}; }
};

// Shared pair-enumeration policy for all sup-over-(s,t) estimators:
// exhaustive pairs when the window has <= 1025 nodes, otherwise a
// stride-subsampled skeleton (stride = ceil(count/1024)) made exhaustive,
// plus every consecutive pair. Pairs are emitted sorted by s then t, which
// the row-batched evaluators rely on.
inline std::vector<std::pair<int, int>> pair_policy(const IndexWindow& w,
                                                    int max_skeleton = 1024) {
  std::vector<std::pair<int, int>> pairs;
  const int n = w.count();
  if (n < 2) return pairs;
  const int stride = (n - 1 + max_skeleton - 1) / max_skeleton;
  if (stride <= 1) {
    pairs.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
    for (int i = w.begin; i < w.end; ++i)
      for (int j = i + 1; j <= w.end; ++j) pairs.emplace_back(i, j);
    return pairs;
  }
  for (int i = w.begin; i < w.end; ++i) {
    pairs.emplace_back(i, i + 1);
    if ((i - w.begin) % stride != 0) continue;
    for (int j = i + stride; j <= w.end; j += stride)
      if (j != i + 1) pairs.emplace_back(i, j);
  }
  return pairs;
}

/// Hölder exponent triple (alpha, beta, beta').
struct HolderExponents {
  double alpha = 0.45;
  double beta = 0.40;
  double beta_prime = 0.30;

  void validate(bool solver_use = false) const {
    if (!(alpha > 1.0 / 3.0 && alpha <= 0.5))
      throw std::domain_error("HolderExponents: alpha must lie in (1/3, 1/2]");
    if (!(beta_prime > 0.0 && beta_prime <= beta && beta <= alpha))
      throw std::domain_error("HolderExponents: need 0 < beta' <= beta <= alpha");
    if (solver_use) {
      if (!(alpha + beta + beta_prime > 1.0))
        throw std::domain_error("HolderExponents: need alpha+beta+beta' > 1");
      if (!(beta_prime < beta && beta < alpha))
        throw std::domain_error("HolderExponents: solver needs beta' < beta < alpha");
    }
  }
};

}  // namespace rspde
