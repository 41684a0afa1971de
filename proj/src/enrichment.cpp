#include "edgemask/enrichment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

#include <Eigen/Eigenvalues>

namespace edgemask {
namespace {

// Fixed-order dot product so that identical rows give bit-identical similarities regardless of
// their position in memory.
double ordered_dot(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double squared_distance(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = a[i] - b[i];
    acc += t * t;
  }
  return acc;
}

// Groups identical rows. Returns the representative row index of each group and, per row, its group.
std::pair<std::vector<Index>, std::vector<std::size_t>> unique_rows(const Matrix& x) {
  const Index n = x.rows();
  const auto d = static_cast<std::size_t>(x.cols());
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  auto row_less = [&](Index a, Index b) {
    const double* ra = x.row(a).data();
    const double* rb = x.row(b).data();
    if (std::lexicographical_compare(ra, ra + d, rb, rb + d)) return true;
    if (std::lexicographical_compare(rb, rb + d, ra, ra + d)) return false;
    return a < b;
  };
  std::sort(order.begin(), order.end(), row_less);

  std::vector<Index> reps;
  std::vector<std::size_t> group(static_cast<std::size_t>(n));
  for (std::size_t p = 0; p < order.size(); ++p) {
    const Index i = order[p];
    const bool same = p > 0 && std::equal(x.row(i).data(), x.row(i).data() + d, x.row(order[p - 1]).data());
    if (!same) reps.push_back(i);
    group[static_cast<std::size_t>(i)] = reps.size() - 1;
  }
  return {reps, group};
}

}  // namespace

void EnrichConfig::validate() const {
  if (k < 1) throw std::invalid_argument("enrich: k must be at least 1");
  if (clusters < 2) throw std::invalid_argument("enrich: cluster count must be at least 2");
  if (!(gamma_knn >= 0.0 && gamma_knn <= 1.0)) throw std::invalid_argument("enrich: gamma_knn outside [0, 1]");
  if (!(gamma_spec >= 0.0 && gamma_spec <= 1.0)) throw std::invalid_argument("enrich: gamma_spec outside [0, 1]");
  if (bandwidth && !(*bandwidth > 0.0)) throw std::invalid_argument("enrich: bandwidth must be positive");
}

std::vector<Edge> knn_edges(const Matrix& x, std::size_t k) {
  const auto n = static_cast<std::size_t>(x.rows());
  const auto d = static_cast<std::size_t>(x.cols());
  if (n < 2) throw std::invalid_argument("knn: need at least 2 nodes");
  if (k >= n) throw std::invalid_argument("knn: k too large (k=" + std::to_string(k) + ", N=" + std::to_string(n) + ")");

  Matrix unit = x;
  for (Index i = 0; i < unit.rows(); ++i) {
    const double norm = std::sqrt(ordered_dot(unit.row(i).data(), unit.row(i).data(), d));
    if (norm > 0.0) {
      unit.row(i) /= norm;
    } else {
      unit.row(i).setZero();
    }
  }
  Matrix sim(static_cast<Index>(n), static_cast<Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Index>(i);
    sim(ii, ii) = 0.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      const auto jj = static_cast<Index>(j);
      const double s = ordered_dot(unit.row(ii).data(), unit.row(jj).data(), d);
      sim(ii, jj) = s;
      sim(jj, ii) = s;
    }
  }

  std::vector<Edge> edges;
  edges.reserve(n * k);
  std::vector<std::size_t> peers;
  for (std::size_t i = 0; i < n; ++i) {
    peers.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) peers.push_back(j);
    }
    const auto row = sim.row(static_cast<Index>(i));
    std::partial_sort(peers.begin(), peers.begin() + static_cast<std::ptrdiff_t>(k), peers.end(),
                      [&](std::size_t a, std::size_t b) {
                        const double sa = row(static_cast<Index>(a));
                        const double sb = row(static_cast<Index>(b));
                        if (sa != sb) return sa > sb;
                        return a < b;
                      });
    for (std::size_t p = 0; p < k; ++p) edges.push_back({i, peers[p], EdgeOrigin::Knn});
  }
  return edges;
}

std::vector<std::size_t> kmeans(const Matrix& points, std::size_t k, Rng& rng, std::size_t max_iter) {
  const auto n = static_cast<std::size_t>(points.rows());
  const auto d = static_cast<std::size_t>(points.cols());
  if (k == 0 || k > n) throw std::invalid_argument("kmeans: need 1 <= k <= number of points");

  auto dist2 = [&](const Matrix& centres, std::size_t c, std::size_t i) {
    return squared_distance(centres.row(static_cast<Index>(c)).data(), points.row(static_cast<Index>(i)).data(), d);
  };

  // k-means++ seeding.
  Matrix centres(static_cast<Index>(k), points.cols());
  std::vector<bool> chosen(n, false);
  std::uniform_int_distribution<std::size_t> first(0, n - 1);
  std::size_t pick = first(rng);
  centres.row(0) = points.row(static_cast<Index>(pick));
  chosen[pick] = true;
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], dist2(centres, c - 1, i));
      total += nearest[i];
    }
    pick = n;
    if (total > 0.0) {
      const double target = unit(rng) * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        acc += nearest[i];
        if (nearest[i] > 0.0 && acc >= target) {
          pick = i;
          break;
        }
      }
      if (pick == n) {
        // Rounding left the target just past the last positive weight.
        for (std::size_t i = n; i-- > 0;) {
          if (nearest[i] > 0.0) {
            pick = i;
            break;
          }
        }
      }
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        if (!chosen[i]) {
          pick = i;
          break;
        }
      }
    }
    chosen[pick] = true;
    centres.row(static_cast<Index>(c)) = points.row(static_cast<Index>(pick));
  }

  std::vector<std::size_t> assign(n, k);
  for (std::size_t iter = 0; iter < max_iter; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d = dist2(centres, 0, i);
      for (std::size_t c = 1; c < k; ++c) {
        const double dc = dist2(centres, c, i);
        if (dc < best_d) {
          best_d = dc;
          best = c;
        }
      }
      if (assign[i] != best) {
        assign[i] = best;
        changed = true;
      }
    }
    if (!changed) break;

    Matrix sums = Matrix::Zero(static_cast<Index>(k), points.cols());
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sums.row(static_cast<Index>(assign[i])) += points.row(static_cast<Index>(i));
      ++counts[assign[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        centres.row(static_cast<Index>(c)) = sums.row(static_cast<Index>(c)) / static_cast<double>(counts[c]);
        continue;
      }
      // Empty cluster: move it onto the point farthest from its current centre.
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (counts[assign[i]] <= 1) continue;
        const double di = dist2(centres, assign[i], i);
        if (di > far_d) {
          far_d = di;
          far = i;
        }
      }
      if (far_d < 0.0) continue;
      --counts[assign[far]];
      assign[far] = c;
      counts[c] = 1;
      centres.row(static_cast<Index>(c)) = points.row(static_cast<Index>(far));
    }
  }
  return assign;
}

std::vector<std::size_t> spectral_assignments(const Matrix& x, std::size_t clusters, std::optional<double> bandwidth,
                                              Rng& rng, std::size_t dense_node_cap, std::size_t kmeans_max_iter) {
  const auto n = static_cast<std::size_t>(x.rows());
  const auto d = static_cast<std::size_t>(x.cols());
  if (clusters < 1) throw std::invalid_argument("spectral: cluster count must be positive");
  if (n < clusters) {
    throw std::invalid_argument("spectral: fewer nodes (" + std::to_string(n) + ") than clusters (" +
                                std::to_string(clusters) + ")");
  }
  if (n > dense_node_cap) {
    throw std::runtime_error("spectral: " + std::to_string(n) + " nodes exceed the dense eigensolver cap of " +
                             std::to_string(dense_node_cap));
  }

  auto [reps, group] = unique_rows(x);
  const std::size_t u = reps.size();
  const std::size_t k = std::min(clusters, u);
  if (k <= 1) return std::vector<std::size_t>(n, 0);

  Matrix d2(static_cast<Index>(u), static_cast<Index>(u));
  std::vector<double> dists;
  dists.reserve(u * (u - 1) / 2);
  for (std::size_t a = 0; a < u; ++a) {
    d2(static_cast<Index>(a), static_cast<Index>(a)) = 0.0;
    for (std::size_t b = a + 1; b < u; ++b) {
      const double v = squared_distance(x.row(reps[a]).data(), x.row(reps[b]).data(), d);
      d2(static_cast<Index>(a), static_cast<Index>(b)) = v;
      d2(static_cast<Index>(b), static_cast<Index>(a)) = v;
      dists.push_back(std::sqrt(v));
    }
  }
  double zeta = 0.0;
  if (bandwidth) {
    zeta = *bandwidth;
  } else {
    auto mid = dists.begin() + static_cast<std::ptrdiff_t>(dists.size() / 2);
    std::nth_element(dists.begin(), mid, dists.end());
    zeta = *mid;
    if (dists.size() % 2 == 0) zeta = 0.5 * (zeta + *std::max_element(dists.begin(), mid));
  }
  if (!(zeta > 0.0)) throw std::runtime_error("spectral: RBF bandwidth is not positive");

  const auto ui = static_cast<Index>(u);
  Eigen::MatrixXd affinity = (-d2.array() / (2.0 * zeta * zeta)).exp().matrix();
  const Eigen::VectorXd inv_sqrt_deg = affinity.rowwise().sum().array().rsqrt().matrix();
  Eigen::MatrixXd lap = -(inv_sqrt_deg.asDiagonal() * affinity * inv_sqrt_deg.asDiagonal());
  lap.diagonal().array() += 1.0;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(lap);
  if (solver.info() != Eigen::Success) throw std::runtime_error("spectral: eigendecomposition failed");

  Matrix embedding = solver.eigenvectors().leftCols(static_cast<Index>(k));
  for (Index i = 0; i < ui; ++i) {
    const double norm = embedding.row(i).norm();
    if (norm > 0.0) embedding.row(i) /= norm;
  }
  const auto unique_assign = kmeans(embedding, k, rng, kmeans_max_iter);

  std::vector<std::size_t> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = unique_assign[group[i]];
  return out;
}

std::vector<Edge> spectral_edges(const Matrix& x, std::size_t clusters, std::optional<double> bandwidth, Rng& rng,
                                 std::size_t dense_node_cap, std::size_t kmeans_max_iter) {
  const auto assign = spectral_assignments(x, clusters, bandwidth, rng, dense_node_cap, kmeans_max_iter);
  const std::size_t k = assign.empty() ? 0 : *std::max_element(assign.begin(), assign.end()) + 1;
  std::vector<std::vector<std::size_t>> members(k);
  for (std::size_t i = 0; i < assign.size(); ++i) members[assign[i]].push_back(i);

  std::vector<Edge> edges;
  for (std::size_t i = 0; i < assign.size(); ++i) {
    for (std::size_t j : members[assign[i]]) {
      if (j != i) edges.push_back({i, j, EdgeOrigin::Spectral});
    }
  }
  return edges;
}

std::vector<Edge> sample_edges(std::span<const Edge> edges, double ratio, Rng& rng) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw std::invalid_argument("sample_edges: ratio outside [0, 1]");
  const std::size_t n = edges.size();
  // The epsilon keeps products such as 0.29 * 100 from flooring one short.
  const auto count = std::min(n, static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 1e-9)));
  if (count == n) return {edges.begin(), edges.end()};

  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  std::vector<Edge> out;
  out.reserve(count);
  for (std::size_t i : idx) out.push_back(edges[i]);
  return out;
}

EnrichedGraph plain_enriched(const Graph& g, bool add_self_loops) {
  EnrichedGraph out{g, std::vector<Edge>(g.edges().begin(), g.edges().end()), 0};
  out.self_loop_begin = out.edges.size();
  if (add_self_loops) {
    for (std::size_t i = 0; i < g.num_nodes(); ++i) out.edges.push_back({i, i, EdgeOrigin::SelfLoop});
  }
  return out;
}

EdgeOriginStats edge_stats(const EnrichedGraph& enriched) { return edge_stats(enriched.base, enriched.edges); }

EnrichmentCache::EnrichmentCache(const Graph& g, const EnrichConfig& cfg, Rng& rng) : graph_(g), cfg_(cfg) {
  cfg_.validate();
  if (cfg_.gamma_knn > 0.0) knn_ = knn_edges(g.features(), cfg_.k);
  if (cfg_.gamma_spec > 0.0) {
    spectral_ = spectral_edges(g.features(), cfg_.clusters, cfg_.bandwidth, rng, cfg_.dense_node_cap,
                               cfg_.kmeans_max_iter);
  }
}

EnrichedGraph EnrichmentCache::assemble(std::vector<Edge> extra) const {
  std::vector<Edge> all(graph_.edges().begin(), graph_.edges().end());
  all.insert(all.end(), extra.begin(), extra.end());
  EnrichedGraph out{graph_, coalesce(std::move(all)), 0};
  out.self_loop_begin = out.edges.size();
  if (cfg_.add_self_loops) {
    for (std::size_t i = 0; i < graph_.num_nodes(); ++i) out.edges.push_back({i, i, EdgeOrigin::SelfLoop});
  }
  return out;
}

EnrichedGraph EnrichmentCache::sample(Rng& rng) const {
  std::vector<Edge> extra = sample_edges(spectral_, cfg_.gamma_spec, rng);
  std::vector<Edge> knn = sample_edges(knn_, cfg_.gamma_knn, rng);
  extra.insert(extra.end(), knn.begin(), knn.end());
  return assemble(std::move(extra));
}

EnrichedGraph EnrichmentCache::full() const {
  std::vector<Edge> extra(spectral_.begin(), spectral_.end());
  extra.insert(extra.end(), knn_.begin(), knn_.end());
  return assemble(std::move(extra));
}

EnrichedGraph enrich(const Graph& g, const EnrichConfig& cfg, Rng& rng) {
  EnrichmentCache cache(g, cfg, rng);
  return cache.sample(rng);
}

}  // namespace edgemask
