#include "edgemask/synth.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>

#include "edgemask/tensor.hpp"

namespace edgemask {
namespace {

constexpr std::uint64_t kCentreStream = 0;
constexpr std::uint64_t kFeatureStream = 1000;
constexpr std::uint64_t kBackboneStream = 2000;
constexpr std::uint64_t kSpuriousStream = 3000;

std::size_t uniform_index(Rng& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

void add_pair(std::vector<Edge>& edges, std::size_t u, std::size_t v) {
  edges.push_back({u, v, EdgeOrigin::Original});
  edges.push_back({v, u, EdgeOrigin::Original});
}

}  // namespace

void SynthConfig::validate() const {
  if (nodes_per_domain < 2) throw std::invalid_argument("synth: need at least two nodes per domain");
  if (classes < 2) throw std::invalid_argument("synth: need at least two classes");
  if (nodes_per_domain < classes) throw std::invalid_argument("synth: fewer nodes than classes");
  if (feature_dim < 1) throw std::invalid_argument("synth: feature dim must be at least 1");
  if (!(separation >= 0.0) || !(feature_noise > 0.0)) throw std::invalid_argument("synth: bad feature scale");
  if (!(backbone_degree >= 0.0) || !(spurious_degree >= 0.0)) throw std::invalid_argument("synth: negative degree");
  if (!(homophily >= 0.0 && homophily <= 1.0)) throw std::invalid_argument("synth: homophily outside [0, 1]");
  if (spurious_strength.empty()) throw std::invalid_argument("synth: no domains");
  for (double s : spurious_strength) {
    if (!(s >= 0.0 && s <= 1.0)) throw std::invalid_argument("synth: spurious strength outside [0, 1]");
  }
}

DomainDataset generate(const SynthConfig& cfg) {
  cfg.validate();
  const std::size_t n = cfg.nodes_per_domain;
  const std::size_t C = cfg.classes;
  const auto d = static_cast<Index>(cfg.feature_dim);
  std::normal_distribution<double> normal(0.0, 1.0);

  // Shared class-conditional model.
  Rng centre_rng = make_stream(cfg.seed, kCentreStream);
  Matrix centres(static_cast<Index>(C), d);
  for (std::size_t c = 0; c < C; ++c) {
    for (Index j = 0; j < d; ++j) centres(static_cast<Index>(c), j) = normal(centre_rng);
  }
  if (static_cast<Index>(C) <= d) {
    // Orthonormal directions give every pair of classes the same centre distance.
    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(centres.transpose());
    const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(d, static_cast<Index>(C));
    centres = q.transpose();
  }
  for (std::size_t c = 0; c < C; ++c) {
    const double norm = centres.row(static_cast<Index>(c)).norm();
    if (norm > 0.0) centres.row(static_cast<Index>(c)) *= cfg.separation / norm;
  }

  std::vector<int> labels(n);
  std::vector<std::vector<std::size_t>> members(C);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = static_cast<int>(i % C);
    members[i % C].push_back(i);
  }

  DomainDataset ds;
  for (std::size_t dom = 0; dom < cfg.num_domains(); ++dom) {
    Rng feat_rng = make_stream(cfg.seed, kFeatureStream + dom);
    Matrix x(static_cast<Index>(n), d);
    for (std::size_t i = 0; i < n; ++i) {
      for (Index j = 0; j < d; ++j) {
        x(static_cast<Index>(i), j) = centres(labels[i], j) + cfg.feature_noise * normal(feat_rng);
      }
    }

    std::vector<Edge> edges;
    Rng bb_rng = make_stream(cfg.seed, kBackboneStream + dom);
    std::bernoulli_distribution same_class(cfg.homophily);
    const auto backbone = static_cast<std::size_t>(std::llround(cfg.backbone_degree * static_cast<double>(n) / 2.0));
    for (std::size_t k = 0; k < backbone; ++k) {
      const std::size_t u = uniform_index(bb_rng, n);
      const auto cu = static_cast<std::size_t>(labels[u]);
      std::size_t cv = cu;
      if (!same_class(bb_rng)) cv = (cu + 1 + uniform_index(bb_rng, C - 1)) % C;
      std::size_t v = u;
      while (v == u) v = members[cv][uniform_index(bb_rng, members[cv].size())];
      add_pair(edges, u, v);
    }

    // Confounder groups: class c is wired to class pairing[c], never to itself.
    Rng sp_rng = make_stream(cfg.seed, kSpuriousStream + dom);
    std::vector<std::size_t> pairing(C);
    std::iota(pairing.begin(), pairing.end(), std::size_t{0});
    bool derangement = false;
    while (!derangement) {
      std::shuffle(pairing.begin(), pairing.end(), sp_rng);
      derangement = true;
      for (std::size_t c = 0; c < C; ++c) derangement = derangement && pairing[c] != c;
    }
    const double strength = cfg.spurious_strength[dom];
    const auto spurious =
        static_cast<std::size_t>(std::llround(strength * cfg.spurious_degree * static_cast<double>(n) / 2.0));
    for (std::size_t k = 0; k < spurious; ++k) {
      const std::size_t u = uniform_index(sp_rng, n);
      const std::vector<std::size_t>& group = members[pairing[static_cast<std::size_t>(labels[u])]];
      add_pair(edges, u, group[uniform_index(sp_rng, group.size())]);
    }

    ds.sources.emplace_back(std::move(x), std::move(edges), labels, C, "domain" + std::to_string(dom));
  }
  return ds;
}

namespace {

double homophily_of(const Graph& g) {
  std::size_t same = 0, total = 0;
  for (const Edge& e : g.edges()) {
    const int a = g.labels()[e.src];
    const int b = g.labels()[e.dst];
    if (a == kUnlabeled || b == kUnlabeled) continue;
    ++total;
    same += a == b;
  }
  return total == 0 ? 0.0 : static_cast<double>(same) / static_cast<double>(total);
}

std::map<std::size_t, double> degree_histogram(const Graph& g) {
  std::vector<std::size_t> deg(g.num_nodes(), 0);
  for (const Edge& e : g.edges()) ++deg[e.dst];
  std::map<std::size_t, double> hist;
  for (std::size_t v : deg) hist[v] += 1.0 / static_cast<double>(g.num_nodes());
  return hist;
}

double total_variation(const std::map<std::size_t, double>& a, const std::map<std::size_t, double>& b) {
  std::map<std::size_t, double> diff = a;
  for (const auto& [k, v] : b) diff[k] -= v;
  double tv = 0.0;
  for (const auto& [k, v] : diff) tv += std::abs(v);
  return 0.5 * tv;
}

double standardized_difference(const Matrix& a, const Matrix& b) {
  const Eigen::RowVectorXd ma = a.colwise().mean();
  const Eigen::RowVectorXd mb = b.colwise().mean();
  double total = 0.0;
  for (Index j = 0; j < a.cols(); ++j) {
    const double va = (a.col(j).array() - ma(j)).square().sum() / static_cast<double>(std::max<Index>(a.rows() - 1, 1));
    const double vb = (b.col(j).array() - mb(j)).square().sum() / static_cast<double>(std::max<Index>(b.rows() - 1, 1));
    const double pooled = std::sqrt(0.5 * (va + vb));
    const double diff = std::abs(ma(j) - mb(j));
    total += pooled > 0.0 ? diff / pooled : (diff > 0.0 ? 1.0 : 0.0);
  }
  return a.cols() > 0 ? total / static_cast<double>(a.cols()) : 0.0;
}

}  // namespace

ShiftReport verify_shift(const DomainDataset& ds) {
  std::vector<Graph> all = ds.sources;
  if (ds.target) all.push_back(*ds.target);
  if (all.size() < 2) throw std::invalid_argument("verify_shift: needs at least two domains");
  ds.validate();

  ShiftReport r;
  std::vector<std::map<std::size_t, double>> hists;
  for (const Graph& g : all) {
    r.homophily.push_back(homophily_of(g));
    hists.push_back(degree_histogram(g));
  }
  for (std::size_t i = 0; i < all.size(); ++i) {
    for (std::size_t j = i + 1; j < all.size(); ++j) {
      r.degree_distance = std::max(r.degree_distance, total_variation(hists[i], hists[j]));
      r.feature_distance = std::max(r.feature_distance, standardized_difference(all[i].features(), all[j].features()));
    }
  }
  return r;
}

EnrichedGraph tiny_enriched_graph(std::uint64_t seed, std::size_t nodes, std::size_t edges, std::size_t feature_dim,
                                  std::size_t classes) {
  if (nodes < 2 || classes < 1) throw std::invalid_argument("tiny graph: need two nodes and one class");
  if (edges > nodes * (nodes - 1)) throw std::invalid_argument("tiny graph: more edges than directed pairs");
  Rng rng = make_stream(seed, 0);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix x(static_cast<Index>(nodes), static_cast<Index>(feature_dim));
  for (Index i = 0; i < x.rows(); ++i) {
    for (Index j = 0; j < x.cols(); ++j) x(i, j) = normal(rng);
  }
  std::vector<int> labels(nodes);
  for (std::size_t i = 0; i < nodes; ++i) labels[i] = static_cast<int>(i % classes);

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t u = 0; u < nodes; ++u) {
    for (std::size_t v = 0; v < nodes; ++v) {
      if (u != v) pairs.emplace_back(u, v);
    }
  }
  std::shuffle(pairs.begin(), pairs.end(), rng);
  pairs.resize(edges);
  std::sort(pairs.begin(), pairs.end());

  constexpr EdgeOrigin kCycle[] = {EdgeOrigin::Original, EdgeOrigin::Knn, EdgeOrigin::Spectral};
  std::vector<Edge> original;
  EnrichedGraph g;
  for (std::size_t e = 0; e < pairs.size(); ++e) {
    const Edge edge{pairs[e].first, pairs[e].second, kCycle[e % 3]};
    g.edges.push_back(edge);
    if (edge.origin == EdgeOrigin::Original) original.push_back(edge);
  }
  g.base = Graph(std::move(x), std::move(original), std::move(labels), classes, "tiny");
  g.self_loop_begin = g.edges.size();
  for (std::size_t i = 0; i < nodes; ++i) g.edges.push_back({i, i, EdgeOrigin::SelfLoop});
  return g;
}

}  // namespace edgemask
