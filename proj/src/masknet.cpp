#include "edgemask/masknet.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <stdexcept>

namespace edgemask {
namespace {

Matrix uniform_fan_in(Index rows, Index cols, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
  }
  return m;
}

}  // namespace

double EdgeMask::scored_mean() const {
  if (num_scored == 0) return 0.0;
  return values.head(static_cast<Index>(num_scored)).mean();
}

EdgeMask EdgeMask::ones(std::size_t num_edges, std::size_t num_scored) {
  return EdgeMask{Vector::Ones(static_cast<Index>(num_edges)), num_scored};
}

std::size_t MaskNetParams::parameter_count() const {
  std::size_t total = 0;
  for_each_tensor([&](std::string_view, const Matrix& m) { total += static_cast<std::size_t>(m.size()); });
  return total;
}

MaskNetParams MaskNetParams::zeros_like() const {
  MaskNetParams z = *this;
  z.for_each_tensor([](std::string_view, Matrix& m) { m.setZero(); });
  return z;
}

bool operator==(const MaskNetParams& a, const MaskNetParams& b) {
  auto same = [](const Matrix& x, const Matrix& y) {
    return x.rows() == y.rows() && x.cols() == y.cols() && x == y;
  };
  return same(a.proj_weight, b.proj_weight) && same(a.proj_bias, b.proj_bias) &&
         same(a.hidden_weight, b.hidden_weight) && same(a.hidden_bias, b.hidden_bias) &&
         same(a.out_weight, b.out_weight) && same(a.out_bias, b.out_bias);
}

MaskNetParams init_masknet(std::size_t d, std::size_t d_prime, std::size_t hidden, Rng& rng) {
  if (d == 0 || d_prime == 0 || hidden == 0) throw std::invalid_argument("init_masknet: dimensions must be positive");
  const auto di = static_cast<Index>(d);
  const auto dp = static_cast<Index>(d_prime);
  const auto hi = static_cast<Index>(hidden);
  MaskNetParams p;
  p.proj_weight = uniform_fan_in(dp, di, rng);
  p.proj_bias = Matrix::Zero(1, dp);
  p.hidden_weight = uniform_fan_in(hi, 2 * dp, rng);
  p.hidden_bias = Matrix::Zero(1, hi);
  p.out_weight = uniform_fan_in(1, hi, rng);
  p.out_bias = Matrix::Zero(1, 1);
  return p;
}

MaskNetVars bind(ad::Tape& tape, const MaskNetParams& p, bool requires_grad) {
  return {tape.leaf(p.proj_weight, requires_grad),   tape.leaf(p.proj_bias, requires_grad),
          tape.leaf(p.hidden_weight, requires_grad), tape.leaf(p.hidden_bias, requires_grad),
          tape.leaf(p.out_weight, requires_grad),    tape.leaf(p.out_bias, requires_grad)};
}

EdgeIndex EdgeIndex::from(const EnrichedGraph& g) { return from(g.edges, g.num_nodes(), g.num_scored()); }

EdgeIndex EdgeIndex::from(std::span<const Edge> edges, std::size_t num_nodes, std::size_t num_scored) {
  if (num_scored > edges.size()) throw std::invalid_argument("EdgeIndex: scored count exceeds edge count");
  EdgeIndex out;
  out.num_nodes = static_cast<Index>(num_nodes);
  out.num_scored = num_scored;
  out.src.reserve(edges.size());
  out.dst.reserve(edges.size());
  for (const Edge& e : edges) {
    if (e.src >= num_nodes || e.dst >= num_nodes) throw std::out_of_range("EdgeIndex: edge references missing node");
    out.src.push_back(static_cast<Index>(e.src));
    out.dst.push_back(static_cast<Index>(e.dst));
  }
  return out;
}

ad::Var mask_scores(const MaskNetVars& p, ad::Var x, const EdgeIndex& edges) {
  if (x.cols() != p.proj_weight.cols()) {
    throw std::invalid_argument("masknet: feature dimension " + std::to_string(x.cols()) + " does not match " +
                                std::to_string(p.proj_weight.cols()));
  }
  const auto m = static_cast<std::ptrdiff_t>(edges.num_scored);
  std::span<const Index> src(edges.src.data(), static_cast<std::size_t>(m));
  std::span<const Index> dst(edges.dst.data(), static_cast<std::size_t>(m));

  ad::Var z = ad::relu(ad::add_row(ad::matmul_nt(x, p.proj_weight), p.proj_bias));
  ad::Var pair = ad::concat_cols(ad::gather_rows(z, src), ad::gather_rows(z, dst));
  ad::Var hidden = ad::relu(ad::add_row(ad::matmul_nt(pair, p.hidden_weight), p.hidden_bias));
  return ad::sigmoid(ad::add_row(ad::matmul_nt(hidden, p.out_weight), p.out_bias));
}

ad::Var mask_column(const MaskNetVars& p, ad::Var x, const EdgeIndex& edges) {
  ad::Var scores = mask_scores(p, x, edges);
  const auto loops = static_cast<Index>(edges.num_edges() - edges.num_scored);
  if (loops == 0) return scores;
  return ad::concat_rows(scores, x.tape().constant(Matrix::Ones(loops, 1)));
}

EdgeMask mask_forward(const MaskNetParams& p, const Matrix& x, const EdgeIndex& edges) {
  EdgeMask out;
  out.num_scored = edges.num_scored;
  out.values = Vector::Ones(static_cast<Index>(edges.num_edges()));
  if (edges.num_scored == 0) return out;
  ad::Tape tape;
  MaskNetVars vars = bind(tape, p, false);
  ad::Var s = mask_scores(vars, tape.constant(x), edges);
  out.values.head(static_cast<Index>(edges.num_scored)) = s.value().col(0);
  return out;
}

EdgeMask mask_forward(const MaskNetParams& p, const Matrix& x, const EnrichedGraph& g) {
  return mask_forward(p, x, EdgeIndex::from(g));
}

void write_mask_csv(const EnrichedGraph& g, const EdgeMask& mask, const std::filesystem::path& file) {
  if (mask.size() != g.num_edges()) throw std::invalid_argument("write_mask_csv: mask length mismatch");
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot open " + file.string() + " for writing");
  out << "src,dst,origin,s\n" << std::setprecision(17);
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    const Edge& edge = g.edges[e];
    out << edge.src << ',' << edge.dst << ',' << to_string(edge.origin) << ',' << mask.values(static_cast<Index>(e))
        << '\n';
  }
}

}  // namespace edgemask
