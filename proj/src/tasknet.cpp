#include "edgemask/tasknet.hpp"

#include <cmath>
#include <stdexcept>

namespace edgemask {
namespace {

Matrix glorot(Index rows, Index cols, double fan_in, double fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
  }
  return m;
}

// Inverted dropout mask: kept entries are scaled by 1/(1-p).
Matrix dropout_mask(Index rows, Index cols, double p, Rng& rng) {
  std::bernoulli_distribution keep(1.0 - p);
  const double scale = 1.0 / (1.0 - p);
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) m(i, j) = keep(rng) ? scale : 0.0;
  }
  return m;
}

ad::Var activate(ad::Var v, Activation a) { return a == Activation::Elu ? ad::elu(v) : ad::relu(v); }

}  // namespace

std::string_view to_string(Activation a) { return a == Activation::Elu ? "elu" : "relu"; }

Activation activation_from_string(std::string_view name) {
  if (name == "elu") return Activation::Elu;
  if (name == "relu") return Activation::Relu;
  throw std::invalid_argument("unknown activation '" + std::string(name) + "'");
}

void TaskNetConfig::validate() const {
  if (layers < 1) throw std::invalid_argument("tasknet: need at least one layer");
  if (heads < 1) throw std::invalid_argument("tasknet: need at least one head");
  if (head_dim < 1) throw std::invalid_argument("tasknet: head dimension must be positive");
  if (!(attn_dropout >= 0.0 && attn_dropout < 1.0)) throw std::invalid_argument("tasknet: attn_dropout outside [0, 1)");
  if (!(feat_dropout >= 0.0 && feat_dropout < 1.0)) throw std::invalid_argument("tasknet: feat_dropout outside [0, 1)");
}

std::size_t TaskNetParams::parameter_count() const {
  std::size_t total = 0;
  for_each_tensor([&](const std::string&, const Matrix& m) { total += static_cast<std::size_t>(m.size()); });
  return total;
}

TaskNetParams TaskNetParams::zeros_like() const {
  TaskNetParams z = *this;
  z.for_each_tensor([](const std::string&, Matrix& m) { m.setZero(); });
  return z;
}

bool operator==(const TaskNetParams& a, const TaskNetParams& b) {
  if (a.layers.size() != b.layers.size()) return false;
  auto same = [](const Matrix& x, const Matrix& y) {
    return x.rows() == y.rows() && x.cols() == y.cols() && x == y;
  };
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    if (!same(a.layers[l].weight, b.layers[l].weight) || !same(a.layers[l].attention, b.layers[l].attention) ||
        !same(a.layers[l].mask_weight, b.layers[l].mask_weight)) {
      return false;
    }
  }
  return same(a.output, b.output);
}

TaskNetParams init_tasknet(std::size_t d, std::size_t num_classes, const TaskNetConfig& cfg, Rng& rng) {
  cfg.validate();
  if (d == 0 || num_classes == 0) throw std::invalid_argument("init_tasknet: dimensions must be positive");
  const auto heads = static_cast<Index>(cfg.heads);
  const auto hd = static_cast<Index>(cfg.head_dim);
  TaskNetParams p;
  auto d_in = static_cast<Index>(d);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    GatLayerParams layer;
    layer.weight = glorot(heads * hd, d_in, static_cast<double>(d_in), static_cast<double>(hd), rng);
    layer.attention = glorot(heads, 2 * hd + 1, 1.0, static_cast<double>(2 * hd + 1), rng);
    layer.mask_weight = Matrix::Ones(heads, 1);
    p.layers.push_back(std::move(layer));
    d_in = heads * hd;
  }
  p.output = glorot(static_cast<Index>(num_classes), hd, static_cast<double>(hd), static_cast<double>(num_classes), rng);
  return p;
}

TaskNetVars bind(ad::Tape& tape, const TaskNetParams& p, bool requires_grad) {
  TaskNetVars v;
  for (const GatLayerParams& l : p.layers) {
    v.layers.push_back({tape.leaf(l.weight, requires_grad), tape.leaf(l.attention, requires_grad),
                        tape.leaf(l.mask_weight, requires_grad)});
  }
  v.output = tape.leaf(p.output, requires_grad);
  return v;
}

void require_in_edges(const EdgeIndex& edges) {
  std::vector<bool> has(static_cast<std::size_t>(edges.num_nodes), false);
  for (Index v : edges.dst) has[static_cast<std::size_t>(v)] = true;
  for (std::size_t i = 0; i < has.size(); ++i) {
    if (!has[i]) {
      throw std::invalid_argument("node " + std::to_string(i) +
                                  " has no incoming edge; attention softmax is undefined (enable self-loops)");
    }
  }
}

ad::Var gat_layer(const GatLayerVars& p, ad::Var h, const EdgeIndex& edges, ad::Var s_col, bool final,
                  const TaskNetConfig& cfg, Rng* dropout_rng, GatLayerTrace* trace) {
  ad::Tape& tape = h.tape();
  const Index heads = p.attention.rows();
  const Index hd = (p.attention.cols() - 1) / 2;
  if (p.weight.rows() != heads * hd || p.weight.cols() != h.cols()) {
    throw std::invalid_argument("gat_layer: weight shape does not match input width " + std::to_string(h.cols()));
  }
  if (s_col.rows() != static_cast<Index>(edges.num_edges()) || s_col.cols() != 1) {
    throw std::invalid_argument("gat_layer: mask length does not match edge count");
  }

  ad::Var z = ad::matmul_nt(h, p.weight);  // n x H*d_h
  ad::Var target_score = ad::head_dot(z, ad::slice_cols(p.attention, 0, hd));
  ad::Var neighbour_score = ad::head_dot(z, ad::slice_cols(p.attention, hd, hd));
  ad::Var mask_coef = ad::mul(ad::slice_cols(p.attention, 2 * hd, 1), p.mask_weight);  // H x 1

  ad::Var logits = ad::add(ad::add(ad::gather_rows(target_score, edges.dst), ad::gather_rows(neighbour_score, edges.src)),
                           ad::matmul_nt(s_col, mask_coef));
  logits = ad::leaky_relu(logits, cfg.leaky_slope);
  ad::Var alpha = ad::segment_softmax(logits, edges.dst, edges.num_nodes);
  if (trace) trace->attention = alpha.value();
  if (dropout_rng && cfg.attn_dropout > 0.0) {
    alpha = ad::mul(alpha, tape.constant(dropout_mask(alpha.rows(), alpha.cols(), cfg.attn_dropout, *dropout_rng)));
  }

  ad::Var coef = ad::scale_rows(alpha, s_col);  // s_uv * alpha_uv
  ad::Var messages = ad::head_scale(ad::gather_rows(z, edges.src), coef);
  if (trace) trace->messages = messages.value();
  ad::Var out = activate(ad::scatter_add_rows(messages, edges.dst, edges.num_nodes), cfg.activation);
  return final ? ad::head_mean(out, heads) : out;
}

ad::Var tasknet_logits(const TaskNetVars& p, ad::Var x, const EdgeIndex& edges, ad::Var s_col,
                       const TaskNetConfig& cfg, Rng* dropout_rng) {
  require_in_edges(edges);
  ad::Var h = x;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    if (l > 0 && dropout_rng && cfg.feat_dropout > 0.0) {
      h = ad::mul(h, x.tape().constant(dropout_mask(h.rows(), h.cols(), cfg.feat_dropout, *dropout_rng)));
    }
    h = gat_layer(p.layers[l], h, edges, s_col, l + 1 == p.layers.size(), cfg, dropout_rng);
  }
  return ad::matmul_nt(h, p.output);
}

Matrix gat_layer_forward(const GatLayerParams& p, const Matrix& h, const EdgeIndex& edges, const EdgeMask& mask,
                         bool final, const TaskNetConfig& cfg, GatLayerTrace* trace) {
  if (mask.size() != edges.num_edges()) throw std::invalid_argument("gat_layer_forward: mask length mismatch");
  require_in_edges(edges);
  ad::Tape tape;
  GatLayerVars vars{tape.constant(p.weight), tape.constant(p.attention), tape.constant(p.mask_weight)};
  ad::Var s = tape.constant(mask.values);
  return gat_layer(vars, tape.constant(h), edges, s, final, cfg, nullptr, trace).value();
}

Matrix tasknet_forward(const TaskNetParams& p, const Matrix& x, const EdgeIndex& edges, const EdgeMask& mask,
                       const TaskNetConfig& cfg) {
  if (mask.size() != edges.num_edges()) throw std::invalid_argument("tasknet_forward: mask length mismatch");
  ad::Tape tape;
  TaskNetVars vars = bind(tape, p, false);
  return tasknet_logits(vars, tape.constant(x), edges, tape.constant(mask.values), cfg, nullptr).value();
}

double cross_entropy(const Matrix& logits, std::span<const int> labels) {
  ad::Tape tape;
  return ad::cross_entropy(tape.constant(logits), labels).value()(0, 0);
}

}  // namespace edgemask
