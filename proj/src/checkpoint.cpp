#include "edgemask/checkpoint.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <sstream>

namespace edgemask {
namespace {

using nlohmann::json;

constexpr std::array<std::string_view, 32> kKeys = {
    "epochs",        "lr-task",      "lr-mask",       "weight-decay-task", "lambda",     "n-descent",
    "n-ascent",      "beta1",        "beta2",         "eps",               "seed",       "rho",
    "dual-step",     "use-mask",     "inference-mask", "mask-proj-dim",    "mask-hidden", "knn-k",
    "clusters",      "gamma-knn",    "gamma-spec",    "bandwidth",         "self-loops", "dense-node-cap",
    "kmeans-max-iter", "layers",     "heads",         "head-dim",          "activation", "attn-dropout",
    "feat-dropout",  "leaky-slope"};

std::size_t as_size(std::string_view key, const json& v) {
  if (v.is_number_unsigned()) return v.get<std::size_t>();
  if (v.is_number_integer() && v.get<long long>() >= 0) return static_cast<std::size_t>(v.get<long long>());
  throw ConfigError("config key '" + std::string(key) + "' expects a non-negative integer");
}

double as_double(std::string_view key, const json& v) {
  if (v.is_number()) return v.get<double>();
  throw ConfigError("config key '" + std::string(key) + "' expects a number");
}

bool as_bool(std::string_view key, const json& v) {
  if (v.is_boolean()) return v.get<bool>();
  throw ConfigError("config key '" + std::string(key) + "' expects true or false");
}

std::string as_string(std::string_view key, const json& v) {
  if (v.is_string()) return v.get<std::string>();
  throw ConfigError("config key '" + std::string(key) + "' expects a string");
}

std::optional<double> as_optional(std::string_view key, const json& v) {
  if (v.is_null()) return std::nullopt;
  return as_double(key, v);
}

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

template <typename Params>
json params_to_json(const Params& p) {
  json out = json::object();
  p.for_each_tensor([&](const auto& name, const Matrix& m) { out[std::string(name)] = matrix_to_json(m); });
  return out;
}

template <typename Params>
void params_from_json(Params& p, const json& j) {
  p.for_each_tensor([&](const auto& name, Matrix& m) {
    const std::string key(name);
    if (!j.contains(key)) throw ConfigError("checkpoint: missing tensor '" + key + "'");
    m = matrix_from_json(j.at(key));
  });
}

json adam_to_json(const AdamState& s) {
  json first = json::array(), second = json::array();
  for (const Matrix& m : s.first) first.push_back(matrix_to_json(m));
  for (const Matrix& m : s.second) second.push_back(matrix_to_json(m));
  return {{"step", s.step}, {"first", first}, {"second", second}};
}

AdamState adam_from_json(const json& j) {
  AdamState s;
  s.step = j.at("step").get<std::uint64_t>();
  for (const json& m : j.at("first")) s.first.push_back(matrix_from_json(m));
  for (const json& m : j.at("second")) s.second.push_back(matrix_from_json(m));
  return s;
}

// Shapes are fixed by the config; tensors are then overwritten from the file.
TaskNetParams task_shape(const json& j, const TrainConfig& cfg) {
  const Matrix output = matrix_from_json(j.at("task.output"));
  const Matrix w0 = matrix_from_json(j.at("task.layer0.weight"));
  Rng rng(0);
  return init_tasknet(static_cast<std::size_t>(w0.cols()), static_cast<std::size_t>(output.rows()), cfg.tasknet, rng);
}

}  // namespace

bool is_config_key(std::string_view key) {
  return std::find(kKeys.begin(), kKeys.end(), key) != kKeys.end();
}

json config_to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"lr-task", c.lr_task},
          {"lr-mask", c.lr_mask},
          {"weight-decay-task", c.weight_decay_task},
          {"lambda", c.lambda},
          {"n-descent", c.n_descent},
          {"n-ascent", c.n_ascent},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"eps", c.eps},
          {"seed", c.seed},
          {"rho", opt(c.rho)},
          {"dual-step", c.dual_step},
          {"use-mask", c.use_mask},
          {"inference-mask", std::string(to_string(c.inference_mask))},
          {"mask-proj-dim", c.mask_proj_dim},
          {"mask-hidden", c.mask_hidden},
          {"knn-k", c.enrich.k},
          {"clusters", c.enrich.clusters},
          {"gamma-knn", c.enrich.gamma_knn},
          {"gamma-spec", c.enrich.gamma_spec},
          {"bandwidth", opt(c.enrich.bandwidth)},
          {"self-loops", c.enrich.add_self_loops},
          {"dense-node-cap", c.enrich.dense_node_cap},
          {"kmeans-max-iter", c.enrich.kmeans_max_iter},
          {"layers", c.tasknet.layers},
          {"heads", c.tasknet.heads},
          {"head-dim", c.tasknet.head_dim},
          {"activation", std::string(to_string(c.tasknet.activation))},
          {"attn-dropout", c.tasknet.attn_dropout},
          {"feat-dropout", c.tasknet.feat_dropout},
          {"leaky-slope", c.tasknet.leaky_slope}};
}

void apply_config_entry(TrainConfig& c, std::string_view key, const json& v) {
  try {
    if (key == "epochs") c.epochs = as_size(key, v);
    else if (key == "lr-task") c.lr_task = as_double(key, v);
    else if (key == "lr-mask") c.lr_mask = as_double(key, v);
    else if (key == "weight-decay-task") c.weight_decay_task = as_double(key, v);
    else if (key == "lambda") c.lambda = as_double(key, v);
    else if (key == "n-descent") c.n_descent = as_size(key, v);
    else if (key == "n-ascent") c.n_ascent = as_size(key, v);
    else if (key == "beta1") c.beta1 = as_double(key, v);
    else if (key == "beta2") c.beta2 = as_double(key, v);
    else if (key == "eps") c.eps = as_double(key, v);
    else if (key == "seed") c.seed = as_size(key, v);
    else if (key == "rho") c.rho = as_optional(key, v);
    else if (key == "dual-step") c.dual_step = as_double(key, v);
    else if (key == "use-mask") c.use_mask = as_bool(key, v);
    else if (key == "inference-mask") c.inference_mask = inference_mask_from_string(as_string(key, v));
    else if (key == "mask-proj-dim") c.mask_proj_dim = as_size(key, v);
    else if (key == "mask-hidden") c.mask_hidden = as_size(key, v);
    else if (key == "knn-k") c.enrich.k = as_size(key, v);
    else if (key == "clusters") c.enrich.clusters = as_size(key, v);
    else if (key == "gamma-knn") c.enrich.gamma_knn = as_double(key, v);
    else if (key == "gamma-spec") c.enrich.gamma_spec = as_double(key, v);
    else if (key == "bandwidth") c.enrich.bandwidth = as_optional(key, v);
    else if (key == "self-loops") c.enrich.add_self_loops = as_bool(key, v);
    else if (key == "dense-node-cap") c.enrich.dense_node_cap = as_size(key, v);
    else if (key == "kmeans-max-iter") c.enrich.kmeans_max_iter = as_size(key, v);
    else if (key == "layers") c.tasknet.layers = as_size(key, v);
    else if (key == "heads") c.tasknet.heads = as_size(key, v);
    else if (key == "head-dim") c.tasknet.head_dim = as_size(key, v);
    else if (key == "activation") c.tasknet.activation = activation_from_string(as_string(key, v));
    else if (key == "attn-dropout") c.tasknet.attn_dropout = as_double(key, v);
    else if (key == "feat-dropout") c.tasknet.feat_dropout = as_double(key, v);
    else if (key == "leaky-slope") c.tasknet.leaky_slope = as_double(key, v);
    else throw ConfigError("unknown config key '" + std::string(key) + "'");
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

TrainConfig config_from_json(const json& obj) {
  if (!obj.is_object()) throw ConfigError("config must be a JSON object");
  TrainConfig cfg;
  for (const auto& [key, value] : obj.items()) apply_config_entry(cfg, key, value);
  return cfg;
}

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", rows}};
}

Matrix matrix_from_json(const json& j) {
  const auto rows = j.at("rows").get<Index>();
  const auto cols = j.at("cols").get<Index>();
  const json& data = j.at("data");
  if (static_cast<Index>(data.size()) != rows) throw ConfigError("checkpoint: row count mismatch");
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    const json& row = data.at(static_cast<std::size_t>(i));
    if (static_cast<Index>(row.size()) != cols) throw ConfigError("checkpoint: column count mismatch");
    for (Index k = 0; k < cols; ++k) m(i, k) = row.at(static_cast<std::size_t>(k)).get<double>();
  }
  return m;
}

std::string checkpoint_to_text(const TrainedModel& model, const TrainConfig& cfg) {
  json j = {{"format", "edgemask-checkpoint"},
            {"version", 1},
            {"config", config_to_json(cfg)},
            {"lambda", model.lambda},
            {"task", params_to_json(model.task)},
            {"mask", params_to_json(model.mask)},
            {"task_opt", adam_to_json(model.task_opt)},
            {"mask_opt", adam_to_json(model.mask_opt)},
            {"rng_state", model.rng_state}};
  return j.dump(1) + "\n";
}

Checkpoint checkpoint_from_text(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("checkpoint: ") + e.what());
  }
  if (j.value("format", "") != "edgemask-checkpoint" || j.value("version", 0) != 1) {
    throw ConfigError("checkpoint: unsupported format");
  }
  try {
    Checkpoint ck;
    ck.config = config_from_json(j.at("config"));
    const json& task = j.at("task");
    ck.model.task = task_shape(task, ck.config);
    params_from_json(ck.model.task, task);
    params_from_json(ck.model.mask, j.at("mask"));
    ck.model.lambda = j.at("lambda").get<double>();
    ck.model.task_opt = adam_from_json(j.at("task_opt"));
    ck.model.mask_opt = adam_from_json(j.at("mask_opt"));
    ck.model.rng_state = j.at("rng_state").get<std::string>();
    return ck;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& file, const TrainedModel& model, const TrainConfig& cfg) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << checkpoint_to_text(model, cfg);
}

Checkpoint load_checkpoint(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_text(ss.str());
}

}  // namespace edgemask
