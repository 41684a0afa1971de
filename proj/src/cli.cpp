#include "edgemask/cli.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "edgemask/checkpoint.hpp"
#include "edgemask/diffkernel.hpp"
#include "edgemask/graph_io.hpp"
#include "edgemask/metrics.hpp"
#include "edgemask/synth.hpp"
#include "edgemask/theory.hpp"
#include "edgemask/training.hpp"

namespace edgemask::cli {

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Options that are not part of TrainConfig, with their defaults.
json cli_defaults() {
  return {{"sources", json::array()},
          {"target", nullptr},
          {"checkpoint", nullptr},
          {"out-dir", "edgemask-out"},
          {"num-classes", nullptr},
          {"lambda-grid", {0.0, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1}},
          {"seeds", {0, 1, 2, 3, 4}},
          {"threshold", 0.5},
          {"fd-max-coords", 50},
          {"synth-nodes", 120},
          {"synth-classes", 3},
          {"synth-dim", 8},
          {"synth-separation", 3.0},
          {"synth-noise", 1.0},
          {"synth-backbone-degree", 3.0},
          {"synth-homophily", 0.9},
          {"synth-spurious-degree", 4.0},
          {"synth-strengths", {0.3, 0.7, 1.0}},
          {"synth-seed", 0}};
}

json parse_flag_value(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error&) {
    return json(text);
  }
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<std::string> string_list(const json& cfg, const std::string& key) {
  const json& v = cfg.at(key);
  if (v.is_null()) return {};
  if (v.is_string()) return split_commas(v.get<std::string>());
  if (v.is_array()) {
    std::vector<std::string> out;
    for (const json& e : v) {
      if (!e.is_string()) throw ConfigError("'" + key + "' expects strings");
      out.push_back(e.get<std::string>());
    }
    return out;
  }
  throw ConfigError("'" + key + "' expects a list of paths");
}

std::vector<double> number_list(const json& cfg, const std::string& key) {
  const json& v = cfg.at(key);
  std::vector<double> out;
  if (v.is_number()) return {v.get<double>()};
  if (v.is_string()) {
    for (const std::string& s : split_commas(v.get<std::string>())) {
      try {
        out.push_back(std::stod(s));
      } catch (const std::exception&) {
        throw ConfigError("'" + key + "': cannot parse '" + s + "' as a number");
      }
    }
    return out;
  }
  if (v.is_array()) {
    for (const json& e : v) {
      if (!e.is_number()) throw ConfigError("'" + key + "' expects numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }
  throw ConfigError("'" + key + "' expects a list of numbers");
}

double number(const json& cfg, const std::string& key) {
  const json& v = cfg.at(key);
  if (!v.is_number()) throw ConfigError("'" + key + "' expects a number");
  return v.get<double>();
}

std::size_t count(const json& cfg, const std::string& key) {
  const json& v = cfg.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) throw ConfigError("'" + key + "' expects a non-negative integer");
  return static_cast<std::size_t>(v.get<long long>());
}

std::optional<std::string> optional_path(const json& cfg, const std::string& key) {
  const json& v = cfg.at(key);
  if (v.is_null()) return std::nullopt;
  if (!v.is_string()) throw ConfigError("'" + key + "' expects a path");
  return v.get<std::string>();
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text(const fs::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + file.string());
  out << text;
}

/// A domain is either a JSON graph file or a directory holding features.csv, edges.csv and labels.csv.
Graph load_domain(const std::string& path, std::optional<std::size_t> num_classes) {
  const fs::path p(path);
  if (fs::is_directory(p)) {
    return load_dataset(p / "features.csv", p / "edges.csv", p / "labels.csv", p.filename().string(), num_classes);
  }
  if (!fs::exists(p)) throw ConfigError("no such file or directory: " + path);
  return load_graph(p);
}

json metrics_json(const Metrics& m) {
  return {{"micro_f1", m.micro_f1}, {"macro_f1", m.macro_f1}, {"accuracy", m.accuracy}, {"evaluated", m.evaluated}};
}

json mask_stats_json(const MaskStats& s) {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  return {{"threshold", s.threshold},
          {"pruned_original_percent", opt(s.pruned_original)},
          {"pruned_augmented_percent", opt(s.pruned_augmented)},
          {"retained_augmented_percent", opt(s.retained_augmented)},
          {"original_edges", s.original_edges},
          {"augmented_edges", s.augmented_edges}};
}

json aggregate_json(const std::vector<DomainMetrics>& per_domain) {
  const AggregateMetrics a = aggregate(per_domain);
  return {{"worst_micro_f1", a.worst_micro_f1},
          {"mean_micro_f1", a.mean_micro_f1},
          {"worst_macro_f1", a.worst_macro_f1},
          {"mean_macro_f1", a.mean_macro_f1}};
}

struct Context {
  std::string subcommand;
  json cfg;  // resolved flat config: TrainConfig keys plus CLI keys
  TrainConfig train;
  fs::path out_dir;
  std::string hash;
  std::vector<std::string> artifacts;
  std::chrono::steady_clock::time_point start;
  std::ostream* out = nullptr;
  std::map<std::string, bool> flags;

  std::optional<std::size_t> num_classes() const {
    if (cfg.at("num-classes").is_null()) return std::nullopt;
    return count(cfg, "num-classes");
  }

  json manifest(bool with_timings) const {
    json m = {{"tool", "edgemask"},
              {"version", std::string(kVersion)},
              {"subcommand", subcommand},
              {"config", cfg},
              {"seed", train.seed},
              {"hash", hash},
              {"artifacts", artifacts}};
    if (with_timings) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      m["timings"] = {{"total_seconds", secs}};
    } else {
      m["timings"] = nullptr;
    }
    return m;
  }

  void write_manifest(bool with_timings) const {
    write_text(out_dir / "manifest.json", manifest(with_timings).dump(2) + "\n");
  }

  /// Results carry the schema version and the manifest hash.
  void write_result(const std::string& name, json body) {
    body["schema_version"] = kMetricsSchemaVersion;
    body["manifest_hash"] = hash;
    body["subcommand"] = subcommand;
    write_text(out_dir / name, body.dump(2) + "\n");
    artifacts.push_back(name);
  }

  void write_artifact(const std::string& name, const std::string& text) {
    write_text(out_dir / name, text);
    artifacts.push_back(name);
  }
};

std::vector<Graph> load_sources(const Context& ctx) {
  std::vector<Graph> out;
  for (const std::string& p : string_list(ctx.cfg, "sources")) out.push_back(load_domain(p, ctx.num_classes()));
  return out;
}

std::string history_csv(const std::vector<EpochRecord>& history) {
  std::string s = "epoch,task_loss,mask_loss,mean_mask,lambda,train_micro_f1\n";
  for (const EpochRecord& r : history) {
    s += std::to_string(r.epoch) + "," + fmt(r.task_loss) + "," + fmt(r.mask_loss) + "," + fmt(r.mean_mask) + "," +
         fmt(r.lambda) + "," + fmt(r.train_micro_f1) + "\n";
  }
  return s;
}

json evaluate_both(Context& ctx, const TrainedModel& model, const TrainConfig& cfg, const Graph& g,
                   const std::string& mask_name) {
  const double threshold = number(ctx.cfg, "threshold");
  json j = {{"domain", g.domain_id()}, {"inference_mask", std::string(to_string(cfg.inference_mask))}};
  for (InferenceMask mode : {InferenceMask::AllOnes, InferenceMask::MaskNet}) {
    const Inference inf = infer(model, g, cfg, mode);
    j[std::string(to_string(mode))] = metrics_json(score(predict(inf.logits), g.labels(), g.num_classes()));
    if (mode == InferenceMask::MaskNet) {
      j["mask_stats"] = mask_stats_json(mask_statistics(inf.graph, inf.mask, threshold));
      j["mean_mask"] = inf.mask.scored_mean();
      write_mask_csv(inf.graph, inf.mask, ctx.out_dir / mask_name);
      ctx.artifacts.push_back(mask_name);
    }
  }
  return j;
}

Metrics selected(const json& both, const TrainConfig& cfg) {
  const json& m = both.at(std::string(to_string(cfg.inference_mask)));
  Metrics out;
  out.micro_f1 = m.at("micro_f1").get<double>();
  out.macro_f1 = m.at("macro_f1").get<double>();
  out.accuracy = m.at("accuracy").get<double>();
  out.evaluated = m.at("evaluated").get<std::size_t>();
  return out;
}

// ---------------------------------------------------------------------------

int cmd_synth(Context& ctx) {
  SynthConfig sc;
  sc.nodes_per_domain = count(ctx.cfg, "synth-nodes");
  sc.classes = count(ctx.cfg, "synth-classes");
  sc.feature_dim = count(ctx.cfg, "synth-dim");
  sc.separation = number(ctx.cfg, "synth-separation");
  sc.feature_noise = number(ctx.cfg, "synth-noise");
  sc.backbone_degree = number(ctx.cfg, "synth-backbone-degree");
  sc.homophily = number(ctx.cfg, "synth-homophily");
  sc.spurious_degree = number(ctx.cfg, "synth-spurious-degree");
  sc.spurious_strength = number_list(ctx.cfg, "synth-strengths");
  sc.seed = count(ctx.cfg, "synth-seed");
  try {
    sc.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const DomainDataset ds = generate(sc);
  json domains = json::array();
  for (const Graph& g : ds.sources) {
    const fs::path dir = ctx.out_dir / g.domain_id();
    fs::create_directories(dir);
    write_dataset(g, dir / "features.csv", dir / "edges.csv", dir / "labels.csv");
    ctx.artifacts.push_back(g.domain_id());
    domains.push_back({{"domain", g.domain_id()}, {"nodes", g.num_nodes()}, {"directed_edges", g.num_edges()}});
  }
  json report = {{"domains", domains}};
  if (ds.sources.size() >= 2) {
    const ShiftReport r = verify_shift(ds);
    report["homophily"] = r.homophily;
    report["degree_distance"] = r.degree_distance;
    report["feature_distance"] = r.feature_distance;
  }
  ctx.write_result("synth_report.json", report);
  *ctx.out << "wrote " << ds.sources.size() << " domains to " << ctx.out_dir.string() << "\n";
  return kOk;
}

int cmd_enrich(Context& ctx) {
  const std::vector<Graph> sources = load_sources(ctx);
  if (sources.empty()) throw ConfigError("enrich: no --sources given");
  json per = json::array();
  for (const Graph& g : sources) {
    Rng rng = make_stream(ctx.train.seed, 2);
    const EnrichedGraph e = enrich(g, ctx.train.enrich, rng);
    std::string csv = "src,dst,origin\n";
    for (const Edge& edge : e.edges) {
      csv += std::to_string(edge.src) + "," + std::to_string(edge.dst) + "," + std::string(to_string(edge.origin)) + "\n";
    }
    ctx.write_artifact("enriched_" + g.domain_id() + ".csv", csv);
    const EdgeOriginStats st = edge_stats(e);
    per.push_back({{"domain", g.domain_id()},
                   {"original", st.original},
                   {"knn", st.knn},
                   {"spectral", st.spectral},
                   {"self_loop", st.self_loop},
                   {"base_edges", st.base_edges},
                   {"enriched_edges", st.enriched_edges},
                   {"increase_percent", st.increase_percent ? json(*st.increase_percent) : json(nullptr)},
                   {"avg_degree_delta", st.avg_degree_delta}});
    *ctx.out << g.domain_id() << ": " << st.base_edges << " -> " << st.enriched_edges << " edges\n";
  }
  ctx.write_result("enrich_stats.json", {{"domains", per}});
  return kOk;
}

int cmd_train(Context& ctx) {
  const std::vector<Graph> sources = load_sources(ctx);
  if (sources.empty()) throw ConfigError("train: no --sources given");
  const TrainResult r = train(sources, ctx.train);
  // The target is opened only once training is over.
  audit_event("phase:eval-begin");

  save_checkpoint(ctx.out_dir / "checkpoint.json", r.model, ctx.train);
  ctx.artifacts.push_back("checkpoint.json");
  ctx.write_artifact("history.csv", history_csv(r.history));

  json body = {{"counters", {{"descent", r.counters.descent}, {"ascent", r.counters.ascent}, {"blocks", r.counters.blocks}}},
               {"final_mean_mask", r.final_mean_mask},
               {"final_lambda", r.model.lambda}};
  json src = json::array();
  for (const Graph& g : sources) src.push_back(evaluate_both(ctx, r.model, ctx.train, g, "mask_" + g.domain_id() + ".csv"));
  body["sources"] = src;
  if (const auto target = optional_path(ctx.cfg, "target")) {
    const Graph t = load_domain(*target, ctx.num_classes());
    const json tj = evaluate_both(ctx, r.model, ctx.train, t, "mask_target_" + t.domain_id() + ".csv");
    body["target"] = tj;
    const Metrics m = selected(tj, ctx.train);
    *ctx.out << "target " << t.domain_id() << ": micro-F1 " << m.micro_f1 << " macro-F1 " << m.macro_f1 << "\n";
  }
  ctx.write_result("metrics.json", body);
  *ctx.out << "trained " << ctx.train.epochs << " epochs on " << sources.size() << " domains; final mean(s) "
           << r.final_mean_mask << "\n";
  return kOk;
}

int cmd_eval(Context& ctx) {
  const auto ck_path = optional_path(ctx.cfg, "checkpoint");
  if (!ck_path) throw ConfigError("eval: --checkpoint is required");
  Checkpoint ck = load_checkpoint(*ck_path);
  if (ctx.cfg.contains("inference-mask")) apply_config_entry(ck.config, "inference-mask", ctx.cfg.at("inference-mask"));

  std::vector<std::string> paths = string_list(ctx.cfg, "sources");
  if (const auto target = optional_path(ctx.cfg, "target")) paths.push_back(*target);
  if (paths.empty()) throw ConfigError("eval: give --target and/or --sources");

  json domains = json::array();
  std::vector<DomainMetrics> per;
  for (const std::string& p : paths) {
    const Graph g = load_domain(p, ctx.num_classes());
    const json j = evaluate_both(ctx, ck.model, ck.config, g, "mask_" + g.domain_id() + ".csv");
    per.push_back({g.domain_id(), selected(j, ck.config)});
    domains.push_back(j);
    *ctx.out << g.domain_id() << ": micro-F1 " << per.back().metrics.micro_f1 << " macro-F1 "
             << per.back().metrics.macro_f1 << "\n";
  }
  ctx.write_result("metrics.json", {{"domains", domains}, {"aggregate", aggregate_json(per)}});
  return kOk;
}

int cmd_ablate_lambda(Context& ctx) {
  DomainDataset ds;
  ds.sources = load_sources(ctx);
  if (ds.sources.empty()) throw ConfigError("ablate-lambda: no --sources given");
  const std::vector<double> grid = number_list(ctx.cfg, "lambda-grid");
  if (grid.empty()) throw ConfigError("ablate-lambda: empty lambda grid");
  // Train on sources first; the target is loaded afterwards for every row.
  std::vector<LambdaRow> rows = ablate_lambda(ds, ctx.train, grid);
  audit_event("phase:eval-begin");
  std::optional<Graph> target;
  if (const auto t = optional_path(ctx.cfg, "target")) target = load_domain(*t, ctx.num_classes());

  std::string csv = "lambda,final_mean_mask,micro_f1,macro_f1\n";
  json table = json::array();
  for (LambdaRow& row : rows) {
    TrainConfig c = ctx.train;
    c.lambda = row.lambda;
    json j = {{"lambda", row.lambda}, {"final_mean_mask", row.final_mean_mask}};
    std::string micro = "", macro = "";
    if (target) {
      row.target = evaluate(row.result.model, *target, c);
      j["target"] = metrics_json(*row.target);
      micro = fmt(row.target->micro_f1);
      macro = fmt(row.target->macro_f1);
    }
    csv += fmt(row.lambda) + "," + fmt(row.final_mean_mask) + "," + micro + "," + macro + "\n";
    table.push_back(j);
    *ctx.out << "lambda " << row.lambda << ": mean(s) " << row.final_mean_mask << "\n";
  }
  ctx.write_artifact("ablation_lambda.csv", csv);
  ctx.write_result("metrics.json", {{"rows", table}});
  return kOk;
}

int cmd_ablate_2x2(Context& ctx) {
  std::vector<Graph> domains = load_sources(ctx);
  if (const auto t = optional_path(ctx.cfg, "target")) domains.push_back(load_domain(*t, ctx.num_classes()));
  if (domains.size() < 2) throw ConfigError("ablate-2x2: needs at least two domains for leave-one-out");
  std::vector<std::uint64_t> seeds;
  for (double s : number_list(ctx.cfg, "seeds")) {
    if (s < 0.0) throw ConfigError("seeds must be non-negative");
    seeds.push_back(static_cast<std::uint64_t>(s));
  }
  const std::vector<AblationRow> rows = ablate_2x2(domains, ctx.train, seeds);

  std::string csv = "config,augmented,masked,mean_micro_f1,mean_macro_f1,worst_micro_f1,runs\n";
  json table = json::array();
  for (const AblationRow& row : rows) {
    json runs = json::array();
    for (const HeldOutResult& r : row.runs) {
      runs.push_back({{"held_out", r.domain}, {"seed", r.seed}, {"metrics", metrics_json(r.metrics)},
                      {"final_mean_mask", r.final_mean_mask}});
    }
    table.push_back({{"config", row.label()},
                     {"augmented", row.augmented},
                     {"masked", row.masked},
                     {"mean_micro_f1", row.mean_micro_f1},
                     {"mean_macro_f1", row.mean_macro_f1},
                     {"worst_micro_f1", row.worst_micro_f1},
                     {"runs", runs}});
    csv += row.label() + "," + (row.augmented ? "1" : "0") + "," + (row.masked ? "1" : "0") + "," +
           fmt(row.mean_micro_f1) + "," + fmt(row.mean_macro_f1) + "," + fmt(row.worst_micro_f1) + "," +
           std::to_string(row.runs.size()) + "\n";
    *ctx.out << row.label() << ": mean micro-F1 " << row.mean_micro_f1 << "\n";
  }
  ctx.write_artifact("ablation_2x2.csv", csv);
  ctx.write_result("metrics.json", {{"rows", table}});
  return kOk;
}

json fd_json(const FdReport& r) {
  json tensors = json::array();
  for (const FdTensorReport& t : r.tensors) {
    tensors.push_back({{"name", t.name}, {"checked", t.checked}, {"max_rel_error", t.max_rel_error},
                       {"max_abs_error", t.max_abs_error}});
  }
  return {{"passed", r.passed}, {"max_rel_error", r.max_rel_error}, {"tensors", tensors}};
}

int cmd_gradcheck(Context& ctx) {
  const TrainConfig& c = ctx.train;
  const EnrichedGraph g = tiny_enriched_graph(c.seed, 8, 16, 5, 3);
  const EdgeIndex edges = EdgeIndex::from(g);
  Rng rng = make_stream(c.seed, 9);
  const TaskNetParams task = init_tasknet(g.base.feature_dim(), g.base.num_classes(), c.tasknet, rng);
  const MaskNetParams mask = init_masknet(g.base.feature_dim(), c.mask_proj_dim, c.mask_hidden, rng);
  const GraphBatch batch{g.base.features(), edges, g.base.labels()};
  FdOptions opt;
  opt.max_coords_per_tensor = count(ctx.cfg, "fd-max-coords");
  opt.sample_seed = c.seed;

  const EdgeMask s = mask_forward(mask, g.base.features(), edges);
  const FdReport tr = check_tasknet_gradients(task, batch, s, c.tasknet, opt);
  const FdReport mr = check_masknet_gradients(task, mask, batch, c.lambda, c.tasknet, opt);
  for (const FdReport* r : {&tr, &mr}) {
    for (const FdTensorReport& t : r->tensors) {
      *ctx.out << (t.max_rel_error <= opt.rel_tol ? "PASS " : "FAIL ") << t.name << " max rel error " << t.max_rel_error
               << " (" << t.checked << " coords)\n";
    }
  }
  ctx.write_result("gradcheck.json", {{"tasknet", fd_json(tr)}, {"masknet", fd_json(mr)}, {"step", opt.step},
                                      {"rel_tol", opt.rel_tol}});
  return tr.passed && mr.passed ? kOk : kCheckFailed;
}

struct OracleOutcome {
  std::string name;
  bool passed = true;
  std::string detail;
};

OracleOutcome oracle_surrogate(std::uint64_t seed) {
  Rng rng = make_stream(seed, 11);
  std::uniform_real_distribution<double> u(-1.0, 1.0), pos(0.0, 0.5), budget(0.1, 1.0);
  std::uniform_int_distribution<std::size_t> dim(1, 5);
  std::size_t failures = 0;
  double worst_gap = 0.0;
  const std::vector<double> lambda_grid = [] {
    std::vector<double> g;
    for (int i = 0; i <= 200; ++i) g.push_back(0.05 * i);
    return g;
  }();
  for (int inst = 0; inst < 100; ++inst) {
    SurrogateProblem p;
    p.c = Vector(static_cast<Index>(dim(rng)));
    for (Index e = 0; e < p.c.size(); ++e) p.c(e) = u(rng);
    p.tau = pos(rng);
    p.base_loss = pos(rng);
    p.rho = budget(rng);
    const SurrogateSolution sol = surrogate_optimal_mask(p);
    double grid_max = -std::numeric_limits<double>::infinity();
    for_each_grid_point(p.m(), 0.05, [&](const Vector& s) { grid_max = std::max(grid_max, surrogate_objective(p, s)); });
    if (sol.objective < grid_max) ++failures;
    const SurrogateDuality d = surrogate_duality(p, lambda_grid);
    worst_gap = std::max(worst_gap, std::abs(d.gap));
    if (std::abs(d.gap) > 1e-12 || d.dual_grid_min < d.primal - 1e-12) ++failures;
  }
  std::ostringstream ss;
  ss << "100 instances, " << failures << " failures, max duality gap " << worst_gap;
  return {"surrogate", failures == 0, ss.str()};
}

OracleOutcome oracle_dual_bound(const TrainConfig& c) {
  TaskNetConfig tc;
  tc.layers = 2;
  tc.heads = 2;
  tc.head_dim = 3;
  const std::vector<double> lambdas{0.0, 0.5, 1.0, 5.0};
  std::size_t failures = 0;
  for (std::uint64_t i = 0; i < 5; ++i) {
    const EnrichedGraph g = tiny_enriched_graph(c.seed * 1000 + i, 4, 3, 3, 2);
    const EdgeIndex edges = EdgeIndex::from(g);
    Rng rng = make_stream(c.seed, 100 + i);
    const TaskNetParams task = init_tasknet(3, 2, tc, rng);
    const DualBoundReport r =
        dual_upper_bound(tasknet_mask_loss(task, g.base.features(), edges, g.base.labels(), tc), 3, lambdas, 0.5);
    failures += !r.holds;
  }
  return {"dual-bound", failures == 0, "5 instances x 4 lambdas, " + std::to_string(failures) + " violations"};
}

OracleOutcome oracle_kkt(std::uint64_t seed) {
  Rng rng = make_stream(seed, 12);
  std::uniform_real_distribution<double> u(-1.0, 1.0), pos(0.0, 0.5);
  std::size_t failures = 0;
  for (int inst = 0; inst < 20; ++inst) {
    SurrogateProblem p;
    p.c = Vector(5);
    for (Index e = 0; e < 5; ++e) p.c(e) = u(rng);
    p.tau = pos(rng);
    p.c(0) = p.tau + 0.25;  // keeps the budget positive
    const SurrogateCertificateInput in = surrogate_certificate(p);
    p.rho = in.rho;
    if (!kkt_check(p.c, in.mask, in.lambda, in.rho, 1e-9).passed) ++failures;
  }
  // Negative controls must be rejected.
  const Vector g = (Vector(3) << 0.1, 0.4, -0.2).finished();
  const bool interior_rejected = !kkt_check(g, Vector::Constant(3, 0.5), 0.3, 0.5, 1e-9).passed;
  const bool slack_rejected = !kkt_check(g, (Vector(3) << 0.0, 1.0, 0.0).finished(), 0.9, 0.9, 1e-9).passed;
  const bool ok = failures == 0 && interior_rejected && slack_rejected;
  return {"kkt", ok,
          "20 constructions, " + std::to_string(failures) + " failures; corrupted certificates " +
              (interior_rejected && slack_rejected ? "rejected" : "ACCEPTED")};
}

OracleOutcome oracle_grad_identity(const TrainConfig& c) {
  TaskNetConfig tc;
  tc.heads = 2;
  tc.head_dim = 4;
  double worst = 0.0;
  for (std::uint64_t i = 0; i < 3; ++i) {
    const EnrichedGraph g = tiny_enriched_graph(c.seed * 1000 + i, 8, 16, 5, 3);
    const EdgeIndex edges = EdgeIndex::from(g);
    Rng rng = make_stream(c.seed, 200 + i);
    const TaskNetParams task = init_tasknet(5, 3, tc, rng);
    const MaskNetParams mask = init_masknet(5, 6, 4, rng);
    const GradientIdentity r =
        masknet_gradient_identity(task, mask, g.base.features(), edges, g.base.labels(), 0.1, tc);
    worst = std::max(worst, r.max_deviation);
  }
  std::ostringstream ss;
  ss << "3 instances, max deviation " << worst;
  return {"grad-identity", worst <= 1e-10, ss.str()};
}

int cmd_oracle(Context& ctx) {
  const bool any = ctx.flags["surrogate"] || ctx.flags["dual-bound"] || ctx.flags["kkt"] || ctx.flags["grad-identity"];
  std::vector<OracleOutcome> results;
  if (!any || ctx.flags["surrogate"]) results.push_back(oracle_surrogate(ctx.train.seed));
  if (!any || ctx.flags["dual-bound"]) results.push_back(oracle_dual_bound(ctx.train));
  if (!any || ctx.flags["kkt"]) results.push_back(oracle_kkt(ctx.train.seed));
  if (!any || ctx.flags["grad-identity"]) results.push_back(oracle_grad_identity(ctx.train));
  json table = json::array();
  bool ok = true;
  for (const OracleOutcome& r : results) {
    *ctx.out << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << "\n";
    table.push_back({{"check", r.name}, {"passed", r.passed}, {"detail", r.detail}});
    ok = ok && r.passed;
  }
  ctx.write_result("oracle.json", {{"checks", table}, {"passed", ok}});
  return ok ? kOk : kCheckFailed;
}

using Handler = int (*)(Context&);

struct Subcommand {
  const char* name;
  const char* help;
  Handler handler;
};

constexpr Subcommand kSubcommands[] = {
    {"synth", "generate a multi-domain synthetic graph family", cmd_synth},
    {"enrich", "add sampled kNN and spectral edges to each source graph", cmd_enrich},
    {"train", "adversarial training on the sources, then evaluation on --target", cmd_train},
    {"eval", "evaluate a checkpoint on --target and/or --sources", cmd_eval},
    {"ablate-lambda", "one training per value of --lambda-grid", cmd_ablate_lambda},
    {"ablate-2x2", "{original, union} x {no-mask, mask}, leave-one-out over all domains", cmd_ablate_2x2},
    {"gradcheck", "finite-difference check of both networks on a seeded 8-node graph", cmd_gradcheck},
    {"oracle", "surrogate, dual-bound, KKT and gradient-identity checks", cmd_oracle},
};

json read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path + ": " + e.what());
  }
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Edge-masked adversarial training for graph domain generalization", "edgemask"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  json defaults = config_to_json(TrainConfig{});
  const json extra = cli_defaults();
  for (const auto& [k, v] : extra.items()) defaults[k] = v;

  std::map<std::string, std::map<std::string, std::string>> values;
  std::map<std::string, std::map<std::string, CLI::Option*>> options;
  std::map<std::string, std::string> config_paths;
  std::map<std::string, std::map<std::string, bool>> flags;
  for (const Subcommand& sc : kSubcommands) {
    CLI::App* sub = app.add_subcommand(sc.name, sc.help);
    sub->add_option("--config", config_paths[sc.name], "flat JSON config file");
    for (const auto& [key, v] : defaults.items()) {
      options[sc.name][key] = sub->add_option("--" + key, values[sc.name][key], "default " + v.dump());
    }
    if (std::string_view(sc.name) == "oracle") {
      for (const char* f : {"surrogate", "dual-bound", "kkt", "grad-identity"}) {
        sub->add_flag(std::string("--") + f, flags[sc.name][f], std::string("run the ") + f + " check");
      }
    }
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigError;
  }

  const Subcommand* chosen = nullptr;
  for (const Subcommand& sc : kSubcommands) {
    if (app.got_subcommand(sc.name)) chosen = &sc;
  }

  Context ctx;
  ctx.subcommand = chosen->name;
  ctx.start = std::chrono::steady_clock::now();
  ctx.out = &out;
  ctx.flags = flags[chosen->name];

  // Precedence: defaults < config file < environment < flags.
  ctx.cfg = defaults;
  if (!config_paths[chosen->name].empty()) {
    const json file = read_config_file(config_paths[chosen->name]);
    if (!file.is_object()) throw ConfigError("config file must hold a JSON object");
    for (const auto& [k, v] : file.items()) {
      if (!defaults.contains(k)) throw ConfigError("unknown config key '" + k + "'");
      ctx.cfg[k] = v;
    }
  }
  if (const char* env = std::getenv("EDGEMASK_OUT_DIR"); env != nullptr && *env != '\0') ctx.cfg["out-dir"] = env;
  for (const auto& [key, opt] : options[chosen->name]) {
    if (opt->count() > 0) ctx.cfg[key] = parse_flag_value(values[chosen->name][key]);
  }

  for (const auto& [k, v] : ctx.cfg.items()) {
    if (is_config_key(k)) apply_config_entry(ctx.train, k, v);
  }
  try {
    ctx.train.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }

  if (!ctx.cfg.at("out-dir").is_string()) throw ConfigError("'out-dir' expects a path");
  ctx.out_dir = ctx.cfg.at("out-dir").get<std::string>();
  fs::create_directories(ctx.out_dir);
  json identity = {{"config", ctx.cfg}, {"seed", ctx.train.seed}, {"version", std::string(kVersion)},
                   {"subcommand", ctx.subcommand}};
  ctx.hash = fnv1a_hex(identity.dump());
  ctx.write_manifest(false);

  const int code = chosen->handler(ctx);
  ctx.write_manifest(true);
  return code;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    return dispatch(args, out, err);
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kNumericError;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const GraphError& e) {
    err << "input error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::invalid_argument& e) {
    err << "invalid argument: " << e.what() << "\n";
    return kConfigError;
  } catch (const fs::filesystem_error& e) {
    err << "filesystem error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kNumericError;
  }
}

int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, std::cout, std::cerr);
}

}  // namespace edgemask::cli
