#include "edgemask/graph_io.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>
#include <utility>

#include <json.hpp>

namespace edgemask {
namespace {

AuditObserver& observer() {
  static AuditObserver obs;
  return obs;
}

std::ifstream open_input(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ParseError(file, 0, "cannot open file");
  audit_event("read:" + file.string());
  return in;
}

// Splits on commas and whitespace.
std::vector<std::string_view> tokenize(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  auto is_sep = [](char c) { return c == ',' || c == ' ' || c == '\t' || c == '\r'; };
  while (i < line.size()) {
    while (i < line.size() && is_sep(line[i])) ++i;
    std::size_t j = i;
    while (j < line.size() && !is_sep(line[j])) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

bool is_blank(std::string_view line) { return tokenize(line).empty(); }

template <typename T>
T parse_number(std::string_view token, const std::filesystem::path& file, std::size_t line) {
  T value{};
  const char* end = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(token.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw ParseError(file, line, "cannot parse '" + std::string(token) + "' as a number");
  }
  return value;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

ParseError::ParseError(const std::filesystem::path& file, std::size_t line, const std::string& what)
    : GraphError(file.string() + (line > 0 ? ":" + std::to_string(line) : std::string()) + ": " + what),
      file_(file),
      line_(line) {}

void set_audit_observer(AuditObserver obs) { observer() = std::move(obs); }

void audit_event(const std::string& event) {
  if (observer()) observer()(event);
}

Graph load_dataset(const std::filesystem::path& feature_file, const std::filesystem::path& edge_file,
                   const std::filesystem::path& label_file, std::string domain_id,
                   std::optional<std::size_t> num_classes) {
  std::vector<std::vector<double>> rows;
  {
    auto in = open_input(feature_file);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (is_blank(line)) continue;
      std::vector<double> row;
      for (auto tok : tokenize(line)) row.push_back(parse_number<double>(tok, feature_file, lineno));
      if (!rows.empty() && row.size() != rows.front().size()) {
        throw ParseError(feature_file, lineno,
                         "row has " + std::to_string(row.size()) + " columns, expected " +
                             std::to_string(rows.front().size()));
      }
      rows.push_back(std::move(row));
    }
  }
  const std::size_t n = rows.size();
  const std::size_t d = n > 0 ? rows.front().size() : 0;
  Matrix features(static_cast<Index>(n), static_cast<Index>(d));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) features(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
  }

  std::vector<int> labels;
  {
    auto in = open_input(label_file);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (is_blank(line)) continue;
      auto toks = tokenize(line);
      if (toks.size() != 1) throw ParseError(label_file, lineno, "expected a single label per line");
      const int y = parse_number<int>(toks[0], label_file, lineno);
      if (y < kUnlabeled) throw ParseError(label_file, lineno, "label " + std::to_string(y) + " is negative");
      if (num_classes && y != kUnlabeled && static_cast<std::size_t>(y) >= *num_classes) {
        throw ParseError(label_file, lineno, "label " + std::to_string(y) + " outside class range");
      }
      labels.push_back(y);
    }
    if (labels.size() != n) {
      throw ParseError(label_file, 0,
                       "has " + std::to_string(labels.size()) + " labels but the feature file has " +
                           std::to_string(n) + " rows");
    }
  }

  std::vector<Edge> edges;
  {
    auto in = open_input(edge_file);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (is_blank(line)) continue;
      auto toks = tokenize(line);
      if (toks.size() != 2) throw ParseError(edge_file, lineno, "expected 'src dst'");
      const auto u = parse_number<std::size_t>(toks[0], edge_file, lineno);
      const auto v = parse_number<std::size_t>(toks[1], edge_file, lineno);
      if (u >= n || v >= n) {
        throw ParseError(edge_file, lineno,
                         "node index out of range (" + std::to_string(u) + ", " + std::to_string(v) +
                             ") for " + std::to_string(n) + " nodes");
      }
      edges.push_back({u, v, EdgeOrigin::Original});
      edges.push_back({v, u, EdgeOrigin::Original});
    }
  }

  std::size_t classes = 0;
  if (num_classes) {
    classes = *num_classes;
  } else {
    for (int y : labels) classes = std::max(classes, static_cast<std::size_t>(y + 1));
  }
  return Graph(std::move(features), std::move(edges), std::move(labels), classes, std::move(domain_id));
}

void write_dataset(const Graph& g, const std::filesystem::path& feature_file, const std::filesystem::path& edge_file,
                   const std::filesystem::path& label_file) {
  {
    std::ofstream out(feature_file);
    if (!out) throw ParseError(feature_file, 0, "cannot open for writing");
    const Matrix& x = g.features();
    for (Index i = 0; i < x.rows(); ++i) {
      for (Index j = 0; j < x.cols(); ++j) out << (j ? "," : "") << format_double(x(i, j));
      out << '\n';
    }
  }
  {
    std::ofstream out(edge_file);
    if (!out) throw ParseError(edge_file, 0, "cannot open for writing");
    std::set<std::pair<std::size_t, std::size_t>> written;
    for (const Edge& e : g.edges()) {
      const auto key = std::minmax(e.src, e.dst);
      if (written.insert(key).second) out << e.src << ' ' << e.dst << '\n';
    }
  }
  {
    std::ofstream out(label_file);
    if (!out) throw ParseError(label_file, 0, "cannot open for writing");
    for (int y : g.labels()) out << y << '\n';
  }
}

std::string graph_to_json_text(const Graph& g) {
  nlohmann::json j;
  j["format"] = "edgemask-graph";
  j["version"] = 1;
  j["domain_id"] = g.domain_id();
  j["num_nodes"] = g.num_nodes();
  j["feature_dim"] = g.feature_dim();
  j["num_classes"] = g.num_classes();
  auto& feats = j["features"] = nlohmann::json::array();
  const Matrix& x = g.features();
  for (Index i = 0; i < x.rows(); ++i) {
    std::vector<double> row(x.row(i).begin(), x.row(i).end());
    feats.push_back(std::move(row));
  }
  j["labels"] = std::vector<int>(g.labels().begin(), g.labels().end());
  auto& edges = j["edges"] = nlohmann::json::array();
  for (const Edge& e : g.edges()) edges.push_back({e.src, e.dst, std::string(to_string(e.origin))});
  return j.dump();
}

Graph graph_from_json_text(std::string_view text, const std::filesystem::path& origin) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(origin, 0, e.what());
  }
  try {
    if (j.at("format").get<std::string>() != "edgemask-graph") throw ParseError(origin, 0, "not an edgemask-graph file");
    if (j.at("version").get<int>() != 1) throw ParseError(origin, 0, "unsupported graph file version");
    const auto n = j.at("num_nodes").get<std::size_t>();
    const auto d = j.at("feature_dim").get<std::size_t>();
    const auto& feats = j.at("features");
    if (feats.size() != n) throw ParseError(origin, 0, "features has " + std::to_string(feats.size()) + " rows");
    Matrix x(static_cast<Index>(n), static_cast<Index>(d));
    for (std::size_t i = 0; i < n; ++i) {
      const auto& row = feats[i];
      if (row.size() != d) throw ParseError(origin, 0, "feature row " + std::to_string(i) + " has wrong width");
      for (std::size_t k = 0; k < d; ++k) x(static_cast<Index>(i), static_cast<Index>(k)) = row[k].get<double>();
    }
    std::vector<Edge> edges;
    for (const auto& e : j.at("edges")) {
      edges.push_back({e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>(),
                       origin_from_string(e.at(2).get<std::string>())});
    }
    return Graph(std::move(x), std::move(edges), j.at("labels").get<std::vector<int>>(),
                 j.at("num_classes").get<std::size_t>(), j.at("domain_id").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(origin, 0, e.what());
  }
}

void save_graph(const Graph& g, const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw ParseError(file, 0, "cannot open for writing");
  out << graph_to_json_text(g) << '\n';
}

Graph load_graph(const std::filesystem::path& file) {
  auto in = open_input(file);
  std::stringstream buf;
  buf << in.rdbuf();
  return graph_from_json_text(buf.str(), file);
}

}  // namespace edgemask
