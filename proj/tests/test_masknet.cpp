#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "edgemask/enrichment.hpp"
#include "edgemask/masknet.hpp"

using namespace edgemask;

namespace {

Matrix random_matrix(Index r, Index c, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

EnrichedGraph small_graph(std::uint64_t seed) {
  std::vector<Edge> edges{{0, 1}, {1, 0}, {1, 2}, {2, 3}, {3, 1}, {4, 0}, {0, 4}};
  return plain_enriched(Graph(random_matrix(5, 3, seed), edges, {0, 1, 0, 1, 0}, 2, "g"));
}

}  // namespace

TEST(MaskNet, ZeroWeightsGiveOneHalf) {
  Rng rng(0);
  const MaskNetParams p = init_masknet(3, 4, 5, rng).zeros_like();
  const EnrichedGraph g = small_graph(1);
  const EdgeMask s = mask_forward(p, g.base.features(), g);
  ASSERT_EQ(s.size(), g.num_edges());
  EXPECT_EQ(s.num_scored, 7u);
  for (std::size_t i = 0; i < s.num_scored; ++i) EXPECT_DOUBLE_EQ(s.values[static_cast<Index>(i)], 0.5);
  for (std::size_t i = s.num_scored; i < s.size(); ++i) EXPECT_DOUBLE_EQ(s.values[static_cast<Index>(i)], 1.0);
  EXPECT_DOUBLE_EQ(s.scored_mean(), 0.5);
}

TEST(MaskNet, HandComputedScalarNetwork) {
  MaskNetParams p;
  p.proj_weight = Matrix::Ones(1, 1);
  p.proj_bias = Matrix::Zero(1, 1);
  p.hidden_weight = Matrix::Ones(1, 2);
  p.hidden_bias = Matrix::Zero(1, 1);
  p.out_weight = Matrix::Ones(1, 1);
  p.out_bias = Matrix::Zero(1, 1);
  Matrix x(2, 1);
  x << 1.0, 2.0;
  const std::vector<Edge> edges{{0, 1}};
  const EdgeMask s = mask_forward(p, x, EdgeIndex::from(edges, 2, 1));
  EXPECT_NEAR(s.values[0], 1.0 / (1.0 + std::exp(-3.0)), 1e-15);  // relu(1) + relu(2) = 3

  x << -1.0, 2.0;  // the projection ReLU zeroes the source
  EXPECT_NEAR(mask_forward(p, x, EdgeIndex::from(edges, 2, 1)).values[0], 1.0 / (1.0 + std::exp(-2.0)), 1e-15);
}

TEST(MaskNet, ParameterCountAndShapes) {
  Rng rng(2);
  const MaskNetParams p = init_masknet(7, 4, 5, rng);
  EXPECT_EQ(p.parameter_count(), 4u * 7 + 4 + 5 * 8 + 5 + 5 + 1);
  EXPECT_EQ(p.input_dim(), 7u);
  EXPECT_TRUE(p.proj_bias.isZero());
  const double bound = 1.0 / std::sqrt(7.0);
  EXPECT_LE(p.proj_weight.cwiseAbs().maxCoeff(), bound);
  EXPECT_THROW(init_masknet(0, 4, 5, rng), std::invalid_argument);
}

TEST(MaskNet, DeterministicUnderSeed) {
  Rng a(5), b(5), c(6);
  EXPECT_TRUE(init_masknet(3, 4, 5, a) == init_masknet(3, 4, 5, b));
  Rng d(5);
  EXPECT_FALSE(init_masknet(3, 4, 5, d) == init_masknet(3, 4, 5, c));
}

TEST(MaskNet, ScoresAreDirectional) {
  Rng rng(3);
  const MaskNetParams p = init_masknet(3, 4, 5, rng);
  const Matrix x = random_matrix(2, 3, 4);
  const std::vector<Edge> edges{{0, 1}, {1, 0}};
  const EdgeMask s = mask_forward(p, x, EdgeIndex::from(edges, 2, 2));
  EXPECT_NE(s.values[0], s.values[1]);
  EXPECT_GT(s.values.minCoeff(), 0.0);
  EXPECT_LT(s.values.maxCoeff(), 1.0);
}

TEST(MaskNet, EquivariantUnderNodeRelabeling) {
  Rng rng(4);
  const MaskNetParams p = init_masknet(3, 4, 5, rng);
  const Matrix x = random_matrix(5, 3, 8);
  const std::vector<Edge> edges{{0, 1}, {1, 2}, {2, 4}, {4, 3}, {3, 0}};
  const std::vector<std::size_t> perm{3, 0, 4, 1, 2};  // old node i becomes perm[i]
  Matrix px(5, 3);
  std::vector<Edge> pedges;
  for (std::size_t i = 0; i < 5; ++i) px.row(static_cast<Index>(perm[i])) = x.row(static_cast<Index>(i));
  for (const Edge& e : edges) pedges.push_back({perm[e.src], perm[e.dst]});
  const EdgeMask a = mask_forward(p, x, EdgeIndex::from(edges, 5, 5));
  const EdgeMask b = mask_forward(p, px, EdgeIndex::from(pedges, 5, 5));
  EXPECT_EQ(a.values, b.values);
}

TEST(MaskNet, RejectsWrongFeatureWidth) {
  Rng rng(0);
  const MaskNetParams p = init_masknet(3, 2, 2, rng);
  const std::vector<Edge> edges{{0, 1}};
  EXPECT_THROW(mask_forward(p, Matrix::Zero(2, 4), EdgeIndex::from(edges, 2, 1)), std::invalid_argument);
  EXPECT_THROW(EdgeIndex::from(edges, 1, 1), std::out_of_range);
}

TEST(MaskNet, MaskColumnAppendsOnesForSelfLoops) {
  Rng rng(0);
  const MaskNetParams p = init_masknet(3, 2, 2, rng);
  const EnrichedGraph g = small_graph(3);
  ad::Tape tape;
  const MaskNetVars v = bind(tape, p, true);
  const ad::Var col = mask_column(v, tape.constant(g.base.features()), EdgeIndex::from(g));
  EXPECT_EQ(static_cast<std::size_t>(col.rows()), g.num_edges());
  EXPECT_TRUE(col.value().bottomRows(5).isOnes());
}

TEST(MaskNet, CsvDump) {
  const EnrichedGraph g = small_graph(1);
  const EdgeMask s = EdgeMask::ones(g.num_edges(), g.num_scored());
  const auto file = std::filesystem::temp_directory_path() / "edgemask_mask_dump.csv";
  write_mask_csv(g, s, file);
  std::ifstream in(file);
  std::string header, first;
  std::getline(in, header);
  std::getline(in, first);
  EXPECT_EQ(header, "src,dst,origin,s");
  EXPECT_EQ(first.substr(0, 13), "0,1,original,");
  std::size_t lines = 2;
  for (std::string l; std::getline(in, l);) ++lines;
  EXPECT_EQ(lines, g.num_edges() + 1);
}
