#include "cip/eval.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <sstream>
#include <vector>

using cip::MatrixXd;
using cip::VectorXd;
using Rel = std::vector<std::uint8_t>;

namespace {

std::vector<int> as_int(const Rel& r) { return {r.begin(), r.end()}; }

}  // namespace

TEST(Rank, TwoItemGalleryOrderedByDistance) {
  MatrixXd d(2, 3);
  // query, near item (small angle), far item
  d << 1, 1, 0.1,
       0, 0.05, 1;
  std::vector<int> labels{0, 0, 1};
  auto run = cip::rank(d, labels);
  ASSERT_EQ(run.rankings.size(), 3u);
  EXPECT_EQ(run.rankings[0].order, (std::vector<int>{1, 2}));
  EXPECT_LT(run.rankings[0].distances[0], run.rankings[0].distances[1]);
  EXPECT_EQ(run.rankings[0].relevant, (Rel{1, 0}));
}

TEST(Rank, TiesGoToLowerIndexAndQueryExcluded) {
  MatrixXd d(2, 4);
  d << 1, 1, 2, 3,
       0, 0, 0, 0;
  std::vector<int> labels{0, 1, 0, 1};
  auto run = cip::rank(d, labels);
  EXPECT_EQ(run.rankings[0].order, (std::vector<int>{1, 2, 3}));
  EXPECT_EQ(run.rankings[2].order, (std::vector<int>{0, 1, 3}));
  for (const auto& r : run.rankings)
    EXPECT_EQ(std::count(r.order.begin(), r.order.end(), r.query), 0);
}

TEST(Rank, SameClassGalleryAllRelevant) {
  MatrixXd d = MatrixXd::Random(3, 5);
  std::vector<int> labels(5, 2);
  auto run = cip::rank(d, labels);
  for (const auto& r : run.rankings) {
    EXPECT_EQ(r.total_relevant(), 4);
    EXPECT_DOUBLE_EQ(cip::average_precision(r.relevant), 1.0);
  }
}

TEST(Rank, ScaleInvariant) {
  MatrixXd d = MatrixXd::Random(4, 7);
  std::vector<int> labels{0, 1, 2, 0, 1, 2, 0};
  MatrixXd scaled = d;
  for (Eigen::Index j = 0; j < scaled.cols(); ++j) scaled.col(j) *= 0.1 + 3.0 * static_cast<double>(j);
  auto a = cip::rank(d, labels);
  auto b = cip::rank(scaled, labels);
  for (std::size_t i = 0; i < a.rankings.size(); ++i)
    EXPECT_EQ(a.rankings[i].order, b.rankings[i].order);
}

TEST(Rank, ZeroNormDescriptorExcludedWithWarning) {
  MatrixXd d(2, 3);
  d << 1, 0, 0.5,
       0, 0, 1;
  std::vector<int> labels{0, 0, 1};
  auto run = cip::rank(d, labels);
  EXPECT_EQ(run.excluded, (std::vector<int>{1}));
  EXPECT_EQ(run.warnings.size(), 1u);
  ASSERT_EQ(run.rankings.size(), 2u);
  EXPECT_EQ(run.rankings[0].order, (std::vector<int>{2}));
  EXPECT_THROW(cip::rank(d, std::vector<int>{0, 1}), std::invalid_argument);
}

TEST(AveragePrecision, Examples) {
  EXPECT_NEAR(cip::average_precision(Rel{1, 0, 1}), (1.0 + 2.0 / 3.0) / 2.0, 1e-15);
  EXPECT_DOUBLE_EQ(cip::average_precision(Rel{1, 1, 0, 0}), 1.0);
  EXPECT_THROW(cip::average_precision(Rel{0, 0}), std::domain_error);
}

TEST(PrAuc, Examples) {
  EXPECT_DOUBLE_EQ(cip::pr_auc(Rel{1}), 1.0);
  EXPECT_DOUBLE_EQ(cip::pr_auc(Rel{1, 1, 0}), 1.0);
  // points (0,1) (0,0) (1,0.5)
  EXPECT_DOUBLE_EQ(cip::pr_auc(Rel{0, 1}), 0.25);
  EXPECT_THROW(cip::pr_auc(Rel{0}), std::domain_error);
}

TEST(Ndcg, Examples) {
  EXPECT_DOUBLE_EQ(cip::ndcg(Rel{1, 1, 0}), 1.0);
  EXPECT_NEAR(cip::ndcg(Rel{1, 0, 1}), (1.0 + 0.5) / (1.0 + 1.0 / std::log2(3.0)), 1e-15);
  EXPECT_NEAR(cip::ndcg(Rel{1, 0, 1}), 0.91972, 1e-5);
  EXPECT_DOUBLE_EQ(cip::ndcg(Rel{0, 1, 1}, 1), 0.0);
  EXPECT_DOUBLE_EQ(cip::ndcg(Rel{0, 0}), 0.0);
}

TEST(F1, Examples) {
  EXPECT_DOUBLE_EQ(cip::f1_at(Rel{1, 1, 0, 0}, 2), 1.0);
  EXPECT_DOUBLE_EQ(cip::f1_at(Rel{1, 0, 1, 0}, 2), 0.5);
  EXPECT_DOUBLE_EQ(cip::f1_at(Rel{0, 0, 1}, 1), 0.0);
  EXPECT_DOUBLE_EQ(cip::f1_at(Rel{1, 0}, 10), cip::f1_at(Rel{1, 0}, 2));
  EXPECT_THROW(cip::f1_at(Rel{1}, 0), std::invalid_argument);
}

// Every binary relevance pattern up to length 8 against the textbook oracle.
TEST(MetricOracle, ExhaustiveUpToLengthEight) {
  int patterns = 0;
  for (int len = 1; len <= 8; ++len) {
    for (int bits = 0; bits < (1 << len); ++bits) {
      Rel r(static_cast<std::size_t>(len));
      for (int i = 0; i < len; ++i) r[static_cast<std::size_t>(i)] = (bits >> i) & 1;
      const auto ri = as_int(r);
      const int total = static_cast<int>(std::count(r.begin(), r.end(), 1));
      for (int c = 1; c <= len; ++c) {
        EXPECT_NEAR(cip::ndcg(r, c), oracle::ndcg(ri, static_cast<std::size_t>(c)), 1e-12);
        EXPECT_NEAR(cip::f1_at(r, c), oracle::f1(ri, static_cast<std::size_t>(c)), 1e-12);
      }
      if (total == 0) continue;
      EXPECT_NEAR(cip::average_precision(r), oracle::ap(ri), 1e-12);
      EXPECT_NEAR(cip::pr_auc(r), oracle::pr_auc(ri), 1e-12);
      EXPECT_NEAR(cip::ndcg(r), oracle::ndcg(ri, r.size()), 1e-12);
      ++patterns;
    }
  }
  EXPECT_EQ(patterns, 502);
}

TEST(Aggregate, MicroAndMacro) {
  std::vector<cip::QueryMetrics> q{{0, 1.0, 1.0, 1.0, 1.0}, {0, 1.0, 1.0, 1.0, 1.0},
                                   {1, 0.0, 0.0, 0.0, 0.0}};
  auto micro = cip::aggregate(q, cip::Aggregation::micro);
  auto macro = cip::aggregate(q, cip::Aggregation::macro);
  EXPECT_NEAR(micro.map, 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(macro.map, 0.5, 1e-15);
  EXPECT_EQ(micro.queries, 3);

  std::vector<cip::QueryMetrics> one{{4, 0.2, 0.3, 0.4, 0.5}, {4, 0.6, 0.7, 0.8, 0.9}};
  auto a = cip::aggregate(one, cip::Aggregation::micro);
  auto b = cip::aggregate(one, cip::Aggregation::macro);
  EXPECT_EQ(a.map, b.map);
  EXPECT_EQ(a.ndcg, b.ndcg);
  EXPECT_THROW(cip::aggregate(std::vector<cip::QueryMetrics>{}, cip::Aggregation::micro),
               std::invalid_argument);
}

TEST(Evaluate, PerfectEmbeddingScoresOne) {
  MatrixXd d(3, 6);
  d << 1, 2, 0, 0, 0, 0,
       0, 0, 1, 3, 0, 0,
       0, 0, 0, 0, 1, 1;
  std::vector<int> labels{0, 0, 1, 1, 2, 2};
  auto s = cip::evaluate(cip::rank(d, labels));
  EXPECT_DOUBLE_EQ(s.micro.map, 1.0);
  EXPECT_DOUBLE_EQ(s.macro.map, 1.0);
  EXPECT_DOUBLE_EQ(s.micro.pr_auc, 1.0);
  EXPECT_DOUBLE_EQ(s.micro.f1, 1.0);
  EXPECT_DOUBLE_EQ(s.micro.ndcg, 1.0);
  EXPECT_EQ(s.skipped_queries, 0);
}

TEST(Evaluate, SingletonClassIsSkippedWithWarning) {
  MatrixXd d(2, 3);
  d << 1, 1, 0,
       0, 0.1, 1;
  std::vector<int> labels{0, 0, 1};
  auto s = cip::evaluate(cip::rank(d, labels));
  EXPECT_EQ(s.skipped_queries, 1);
  EXPECT_EQ(s.per_query.size(), 2u);
  EXPECT_FALSE(s.warnings.empty());
}

TEST(Evaluate, CutoffOptions) {
  MatrixXd d(2, 4);
  d << 1, 1, 0.9, 0,
       0, 0.01, 0.5, 1;
  std::vector<int> labels{0, 1, 0, 0};
  auto run = cip::rank(d, labels);
  // query 0 ranks 1 (irrelevant), 2, 3
  ASSERT_EQ(run.rankings[0].relevant, (Rel{0, 1, 1}));
  auto s = cip::evaluate(run, {1, 1});
  EXPECT_DOUBLE_EQ(s.per_query[0].f1, 0.0);
  EXPECT_DOUBLE_EQ(s.per_query[0].ndcg, 0.0);
  auto full = cip::evaluate(run);
  EXPECT_DOUBLE_EQ(full.per_query[0].f1, 0.5);
}

TEST(Geometry, FeaturesOnOrthogonalCenterlines) {
  cip::CenterlineBank<double> bank(MatrixXd::Identity(3, 3) * 2.0);
  MatrixXd f(3, 3);
  f << 5, 0, 0,
       0, 1, 0,
       0, 0, 0.5;
  std::vector<int> labels{0, 1, 2};
  auto g = cip::geometry_report(f, labels, bank);
  EXPECT_EQ(g.max_centerline_cosine, 0.0);
  EXPECT_EQ(g.mean_own_cosine, 1.0);
  EXPECT_EQ(g.max_cross_inner_product, 0.0);
  EXPECT_EQ(g.centerline_cosines, MatrixXd::Identity(3, 3));
  EXPECT_DOUBLE_EQ(g.classes[0].mean_norm, 5.0);
}

TEST(Geometry, FortyFiveDegreeFeature) {
  cip::CenterlineBank<double> bank(MatrixXd::Identity(2, 2));
  MatrixXd f(2, 1);
  f << 1, 1;
  std::vector<int> labels{0};
  auto g = cip::geometry_report(f, labels, bank);
  EXPECT_NEAR(g.mean_own_cosine, std::sqrt(0.5), 1e-15);
  EXPECT_NEAR(g.mean_own_cosine, 0.70711, 1e-5);
  EXPECT_DOUBLE_EQ(g.max_cross_inner_product, 1.0);
}

TEST(Geometry, CollinearCenterlinesReportCosineOne) {
  MatrixXd c(2, 2);
  c << 1, 3,
       1, 3;
  cip::CenterlineBank<double> bank(c);
  MatrixXd f(2, 2);
  f << 1, -1,
       0, 0;
  std::vector<int> labels{0, 1};
  auto g = cip::geometry_report(f, labels, bank);
  EXPECT_NEAR(g.max_centerline_cosine, 1.0, 1e-15);
  EXPECT_THROW(cip::geometry_report(f, std::vector<int>{0}, bank), std::invalid_argument);
}

TEST(Writers, MetricsJsonHasBothAggregations) {
  MatrixXd d = MatrixXd::Identity(2, 4);
  d(0, 1) = 1;
  std::vector<int> labels{0, 0, 1, 1};
  std::ostringstream os;
  cip::write_metrics_json(os, cip::evaluate(cip::rank(d, labels)));
  auto j = nlohmann::json::parse(os.str());
  EXPECT_EQ(j["micro"]["aggregation"], "micro");
  EXPECT_EQ(j["macro"]["aggregation"], "macro");
  EXPECT_TRUE(j.contains("skipped_queries"));
}
