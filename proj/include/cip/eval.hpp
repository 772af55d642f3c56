#ifndef CIP_EVAL_HPP
#define CIP_EVAL_HPP

#include "cip/losses.hpp"
#include "cip/numeric.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cip {

/// A query's gallery ordering (ascending cosine distance, query excluded)
/// and whether each ranked item shares the query's label.
struct Ranking {
  int query = 0;
  std::vector<int> order;
  std::vector<std::uint8_t> relevant;
  std::vector<double> distances;

  int total_relevant() const;
};

/// Leave-one-out retrieval over a set of descriptors.
struct RetrievalRun {
  std::vector<int> labels;     // per descriptor
  std::vector<Ranking> rankings;
  std::vector<int> excluded;   // zero-norm descriptors, never queried or retrieved
  std::vector<std::string> warnings;
};

/// Ranks every descriptor (column) against all others by cosine distance.
/// Ties go to the lower gallery index.
RetrievalRun rank(const Eigen::Ref<const MatrixXd>& descriptors, std::span<const int> labels);

// Per-ranking metrics over binary relevance flags. `relevance` covers the
// whole gallery, so its count of ones is the number of relevant items.

/// Mean of precision at each relevant rank. Throws std::domain_error
/// when nothing is relevant.
double average_precision(std::span<const std::uint8_t> relevance);

/// Trapezoidal area under the precision-recall curve sampled at every rank,
/// anchored at (recall 0, precision 1).
double pr_auc(std::span<const std::uint8_t> relevance);

/// Binary-gain NDCG over the first `cutoff` ranks (0 means the full list).
double ndcg(std::span<const std::uint8_t> relevance, int cutoff = 0);

/// F1 of precision@cutoff and recall@cutoff; cutoff is clamped to the list.
double f1_at(std::span<const std::uint8_t> relevance, int cutoff);

struct QueryMetrics {
  int label = 0;
  double map = 0;
  double pr_auc = 0;
  double f1 = 0;
  double ndcg = 0;
};

enum class Aggregation { micro, macro };

struct MetricsReport {
  double map = 0;
  double pr_auc = 0;
  double f1 = 0;
  double ndcg = 0;
  Aggregation aggregation = Aggregation::micro;
  int queries = 0;
};

/// micro: mean over queries; macro: mean over per-class means.
MetricsReport aggregate(std::span<const QueryMetrics> per_query, Aggregation mode);

struct EvalOptions {
  int f1_cutoff = 0;    // 0: min(gallery size, relevant count) per query
  int ndcg_cutoff = 0;  // 0: full ranking
};

struct EvaluationSummary {
  MetricsReport micro;
  MetricsReport macro;
  std::vector<QueryMetrics> per_query;
  int skipped_queries = 0;  // no relevant item in the gallery
  std::vector<std::string> warnings;
};

EvaluationSummary evaluate(const RetrievalRun& run, const EvalOptions& options = {});

struct ClassGeometry {
  int label = 0;
  int count = 0;
  double mean_own_cosine = 0;
  double min_own_cosine = 0;
  double mean_norm = 0;
  double min_norm = 0;
  double max_norm = 0;
  double std_norm = 0;
};

/// Embedding geometry relative to a centerline bank.
struct GeometryReport {
  MatrixXd centerline_cosines;  // K x K
  std::vector<ClassGeometry> classes;
  double max_cross_inner_product = 0;  // max over features of f . c_k, k != own
  double max_centerline_cosine = 0;    // max off-diagonal entry
  double mean_own_cosine = 0;          // over all nonzero features
};

/// Features are columns; labels are 0-based class indices.
GeometryReport geometry_report(const Eigen::Ref<const MatrixXd>& features,
                               std::span<const int> labels, const CenterlineBank<double>& bank);

void write_metrics_json(std::ostream& out, const EvaluationSummary& summary);
void write_geometry_json(std::ostream& out, const GeometryReport& report);
void write_geometry_csv(std::ostream& out, const GeometryReport& report);
void write_cosine_matrix_csv(std::ostream& out, const MatrixXd& cosines);

}  // namespace cip

#endif  // CIP_EVAL_HPP
