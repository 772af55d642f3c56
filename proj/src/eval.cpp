#include "cip/eval.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace cip {

int Ranking::total_relevant() const {
  return static_cast<int>(std::count(relevant.begin(), relevant.end(), std::uint8_t{1}));
}

RetrievalRun rank(const Eigen::Ref<const MatrixXd>& descriptors, std::span<const int> labels) {
  const Eigen::Index count = descriptors.cols();
  if (static_cast<std::size_t>(count) != labels.size())
    throw std::invalid_argument("rank: label count does not match descriptors");

  RetrievalRun run;
  run.labels.assign(labels.begin(), labels.end());

  MatrixXd unit(descriptors.rows(), count);
  std::vector<int> valid;
  for (Eigen::Index i = 0; i < count; ++i) {
    const double norm = descriptors.col(i).norm();
    if (norm == 0.0 || !std::isfinite(norm)) {
      run.excluded.push_back(static_cast<int>(i));
      run.warnings.push_back("descriptor " + std::to_string(i) +
                             " has zero or non-finite norm; excluded from retrieval");
      unit.col(i).setZero();
    } else {
      unit.col(i) = descriptors.col(i) / norm;
    }
  }
  for (Eigen::Index i = 0; i < count; ++i)
    if (std::find(run.excluded.begin(), run.excluded.end(), i) == run.excluded.end())
      valid.push_back(static_cast<int>(i));

  for (int q : valid) {
    Ranking r;
    r.query = q;
    std::vector<std::pair<double, int>> scored;
    scored.reserve(valid.size());
    for (int g : valid) {
      if (g == q) continue;
      const double cosine = std::clamp(unit.col(q).dot(unit.col(g)), -1.0, 1.0);
      scored.emplace_back(1.0 - cosine, g);
    }
    std::sort(scored.begin(), scored.end());
    for (const auto& [dist, g] : scored) {
      r.order.push_back(g);
      r.distances.push_back(dist);
      r.relevant.push_back(labels[static_cast<std::size_t>(g)] == labels[static_cast<std::size_t>(q)]);
    }
    run.rankings.push_back(std::move(r));
  }
  return run;
}

namespace {

int count_relevant(std::span<const std::uint8_t> relevance) {
  return static_cast<int>(std::count_if(relevance.begin(), relevance.end(),
                                        [](std::uint8_t r) { return r != 0; }));
}

int clamp_cutoff(int cutoff, std::size_t length) {
  const int n = static_cast<int>(length);
  return (cutoff <= 0 || cutoff > n) ? n : cutoff;
}

}  // namespace

double average_precision(std::span<const std::uint8_t> relevance) {
  const int total = count_relevant(relevance);
  if (total == 0) throw std::domain_error("average_precision: no relevant items");
  int hits = 0;
  double sum = 0;
  for (std::size_t i = 0; i < relevance.size(); ++i) {
    if (!relevance[i]) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(i + 1);
  }
  return sum / total;
}

double pr_auc(std::span<const std::uint8_t> relevance) {
  const int total = count_relevant(relevance);
  if (total == 0) throw std::domain_error("pr_auc: no relevant items");
  double prev_recall = 0.0;
  double prev_precision = 1.0;
  double area = 0.0;
  int hits = 0;
  for (std::size_t i = 0; i < relevance.size(); ++i) {
    if (relevance[i]) ++hits;
    const double recall = static_cast<double>(hits) / total;
    const double precision = static_cast<double>(hits) / static_cast<double>(i + 1);
    area += (recall - prev_recall) * (precision + prev_precision) / 2.0;
    prev_recall = recall;
    prev_precision = precision;
  }
  return area;
}

double ndcg(std::span<const std::uint8_t> relevance, int cutoff) {
  const int total = count_relevant(relevance);
  if (total == 0) return 0.0;
  const int c = clamp_cutoff(cutoff, relevance.size());
  double dcg = 0.0;
  for (int i = 0; i < c; ++i)
    if (relevance[static_cast<std::size_t>(i)]) dcg += 1.0 / std::log2(i + 2.0);
  double ideal = 0.0;
  for (int i = 0; i < std::min(total, c); ++i) ideal += 1.0 / std::log2(i + 2.0);
  return dcg / ideal;
}

double f1_at(std::span<const std::uint8_t> relevance, int cutoff) {
  if (cutoff < 1) throw std::invalid_argument("f1_at: cutoff must be >= 1");
  const int total = count_relevant(relevance);
  const int c = clamp_cutoff(cutoff, relevance.size());
  int hits = 0;
  for (int i = 0; i < c; ++i) hits += relevance[static_cast<std::size_t>(i)] ? 1 : 0;
  if (hits == 0 || total == 0) return 0.0;
  const double precision = static_cast<double>(hits) / c;
  const double recall = static_cast<double>(hits) / total;
  return 2.0 * precision * recall / (precision + recall);
}

MetricsReport aggregate(std::span<const QueryMetrics> per_query, Aggregation mode) {
  if (per_query.empty()) throw std::invalid_argument("aggregate: no queries");
  MetricsReport out;
  out.aggregation = mode;
  out.queries = static_cast<int>(per_query.size());
  auto add = [](MetricsReport& acc, const QueryMetrics& q) {
    acc.map += q.map;
    acc.pr_auc += q.pr_auc;
    acc.f1 += q.f1;
    acc.ndcg += q.ndcg;
  };
  auto scale = [](MetricsReport& acc, std::size_t count) {
    const auto c = static_cast<double>(count);
    acc.map /= c;
    acc.pr_auc /= c;
    acc.f1 /= c;
    acc.ndcg /= c;
  };
  if (mode == Aggregation::micro) {
    for (const auto& q : per_query) add(out, q);
    scale(out, per_query.size());
    return out;
  }
  std::map<int, std::vector<const QueryMetrics*>> by_class;
  for (const auto& q : per_query) by_class[q.label].push_back(&q);
  for (const auto& [label, members] : by_class) {
    MetricsReport class_mean;
    for (const auto* q : members) add(class_mean, *q);
    scale(class_mean, members.size());
    QueryMetrics m{label, class_mean.map, class_mean.pr_auc, class_mean.f1, class_mean.ndcg};
    add(out, m);
  }
  scale(out, by_class.size());
  return out;
}

EvaluationSummary evaluate(const RetrievalRun& run, const EvalOptions& options) {
  EvaluationSummary summary;
  summary.warnings = run.warnings;
  for (const auto& r : run.rankings) {
    const int total = r.total_relevant();
    if (total == 0) {
      ++summary.skipped_queries;
      continue;
    }
    const std::span<const std::uint8_t> rel(r.relevant);
    QueryMetrics q;
    q.label = run.labels[static_cast<std::size_t>(r.query)];
    q.map = average_precision(rel);
    q.pr_auc = pr_auc(rel);
    const int f1_cutoff = options.f1_cutoff > 0
                              ? options.f1_cutoff
                              : std::max(1, std::min(static_cast<int>(rel.size()), total));
    q.f1 = f1_at(rel, f1_cutoff);
    q.ndcg = ndcg(rel, options.ndcg_cutoff);
    summary.per_query.push_back(q);
  }
  if (summary.skipped_queries > 0) {
    summary.warnings.push_back(std::to_string(summary.skipped_queries) +
                               " queries had no relevant gallery item and were skipped");
  }
  if (!summary.per_query.empty()) {
    summary.micro = aggregate(summary.per_query, Aggregation::micro);
    summary.macro = aggregate(summary.per_query, Aggregation::macro);
  }
  return summary;
}

GeometryReport geometry_report(const Eigen::Ref<const MatrixXd>& features,
                               std::span<const int> labels, const CenterlineBank<double>& bank) {
  if (features.cols() == 0) throw std::invalid_argument("geometry_report: no features");
  if (static_cast<std::size_t>(features.cols()) != labels.size())
    throw std::invalid_argument("geometry_report: label count mismatch");
  detail::require_same_size(features.rows(), bank.dim(), "geometry_report");
  const Eigen::Index k_count = bank.num_classes();

  GeometryReport report;
  report.centerline_cosines = MatrixXd::Zero(k_count, k_count);
  VectorXd norms(k_count);
  for (Eigen::Index k = 0; k < k_count; ++k) norms(k) = bank.centerline(k).norm();
  report.max_centerline_cosine = -1.0;
  for (Eigen::Index a = 0; a < k_count; ++a) {
    for (Eigen::Index b = 0; b < k_count; ++b) {
      double cosine = 0.0;
      if (norms(a) > 0 && norms(b) > 0)
        cosine = std::clamp(bank.centerline(a).dot(bank.centerline(b)) / (norms(a) * norms(b)),
                            -1.0, 1.0);
      report.centerline_cosines(a, b) = cosine;
      if (a != b) report.max_centerline_cosine = std::max(report.max_centerline_cosine, cosine);
    }
  }

  struct Accum {
    int count = 0;
    int cosine_count = 0;
    double cos_sum = 0;
    double cos_min = std::numeric_limits<double>::infinity();
    double norm_sum = 0;
    double norm_sq_sum = 0;
    double norm_min = std::numeric_limits<double>::infinity();
    double norm_max = 0;
  };
  std::vector<Accum> acc(static_cast<std::size_t>(k_count));
  report.max_cross_inner_product = -std::numeric_limits<double>::infinity();
  double own_sum = 0;
  int own_count = 0;
  for (Eigen::Index i = 0; i < features.cols(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    detail::check_class(y, k_count);
    const auto f = features.col(i);
    const double norm = f.norm();
    auto& a = acc[static_cast<std::size_t>(y)];
    ++a.count;
    a.norm_sum += norm;
    a.norm_sq_sum += norm * norm;
    a.norm_min = std::min(a.norm_min, norm);
    a.norm_max = std::max(a.norm_max, norm);
    if (norm > 0 && norms(y) > 0) {
      const double cosine = std::clamp(f.dot(bank.centerline(y)) / (norm * norms(y)), -1.0, 1.0);
      a.cos_sum += cosine;
      a.cos_min = std::min(a.cos_min, cosine);
      ++a.cosine_count;
      own_sum += cosine;
      ++own_count;
    }
    for (Eigen::Index k = 0; k < k_count; ++k) {
      if (k == y) continue;
      report.max_cross_inner_product =
          std::max(report.max_cross_inner_product, f.dot(bank.centerline(k)));
    }
  }
  if (k_count < 2) report.max_cross_inner_product = 0;
  report.mean_own_cosine = own_count > 0 ? own_sum / own_count : 0.0;

  for (Eigen::Index k = 0; k < k_count; ++k) {
    const auto& a = acc[static_cast<std::size_t>(k)];
    ClassGeometry g;
    g.label = static_cast<int>(k);
    g.count = a.count;
    if (a.count > 0) {
      g.mean_norm = a.norm_sum / a.count;
      g.min_norm = a.norm_min;
      g.max_norm = a.norm_max;
      g.std_norm = std::sqrt(std::max(0.0, a.norm_sq_sum / a.count - g.mean_norm * g.mean_norm));
    }
    if (a.cosine_count > 0) {
      g.mean_own_cosine = a.cos_sum / a.cosine_count;
      g.min_own_cosine = a.cos_min;
    }
    report.classes.push_back(g);
  }
  return report;
}

namespace {

nlohmann::json metrics_json(const MetricsReport& m) {
  return {{"aggregation", m.aggregation == Aggregation::micro ? "micro" : "macro"},
          {"map", m.map},
          {"pr_auc", m.pr_auc},
          {"f1", m.f1},
          {"ndcg", m.ndcg},
          {"queries", m.queries}};
}

}  // namespace

void write_metrics_json(std::ostream& out, const EvaluationSummary& summary) {
  nlohmann::json j;
  j["micro"] = metrics_json(summary.micro);
  j["macro"] = metrics_json(summary.macro);
  j["skipped_queries"] = summary.skipped_queries;
  j["warnings"] = summary.warnings;
  out << j.dump(2) << '\n';
}

void write_geometry_json(std::ostream& out, const GeometryReport& report) {
  nlohmann::json j;
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index a = 0; a < report.centerline_cosines.rows(); ++a) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index b = 0; b < report.centerline_cosines.cols(); ++b)
      row.push_back(report.centerline_cosines(a, b));
    rows.push_back(row);
  }
  j["centerline_cosines"] = rows;
  j["max_centerline_cosine"] = report.max_centerline_cosine;
  j["mean_own_cosine"] = report.mean_own_cosine;
  j["max_cross_inner_product"] = report.max_cross_inner_product;
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& c : report.classes) {
    classes.push_back({{"label", c.label + 1},
                       {"count", c.count},
                       {"mean_own_cosine", c.mean_own_cosine},
                       {"min_own_cosine", c.min_own_cosine},
                       {"mean_norm", c.mean_norm},
                       {"min_norm", c.min_norm},
                       {"max_norm", c.max_norm},
                       {"std_norm", c.std_norm}});
  }
  j["classes"] = classes;
  out << j.dump(2) << '\n';
}

void write_geometry_csv(std::ostream& out, const GeometryReport& report) {
  out << "label,count,mean_own_cosine,min_own_cosine,mean_norm,min_norm,max_norm,std_norm\n";
  for (const auto& c : report.classes) {
    out << c.label + 1 << ',' << c.count;
    for (double v : {c.mean_own_cosine, c.min_own_cosine, c.mean_norm, c.min_norm, c.max_norm,
                     c.std_norm})
      out << ',' << format_double(v);
    out << '\n';
  }
}

void write_cosine_matrix_csv(std::ostream& out, const MatrixXd& cosines) {
  out << "label";
  for (Eigen::Index b = 0; b < cosines.cols(); ++b) out << ",c" << b + 1;
  out << '\n';
  for (Eigen::Index a = 0; a < cosines.rows(); ++a) {
    out << a + 1;
    for (Eigen::Index b = 0; b < cosines.cols(); ++b) out << ',' << format_double(cosines(a, b));
    out << '\n';
  }
}

}  // namespace cip
