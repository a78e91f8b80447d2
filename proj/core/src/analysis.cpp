#include "conslab/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "conslab/rng.hpp"

namespace conslab {
namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

// Entropy (nats) of a count vector.
double entropy(const std::vector<double>& counts, double total) {
  double h = 0.0;
  for (const auto c : counts) {
    if (c > 0.0) h -= (c / total) * std::log(c / total);
  }
  return h;
}

std::vector<std::size_t> compact_ids(std::span<const std::size_t> ids, std::size_t& distinct) {
  std::map<std::size_t, std::size_t> remap;
  std::vector<std::size_t> out;
  out.reserve(ids.size());
  for (const auto id : ids) out.push_back(remap.try_emplace(id, remap.size()).first->second);
  distinct = remap.size();
  return out;
}

double chi2_corrected(std::size_t b, std::size_t c) {
  if (b + c == 0) return 0.0;
  const double diff =
      std::max(0.0, std::abs(static_cast<double>(b) - static_cast<double>(c)) - 1.0);
  return diff * diff / static_cast<double>(b + c);
}

}  // namespace

KMeansResult kmeans(std::span<const std::vector<double>> points, std::size_t k,
                    std::uint64_t seed, std::size_t max_iter) {
  if (k == 0) throw AnalysisError("kmeans: k must be positive");
  if (k > points.size()) {
    throw AnalysisError("kmeans: k = " + std::to_string(k) + " exceeds the number of points (" +
                        std::to_string(points.size()) + ")");
  }
  const auto dim = points.front().size();
  for (const auto& p : points) {
    if (p.size() != dim) throw AnalysisError("kmeans: points differ in dimensionality");
  }

  // Seeded sample of k points, preferring distinct coordinates.
  Rng rng(seed);
  std::vector<std::size_t> order(points.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  shuffle(std::span(order), rng);
  KMeansResult result;
  std::vector<bool> taken(points.size(), false);
  for (const auto idx : order) {
    if (result.centroids.size() == k) break;
    const bool duplicate = std::any_of(result.centroids.begin(), result.centroids.end(),
                                       [&](const auto& c) { return c == points[idx]; });
    if (!duplicate) {
      result.centroids.push_back(points[idx]);
      taken[idx] = true;
    }
  }
  for (const auto idx : order) {
    if (result.centroids.size() == k) break;
    if (!taken[idx]) result.centroids.push_back(points[idx]);
  }

  const auto n = points.size();
  result.assignment.assign(n, 0);
  std::vector<double> dist(n, 0.0);
  for (std::size_t iter = 0; iter < std::max<std::size_t>(max_iter, 1); ++iter) {
    bool changed = iter == 0;
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double d = squared_distance(points[i], result.centroids[c]);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (best != result.assignment[i]) changed = true;
      result.assignment[i] = best;
      dist[i] = best_d;
      inertia += best_d;
    }
    result.inertia_trace.push_back(inertia);
    result.iterations = iter + 1;
    if (!changed) break;

    std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
    std::vector<std::size_t> sizes(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto& s = sums[result.assignment[i]];
      for (std::size_t j = 0; j < dim; ++j) s[j] += points[i][j];
      ++sizes[result.assignment[i]];
    }
    std::vector<bool> reseeded(n, false);
    for (std::size_t c = 0; c < k; ++c) {
      if (sizes[c] > 0) {
        for (std::size_t j = 0; j < dim; ++j) {
          result.centroids[c][j] = sums[c][j] / static_cast<double>(sizes[c]);
        }
        continue;
      }
      std::size_t far = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (!reseeded[i] && (far == n || dist[i] > dist[far])) far = i;
      }
      reseeded[far] = true;
      dist[far] = 0.0;
      result.centroids[c] = points[far];
    }
  }
  return result;
}

VMeasure v_measure_scores(std::span<const std::size_t> clusters,
                          std::span<const std::size_t> labels) {
  if (clusters.size() != labels.size()) {
    throw AnalysisError("v_measure: assignment and labels differ in length");
  }
  VMeasure out{1.0, 1.0, 1.0};
  if (labels.empty()) return out;
  std::size_t n_clusters = 0;
  std::size_t n_classes = 0;
  const auto k = compact_ids(clusters, n_clusters);
  const auto c = compact_ids(labels, n_classes);
  const auto total = static_cast<double>(labels.size());

  std::vector<std::vector<double>> joint(n_classes, std::vector<double>(n_clusters, 0.0));
  std::vector<double> class_counts(n_classes, 0.0);
  std::vector<double> cluster_counts(n_clusters, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    joint[c[i]][k[i]] += 1.0;
    class_counts[c[i]] += 1.0;
    cluster_counts[k[i]] += 1.0;
  }
  const double h_class = entropy(class_counts, total);
  const double h_cluster = entropy(cluster_counts, total);
  double h_class_given_cluster = 0.0;
  double h_cluster_given_class = 0.0;
  for (std::size_t a = 0; a < n_classes; ++a) {
    for (std::size_t b = 0; b < n_clusters; ++b) {
      const double nab = joint[a][b];
      if (nab == 0.0) continue;
      h_class_given_cluster -= (nab / total) * std::log(nab / cluster_counts[b]);
      h_cluster_given_class -= (nab / total) * std::log(nab / class_counts[a]);
    }
  }
  out.homogeneity = h_class == 0.0 ? 1.0 : 1.0 - h_class_given_cluster / h_class;
  out.completeness = h_cluster == 0.0 ? 1.0 : 1.0 - h_cluster_given_class / h_cluster;
  const double denom = out.homogeneity + out.completeness;
  out.v_measure = denom == 0.0 ? 0.0 : 2.0 * out.homogeneity * out.completeness / denom;
  return out;
}

double v_measure(std::span<const std::size_t> clusters, std::span<const std::size_t> labels) {
  return v_measure_scores(clusters, labels).v_measure;
}

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t m = i; m <= j; ++m) ranks[order[m]] = rank;
    i = j + 1;
  }
  return ranks;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw AnalysisError("correlation: length mismatch");
  if (x.size() < 2) throw AnalysisError("correlation: need at least two points");
  const auto n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw AnalysisError("correlation: zero variance input");
  return sxy / std::sqrt(sxx * syy);
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw AnalysisError("spearman: length mismatch");
  if (x.size() < 3) throw AnalysisError("spearman: need at least three points");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson(rx, ry);
}

TestResult mcnemar_exact(std::size_t b, std::size_t c) {
  TestResult r;
  r.method = McNemarMethod::kExact;
  r.statistic = chi2_corrected(b, c);
  const auto n = b + c;
  if (n == 0) return r;
  // Two-sided binomial(n, 1/2) tail at min(b, c), summed in log space.
  const auto k = std::min(b, c);
  const double log_half_n = static_cast<double>(n) * std::log(0.5);
  double tail = 0.0;
  for (std::size_t i = 0; i <= k; ++i) {
    const double log_choose = std::lgamma(static_cast<double>(n) + 1.0) -
                              std::lgamma(static_cast<double>(i) + 1.0) -
                              std::lgamma(static_cast<double>(n - i) + 1.0);
    tail += std::exp(log_choose + log_half_n);
  }
  r.p_value = std::min(1.0, 2.0 * tail);
  return r;
}

TestResult mcnemar_chi2(std::size_t b, std::size_t c) {
  TestResult r;
  r.method = McNemarMethod::kChiSquared;
  r.statistic = chi2_corrected(b, c);
  r.p_value = b + c == 0 ? 1.0 : std::min(1.0, std::erfc(std::sqrt(r.statistic / 2.0)));
  return r;
}

TestResult mcnemar(std::size_t b, std::size_t c) {
  return b + c < kMcNemarExactBelow ? mcnemar_exact(b, c) : mcnemar_chi2(b, c);
}

RepresentationStudy representation_study(const Scorer& scorer, const Relation& relation,
                                         std::span<const KBTuple> tuples, std::uint64_t seed) {
  if (!scorer.supports_hidden()) {
    throw AnalysisError("scorer " + scorer.model_id() + " does not export hidden states");
  }
  if (relation.candidates.empty()) {
    throw AnalysisError(relation.id + ": candidate set not built");
  }
  RepresentationStudy study;
  std::vector<std::vector<double>> vectors;
  std::vector<std::size_t> pattern_labels;
  std::vector<std::size_t> subject_labels;
  std::map<std::string, std::size_t, std::less<>> subject_ids;
  const auto mask = scorer.mask_token();
  for (const auto& t : tuples) {
    if (t.relation_id != relation.id) continue;
    const auto sid = subject_ids.try_emplace(t.subject, subject_ids.size()).first->second;
    for (std::size_t p = 0; p < relation.patterns.size(); ++p) {
      ScoreRequest request;
      request.text = populate(relation, p, t.subject, mask).text;
      request.candidates = relation.candidates;
      request.want_hidden = true;
      request.relation_id = relation.id;
      auto response = scorer.score(request);
      if (!response.hidden) {
        throw AnalysisError("scorer " + scorer.model_id() + " returned no hidden state");
      }
      vectors.push_back(*response.hidden);
      pattern_labels.push_back(p);
      subject_labels.push_back(sid);
      study.embeddings.push_back({relation.id, p, t.subject, std::move(*response.hidden)});
    }
  }
  if (vectors.empty()) throw AnalysisError(relation.id + ": no tuples to encode");

  study.k_patterns = relation.patterns.size();
  study.k_subjects = subject_ids.size();
  const auto by_pattern = kmeans(vectors, study.k_patterns, seed);
  const auto by_subject = kmeans(vectors, study.k_subjects, seed);
  study.pattern_clusters_vs_patterns = v_measure_scores(by_pattern.assignment, pattern_labels);
  study.pattern_clusters_vs_subjects = v_measure_scores(by_pattern.assignment, subject_labels);
  study.subject_clusters_vs_patterns = v_measure_scores(by_subject.assignment, pattern_labels);
  study.subject_clusters_vs_subjects = v_measure_scores(by_subject.assignment, subject_labels);
  return study;
}

std::string embeddings_to_tsv(std::span<const Embedding> embeddings) {
  std::ostringstream out;
  out.precision(17);
  const auto dim = embeddings.empty() ? 0 : embeddings.front().vector.size();
  out << "relation\tpattern_index\tsubject";
  for (std::size_t j = 0; j < dim; ++j) out << "\th" << j;
  out << '\n';
  for (const auto& e : embeddings) {
    out << e.relation_id << '\t' << e.pattern_index << '\t' << e.subject;
    for (const auto v : e.vector) out << '\t' << v;
    out << '\n';
  }
  return out.str();
}

}  // namespace conslab
