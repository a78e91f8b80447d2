#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "conslab/resource.hpp"
#include "conslab/scorer.hpp"

namespace conslab {

class AnalysisError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct KMeansResult {
  std::vector<std::size_t> assignment;
  std::vector<std::vector<double>> centroids;
  /// Inertia after every assignment step; non-increasing.
  std::vector<double> inertia_trace;
  std::size_t iterations = 0;

  double inertia() const { return inertia_trace.empty() ? 0.0 : inertia_trace.back(); }
};

/// Lloyd's algorithm from k seeded distinct points. Empty clusters are
/// re-seeded with the point farthest from its current centroid.
KMeansResult kmeans(std::span<const std::vector<double>> points, std::size_t k,
                    std::uint64_t seed, std::size_t max_iter = 300);

struct VMeasure {
  double homogeneity = 0.0;
  double completeness = 0.0;
  double v_measure = 0.0;
};

VMeasure v_measure_scores(std::span<const std::size_t> clusters,
                          std::span<const std::size_t> labels);
double v_measure(std::span<const std::size_t> clusters, std::span<const std::size_t> labels);

/// Average ranks (1-based) with ties sharing their mean rank.
std::vector<double> average_ranks(std::span<const double> values);
double pearson(std::span<const double> x, std::span<const double> y);
/// Pearson correlation of the average-rank vectors. Needs at least 3 points.
double spearman(std::span<const double> x, std::span<const double> y);

enum class McNemarMethod { kChiSquared, kExact };

struct TestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  McNemarMethod method = McNemarMethod::kExact;
};

inline constexpr std::size_t kMcNemarExactBelow = 25;

/// Two-sided McNemar test on discordant counts b and c: exact binomial when
/// b + c < 25, otherwise continuity-corrected chi-squared with one dof.
TestResult mcnemar(std::size_t b, std::size_t c);
TestResult mcnemar_exact(std::size_t b, std::size_t c);
TestResult mcnemar_chi2(std::size_t b, std::size_t c);

struct Embedding {
  std::string relation_id;
  std::size_t pattern_index = 0;
  std::string subject;
  std::vector<double> vector;
};

struct RepresentationStudy {
  std::vector<Embedding> embeddings;
  std::size_t k_patterns = 0;
  std::size_t k_subjects = 0;
  /// k = #patterns clustering scored against pattern and subject labels.
  VMeasure pattern_clusters_vs_patterns;
  VMeasure pattern_clusters_vs_subjects;
  /// k = #subjects clustering scored against both labelings.
  VMeasure subject_clusters_vs_patterns;
  VMeasure subject_clusters_vs_subjects;

  double pattern_vmeasure() const { return pattern_clusters_vs_patterns.v_measure; }
  double subject_vmeasure() const { return subject_clusters_vs_subjects.v_measure; }
};

/// Encodes every (tuple, pattern) cloze of a relation, takes the mask-position
/// hidden state and clusters it twice.
RepresentationStudy representation_study(const Scorer& scorer, const Relation& relation,
                                         std::span<const KBTuple> tuples, std::uint64_t seed);

/// TSV: header, then relation, pattern_index, subject, vector components.
std::string embeddings_to_tsv(std::span<const Embedding> embeddings);

}  // namespace conslab
