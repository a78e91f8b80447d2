#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "conslab/resource.hpp"
#include "conslab/rng.hpp"
#include "conslab/toy_mlm.hpp"

namespace conslab {

/// How the per-tuple pair terms of the consistency loss are combined.
enum class PairReduction {
  kMean,  // divide by the number of pattern pairs
  kSum,   // raw double sum
};

struct TrainConfig {
  double lambda = 0.5;
  std::size_t epochs = 3;
  std::size_t tuples_per_batch = 8;
  double learning_rate = 0.05;
  std::uint64_t seed = 0;
  bool restrict_to_candidates = true;  // off = "-typed"
  bool use_consistency_loss = true;    // off = "-consistency"
  bool use_mlm_loss = true;            // off = "-MLM"
  double mlm_mask_rate = 0.15;
  PairReduction pair_reduction = PairReduction::kMean;

  /// Throws std::invalid_argument on a negative lambda or empty batch.
  void validate() const;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when the loss stops being finite.
class TrainingDiverged : public TrainingError {
 public:
  TrainingDiverged(std::size_t step, double loss);
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

inline constexpr double kProbabilityFloor = 1e-12;

/// Softmax over the candidate support of one pattern's mask logits.
struct CandidateDistribution {
  std::vector<double> probs;
  std::size_t pattern_index = 0;
  /// Token ids the distribution ranges over; two distributions are comparable
  /// only if their supports are identical.
  std::vector<std::size_t> support;
};

CandidateDistribution candidate_distribution(std::span<const double> logits,
                                             std::span<const std::size_t> support,
                                             std::size_t pattern_index);

/// D_KL(P||Q) + D_KL(Q||P) with both logs floored at kProbabilityFloor.
double symmetric_kl(std::span<const double> p, std::span<const double> q);

/// Sum (or mean) of symmetric KL over all unordered pattern pairs. Terms are
/// reduced in sorted order, so the value is bitwise independent of the order
/// of `distributions`.
double consistency_loss(std::span<const CandidateDistribution> distributions,
                        PairReduction reduction = PairReduction::kSum);

/// Cross-entropy over the whole vocabulary at the single mask of `masked_text`.
double mlm_loss(const ToyMlm& model, std::string_view masked_text, std::string_view target_token);

struct ClozeExample {
  std::vector<std::size_t> ids;
  std::size_t mask_position = 0;
};

struct MlmExample {
  std::vector<std::size_t> ids;
  std::vector<std::size_t> positions;
  std::vector<std::size_t> targets;
};

/// Everything a loss evaluation needs for one single-relation batch. All
/// randomness (MLM masking) is drawn when the batch is assembled.
struct TrainingBatch {
  std::string relation_id;
  std::vector<std::vector<ClozeExample>> clozes;  // [tuple][pattern]
  std::vector<std::size_t> support;
  std::vector<MlmExample> mlm;
};

TrainingBatch assemble_batch(const ToyMlm& model, const Relation& relation,
                             std::span<const KBTuple> batch, const TrainConfig& config,
                             Rng& rng);

struct LossResult {
  double total = 0.0;
  double consistency = 0.0;  // unweighted L_c, averaged over tuples
  double mlm = 0.0;          // mean cross-entropy over masked positions
  ToyParams grad;
};

/// L = lambda * L_c + L_MLM with analytic gradients for every parameter block.
LossResult combined_loss(const ToyMlm& model, const TrainingBatch& batch,
                         const TrainConfig& config);
LossResult combined_loss(const ToyMlm& model, const Relation& relation,
                         std::span<const KBTuple> batch, const TrainConfig& config, Rng& rng);

struct EpochLog {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double loss = 0.0;
  double l_c = 0.0;
  double l_mlm = 0.0;
  std::optional<double> val_consistency;
  std::optional<double> val_accuracy;
  std::optional<double> val_consistent_acc;
};

struct TrainResult {
  ToyMlm model;
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;  // 1-based; 0 when no epoch ran
  std::size_t steps = 0;
};

/// Seeded per-epoch shuffles within each relation, batches taken round-robin
/// across relations. Returns the checkpoint of the epoch with the best
/// validation Consistent-Acc (earliest on ties; last epoch if no validation).
TrainResult train(const ToyMlm& initial, std::span<const Relation> train_relations,
                  std::span<const Relation> val_relations, std::span<const KBTuple> tuples,
                  const TrainConfig& config);

/// Smallest lambda among those with maximal validation Consistent-Acc.
double select_lambda(std::span<const double> grid, std::span<const double> val_consistent_acc);

struct PretrainConfig {
  std::size_t epochs = 40;
  std::size_t batch_size = 16;
  double learning_rate = 0.1;
  double mlm_mask_rate = 0.15;
  /// Probability that a given (tuple, pattern) sentence is in the corpus;
  /// every tuple keeps at least one pattern.
  double pattern_exposure = 0.5;
  std::uint64_t seed = 0;
};

/// Plain MLM training on populated patterns, used to give a fresh toy model
/// partial, pattern-dependent knowledge before probing.
ToyMlm pretrain(const ToyMlm& initial, std::span<const Relation> relations,
                std::span<const KBTuple> tuples, const PretrainConfig& config);

/// Vocabulary covering every token of the templates, subjects and objects.
Vocabulary vocabulary_for(std::span<const Relation> relations, std::span<const KBTuple> tuples);

}  // namespace conslab
