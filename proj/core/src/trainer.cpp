#include "conslab/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "conslab/metrics.hpp"
#include "conslab/probe.hpp"
#include "conslab/scorer.hpp"

namespace conslab {
namespace {

const double kLogFloor = std::log(kProbabilityFloor);

double floored_log(double p) { return p > kProbabilityFloor ? std::log(p) : kLogFloor; }

double sorted_sum(std::vector<double>& terms) {
  std::sort(terms.begin(), terms.end());
  double total = 0.0;
  for (const auto t : terms) total += t;
  return total;
}

// Log-softmax of the logits restricted to `support`.
std::vector<double> restricted_log_softmax(std::span<const double> logits,
                                           std::span<const std::size_t> support) {
  double hi = -std::numeric_limits<double>::infinity();
  for (const auto id : support) hi = std::max(hi, logits[id]);
  double total = 0.0;
  for (const auto id : support) total += std::exp(logits[id] - hi);
  const double log_z = hi + std::log(total);
  std::vector<double> out;
  out.reserve(support.size());
  for (const auto id : support) out.push_back(logits[id] - log_z);
  return out;
}

// Gradient of symmetric_kl(p, q) with respect to the logits behind p.
// Floored entries contribute nothing, matching the flat floor in the value.
void accumulate_pair_grad(std::span<const double> p, std::span<const double> q, double scale,
                          std::vector<double>& grad) {
  const auto k = p.size();
  std::vector<double> g(k, 0.0);
  double g_sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    if (p[i] <= kProbabilityFloor) continue;
    g[i] = p[i] * (floored_log(p[i]) - floored_log(q[i])) + (p[i] - q[i]);
    g_sum += g[i];
  }
  for (std::size_t j = 0; j < k; ++j) grad[j] += scale * (g[j] - p[j] * g_sum);
}

struct MlmTotals {
  double loss = 0.0;
  std::size_t positions = 0;
};

// Adds d(sum of CE)/d(theta) * scale to grad; returns the unscaled CE sum.
MlmTotals mlm_accumulate(const ToyMlm& model, std::span<const MlmExample> examples,
                         double scale, ToyParams* grad) {
  MlmTotals totals;
  const auto V = model.vocab().size();
  for (const auto& ex : examples) {
    const auto cache = model.forward(ex.ids);
    std::vector<LogitGrad> upstream;
    for (std::size_t k = 0; k < ex.positions.size(); ++k) {
      auto logits = model.logits_at(cache, ex.positions[k]);
      const double hi = *std::max_element(logits.begin(), logits.end());
      double total = 0.0;
      for (const auto z : logits) total += std::exp(z - hi);
      const double log_z = hi + std::log(total);
      totals.loss += log_z - logits[ex.targets[k]];
      ++totals.positions;
      if (grad == nullptr) continue;
      LogitGrad up{ex.positions[k], std::vector<double>(V)};
      for (std::size_t v = 0; v < V; ++v) up.grad[v] = scale * std::exp(logits[v] - log_z);
      up.grad[ex.targets[k]] -= scale;
      upstream.push_back(std::move(up));
    }
    if (grad != nullptr && !upstream.empty()) model.backward(cache, upstream, *grad);
  }
  return totals;
}

MlmExample make_mlm_example(const ClozeExample& cloze, std::size_t object_id,
                            std::size_t mask_id, double mask_rate, Rng& rng) {
  MlmExample ex;
  ex.ids = cloze.ids;
  for (std::size_t j = 0; j < cloze.ids.size(); ++j) {
    const double u = uniform01(rng);
    if (j == cloze.mask_position) {
      ex.positions.push_back(j);
      ex.targets.push_back(object_id);
    } else if (u < mask_rate) {
      ex.positions.push_back(j);
      ex.targets.push_back(cloze.ids[j]);
      ex.ids[j] = mask_id;
    }
  }
  return ex;
}

ClozeExample make_cloze(const ToyMlm& model, const Relation& relation, std::size_t pattern,
                        std::string_view subject) {
  const auto text = populate(relation, pattern, subject, kMaskToken).text;
  auto enc = encode_cloze(model.vocab(), text);
  return {std::move(enc.ids), enc.mask_position};
}

std::size_t object_id(const ToyMlm& model, std::string_view object) {
  const auto id = model.vocab().find(object);
  if (!id) throw TrainingError("object \"" + std::string(object) + "\" is not in the vocabulary");
  return *id;
}

void sgd_step(ToyMlm& model, const ToyParams& grad, double learning_rate) {
  model.params().add_scaled(grad, -learning_rate);
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be >= 0");
  if (tuples_per_batch == 0) throw std::invalid_argument("tuples_per_batch must be >= 1");
  if (!(learning_rate >= 0.0)) throw std::invalid_argument("learning_rate must be >= 0");
  if (!(mlm_mask_rate >= 0.0 && mlm_mask_rate <= 1.0)) {
    throw std::invalid_argument("mlm_mask_rate must lie in [0, 1]");
  }
}

TrainingDiverged::TrainingDiverged(std::size_t step, double loss)
    : TrainingError("training diverged at step " + std::to_string(step) +
                    " (loss = " + std::to_string(loss) + ")"),
      step_(step) {}

CandidateDistribution candidate_distribution(std::span<const double> logits,
                                             std::span<const std::size_t> support,
                                             std::size_t pattern_index) {
  if (support.empty()) throw TrainingError("empty candidate support");
  CandidateDistribution d;
  d.pattern_index = pattern_index;
  d.support.assign(support.begin(), support.end());
  for (const auto ls : restricted_log_softmax(logits, support)) {
    d.probs.push_back(std::max(std::exp(ls), kProbabilityFloor));
  }
  return d;
}

double symmetric_kl(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw TrainingError("distributions differ in size");
  std::vector<double> terms;
  terms.reserve(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    terms.push_back((p[i] - q[i]) * (floored_log(p[i]) - floored_log(q[i])));
  }
  return sorted_sum(terms);
}

double consistency_loss(std::span<const CandidateDistribution> distributions,
                        PairReduction reduction) {
  if (distributions.size() < 2) {
    throw TrainingError("consistency loss needs at least two distributions");
  }
  for (const auto& d : distributions) {
    if (d.support != distributions.front().support || d.probs.size() != d.support.size()) {
      throw TrainingError("distributions are over different candidate sets");
    }
  }
  std::vector<double> terms;
  for (std::size_t n = 0; n < distributions.size(); ++n) {
    for (std::size_t m = n + 1; m < distributions.size(); ++m) {
      terms.push_back(symmetric_kl(distributions[n].probs, distributions[m].probs));
    }
  }
  const auto pairs = static_cast<double>(terms.size());
  const double total = sorted_sum(terms);
  return reduction == PairReduction::kMean ? total / pairs : total;
}

double mlm_loss(const ToyMlm& model, std::string_view masked_text, std::string_view target_token) {
  const auto target = model.vocab().find(target_token);
  if (!target) {
    throw TrainingError("target \"" + std::string(target_token) + "\" is not in the vocabulary");
  }
  const auto enc = encode_cloze(model.vocab(), masked_text);
  const MlmExample ex{enc.ids, {enc.mask_position}, {*target}};
  return mlm_accumulate(model, std::span(&ex, 1), 1.0, nullptr).loss;
}

TrainingBatch assemble_batch(const ToyMlm& model, const Relation& relation,
                             std::span<const KBTuple> batch, const TrainConfig& config,
                             Rng& rng) {
  TrainingBatch out;
  out.relation_id = relation.id;
  if (config.restrict_to_candidates) {
    if (relation.candidates.empty()) {
      throw TrainingError(relation.id + ": candidate set not built");
    }
    for (const auto& c : relation.candidates) out.support.push_back(object_id(model, c));
  } else {
    out.support.resize(model.vocab().size());
    for (std::size_t i = 0; i < out.support.size(); ++i) out.support[i] = i;
  }
  const auto mask_id = model.vocab().mask_id();
  for (const auto& t : batch) {
    if (t.relation_id != relation.id) {
      throw TrainingError("batch mixes relations " + relation.id + " and " + t.relation_id);
    }
    const auto target = object_id(model, t.object);
    std::vector<ClozeExample> row;
    for (std::size_t p = 0; p < relation.patterns.size(); ++p) {
      row.push_back(make_cloze(model, relation, p, t.subject));
      out.mlm.push_back(make_mlm_example(row.back(), target, mask_id, config.mlm_mask_rate, rng));
    }
    out.clozes.push_back(std::move(row));
  }
  return out;
}

LossResult combined_loss(const ToyMlm& model, const TrainingBatch& batch,
                         const TrainConfig& config) {
  LossResult result;
  result.grad = ToyParams::zeros(model.vocab().size(), model.dims());
  const auto tuples = batch.clozes.size();
  if (tuples == 0) throw TrainingError("empty batch");

  if (config.use_consistency_loss) {
    const auto n = batch.clozes.front().size();
    if (n < 2) {
      throw TrainingError(batch.relation_id + ": consistency loss needs at least two patterns");
    }
    const bool backprop = config.lambda > 0.0;
    const double pairs = static_cast<double>(n * (n - 1) / 2);
    const double pair_scale = config.pair_reduction == PairReduction::kMean ? 1.0 / pairs : 1.0;
    const double grad_scale = config.lambda * pair_scale / static_cast<double>(tuples);
    const auto V = model.vocab().size();

    std::vector<double> per_tuple;
    for (const auto& row : batch.clozes) {
      std::vector<ForwardCache> caches;
      std::vector<CandidateDistribution> dists;
      for (std::size_t p = 0; p < row.size(); ++p) {
        caches.push_back(model.forward(row[p].ids));
        const auto logits = model.logits_at(caches.back(), row[p].mask_position);
        dists.push_back(candidate_distribution(logits, batch.support, p));
      }
      per_tuple.push_back(consistency_loss(dists, config.pair_reduction));
      if (!backprop) continue;

      std::vector<std::vector<double>> dz(row.size(), std::vector<double>(batch.support.size()));
      for (std::size_t a = 0; a < row.size(); ++a) {
        for (std::size_t b = a + 1; b < row.size(); ++b) {
          accumulate_pair_grad(dists[a].probs, dists[b].probs, grad_scale, dz[a]);
          accumulate_pair_grad(dists[b].probs, dists[a].probs, grad_scale, dz[b]);
        }
      }
      for (std::size_t p = 0; p < row.size(); ++p) {
        LogitGrad up{row[p].mask_position, std::vector<double>(V, 0.0)};
        for (std::size_t k = 0; k < batch.support.size(); ++k) up.grad[batch.support[k]] += dz[p][k];
        model.backward(caches[p], std::span(&up, 1), result.grad);
      }
    }
    double sum = 0.0;
    for (const auto v : per_tuple) sum += v;
    result.consistency = sum / static_cast<double>(tuples);
    result.total += config.lambda * result.consistency;
  }

  if (config.use_mlm_loss) {
    std::size_t positions = 0;
    for (const auto& ex : batch.mlm) positions += ex.positions.size();
    if (positions > 0) {
      const double scale = 1.0 / static_cast<double>(positions);
      const auto totals = mlm_accumulate(model, batch.mlm, scale, &result.grad);
      result.mlm = totals.loss * scale;
      result.total += result.mlm;
    }
  }
  return result;
}

LossResult combined_loss(const ToyMlm& model, const Relation& relation,
                         std::span<const KBTuple> batch, const TrainConfig& config, Rng& rng) {
  if (config.use_consistency_loss && !relation.eligible_for_consistency()) {
    throw TrainingError(relation.id + ": consistency loss needs at least two patterns");
  }
  return combined_loss(model, assemble_batch(model, relation, batch, config, rng), config);
}

TrainResult train(const ToyMlm& initial, std::span<const Relation> train_relations,
                  std::span<const Relation> val_relations, std::span<const KBTuple> tuples,
                  const TrainConfig& config) {
  config.validate();
  std::set<std::string> train_ids;
  for (const auto& r : train_relations) train_ids.insert(r.id);
  for (const auto& r : val_relations) {
    if (train_ids.contains(r.id)) {
      throw TrainingError("relation " + r.id + " is in both train and validation sets");
    }
  }

  std::vector<const Relation*> relations;
  for (const auto& r : train_relations) {
    if (config.use_consistency_loss && !r.eligible_for_consistency()) {
      throw TrainingError(r.id + ": consistency loss needs at least two patterns");
    }
    relations.push_back(&r);
  }
  std::sort(relations.begin(), relations.end(),
            [](const Relation* a, const Relation* b) { return a->id < b->id; });
  std::vector<std::vector<KBTuple>> own;
  for (const auto* r : relations) own.push_back(tuples_of(tuples, r->id));

  TrainResult result{initial, {}, 0, 0};
  ToyMlm model = initial;
  Rng rng(config.seed);
  std::optional<double> best_score;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::vector<std::vector<std::vector<KBTuple>>> batches(relations.size());
    std::size_t rounds = 0;
    for (std::size_t r = 0; r < relations.size(); ++r) {
      auto shuffled = own[r];
      shuffle(std::span(shuffled), rng);
      for (std::size_t i = 0; i < shuffled.size(); i += config.tuples_per_batch) {
        const auto end = std::min(shuffled.size(), i + config.tuples_per_batch);
        batches[r].emplace_back(shuffled.begin() + static_cast<std::ptrdiff_t>(i),
                                shuffled.begin() + static_cast<std::ptrdiff_t>(end));
      }
      rounds = std::max(rounds, batches[r].size());
    }

    EpochLog entry;
    entry.epoch = epoch;
    std::size_t epoch_steps = 0;
    for (std::size_t round = 0; round < rounds; ++round) {
      for (std::size_t r = 0; r < relations.size(); ++r) {
        if (round >= batches[r].size()) continue;
        const auto batch = assemble_batch(model, *relations[r], batches[r][round], config, rng);
        const auto loss = combined_loss(model, batch, config);
        ++result.steps;
        if (!std::isfinite(loss.total) || !loss.grad.all_finite()) {
          throw TrainingDiverged(result.steps, loss.total);
        }
        sgd_step(model, loss.grad, config.learning_rate);
        entry.loss += loss.total;
        entry.l_c += loss.consistency;
        entry.l_mlm += loss.mlm;
        ++epoch_steps;
      }
    }
    if (epoch_steps > 0) {
      const auto n = static_cast<double>(epoch_steps);
      entry.loss /= n;
      entry.l_c /= n;
      entry.l_mlm /= n;
    }
    entry.step = result.steps;

    if (!val_relations.empty()) {
      const ToyScorer scorer(model);
      const auto probed = probe(scorer, val_relations, tuples);
      if (!probed.reports.empty()) {
        const auto macro = aggregate(probed.reports, AggregateMode::kMacro);
        if (macro.consistency) entry.val_consistency = macro.consistency->mean;
        if (macro.accuracy) entry.val_accuracy = macro.accuracy->mean;
        if (macro.consistent_acc) entry.val_consistent_acc = macro.consistent_acc->mean;
      }
    }
    result.log.push_back(entry);

    const bool has_val = entry.val_consistent_acc.has_value();
    if (!has_val || !best_score || *entry.val_consistent_acc > *best_score) {
      if (has_val) best_score = entry.val_consistent_acc;
      result.model = model;
      result.best_epoch = epoch;
    }
  }
  return result;
}

double select_lambda(std::span<const double> grid, std::span<const double> val_consistent_acc) {
  if (grid.empty()) throw TrainingError("empty lambda grid");
  if (grid.size() != val_consistent_acc.size()) {
    throw TrainingError("lambda grid and validation scores differ in length");
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const bool better = val_consistent_acc[i] > val_consistent_acc[best];
    const bool tie_smaller =
        val_consistent_acc[i] == val_consistent_acc[best] && grid[i] < grid[best];
    if (better || tie_smaller) best = i;
  }
  return grid[best];
}

ToyMlm pretrain(const ToyMlm& initial, std::span<const Relation> relations,
                std::span<const KBTuple> tuples, const PretrainConfig& config) {
  ToyMlm model = initial;
  Rng rng(config.seed);
  std::vector<const Relation*> ordered;
  for (const auto& r : relations) ordered.push_back(&r);
  std::sort(ordered.begin(), ordered.end(),
            [](const Relation* a, const Relation* b) { return a->id < b->id; });

  struct Sentence {
    ClozeExample cloze;
    std::size_t object = 0;
  };
  std::vector<Sentence> corpus;
  for (const auto* rel : ordered) {
    for (const auto& t : tuples_of(tuples, rel->id)) {
      const auto target = object_id(model, t.object);
      const auto n = rel->patterns.size();
      std::vector<bool> keep(n);
      bool any = false;
      for (std::size_t p = 0; p < n; ++p) {
        keep[p] = uniform01(rng) < config.pattern_exposure;
        any = any || keep[p];
      }
      if (!any) keep[uniform_index(rng, n)] = true;
      for (std::size_t p = 0; p < n; ++p) {
        if (keep[p]) corpus.push_back({make_cloze(model, *rel, p, t.subject), target});
      }
    }
  }
  if (corpus.empty()) return model;

  const auto mask_id = model.vocab().mask_id();
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle(std::span(corpus), rng);
    for (std::size_t i = 0; i < corpus.size(); i += config.batch_size) {
      const auto end = std::min(corpus.size(), i + config.batch_size);
      std::vector<MlmExample> examples;
      std::size_t positions = 0;
      for (std::size_t k = i; k < end; ++k) {
        examples.push_back(make_mlm_example(corpus[k].cloze, corpus[k].object, mask_id,
                                            config.mlm_mask_rate, rng));
        positions += examples.back().positions.size();
      }
      auto grad = ToyParams::zeros(model.vocab().size(), model.dims());
      const double scale = 1.0 / static_cast<double>(positions);
      const auto totals = mlm_accumulate(model, examples, scale, &grad);
      ++step;
      if (!std::isfinite(totals.loss) || !grad.all_finite()) {
        throw TrainingDiverged(step, totals.loss);
      }
      sgd_step(model, grad, config.learning_rate);
    }
  }
  return model;
}

Vocabulary vocabulary_for(std::span<const Relation> relations, std::span<const KBTuple> tuples) {
  std::set<std::string> tokens;
  for (const auto& r : relations) {
    for (const auto& p : r.patterns) {
      for (auto& t : toy_tokenize(populate_text(p, " ", " "))) tokens.insert(std::move(t));
    }
  }
  for (const auto& t : tuples) {
    for (auto& tok : toy_tokenize(t.subject)) tokens.insert(std::move(tok));
    for (auto& tok : toy_tokenize(t.object)) tokens.insert(std::move(tok));
  }
  tokens.erase(std::string(kMaskToken));
  tokens.erase(std::string(kUnknownToken));
  const std::vector<std::string> list(tokens.begin(), tokens.end());
  return Vocabulary(list);
}

}  // namespace conslab
