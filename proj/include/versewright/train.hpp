// Copyright 2026 The Versewright Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Training: per-step resampled mask plans, AdamW, JSONL step log.

#pragma once

#include <cmath>
#include <functional>
#include <ostream>

#include "versewright/checkpoint.hpp"
#include "versewright/loss.hpp"

namespace versewright {

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct BatchLoss {
  double total = 0.0;
  LossStats stats;
};

/// Batch mean of token_loss + alpha * vowel_loss. With `backprop`, gradients
/// are accumulated into the model's parameter grads (not zeroed here).
template <class T>
BatchLoss batch_loss(Model<T>& model, const Batch& batch, std::span<const VowelId> vowel_of, double alpha,
                     bool backprop, Rng* dropout = nullptr) {
  std::size_t tokens = 0, labeled = 0;
  for (const auto& ex : batch.examples) {
    tokens += ex.target_count();
    labeled += ex.labeled_count();
  }
  if (tokens == 0) throw UsageError("token loss over an all-padded batch");
  Tape<T> tape(backprop);
  Graph<T> graph(tape, model, dropout);
  BatchLoss out;
  std::vector<Var> parts;
  for (const auto& ex : batch.examples) {
    if (ex.targets.empty()) continue;
    Var logits = graph.forward(ex);
    parts.push_back(masked_lm_loss(tape, logits, ex, vowel_of, alpha, tokens, labeled, &out.stats));
  }
  Var total = tape.sum(parts);
  out.total = static_cast<double>(tape.value(total)(0, 0));
  if (backprop) tape.backward(total);
  return out;
}

struct TrainRecord {
  long step = 0;
  double token_loss = 0.0;
  double vowel_loss = 0.0;
  double lr = 0.0;
  std::uint64_t seed = 0;
  std::size_t labeled = 0;

  json to_json() const {
    return {{"step", step}, {"token_loss", token_loss}, {"vowel_loss", vowel_loss}, {"lr", lr}, {"seed", seed}};
  }
};

/// Owns the model and optimizer state. Example i of the run (counting
/// skipped ones) is built from a generator derived from (seed, i), so runs
/// are reproducible and resumable.
template <class T>
class Trainer {
 public:
  Trainer(const ModelConfig& config, const TrainSchedule& schedule, std::vector<Song> corpus, Vocabulary vocab,
          const VowelLexicon& lexicon, ContentLexicon keywords = {})
      : model_(config, splitmix64(schedule.seed)),
        corpus_(std::move(corpus)),
        vocab_(std::move(vocab)),
        lexicon_(lexicon),
        keywords_(std::move(keywords)),
        dropout_rng_(Rng::derive(schedule.seed, 0xD0D0D0D0ULL)) {
    state_.schedule = schedule;
    init();
  }

  /// Continues from a checkpoint carrying trainer state.
  Trainer(Checkpoint<T> checkpoint, std::vector<Song> corpus, const VowelLexicon& lexicon,
          ContentLexicon keywords = {})
      : model_(std::move(checkpoint.model)),
        corpus_(std::move(corpus)),
        vocab_(std::move(checkpoint.vocab)),
        lexicon_(lexicon),
        keywords_(std::move(keywords)) {
    check_lexicon(checkpoint.lexicon_hash, lexicon);
    if (!checkpoint.trainer) throw DataError("checkpoint has no trainer state to resume");
    state_ = std::move(*checkpoint.trainer);
    dropout_rng_.restore(state_.dropout_rng);
    init();
  }

  Model<T>& model() { return model_; }
  const Model<T>& model() const { return model_; }
  const Vocabulary& vocab() const { return vocab_; }
  const VowelLexicon& lexicon() const { return lexicon_; }
  const std::vector<VowelId>& vowel_table() const { return vowel_of_; }
  long step_count() const { return state_.step; }
  const TrainSchedule& schedule() const { return state_.schedule; }

  /// The next batch, advancing `counter` past every example consumed.
  Batch make_batch(std::uint64_t& counter) const {
    Batch batch;
    std::size_t guard = 0;
    while (static_cast<int>(batch.examples.size()) < state_.schedule.batch_size) {
      auto ex = make_example(counter++);
      if (!ex.targets.empty()) batch.examples.push_back(std::move(ex));
      if (++guard > 1000 + 100 * static_cast<std::size_t>(state_.schedule.batch_size))
        throw InternalError("could not assemble a non-empty batch");
    }
    return batch;
  }

  TrainingExample make_example(std::uint64_t index) const {
    const std::uint64_t n = corpus_.size();
    const std::uint64_t epoch = index / n;
    // Per-epoch song order.
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng shuffle = Rng::derive(state_.schedule.seed, 0xE0000000ULL + epoch);
    for (std::size_t i = 0; i + 1 < n; ++i) std::swap(order[i], order[i + shuffle.below(n - i)]);
    const Song& song = corpus_[order[index % n]];
    Rng rng = Rng::derive(state_.schedule.seed, index);
    const auto scheme = static_cast<MaskScheme>(rng.below(3));
    MaskPlan plan = sample_mask_plan(song, scheme, rng);
    plan.keywords = extract_keywords(song, plan, keywords_, rng);
    return assemble_example(song, plan, model_.config().order, vocab_, lexicon_, model_.config().limits);
  }

  double learning_rate() const {
    const auto& s = state_.schedule;
    if (s.warmup > 0 && state_.step < s.warmup) return s.lr * static_cast<double>(state_.step + 1) / static_cast<double>(s.warmup);
    return s.lr;
  }

  /// One optimizer step; the record holds the loss measured before the update.
  TrainRecord step() {
    Batch batch = make_batch(state_.example_counter);
    model_.zero_grad();
    const auto loss = batch_loss(model_, batch, vowel_of_, model_.config().vowel_loss_weight, true, &dropout_rng_);
    TrainRecord rec = record(loss);
    if (!std::isfinite(loss.total))
      throw DivergenceError("loss became non-finite at step " + std::to_string(state_.step) +
                            " (token " + std::to_string(rec.token_loss) + ", vowel " + std::to_string(rec.vowel_loss) + ")");
    apply_update();
    ++state_.step;
    if (!model_.all_finite()) throw DivergenceError("parameters became non-finite at step " + std::to_string(state_.step));
    return rec;
  }

  /// Loss on the upcoming batch without dropout, leaving the state untouched.
  TrainRecord evaluate() const {
    std::uint64_t counter = state_.example_counter;
    Batch batch = make_batch(counter);
    auto& model = const_cast<Model<T>&>(model_);
    return record(batch_loss(model, batch, vowel_of_, model_.config().vowel_loss_weight, false));
  }

  /// `steps` updates followed by one evaluation record.
  std::vector<TrainRecord> run(long steps, const std::function<void(const TrainRecord&)>& on_record = {}) {
    std::vector<TrainRecord> log;
    for (long i = 0; i < steps; ++i) {
      log.push_back(step());
      if (on_record) on_record(log.back());
    }
    log.push_back(evaluate());
    if (on_record) on_record(log.back());
    return log;
  }

  TrainerState<T> state() const {
    TrainerState<T> s = state_;
    s.dropout_rng = dropout_rng_.state();
    return s;
  }

  void save(const std::string& path) const {
    const auto s = state();
    save_checkpoint(path, model_, vocab_, lexicon_, &s);
  }

 private:
  void init() {
    if (corpus_.empty()) throw DataError("empty corpus");
    const auto& cfg = model_.config();
    if (static_cast<int>(vocab_.size()) != cfg.vocab_size) throw UsageError("vocabulary size does not match the model");
    if (lexicon_.class_count() != cfg.vowel_classes) throw UsageError("vowel class count does not match the model");
    vowel_of_ = vocab_.vowel_table(lexicon_);
    if (state_.adam_m.empty()) {
      for (const auto& p : model_.params()) {
        state_.adam_m.push_back(Mat<T>::Zero(p.value.rows(), p.value.cols()));
        state_.adam_v.push_back(Mat<T>::Zero(p.value.rows(), p.value.cols()));
      }
    }
    if (state_.adam_m.size() != model_.params().size()) throw DataError("optimizer state does not match the model");
  }

  TrainRecord record(const BatchLoss& loss) const {
    TrainRecord r;
    r.step = state_.step;
    r.token_loss = loss.stats.token_mean();
    r.vowel_loss = loss.stats.vowel_mean();
    r.labeled = loss.stats.labeled;
    r.lr = learning_rate();
    r.seed = state_.schedule.seed;
    return r;
  }

  void apply_update() {
    const auto& s = state_.schedule;
    const double lr = learning_rate();
    double scale = 1.0;
    if (s.clip_norm > 0.0) {
      double sq = 0.0;
      for (const auto& p : model_.params()) sq += static_cast<double>(p.grad.squaredNorm());
      const double norm = std::sqrt(sq);
      if (norm > s.clip_norm) scale = s.clip_norm / norm;
    }
    const double t = static_cast<double>(state_.step + 1);
    const double c1 = 1.0 - std::pow(s.beta1, t), c2 = 1.0 - std::pow(s.beta2, t);
    for (std::size_t i = 0; i < model_.params().size(); ++i) {
      auto& p = model_.params()[i];
      auto& m = state_.adam_m[i];
      auto& v = state_.adam_v[i];
      const Mat<T> g = p.grad * T(scale);
      m = T(s.beta1) * m + T(1.0 - s.beta1) * g;
      v = T(s.beta2) * v + T(1.0 - s.beta2) * g.cwiseProduct(g);
      const Mat<T> update = ((m / T(c1)).array() / ((v / T(c2)).array().sqrt() + T(s.adam_eps))).matrix();
      if (p.decay) p.value *= T(1.0 - lr * s.weight_decay);
      p.value -= T(lr) * update;
    }
  }

  Model<T> model_;
  std::vector<Song> corpus_;
  Vocabulary vocab_;
  VowelLexicon lexicon_;
  ContentLexicon keywords_;
  Rng dropout_rng_;
  TrainerState<T> state_;
  std::vector<VowelId> vowel_of_;
};

}  // namespace versewright
