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

#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "support.hpp"

namespace vw = versewright;
using namespace vwtest;
using MatD = vw::Mat<double>;

// ---------------------------------------------------------------------------
// Tape operations against central differences

namespace {

MatD random_mat(vw::Rng& rng, int r, int c, double scale = 1.0) {
  MatD m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * (2.0 * rng.uniform() - 1.0);
  return m;
}

// sum(out .* w) as a recorded scalar.
vw::Var weighted_sum(vw::Tape<double>& tape, vw::Var v, const MatD& w) {
  MatD out(1, 1);
  out(0, 0) = tape.value(v).cwiseProduct(w).sum();
  return tape.record(std::move(out), {v}, [&tape, v, w](const MatD& g) { tape.grad(v) += w * g(0, 0); });
}

using OpFn = std::function<vw::Var(vw::Tape<double>&, std::vector<vw::Var>&)>;

// Compares analytic and numeric gradients for every input entry.
double max_op_error(std::vector<vw::Parameter<double>> inputs, const OpFn& op, std::uint64_t seed) {
  vw::Rng rng(seed);
  MatD w;
  auto evaluate = [&](bool grad) {
    vw::Tape<double> tape(grad);
    std::vector<vw::Var> vars;
    for (auto& p : inputs) vars.push_back(tape.param(p));
    const vw::Var out = op(tape, vars);
    if (w.size() == 0) w = random_mat(rng, static_cast<int>(tape.value(out).rows()), static_cast<int>(tape.value(out).cols()));
    const vw::Var loss = weighted_sum(tape, out, w);
    if (grad) tape.backward(loss);
    return tape.value(loss)(0, 0);
  };
  for (auto& p : inputs) p.zero_grad();
  evaluate(true);
  double worst = 0.0;
  const double h = 1e-6;
  for (auto& p : inputs) {
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      const double keep = p.value.data()[i];
      p.value.data()[i] = keep + h;
      const double up = evaluate(false);
      p.value.data()[i] = keep - h;
      const double down = evaluate(false);
      p.value.data()[i] = keep;
      const double numeric = (up - down) / (2 * h);
      worst = std::max(worst, std::abs(numeric - p.grad.data()[i]) / std::max(1.0, std::abs(numeric)));
    }
  }
  return worst;
}

vw::Parameter<double> param(vw::Rng& rng, int r, int c, double scale = 1.0) {
  return {"p", random_mat(rng, r, c, scale), {}, true};
}

}  // namespace

TEST(Tape, ElementaryGradients) {
  vw::Rng rng(1);
  const double tol = 1e-7;
  EXPECT_LT(max_op_error({param(rng, 3, 4), param(rng, 4, 2)}, [](auto& t, auto& v) { return t.matmul(v[0], v[1]); }, 1), tol);
  EXPECT_LT(max_op_error({param(rng, 3, 4), param(rng, 5, 4)}, [](auto& t, auto& v) { return t.matmul_nt(v[0], v[1]); }, 2), tol);
  EXPECT_LT(max_op_error({param(rng, 3, 4), param(rng, 3, 4)}, [](auto& t, auto& v) { return t.add(v[0], v[1]); }, 3), tol);
  EXPECT_LT(max_op_error({param(rng, 3, 4), param(rng, 1, 4)}, [](auto& t, auto& v) { return t.add_row(v[0], v[1]); }, 4), tol);
  EXPECT_LT(max_op_error({param(rng, 3, 4)}, [](auto& t, auto& v) { return t.scale(v[0], 0.37); }, 5), tol);
  EXPECT_LT(max_op_error({param(rng, 5, 3)}, [](auto& t, auto& v) {
              const std::vector<int> idx = {4, 0, 4, 2};
              return t.gather(v[0], idx);
            }, 6), tol);
  EXPECT_LT(max_op_error({param(rng, 3, 6), param(rng, 1, 6), param(rng, 1, 6)},
                         [](auto& t, auto& v) { return t.layer_norm(v[0], v[1], v[2]); }, 7), 1e-6);
  EXPECT_LT(max_op_error({param(rng, 3, 4, 3.0)}, [](auto& t, auto& v) { return t.gelu(v[0]); }, 8), tol);
  EXPECT_LT(max_op_error({param(rng, 3, 6)}, [](auto& t, auto& v) { return t.cols(v[0], 2, 3); }, 9), tol);
  EXPECT_LT(max_op_error({param(rng, 3, 2), param(rng, 3, 3)}, [](auto& t, auto& v) { return t.hconcat({v[0], v[1]}); }, 10), tol);
  EXPECT_LT(max_op_error({param(rng, 4, 4, 2.0)}, [](auto& t, auto& v) { return t.softmax_rows(v[0], false); }, 11), tol);
  EXPECT_LT(max_op_error({param(rng, 4, 4, 2.0)}, [](auto& t, auto& v) { return t.softmax_rows(v[0], true); }, 12), tol);
  EXPECT_LT(max_op_error({param(rng, 1, 1), param(rng, 1, 1)}, [](auto& t, auto& v) { return t.sum({v[0], v[1], v[0]}); }, 13), tol);
  EXPECT_LT(max_op_error({param(rng, 3, 5)}, [](auto& t, auto& v) {
              vw::Rng drop(99);  // same mask on every evaluation
              return t.dropout(v[0], 0.5, &drop);
            }, 14), tol);
}

TEST(Tape, CausalSoftmaxMasksFuture) {
  vw::Tape<double> tape(false);
  vw::Rng rng(2);
  const auto y = tape.value(tape.softmax_rows(tape.constant(random_mat(rng, 3, 3)), true));
  EXPECT_DOUBLE_EQ(y(0, 0), 1.0);
  EXPECT_EQ(y(0, 1), 0.0);
  EXPECT_EQ(y(1, 2), 0.0);
  EXPECT_NEAR(y.row(2).sum(), 1.0, 1e-15);
}

TEST(Tape, DropoutStatistics) {
  vw::Tape<double> tape(false);
  vw::Rng rng(3);
  const auto x = tape.constant(MatD::Ones(200, 200));
  const auto y = tape.value(tape.dropout(x, 0.25, &rng));
  const double zeros = static_cast<double>((y.array() == 0.0).count()) / static_cast<double>(y.size());
  EXPECT_NEAR(zeros, 0.25, 0.01);
  EXPECT_NEAR(y.mean(), 1.0, 0.02);
  EXPECT_EQ(tape.value(tape.dropout(x, 0.25, nullptr)), MatD::Ones(200, 200));
}

TEST(Tape, Errors) {
  vw::Tape<double> tape;
  const auto a = tape.constant(MatD::Ones(2, 3));
  EXPECT_THROW(tape.matmul(a, a), vw::UsageError);
  const std::vector<int> idx = {2};
  EXPECT_THROW(tape.gather(a, idx), vw::UsageError);
  EXPECT_THROW(tape.backward(a), vw::InternalError);
  vw::Tape<double> nograd(false);
  EXPECT_THROW(nograd.backward(nograd.constant(MatD::Ones(1, 1))), vw::InternalError);
}

// ---------------------------------------------------------------------------
// Losses

TEST(Loss, VowelPartitionSumsToOne) {
  vw::Rng rng(4);
  const std::vector<vw::VowelId> vowel_of = {0, 1, 1, 2, 3, 3, 3, 0};
  for (int i = 0; i < 200; ++i) {
    const MatD logits = random_mat(rng, 1, 8, 10.0);
    const auto p = vw::softmax(logits.row(0));
    const auto pv = vw::vowel_distribution(p, vowel_of, 4);
    double s = 0.0;
    for (double x : pv) s += x;
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Loss, HandExample) {
  // Tokens [ai, ai, ou] with p = (0.4, 0.4, 0.2): p(ai) = 0.8, loss = -ln 0.8.
  MatD logits(1, 3);
  logits << std::log(0.4), std::log(0.4), std::log(0.2);
  const std::vector<vw::VowelId> vowel_of = {1, 1, 2};
  const std::vector<int> labels = {1};
  const auto r = vw::vowel_loss<double>(logits, labels, vowel_of);
  EXPECT_NEAR(r.value, 0.22314, 1e-5);
  EXPECT_EQ(r.labeled, 1u);
}

TEST(Loss, NoLabelsAndClamping) {
  MatD logits(2, 3);
  logits << 0, 0, -2000, 1, 2, 3;
  const std::vector<vw::VowelId> vowel_of = {1, 1, 2};
  const std::vector<int> none = {vw::kAbsent, vw::kAbsent};
  const auto r0 = vw::vowel_loss<double>(logits, none, vowel_of);
  EXPECT_TRUE(r0.no_labels());
  EXPECT_EQ(r0.value, 0.0);
  const std::vector<int> starved = {2, vw::kAbsent};
  const auto r1 = vw::vowel_loss<double>(logits, starved, vowel_of);
  EXPECT_EQ(r1.clamped, 1u);
  EXPECT_NEAR(r1.value, -std::log(1e-12), 1e-9);
}

TEST(Loss, TokenLossBasics) {
  const MatD uniform = MatD::Zero(3, 7);
  const std::vector<int> targets = {0, 3, 6};
  EXPECT_NEAR(vw::token_loss<double>(uniform, targets), std::log(7.0), 1e-12);
  const std::vector<std::uint8_t> none = {0, 0, 0};
  EXPECT_THROW(vw::token_loss<double>(uniform, targets, none), vw::UsageError);
  const std::vector<std::uint8_t> first = {1, 0, 0};
  MatD peaked = MatD::Zero(3, 7);
  peaked(1, 0) = 50;
  EXPECT_NEAR(vw::token_loss<double>(peaked, targets, first), std::log(7.0), 1e-12);
}

TEST(Loss, FusedLossMatchesReferenceAndGradient) {
  vw::Rng rng(5);
  const std::vector<vw::VowelId> vowel_of = {0, 1, 1, 2, 2, 2};
  vw::TrainingExample ex;
  ex.targets = {1, 4, 0, 5};
  ex.target_vowels = {1, vw::kAbsent, 2, 2};
  for (double alpha : {0.0, 1.0, 2.5}) {
    vw::Parameter<double> z{"z", random_mat(rng, 4, 6, 3.0), {}, false};
    auto value = [&](bool grad) {
      vw::Tape<double> tape(grad);
      const auto v = tape.param(z);
      const auto loss = vw::masked_lm_loss(tape, v, ex, vowel_of, alpha, 4, 3);
      if (grad) tape.backward(loss);
      return tape.value(loss)(0, 0);
    };
    z.zero_grad();
    const double l = value(true);
    const double ref = vw::token_loss<double>(z.value, ex.targets) +
                       alpha * vw::vowel_loss<double>(z.value, ex.target_vowels, vowel_of).value;
    EXPECT_NEAR(l, ref, 1e-12);
    for (Eigen::Index i = 0; i < z.value.size(); ++i) {
      const double keep = z.value.data()[i];
      z.value.data()[i] = keep + 1e-6;
      const double up = value(false);
      z.value.data()[i] = keep - 1e-6;
      const double down = value(false);
      z.value.data()[i] = keep;
      EXPECT_NEAR((up - down) / 2e-6, z.grad.data()[i], 1e-7);
    }
  }
}

// ---------------------------------------------------------------------------
// Model

namespace {

struct Fixture {
  vw::Song song = song_of();
  vw::Vocabulary vocab = vw::build_vocabulary({song});
  vw::ModelConfig config = tiny_config(vocab, lexicon());

  static vw::Song song_of() { return vwtest::song({"春风吹过来", "花开人归来", "山高路远走"}); }

  vw::TrainingExample example(std::uint64_t seed, vw::MaskScheme scheme = vw::MaskScheme::kToken) const {
    vw::Rng rng(seed);
    auto plan = vw::sample_mask_plan(song, scheme, rng, 0.6);
    return vw::assemble_example(song, plan, config.order, vocab, lexicon(), config.limits);
  }
};

}  // namespace

TEST(Model, ConfigValidationAndJson) {
  Fixture f;
  auto bad = f.config;
  bad.heads = 3;
  EXPECT_THROW(bad.validate(), vw::UsageError);
  bad = f.config;
  bad.dropout = 1.0;
  EXPECT_THROW(bad.validate(), vw::UsageError);
  auto c = f.config;
  c.order.token_order = vw::TokenOrder::kSequential;
  EXPECT_EQ(vw::to_json(vw::model_config_from_json(vw::to_json(c))), vw::to_json(c));
}

TEST(Model, TableShapes) {
  Fixture f;
  const vw::Model<double> m(f.config, 1);
  EXPECT_EQ(m.param("embed.token").value.rows(), static_cast<int>(f.vocab.size()));
  EXPECT_EQ(m.param("embed.sentence").value.rows(), f.config.limits.max_sentences + 1);
  EXPECT_EQ(m.param("embed.vowel").value.rows(), lexicon().class_count() + 1);
  EXPECT_EQ(m.param("out.w").value.cols(), static_cast<int>(f.vocab.size()));
  EXPECT_FALSE(m.param("embed.token").decay);
  EXPECT_TRUE(m.param("enc.0.ff1.w").decay);
}

TEST(Model, SeedDeterminesInitialization) {
  Fixture f;
  const vw::Model<float> a(f.config, 5), b(f.config, 5), c(f.config, 6);
  EXPECT_EQ(a.param("out.w").value, b.param("out.w").value);
  EXPECT_NE(a.param("out.w").value, c.param("out.w").value);
}

TEST(Model, IncrementalDecoderMatchesFullForward) {
  Fixture f;
  f.config.layers = 2;
  const vw::Model<double> m(f.config, 3);
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto ex = f.example(seed, vw::MaskScheme::kSent);
    ASSERT_FALSE(ex.targets.empty());
    const auto full = vw::forward(m, vw::Batch{{ex}})[0];
    vw::IncrementalDecoder<double> dec(m, vw::encode(m, ex));
    for (std::size_t t = 0; t < ex.targets.size(); ++t) {
      const auto row = dec.step(ex.dec_tokens[t], ex.dec_global[t], ex.dec_sentence[t], ex.dec_local[t]);
      EXPECT_LT((row - full.row(static_cast<Eigen::Index>(t))).cwiseAbs().maxCoeff(), 1e-10);
    }
  }
}

TEST(Model, BatchPadsWithZeroRows) {
  Fixture f;
  const vw::Model<float> m(f.config, 3);
  const auto a = f.example(1, vw::MaskScheme::kAll), b = f.example(2);
  const vw::Batch batch{{a, b}};
  const auto out = vw::forward(m, batch);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[1].rows(), static_cast<Eigen::Index>(a.targets.size()));
  const auto mask = batch.target_mask();
  for (std::size_t t = b.targets.size(); t < a.targets.size(); ++t) {
    EXPECT_EQ(out[1].row(static_cast<Eigen::Index>(t)).cwiseAbs().sum(), 0.0f);
    EXPECT_EQ(mask[a.targets.size() + t], 0);
  }
}

TEST(Model, GradientSpotCheck) {
  Fixture f;
  vw::Model<double> m(f.config, 9);
  const auto vowel_of = f.vocab.vowel_table(lexicon());
  vw::Batch batch{{f.example(4, vw::MaskScheme::kAll)}};
  batch.examples[0].target_vowels.assign(batch.examples[0].targets.size(), vw::kAbsent);
  for (std::size_t t = 0; t < batch.examples[0].targets.size(); t += 2) {
    const auto& p = batch.examples[0].target_positions[t];
    batch.examples[0].target_vowels[t] = lexicon().vowel_of(f.song.sentences[p.sentence][p.token]);
  }
  m.zero_grad();
  vw::batch_loss(m, batch, vowel_of, 1.0, true);
  vw::Rng rng(8);
  for (const char* name : {"embed.vowel", "enc.0.self.q.w", "dec.0.cross.v.w", "dec.0.ff2.b", "out.w", "enc.ln.g"}) {
    auto& p = m.param(name);
    for (int trial = 0; trial < 5; ++trial) {
      const auto i = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(p.value.size())));
      const double keep = p.value.data()[i];
      p.value.data()[i] = keep + 1e-5;
      const double up = vw::batch_loss(m, batch, vowel_of, 1.0, false).total;
      p.value.data()[i] = keep - 1e-5;
      const double down = vw::batch_loss(m, batch, vowel_of, 1.0, false).total;
      p.value.data()[i] = keep;
      const double numeric = (up - down) / 2e-5;
      EXPECT_NEAR(numeric, p.grad.data()[i], 1e-6 * std::max(1.0, std::abs(numeric))) << name;
    }
  }
}

// ---------------------------------------------------------------------------
// Checkpoints

TEST(Checkpoint, RoundTripIsBitExact) {
  Fixture f;
  const vw::Model<float> m(f.config, 4);
  vw::TrainerState<float> st;
  st.step = 3;
  st.example_counter = 24;
  st.dropout_rng = vw::Rng(5).state();
  for (const auto& p : m.params()) {
    st.adam_m.push_back(vw::Mat<float>::Constant(p.value.rows(), p.value.cols(), 0.5f));
    st.adam_v.push_back(vw::Mat<float>::Constant(p.value.rows(), p.value.cols(), 0.25f));
  }
  const auto bytes = vw::serialize_checkpoint(m, f.vocab, lexicon(), &st);
  EXPECT_EQ(bytes.substr(0, 8), "VWCKPT01");
  const auto ck = vw::deserialize_checkpoint<float>(bytes);
  EXPECT_EQ(ck.vocab, f.vocab);
  EXPECT_EQ(ck.lexicon_hash, lexicon().hash());
  EXPECT_EQ(ck.vowel_names, lexicon().names());
  for (const auto& p : m.params()) EXPECT_EQ(ck.model.param(p.name).value, p.value) << p.name;
  ASSERT_TRUE(ck.trainer.has_value());
  EXPECT_EQ(ck.trainer->step, 3);
  EXPECT_EQ(ck.trainer->example_counter, 24u);
  EXPECT_EQ(ck.trainer->adam_v.back()(0, 0), 0.25f);
  EXPECT_EQ(vw::serialize_checkpoint(ck.model, ck.vocab, lexicon(), &*ck.trainer), bytes);

  const auto widened = vw::deserialize_checkpoint<double>(bytes);
  EXPECT_EQ(widened.model.param("out.w").value.cast<float>(), m.param("out.w").value);
}

TEST(Checkpoint, CorruptInputsAreDataErrors) {
  Fixture f;
  const vw::Model<float> m(f.config, 4);
  const auto bytes = vw::serialize_checkpoint(m, f.vocab, lexicon());
  EXPECT_THROW(vw::deserialize_checkpoint<float>("nope"), vw::DataError);
  EXPECT_THROW(vw::deserialize_checkpoint<float>("XXXXXXXX" + bytes.substr(8)), vw::DataError);
  EXPECT_THROW(vw::deserialize_checkpoint<float>(bytes.substr(0, bytes.size() - 3)), vw::DataError);
  EXPECT_THROW(vw::deserialize_checkpoint<float>(bytes.substr(0, 40)), vw::DataError);
  EXPECT_THROW(vw::load_checkpoint<float>("/nonexistent/ck"), vw::DataError);
  EXPECT_THROW(vw::check_lexicon(lexicon().hash(), lexicon_from("来\tai\n")), vw::DataError);
  EXPECT_NO_THROW(vw::check_lexicon(lexicon().hash(), lexicon()));
}

// ---------------------------------------------------------------------------
// Training

namespace {

vw::TrainSchedule quick_schedule(std::uint64_t seed = 7) {
  vw::TrainSchedule s;
  s.batch_size = 4;
  s.lr = 3e-3;
  s.seed = seed;
  return s;
}

std::vector<vw::Song> small_corpus() { return vw::SyntheticSongs(lexicon(), {3, 4, 3, 5, 2, 0.0}).corpus(6, 3); }

}  // namespace

TEST(Trainer, ZeroStepsGivesOneRecord) {
  const auto corpus = small_corpus();
  const auto vocab = vw::build_vocabulary(corpus);
  vw::Trainer<float> tr(tiny_config(vocab, lexicon()), quick_schedule(), corpus, vocab, lexicon());
  const auto before = tr.model().param("out.w").value;
  const auto log = tr.run(0);
  ASSERT_EQ(log.size(), 1u);
  EXPECT_EQ(log[0].step, 0);
  EXPECT_EQ(tr.model().param("out.w").value, before);
}

TEST(Trainer, LossDecreases) {
  const auto corpus = small_corpus();
  const auto vocab = vw::build_vocabulary(corpus);
  vw::Trainer<float> tr(tiny_config(vocab, lexicon(), 32), quick_schedule(), corpus, vocab, lexicon());
  const auto log = tr.run(150);
  auto mean = [&](std::size_t from, std::size_t to) {
    double s = 0;
    for (std::size_t i = from; i < to; ++i) s += log[i].token_loss;
    return s / static_cast<double>(to - from);
  };
  EXPECT_LT(mean(130, 150), mean(0, 20) - 0.5);
}

TEST(Trainer, DeterministicAndResumable) {
  const auto corpus = small_corpus();
  const auto vocab = vw::build_vocabulary(corpus);
  auto cfg = tiny_config(vocab, lexicon());
  cfg.dropout = 0.1;
  vw::Trainer<float> straight(cfg, quick_schedule(), corpus, vocab, lexicon());
  straight.run(6);
  vw::Trainer<float> twin(cfg, quick_schedule(), corpus, vocab, lexicon());
  twin.run(6);
  for (const auto& p : straight.model().params()) EXPECT_EQ(twin.model().param(p.name).value, p.value);

  TempDir dir;
  vw::Trainer<float> first(cfg, quick_schedule(), corpus, vocab, lexicon());
  first.run(3);
  first.save(dir.file("half.ckpt"));
  vw::Trainer<float> second(vw::load_checkpoint<float>(dir.file("half.ckpt")), corpus, lexicon());
  second.run(3);
  EXPECT_EQ(second.step_count(), 6);
  for (const auto& p : straight.model().params()) EXPECT_EQ(second.model().param(p.name).value, p.value) << p.name;
}

TEST(Trainer, MismatchedInputsRejected) {
  const auto corpus = small_corpus();
  const auto vocab = vw::build_vocabulary(corpus);
  auto cfg = tiny_config(vocab, lexicon());
  cfg.vocab_size += 1;
  EXPECT_THROW(vw::Trainer<float>(cfg, quick_schedule(), corpus, vocab, lexicon()), vw::UsageError);
  EXPECT_THROW(vw::Trainer<float>(tiny_config(vocab, lexicon()), quick_schedule(), {}, vocab, lexicon()), vw::DataError);
  const vw::Model<float> m(tiny_config(vocab, lexicon()));
  TempDir dir;
  vw::save_checkpoint(dir.file("bare.ckpt"), m, vocab, lexicon());
  EXPECT_THROW(vw::Trainer<float>(vw::load_checkpoint<float>(dir.file("bare.ckpt")), corpus, lexicon()), vw::DataError);
}
