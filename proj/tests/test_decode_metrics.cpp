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

#include "support.hpp"

namespace vw = versewright;
using namespace vwtest;

// ---------------------------------------------------------------------------
// End-rhyme adjustment

namespace {

// Three regular tokens A,B,C with vowels (ai, ai, ou) after the specials.
struct Abc {
  vw::VowelLexicon lex = lexicon_from("来\tai\n开\tai\n走\tou\n");
  vw::VowelId ai = *lex.find("ai"), ou = *lex.find("ou");
  std::vector<vw::VowelId> vowel_of = {ai, ai, ou};
};

}  // namespace

TEST(AdjustEnd, WorkedExample) {
  Abc abc;
  // A's vowel is a history vowel; B is a history token whose vowel is not.
  std::vector<vw::VowelId> vowel_of = {abc.ai, abc.ou, vw::kNoVowel};
  vw::RhymeHistory h;
  h.end_vowels = {abc.ai};
  h.end_tokens = {1};
  const std::vector<double> p = {0.5, 0.3, 0.2};
  const auto out = vw::adjust_end_distribution(p, h, 1.4, 0.3, vowel_of);
  EXPECT_NEAR(out[0], 0.70707, 1e-5);
  EXPECT_NEAR(out[1], 0.09091, 1e-5);
  EXPECT_NEAR(out[2], 0.20202, 1e-5);
}

TEST(AdjustEnd, IdentityCases) {
  Abc abc;
  const std::vector<double> p = {0.5, 0.3, 0.2};
  vw::RhymeHistory h;
  EXPECT_EQ(vw::adjust_end_distribution(p, h, 1.4, 0.3, abc.vowel_of), p);
  h.add(0, abc.ai);
  h.add(2, abc.ou);
  const auto same = vw::adjust_end_distribution(p, h, 1.0, 1.0, abc.vowel_of);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(same[i], p[i], 1e-15);
}

TEST(AdjustEnd, ScaleInvariantAndSupportPreserving) {
  vw::Rng rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    const int n = 2 + static_cast<int>(rng.below(20));
    std::vector<double> p(n), scaled(n);
    std::vector<vw::VowelId> vowel_of(n);
    double z = 0;
    for (int i = 0; i < n; ++i) {
      p[i] = rng.bernoulli(0.2) ? 0.0 : rng.uniform();
      z += p[i];
      vowel_of[i] = static_cast<vw::VowelId>(rng.below(4));
    }
    if (z == 0) continue;
    const double c = 0.1 + 10 * rng.uniform();
    for (int i = 0; i < n; ++i) {
      scaled[i] = p[i] * c;
      p[i] /= z;
    }
    vw::RhymeHistory h;
    for (int i = 0; i < n; ++i)
      if (rng.bernoulli(0.3)) h.add(i, vowel_of[i]);
    const auto a = vw::adjust_end_distribution(p, h, 1.4, 0.3, vowel_of);
    const auto b = vw::adjust_end_distribution(scaled, h, 1.4, 0.3, vowel_of);
    double sum = 0;
    for (int i = 0; i < n; ++i) {
      EXPECT_NEAR(a[i], b[i], 1e-12);
      EXPECT_EQ(a[i] > 0, p[i] > 0);
      sum += a[i];
    }
    EXPECT_NEAR(sum, 1.0, 1e-9);
  }
}

TEST(AdjustEnd, Errors) {
  Abc abc;
  vw::RhymeHistory h;
  const std::vector<double> zero = {0, 0, 0}, p = {0.5, 0.3, 0.2};
  EXPECT_THROW(vw::adjust_end_distribution(zero, h, 1.4, 0.3, abc.vowel_of), vw::UsageError);
  EXPECT_THROW(vw::adjust_end_distribution(p, h, 0.0, 0.3, abc.vowel_of), vw::UsageError);
  EXPECT_THROW(vw::adjust_end_distribution(p, h, 1.4, -1.0, abc.vowel_of), vw::UsageError);
  const std::vector<double> short_p = {1.0};
  EXPECT_THROW(vw::adjust_end_distribution(short_p, h, 1.4, 0.3, abc.vowel_of), vw::UsageError);
}

TEST(RhymeHistory, NoVowelNeverInserted) {
  vw::RhymeHistory h;
  h.add(12, vw::kNoVowel);
  EXPECT_TRUE(h.end_vowels.empty());
  EXPECT_EQ(h.end_tokens.count(12), 1u);
}

// ---------------------------------------------------------------------------
// Vowel constraint and top-k

TEST(VowelConstraint, HardAndSoft) {
  Abc abc;
  const std::vector<double> p = {0.5, 0.3, 0.2};
  const auto hard = vw::apply_vowel_constraint(p, abc.ai, vw::VowelMode::kHard, abc.vowel_of);
  EXPECT_NEAR(hard[0], 0.625, 1e-15);
  EXPECT_NEAR(hard[1], 0.375, 1e-15);
  EXPECT_EQ(hard[2], 0.0);
  EXPECT_EQ(vw::apply_vowel_constraint(p, abc.ai, vw::VowelMode::kSoft, abc.vowel_of), p);
  const std::vector<vw::VowelId> all_ai = {abc.ai, abc.ai, abc.ai};
  EXPECT_EQ(vw::apply_vowel_constraint(p, abc.ai, vw::VowelMode::kHard, all_ai), p);
  EXPECT_THROW(vw::apply_vowel_constraint(p, *abc.lex.find("ai") + 5, vw::VowelMode::kHard, abc.vowel_of),
               vw::NoVowelSupport);
  EXPECT_EQ(vw::parse_vowel_mode("hard"), vw::VowelMode::kHard);
  EXPECT_THROW(vw::parse_vowel_mode("firm"), vw::UsageError);
}

TEST(TopK, ArgmaxTruncationAndTies) {
  vw::Rng rng(1);
  const std::vector<double> p = {0.5, 0.3, 0.2};
  std::array<int, 3> counts{};
  for (int i = 0; i < 2000; ++i) {
    EXPECT_EQ(vw::top_k_sample(p, 1, rng), 0);
    ++counts[static_cast<std::size_t>(vw::top_k_sample(p, 2, rng))];
  }
  EXPECT_EQ(counts[2], 0);
  EXPECT_NEAR(counts[0] / 2000.0, 0.625, 0.04);
  const std::vector<double> tied = {0.2, 0.4, 0.4};
  EXPECT_EQ(vw::top_k_sample(tied, 1, rng), 1);
  std::array<int, 3> full{};
  for (int i = 0; i < 20000; ++i) ++full[static_cast<std::size_t>(vw::top_k_sample(p, 99, rng))];
  EXPECT_NEAR(full[2] / 20000.0, 0.2, 0.015);
  EXPECT_THROW(vw::top_k_sample(p, 0, rng), vw::UsageError);
}

// ---------------------------------------------------------------------------
// Generation

namespace {

struct Decoding {
  std::vector<vw::Song> corpus = vw::SyntheticSongs(lexicon()).corpus(12, 5);
  vw::Vocabulary vocab = vw::build_vocabulary(corpus);
  vw::Model<double> model{tiny_config(vocab, lexicon()), 11};

  vw::RewriteRequest request(const vw::Song& s, vw::MaskScheme scheme, std::uint64_t seed) const {
    vw::Rng rng(seed);
    vw::RewriteRequest req;
    req.song = s;
    req.masked = vw::sample_mask_plan(s, scheme, rng).masked;
    req.config.seed = seed;
    return req;
  }
};

bool same_song(const vw::Song& a, const vw::Song& b) { return a.lines() == b.lines(); }

}  // namespace

TEST(Generate, EmptyMaskReturnsInput) {
  Decoding d;
  vw::RewriteRequest req;
  req.song = d.corpus[0];
  const auto r = vw::rewrite(d.model, d.vocab, lexicon(), req);
  EXPECT_TRUE(r.generation.tokens.empty());
  EXPECT_TRUE(same_song(r.song, req.song));
}

TEST(Generate, LengthContractAndUntouchedTokens) {
  Decoding d;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto& src = d.corpus[seed % d.corpus.size()];
    const auto req = d.request(src, static_cast<vw::MaskScheme>(seed % 3), seed);
    const auto r = vw::rewrite(d.model, d.vocab, lexicon(), req);
    ASSERT_EQ(r.generation.tokens.size(), req.masked.size());
    ASSERT_EQ(r.song.sentences.size(), src.sentences.size());
    for (std::size_t s = 0; s < src.sentences.size(); ++s) {
      ASSERT_EQ(r.song.sentences[s].size(), src.sentences[s].size());
      for (std::size_t t = 0; t < src.sentences[s].size(); ++t) {
        const vw::Position p{static_cast<int>(s), static_cast<int>(t)};
        EXPECT_EQ(r.generated[s][t], req.masked.count(p) > 0);
        if (!req.masked.count(p)) {
          EXPECT_EQ(r.song.sentences[s][t].surface, src.sentences[s][t].surface);
        }
        EXPECT_FALSE(vw::special::is_special(r.song.sentences[s][t].surface));
      }
    }
  }
}

TEST(Generate, AllMaskGeneratesEveryToken) {
  Decoding d;
  const auto req = d.request(d.corpus[1], vw::MaskScheme::kAll, 3);
  const auto r = vw::generate(d.model, d.vocab, lexicon(), req);
  EXPECT_EQ(r.tokens.size(), d.corpus[1].token_count());
  EXPECT_EQ(r.end_steps.size(), d.corpus[1].sentences.size());
}

TEST(Generate, SeedDeterminism) {
  Decoding d;
  auto req = d.request(d.corpus[2], vw::MaskScheme::kAll, 4);
  const auto a = vw::rewrite(d.model, d.vocab, lexicon(), req);
  const auto b = vw::rewrite(d.model, d.vocab, lexicon(), req);
  EXPECT_TRUE(same_song(a.song, b.song));
  req.config.seed = 5;
  const auto c = vw::rewrite(d.model, d.vocab, lexicon(), req);
  EXPECT_FALSE(same_song(a.song, c.song));
}

TEST(Generate, HardModeHonoursEveryConstraint) {
  Decoding d;
  std::set<vw::VowelId> available;
  for (auto v : d.vocab.vowel_table(lexicon()))
    if (v != vw::kNoVowel) available.insert(v);
  vw::Rng rng(9);
  std::size_t constrained = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto req = d.request(d.corpus[seed % d.corpus.size()], vw::MaskScheme::kToken, seed);
    req.config.vowel_mode = vw::VowelMode::kHard;
    for (const auto& p : req.masked) {
      if (!rng.bernoulli(0.5)) continue;
      req.required_vowels[p] = static_cast<vw::VowelId>(1 + rng.below(static_cast<std::uint64_t>(lexicon().class_count() - 1)));
    }
    const auto r = vw::rewrite(d.model, d.vocab, lexicon(), req);
    std::set<vw::Position> fell_back;
    for (const auto& e : r.generation.events)
      if (e.kind == "fallback") fell_back.insert(e.position);
    for (const auto& [p, v] : req.required_vowels) {
      ++constrained;
      const auto got = lexicon().vowel_of(r.song.sentences[static_cast<std::size_t>(p.sentence)][static_cast<std::size_t>(p.token)]);
      EXPECT_EQ(fell_back.count(p) > 0, !available.count(v));
      if (!fell_back.count(p)) {
        EXPECT_EQ(got, v);
      }
    }
  }
  EXPECT_GT(constrained, 20u);
}

TEST(Generate, RequiredVowelMustBeMasked) {
  Decoding d;
  vw::RewriteRequest req;
  req.song = d.corpus[0];
  req.required_vowels[{0, 0}] = 1;
  EXPECT_THROW(vw::generate(d.model, d.vocab, lexicon(), req), vw::UsageError);
}

TEST(Generate, HistorySeededFromUnmaskedSentences) {
  Decoding d;
  const auto s = song({"春风吹过来", "花开人归去", "山高路远走"});
  const auto vocab = vw::build_vocabulary({s});
  const vw::Model<double> m(tiny_config(vocab, lexicon()), 2);
  vw::RewriteRequest req;
  req.song = s;
  req.masked = {{2, 4}, {2, 3}};
  const auto r = vw::generate(m, vocab, lexicon(), req);
  ASSERT_EQ(r.end_step_histories.size(), 1u);
  const auto& h = r.end_step_histories[0];
  EXPECT_EQ(h.end_tokens, (std::set<vw::TokenId>{vocab.id("来"), vocab.id("去")}));
  EXPECT_EQ(h.end_vowels, (std::set<vw::VowelId>{*lexicon().find("ai"), *lexicon().find("v")}));

  req.config.history_reset_period = 1;
  const auto reset = vw::generate(m, vocab, lexicon(), req);
  EXPECT_TRUE(reset.end_step_histories[0].empty());
  req.config.history_reset_period = 3;
  EXPECT_EQ(vw::generate(m, vocab, lexicon(), req).end_step_histories[0].end_tokens, h.end_tokens);
}

TEST(Generate, ArgmaxDominance) {
  Decoding d;
  const auto vowel_of = d.vocab.vowel_table(lexicon());
  std::size_t checked = 0, suppressed = 0;
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    auto req = d.request(d.corpus[seed], vw::MaskScheme::kAll, seed);
    req.config.k = 1;
    req.config.lambda = 1e6;
    req.config.gamma = 1.0;
    auto r = vw::generate(d.model, d.vocab, lexicon(), req);
    for (std::size_t i = 0; i < r.end_steps.size(); ++i) {
      const auto& h = r.end_step_histories[i];
      const auto& p = r.end_step_distributions[i];
      double mass = 0;
      for (std::size_t j = 0; j < p.size(); ++j)
        if (h.end_vowels.count(vowel_of[j])) mass += p[j];
      if (mass == 0) continue;
      ++checked;
      EXPECT_TRUE(h.end_vowels.count(vowel_of[static_cast<std::size_t>(r.tokens[r.end_steps[i]])]));
    }
    req.config.lambda = 1.0;
    req.config.gamma = 1e-9;
    r = vw::generate(d.model, d.vocab, lexicon(), req);
    for (std::size_t i = 0; i < r.end_steps.size(); ++i) {
      const auto& h = r.end_step_histories[i];
      const auto& p = r.end_step_distributions[i];
      bool other = false;
      for (std::size_t j = 0; j < p.size(); ++j) other |= p[j] > 0 && !h.end_tokens.count(static_cast<vw::TokenId>(j));
      if (!other) continue;
      ++suppressed;
      EXPECT_FALSE(h.end_tokens.count(r.tokens[r.end_steps[i]]));
    }
  }
  EXPECT_GT(checked, 20u);
  EXPECT_GT(suppressed, 20u);
}

TEST(Splice, Contract) {
  const auto s = song({"春风吹过来", "花开"});
  EXPECT_TRUE(same_song(vw::splice(s, {}, {}), s));
  const auto one = vw::splice(s, {{1, 0}}, {"月"});
  EXPECT_EQ(one.lines(), (std::vector<std::string>{"春风吹过来", "月开"}));
  EXPECT_THROW(vw::splice(s, {{1, 0}}, {}), vw::UsageError);
  EXPECT_THROW(vw::splice(s, {{1, 2}}, {"月"}), vw::UsageError);
}

TEST(Report, CarriesSeedAndEndColumns) {
  Decoding d;
  auto req = d.request(d.corpus[0], vw::MaskScheme::kSent, 8);
  const auto r = vw::rewrite(d.model, d.vocab, lexicon(), req);
  const auto j = vw::decode_report(r, lexicon(), req.config);
  EXPECT_EQ(j["seed"], 8);
  EXPECT_EQ(j["end_tokens"].size(), d.corpus[0].sentences.size());
  EXPECT_EQ(j["config"]["lambda"], 1.4);
  EXPECT_TRUE(j["fallback_events"].empty());
}

// ---------------------------------------------------------------------------
// Metrics

namespace {

vw::Song four_lines() { return song({"春风吹过来", "花开人归来", "山高路远走", "明月照心开"}); }

vw::Song letters(const std::vector<std::string>& lines) {
  vw::Song s;
  for (const auto& l : lines) {
    std::vector<vw::Token> toks;
    for (char c : l) toks.push_back({std::string(1, c), vw::TokenKind::kLatin});
    s.sentences.push_back(toks);
  }
  return s;
}

class TableEmbedder : public vw::SentenceEmbedder {
 public:
  explicit TableEmbedder(std::map<std::string, std::vector<double>> t) : table_(std::move(t)) {}
  std::vector<double> embed(const std::vector<vw::Token>& s) const override { return table_.at(vw::detokenize(s)); }

 private:
  std::map<std::string, std::vector<double>> table_;
};

// Reference implementations by direct enumeration.
double brute_distinct(const vw::Song& s, int n) {
  std::vector<std::string> grams;
  for (const auto& sent : s.sentences)
    for (int i = 0; i + n <= static_cast<int>(sent.size()); ++i) {
      std::string g;
      for (int k = i; k < i + n; ++k) g += sent[static_cast<std::size_t>(k)].surface + '\x1f';
      grams.push_back(g);
    }
  if (grams.empty()) return 0.0;
  std::vector<std::string> uniq = grams;
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  return static_cast<double>(uniq.size()) / static_cast<double>(grams.size());
}

double brute_local(const std::vector<vw::VowelId>& v, int n) {
  int eligible = 0, rhymed = 0;
  for (int i = 0; i < static_cast<int>(v.size()); ++i) {
    if (v[i] == vw::kNoVowel) continue;
    ++eligible;
    int partners = 0;
    for (int j = 0; j < static_cast<int>(v.size()); ++j)
      if (j != i && std::abs(j - i) <= n && v[j] == v[i]) ++partners;
    rhymed += partners > 0;
  }
  return eligible < 2 ? 0.0 : static_cast<double>(rhymed) / eligible;
}

}  // namespace

TEST(Metrics, HandBuiltSong) {
  const auto s = four_lines();
  const auto ends = vw::end_vowels(s, lexicon());
  const auto ai = *lexicon().find("ai"), ou = *lexicon().find("ou");
  EXPECT_EQ(ends, (std::vector<vw::VowelId>{ai, ai, ou, ai}));
  EXPECT_EQ(vw::local_rhyme_n(ends, 1).value, 0.5);
  for (int n = 2; n <= 4; ++n) EXPECT_EQ(vw::local_rhyme_n(ends, n).value, 0.75);
  EXPECT_EQ(vw::rhyme_l(s, lexicon()).value, 0.6875);
  EXPECT_EQ(vw::rhyme_g(s, lexicon()).value, 0.5);
  EXPECT_EQ(vw::dist_rw(s).value, 0.75);
}

TEST(Metrics, RhymeEdgeCases) {
  const std::vector<vw::VowelId> same = {3, 3, 3, 3, 3}, distinct = {1, 2, 3, 4};
  EXPECT_EQ(vw::rhyme_l(same).value, 1.0);
  EXPECT_EQ(vw::rhyme_g(same).value, 1.0 - 1.0 / 5);
  EXPECT_EQ(vw::rhyme_l(distinct).value, 0.0);
  EXPECT_EQ(vw::rhyme_g(distinct).value, 0.0);
  const std::vector<vw::VowelId> sparse = {vw::kNoVowel, 2, vw::kNoVowel};
  EXPECT_FALSE(vw::rhyme_l(sparse).flag.empty());
  EXPECT_EQ(vw::rhyme_g(sparse).value, 0.0);
  // Ineligible lines neither count nor break a window.
  const std::vector<vw::VowelId> gap = {2, vw::kNoVowel, 2};
  EXPECT_EQ(vw::local_rhyme_n(gap, 1).value, 0.0);
  EXPECT_EQ(vw::local_rhyme_n(gap, 2).value, 1.0);
  EXPECT_EQ(vw::dist_rw(song({"来", "来", "来"})).value, 1.0 / 3);
}

TEST(Metrics, DistinctExamples) {
  EXPECT_DOUBLE_EQ(vw::distinct_n(letters({"aba"}), 1).value, 2.0 / 3);
  EXPECT_EQ(vw::distinct_n(letters({"abc"}), 1).value, 1.0);
  EXPECT_EQ(vw::distinct_n(letters({"ab", "ba"}), 2).value, 1.0);
  const auto short_song = vw::distinct_n(letters({"ab"}), 3);
  EXPECT_EQ(short_song.value, 0.0);
  EXPECT_FALSE(short_song.flag.empty());
  EXPECT_THROW(vw::distinct_n(vw::Song{}, 1), vw::UsageError);
}

TEST(Metrics, MatchBruteForceOnSyntheticSongs) {
  const vw::SyntheticSongs gen(lexicon(), {2, 10, 1, 7, 2, 0.2});
  for (const auto& s : gen.corpus(300, 17)) {
    for (int n = 1; n <= 4; ++n) EXPECT_EQ(vw::distinct_n(s, n).value, brute_distinct(s, n));
    const auto ends = vw::end_vowels(s, lexicon());
    for (int n = 1; n <= 4; ++n) EXPECT_EQ(vw::local_rhyme_n(ends, n).value, brute_local(ends, n));
  }
}

TEST(Metrics, Coherence) {
  const TableEmbedder e({{"a", {1, 0}}, {"b", {1, 1}}, {"c", {0, 1}}});
  const auto c = vw::coherence_scores(letters({"a", "b", "c"}), e);
  ASSERT_TRUE(c);
  EXPECT_NEAR(c->local, 1 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(c->global, std::sqrt(2.0) / 3, 1e-15);
  EXPECT_NEAR(c->coherence(), (c->local + c->global) / 2, 1e-15);
  const auto two = vw::coherence_scores(letters({"a", "b"}), e);
  EXPECT_EQ(two->local, two->global);
  EXPECT_FALSE(vw::coherence(letters({"a"}), e));

  Decoding d;
  const vw::ModelEmbedder<double> me(d.model, d.vocab, lexicon());
  const auto& line = d.corpus[0].sentences[0];
  const vw::Song repeated{std::nullopt, {line, line, line}};
  EXPECT_NEAR(*vw::coherence(repeated, me), 1.0, 1e-12);
}

TEST(Metrics, PerplexityOfUniformModel) {
  Decoding d;
  auto m = d.model;
  m.param("out.w").value.setZero();
  m.param("out.b").value.setZero();
  EXPECT_NEAR(vw::perplexity(m, d.vocab, lexicon(), d.corpus[0]), static_cast<double>(d.vocab.size()), 1e-9);
}

TEST(Metrics, KeywordRecallAndVowelAccuracy) {
  const auto s = song({"我爱你", "风情"});
  EXPECT_EQ(vw::keyword_recall({{"爱"}, {"雨"}}, s).value, 0.5);
  EXPECT_EQ(vw::keyword_recall({{"爱"}, {"风"}}, s).value, 1.0);
  EXPECT_EQ(vw::keyword_recall({{"你", "风"}}, s).value, 0.0);
  EXPECT_FALSE(vw::keyword_recall({}, s).flag.empty());
  const vw::RequiredVowels ok = {{{0, 2}, *lexicon().find("i")}};
  EXPECT_EQ(vw::vowel_accuracy(ok, s, lexicon()).value, 1.0);
  const vw::RequiredVowels wrong = {{{0, 2}, *lexicon().find("ai")}, {{1, 0}, *lexicon().find("ai")}};
  EXPECT_EQ(vw::vowel_accuracy(wrong, s, lexicon()).value, 0.0);
  const vw::RequiredVowels outside = {{{4, 0}, 1}};
  EXPECT_THROW(vw::vowel_accuracy(outside, s, lexicon()), vw::UsageError);
}

TEST(Metrics, WeightedKeywordSampling) {
  const std::map<vw::Keyword, long> counts = {{{"爱"}, 90}, {{"风"}, 10}, {{"雨"}, 0}};
  vw::Rng rng(1);
  int love_first = 0;
  for (int i = 0; i < 2000; ++i) {
    const auto kw = vw::sample_keywords_weighted(counts, 3, rng);
    ASSERT_EQ(kw.size(), 2u);
    love_first += kw[0] == vw::Keyword{"爱"};
  }
  EXPECT_NEAR(love_first / 2000.0, 0.9, 0.03);
}

TEST(Report, DeltasAndTable) {
  const vw::MetricContext ctx{&lexicon(), nullptr, {}};
  const std::vector<vw::Song> corpus = {four_lines(), song({"来来来", "去去"})};
  const auto r = vw::report(corpus, ctx, &corpus);
  EXPECT_EQ(*r.delta_diversity, 0.0);
  EXPECT_FALSE(r.delta_coherence);
  const auto table = r.to_table();
  EXPECT_NE(table.find("0.000"), std::string::npos);
  EXPECT_NE(table.find("n/a"), std::string::npos);
  EXPECT_NE(table.find("Rhyme-L"), std::string::npos);
  EXPECT_EQ(r.songs.size(), 2u);
  const auto records = r.to_records();
  EXPECT_EQ(std::count(records.begin(), records.end(), '\n'), 3);

  vw::SongMetrics a, b;
  a.diversity = 0.4;
  b.diversity = 0.6;
  EXPECT_DOUBLE_EQ(vw::aggregate({a, b}).diversity, 0.5);
  const auto single = vw::report({four_lines()}, ctx);
  EXPECT_EQ(single.corpus.rhyme_l, single.songs[0].rhyme_l);
  EXPECT_FALSE(single.reference);
}

TEST(Report, ModelBackedColumns) {
  Decoding d;
  const vw::ModelEmbedder<double> me(d.model, d.vocab, lexicon());
  vw::MetricContext ctx{&lexicon(), &me, [&](const vw::Song& s) { return vw::perplexity(d.model, d.vocab, lexicon(), s); }};
  const std::vector<vw::Song> corpus(d.corpus.begin(), d.corpus.begin() + 3);
  const auto r = vw::report(corpus, ctx, &corpus);
  ASSERT_TRUE(r.delta_ppl && r.delta_coherence);
  EXPECT_EQ(*r.delta_ppl, 0.0);
  EXPECT_GT(*r.corpus.self_ppl, 1.0);
  for (const auto& s : r.songs) {
    EXPECT_GE(*s.coherence, -1.0);
    EXPECT_LE(*s.coherence, 1.0);
  }
}
