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

// Constrained generation of masked positions and splicing back into a song.

#pragma once

#include <algorithm>
#include <numeric>
#include <set>
#include <span>
#include <vector>

#include "versewright/loss.hpp"
#include "versewright/model.hpp"

namespace versewright {

enum class VowelMode { kSoft, kHard };

inline VowelMode parse_vowel_mode(std::string_view s) {
  if (s == "soft") return VowelMode::kSoft;
  if (s == "hard") return VowelMode::kHard;
  throw UsageError("vowel mode must be soft or hard");
}
inline std::string to_string(VowelMode m) { return m == VowelMode::kSoft ? "soft" : "hard"; }

struct DecodeConfig {
  int k = 32;
  double lambda = 1.4;  // rhyme-consistency factor
  double gamma = 0.3;   // repeated-end-token factor
  VowelMode vowel_mode = VowelMode::kSoft;
  std::uint64_t seed = 0;
  double temperature = 1.0;
  int history_reset_period = 0;  // clear the rhyme history every n sentences; 0 = never

  void validate() const {
    if (k < 1) throw UsageError("k must be at least 1");
    if (!(lambda > 0.0)) throw UsageError("lambda must be positive");
    if (!(gamma > 0.0)) throw UsageError("gamma must be positive");
    if (!(temperature > 0.0)) throw UsageError("temperature must be positive");
    if (history_reset_period < 0) throw UsageError("history reset period must be non-negative");
  }
};

inline json to_json(const DecodeConfig& c) {
  return {{"k", c.k},       {"lambda", c.lambda},         {"gamma", c.gamma},
          {"vowel_mode", to_string(c.vowel_mode)}, {"seed", c.seed}, {"temperature", c.temperature},
          {"history_reset_period", c.history_reset_period}};
}

/// End tokens and end vowels of the sentences seen so far.
struct RhymeHistory {
  std::set<TokenId> end_tokens;
  std::set<VowelId> end_vowels;  // never holds kNoVowel

  void add(TokenId token, VowelId vowel) {
    end_tokens.insert(token);
    if (vowel != kNoVowel) end_vowels.insert(vowel);
  }
  void clear() {
    end_tokens.clear();
    end_vowels.clear();
  }
  bool empty() const { return end_tokens.empty() && end_vowels.empty(); }
};

/// p_i * L_i * G_i renormalized, where L_i = lambda if token i's vowel is in
/// the history vowels and G_i = gamma if token i is a history end token.
inline std::vector<double> adjust_end_distribution(std::span<const double> p, const RhymeHistory& history,
                                                   double lambda, double gamma, std::span<const VowelId> vowel_of) {
  if (p.size() != vowel_of.size()) throw UsageError("distribution does not match the vocabulary");
  if (!(lambda > 0.0) || !(gamma > 0.0)) throw UsageError("lambda and gamma must be positive");
  std::vector<double> out(p.size());
  double z = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    double w = p[i];
    if (history.end_vowels.count(vowel_of[i])) w *= lambda;
    if (history.end_tokens.count(static_cast<TokenId>(i))) w *= gamma;
    out[i] = w;
    z += w;
  }
  if (!(z > 0.0)) throw UsageError("degenerate distribution (zero mass)");
  for (auto& x : out) x /= z;
  return out;
}

class NoVowelSupport : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Soft mode leaves p alone; hard mode keeps only tokens carrying `required`.
inline std::vector<double> apply_vowel_constraint(std::span<const double> p, VowelId required, VowelMode mode,
                                                  std::span<const VowelId> vowel_of) {
  if (p.size() != vowel_of.size()) throw UsageError("distribution does not match the vocabulary");
  std::vector<double> out(p.begin(), p.end());
  if (mode == VowelMode::kSoft) return out;
  double z = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (vowel_of[i] != required) out[i] = 0.0;
    z += out[i];
  }
  if (!(z > 0.0)) throw NoVowelSupport("no token carries vowel");
  for (auto& x : out) x /= z;
  return out;
}

/// Samples among the k most probable tokens (ties by lower id), renormalized.
/// k = 1 is argmax.
inline TokenId top_k_sample(std::span<const double> p, int k, Rng& rng) {
  if (k < 1) throw UsageError("k must be at least 1");
  if (p.empty()) throw UsageError("empty distribution");
  std::vector<TokenId> idx(p.size());
  std::iota(idx.begin(), idx.end(), 0);
  const auto kk = std::min<std::size_t>(static_cast<std::size_t>(k), p.size());
  auto better = [&](TokenId a, TokenId b) {
    return p[static_cast<std::size_t>(a)] != p[static_cast<std::size_t>(b)] ? p[static_cast<std::size_t>(a)] > p[static_cast<std::size_t>(b)] : a < b;
  };
  std::partial_sort(idx.begin(), idx.begin() + static_cast<long>(kk), idx.end(), better);
  if (kk == 1) return idx[0];
  double z = 0.0;
  for (std::size_t i = 0; i < kk; ++i) z += p[static_cast<std::size_t>(idx[i])];
  const double u = rng.uniform() * z;
  double c = 0.0;
  for (std::size_t i = 0; i < kk; ++i) {
    c += p[static_cast<std::size_t>(idx[i])];
    if (u < c) return idx[i];
  }
  // Rounding left u at the top; take the last token with mass.
  for (std::size_t i = kk; i-- > 0;)
    if (p[static_cast<std::size_t>(idx[i])] > 0.0) return idx[i];
  return idx[0];
}

struct RewriteRequest {
  Song song;
  std::set<Position> masked;
  std::vector<Keyword> keywords;
  RequiredVowels required_vowels;
  DecodeConfig config;
};

struct DecodeEvent {
  Position position;
  std::string kind;  // "fallback" or "conflict"
  std::string detail;
};

struct GenerationResult {
  std::vector<TokenId> tokens;       // one per masked position, decoding order
  std::vector<Position> positions;   // song coordinates of each token
  std::vector<DecodeEvent> events;
  std::vector<std::vector<double>> end_step_distributions;  // final sampling distribution at sentence ends
  std::vector<std::size_t> end_steps;                      // decoding step index of each sentence end
  std::vector<RhymeHistory> end_step_histories;            // history before each sentence-end step
};

/// Decodes one token per masked position in encoder order.
///
/// Per step: softmax (with temperature), zero special tokens, end-rhyme
/// adjustment on a sentence's last token, the vowel constraint if the
/// position has one, then top-k. The history starts from the end tokens of
/// the song's fully unmasked sentences.
template <class T>
GenerationResult generate(const Model<T>& model, const Vocabulary& vocab, const VowelLexicon& lexicon,
                          const RewriteRequest& req) {
  req.config.validate();
  if (static_cast<int>(vocab.size()) != model.config().vocab_size) throw DataError("vocabulary does not match the model");
  for (const auto& [p, v] : req.required_vowels)
    if (!req.masked.count(p)) throw UsageError("required vowel on an unmasked position");
  MaskPlan plan;
  plan.masked = req.masked;
  plan.keywords = req.keywords;
  const auto ex = assemble_example(req.song, plan, model.config().order, vocab, lexicon, model.config().limits,
                                   &req.required_vowels);
  GenerationResult out;
  out.positions = ex.target_positions;
  if (ex.targets.empty()) return out;

  const auto vowel_of = vocab.vowel_table(lexicon);
  RhymeHistory history;
  std::set<int> touched;
  for (const auto& p : req.masked) touched.insert(p.sentence);
  auto end_token_of = [&](int s) -> const Token& { return req.song.sentences[static_cast<std::size_t>(s)].back(); };
  auto seed_history = [&](int upto_exclusive, int from) {
    for (int s = from; s < upto_exclusive; ++s)
      if (!touched.count(s)) history.add(vocab.id(end_token_of(s).surface), lexicon.vowel_of(end_token_of(s)));
  };
  const int n_sent = static_cast<int>(req.song.sentences.size());
  const int period = req.config.history_reset_period;
  if (period == 0) seed_history(n_sent, 0);
  int current_block = -1;

  Rng rng(req.config.seed);
  const Mat<T> memory = encode(model, ex);
  IncrementalDecoder<T> dec(model, memory);
  TokenId input = vocab_id::kGo;
  for (std::size_t t = 0; t < ex.targets.size(); ++t) {
    const Position pos = ex.target_positions[t];
    if (period > 0 && pos.sentence / period != current_block) {
      current_block = pos.sentence / period;
      history.clear();
      seed_history(std::min(n_sent, (current_block + 1) * period), current_block * period);
    }
    auto logits = dec.step(input, ex.dec_global[t], ex.dec_sentence[t], ex.dec_local[t]);
    if (req.config.temperature != 1.0) logits /= T(req.config.temperature);
    auto p = softmax(logits);
    double z = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (vocab.is_special(static_cast<TokenId>(i))) p[i] = 0.0;
      z += p[i];
    }
    for (auto& x : p) x /= z;

    const bool sentence_end =
        pos.token + 1 == static_cast<int>(req.song.sentences[static_cast<std::size_t>(pos.sentence)].size());
    if (sentence_end) {
      out.end_step_histories.push_back(history);
      p = adjust_end_distribution(p, history, req.config.lambda, req.config.gamma, vowel_of);
    }
    if (auto it = req.required_vowels.find(pos); it != req.required_vowels.end()) {
      if (sentence_end && !history.end_vowels.empty() && !history.end_vowels.count(it->second))
        out.events.push_back({pos, "conflict", "required vowel " + lexicon.name(it->second) + " is not a history end vowel"});
      try {
        p = apply_vowel_constraint(p, it->second, req.config.vowel_mode, vowel_of);
      } catch (const NoVowelSupport&) {
        out.events.push_back({pos, "fallback", "no token carries vowel " + lexicon.name(it->second) + "; decoded soft"});
      }
    }
    const TokenId tok = top_k_sample(p, req.config.k, rng);
    if (sentence_end) {
      out.end_steps.push_back(t);
      out.end_step_distributions.push_back(p);
      history.add(tok, vowel_of[static_cast<std::size_t>(tok)]);
    }
    out.tokens.push_back(tok);
    input = tok;
  }
  VW_CHECK(out.tokens.size() == req.masked.size(), "generated length differs from the masked count");
  return out;
}

/// Replaces masked positions with generated tokens, leaving everything else
/// byte-identical.
inline Song splice(const Song& song, const std::vector<Position>& positions, const std::vector<std::string>& fragments) {
  if (positions.size() != fragments.size()) throw UsageError("fragment count differs from the masked count");
  Song out = song;
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const auto& p = positions[i];
    if (p.sentence < 0 || p.sentence >= static_cast<int>(out.sentences.size()) || p.token < 0 ||
        p.token >= static_cast<int>(out.sentences[static_cast<std::size_t>(p.sentence)].size()))
      throw UsageError("fragment position outside the song");
    auto toks = tokenize(fragments[i]);
    Token tok = toks.size() == 1 ? toks[0] : Token{fragments[i], TokenKind::kLatin};
    out.sentences[static_cast<std::size_t>(p.sentence)][static_cast<std::size_t>(p.token)] = std::move(tok);
  }
  return out;
}

struct RewriteResult {
  Song song;
  GenerationResult generation;
  std::vector<std::vector<bool>> generated;  // per position provenance
};

template <class T>
RewriteResult rewrite(const Model<T>& model, const Vocabulary& vocab, const VowelLexicon& lexicon,
                      const RewriteRequest& req) {
  RewriteResult r;
  r.generation = generate(model, vocab, lexicon, req);
  std::vector<std::string> fragments;
  for (TokenId t : r.generation.tokens) fragments.push_back(vocab.token(t));
  r.song = splice(req.song, r.generation.positions, fragments);
  for (const auto& s : r.song.sentences) r.generated.emplace_back(s.size(), false);
  for (const auto& p : r.generation.positions)
    r.generated[static_cast<std::size_t>(p.sentence)][static_cast<std::size_t>(p.token)] = true;
  VW_CHECK(r.song.sentences.size() == req.song.sentences.size(), "splice changed the sentence count");
  for (std::size_t i = 0; i < r.song.sentences.size(); ++i)
    VW_CHECK(r.song.sentences[i].size() == req.song.sentences[i].size(), "splice changed a sentence length");
  return r;
}

/// Side-channel report: events, per-sentence end tokens and vowels, seed.
inline json decode_report(const RewriteResult& r, const VowelLexicon& lexicon, const DecodeConfig& cfg) {
  json events = json::array();
  json fallbacks = json::array();
  for (const auto& e : r.generation.events) {
    json ej = {{"sentence", e.position.sentence}, {"token", e.position.token}, {"kind", e.kind}, {"detail", e.detail}};
    events.push_back(ej);
    if (e.kind == "fallback") fallbacks.push_back(ej);
  }
  json end_tokens = json::array(), end_vowels = json::array();
  for (const auto& s : r.song.sentences) {
    end_tokens.push_back(s.back().surface);
    end_vowels.push_back(lexicon.name(lexicon.vowel_of(s.back())));
  }
  return {{"fallback_events", fallbacks}, {"events", events}, {"end_tokens", end_tokens},
          {"end_vowels", end_vowels},     {"seed", cfg.seed},  {"config", to_json(cfg)}};
}

}  // namespace versewright
