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

// Mask plans, keyword prompts and encoder/decoder example assembly.

#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "versewright/rng.hpp"
#include "versewright/text.hpp"

namespace versewright {

enum class MaskScheme { kToken, kSent, kAll };

inline std::string to_string(MaskScheme s) {
  switch (s) {
    case MaskScheme::kToken: return "token";
    case MaskScheme::kSent: return "sent";
    case MaskScheme::kAll: return "all";
  }
  return "?";
}

inline MaskScheme parse_scheme(std::string_view s) {
  if (s == "token" || s == "TOKEN") return MaskScheme::kToken;
  if (s == "sent" || s == "SENT") return MaskScheme::kSent;
  if (s == "all" || s == "ALL") return MaskScheme::kAll;
  throw UsageError("unknown masking scheme " + std::string(s));
}

/// (sentence, token) in the song's original order.
struct Position {
  int sentence = 0;
  int token = 0;
  friend auto operator<=>(const Position&, const Position&) = default;
};

using Keyword = std::vector<std::string>;
using RequiredVowels = std::map<Position, VowelId>;

inline constexpr std::size_t kMaxKeywords = 5;
inline constexpr double kVowelKeepRate = 0.2;

struct MaskPlan {
  MaskScheme scheme = MaskScheme::kToken;
  std::set<Position> masked;
  std::set<Position> vowel_kept;  // subset of masked
  std::vector<Keyword> keywords;
};

enum class TokenOrder { kReversed, kSequential };
enum class LocalOrder { kSequential, kReversed };

struct OrderConfig {
  TokenOrder token_order = TokenOrder::kReversed;
  LocalOrder local_order = LocalOrder::kSequential;
  friend bool operator==(const OrderConfig&, const OrderConfig&) = default;
};

/// Sizes of the position tables an example has to fit in.
struct SequenceLimits {
  int max_positions = 640;
  int max_sentences = 64;
  int max_local = 48;
};

inline constexpr int kAbsent = -1;

struct TrainingExample {
  std::vector<TokenId> enc_tokens;
  std::vector<VowelId> enc_vowels;  // class_count() is the masked-vowel sentinel
  std::vector<int> enc_global, enc_sentence, enc_local;

  std::vector<TokenId> dec_tokens;  // [G] then targets shifted right
  std::vector<TokenId> targets;
  std::vector<int> target_vowels;  // vowel id or kAbsent
  std::vector<int> dec_global, dec_sentence, dec_local;

  std::vector<Position> target_positions;  // song coordinates, decoding order
  std::vector<int> fragment_lengths;

  std::size_t target_count() const { return targets.size(); }
  std::size_t labeled_count() const {
    return static_cast<std::size_t>(std::count_if(target_vowels.begin(), target_vowels.end(),
                                                   [](int v) { return v != kAbsent; }));
  }
};

// ---------------------------------------------------------------------------
// Plan sampling

namespace detail {

// Places `count` masked tokens in a sentence of length `len` as `fragments`
// runs separated by at least one unmasked token.
inline std::vector<int> place_fragments(int len, int count, int fragments, Rng& rng) {
  std::vector<int> masked;
  if (count <= 0) return masked;
  fragments = std::max(1, std::min({fragments, count, len - count + 1}));
  // Run lengths: a random composition of count into `fragments` positive parts.
  std::vector<int> cuts;
  std::vector<int> pool(static_cast<std::size_t>(count - 1));
  for (int i = 0; i < count - 1; ++i) pool[static_cast<std::size_t>(i)] = i + 1;
  for (int i = 0; i < fragments - 1; ++i) {
    const auto j = static_cast<std::size_t>(i) + rng.below(pool.size() - static_cast<std::size_t>(i));
    std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
    cuts.push_back(pool[static_cast<std::size_t>(i)]);
  }
  std::sort(cuts.begin(), cuts.end());
  std::vector<int> runs;
  int prev = 0;
  for (int c : cuts) {
    runs.push_back(c - prev);
    prev = c;
  }
  runs.push_back(count - prev);
  // Gaps: fragments+1 slots, inner ones at least 1; spread the slack uniformly.
  std::vector<int> gaps(static_cast<std::size_t>(fragments + 1), 0);
  for (int i = 1; i < fragments; ++i) gaps[static_cast<std::size_t>(i)] = 1;
  const int slack = len - count - (fragments - 1);
  for (int i = 0; i < slack; ++i) ++gaps[rng.below(gaps.size())];
  int pos = 0;
  for (int f = 0; f < fragments; ++f) {
    pos += gaps[static_cast<std::size_t>(f)];
    for (int k = 0; k < runs[static_cast<std::size_t>(f)]; ++k) masked.push_back(pos++);
  }
  return masked;
}

inline int ceil_count(double ratio, int n) {
  return std::min(n, static_cast<int>(std::ceil(ratio * n - 1e-12)));
}

}  // namespace detail

/// Draws which positions to hide. `forced_ratio` replaces the U(0,1) draws
/// (every sentence under TOKEN, the single draw under SENT).
inline MaskPlan sample_mask_plan(const Song& song, MaskScheme scheme, Rng& rng,
                                 std::optional<double> forced_ratio = std::nullopt) {
  MaskPlan plan;
  plan.scheme = scheme;
  const int n_sent = static_cast<int>(song.sentences.size());
  switch (scheme) {
    case MaskScheme::kToken:
      for (int i = 0; i < n_sent; ++i) {
        const int len = static_cast<int>(song.sentences[static_cast<std::size_t>(i)].size());
        const double ratio = forced_ratio ? *forced_ratio : rng.uniform();
        const int count = detail::ceil_count(ratio, len);
        const int fragments = static_cast<int>(rng.between(1, 3));
        for (int j : detail::place_fragments(len, count, fragments, rng)) plan.masked.insert({i, j});
      }
      break;
    case MaskScheme::kSent: {
      const double ratio = forced_ratio ? *forced_ratio : rng.uniform();
      const int count = detail::ceil_count(ratio, n_sent);
      std::vector<int> order(static_cast<std::size_t>(n_sent));
      for (int i = 0; i < n_sent; ++i) order[static_cast<std::size_t>(i)] = i;
      for (int i = 0; i < count; ++i) {
        const auto j = static_cast<std::size_t>(i) + rng.below(static_cast<std::uint64_t>(n_sent - i));
        std::swap(order[static_cast<std::size_t>(i)], order[j]);
        const int s = order[static_cast<std::size_t>(i)];
        for (int t = 0; t < static_cast<int>(song.sentences[static_cast<std::size_t>(s)].size()); ++t)
          plan.masked.insert({s, t});
      }
      break;
    }
    case MaskScheme::kAll:
      for (int i = 0; i < n_sent; ++i)
        for (int t = 0; t < static_cast<int>(song.sentences[static_cast<std::size_t>(i)].size()); ++t)
          plan.masked.insert({i, t});
      break;
  }
  for (const auto& p : plan.masked)
    if (rng.bernoulli(kVowelKeepRate)) plan.vowel_kept.insert(p);
  return plan;
}

// ---------------------------------------------------------------------------
// Keywords

/// Noun/verb word list used to pick keyword prompts.
class ContentLexicon {
 public:
  ContentLexicon() = default;
  explicit ContentLexicon(const std::vector<std::string>& words) {
    for (const auto& w : words) add(w);
  }

  void add(const std::string& word) {
    auto toks = tokenize(word);
    if (toks.empty()) return;
    std::string key;
    for (const auto& t : toks) key += t.surface + '\x1f';
    if (keys_.insert(key).second) max_len_ = std::max(max_len_, toks.size());
  }

  bool empty() const { return keys_.empty(); }
  std::size_t size() const { return keys_.size(); }
  std::size_t max_length() const { return max_len_; }

  bool contains(const std::vector<Token>& toks, std::size_t begin, std::size_t end) const {
    std::string key;
    for (std::size_t i = begin; i < end; ++i) key += toks[i].surface + '\x1f';
    return keys_.count(key) > 0;
  }

 private:
  std::unordered_set<std::string> keys_;
  std::size_t max_len_ = 0;
};

/// One word per line; anything after a tab (e.g. a POS tag) is ignored.
inline ContentLexicon load_content_lexicon(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open content lexicon " + path);
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    line = line.substr(0, line.find('\t'));
    if (!line.empty()) words.push_back(line);
  }
  return ContentLexicon(words);
}

/// Lexicon words lying entirely inside masked fragments, by greedy longest
/// match, deduplicated, in order of appearance.
inline std::vector<Keyword> keyword_candidates(const Song& song, const std::set<Position>& masked,
                                               const ContentLexicon& lexicon) {
  std::vector<Keyword> out;
  std::set<Keyword> seen;
  if (lexicon.empty()) return out;
  for (int s = 0; s < static_cast<int>(song.sentences.size()); ++s) {
    const auto& toks = song.sentences[static_cast<std::size_t>(s)];
    std::size_t i = 0;
    while (i < toks.size()) {
      if (!masked.count({s, static_cast<int>(i)})) {
        ++i;
        continue;
      }
      std::size_t run_end = i;
      while (run_end < toks.size() && masked.count({s, static_cast<int>(run_end)})) ++run_end;
      while (i < run_end) {
        std::size_t best = 0;
        for (std::size_t len = std::min(lexicon.max_length(), run_end - i); len >= 1; --len) {
          if (lexicon.contains(toks, i, i + len)) {
            best = len;
            break;
          }
        }
        if (best == 0) {
          ++i;
          continue;
        }
        Keyword kw;
        for (std::size_t k = i; k < i + best; ++k) kw.push_back(toks[k].surface);
        if (seen.insert(kw).second) out.push_back(std::move(kw));
        i += best;
      }
    }
  }
  return out;
}

/// Samples 0..min(5, candidates) keywords without replacement, keeping their
/// order of appearance. `forced_count` is clipped to the candidate count.
inline std::vector<Keyword> extract_keywords(const Song& song, const MaskPlan& plan,
                                             const ContentLexicon& lexicon, Rng& rng,
                                             std::optional<int> forced_count = std::nullopt) {
  auto candidates = keyword_candidates(song, plan.masked, lexicon);
  const auto cap = std::min(kMaxKeywords, candidates.size());
  const auto count = forced_count ? std::min<std::size_t>(static_cast<std::size_t>(std::max(0, *forced_count)), cap)
                                  : static_cast<std::size_t>(rng.below(cap + 1));
  std::vector<std::size_t> idx(candidates.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  for (std::size_t i = 0; i < count; ++i) std::swap(idx[i], idx[i + rng.below(idx.size() - i)]);
  std::vector<std::size_t> chosen(idx.begin(), idx.begin() + static_cast<long>(count));
  std::sort(chosen.begin(), chosen.end());
  std::vector<Keyword> out;
  for (auto i : chosen) out.push_back(candidates[i]);
  return out;
}

/// [K] k00 k01 .. [W] k10 .. [W]
inline std::vector<std::string> build_prompt(const std::vector<Keyword>& keywords) {
  if (keywords.size() > kMaxKeywords) throw UsageError("at most 5 keywords are allowed");
  std::vector<std::string> out{std::string(special::kPrompt)};
  for (const auto& kw : keywords) {
    out.insert(out.end(), kw.begin(), kw.end());
    out.emplace_back(special::kWordSep);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Example assembly

/// Lays out the encoder input and decoder targets for one song.
///
/// Encoder: prompt, [B], each sentence followed by [S], then [E]. Sentences
/// keep their order; tokens inside a sentence follow `order.token_order`.
/// Masked tokens become [M]. Their vowel input is the required vowel if one
/// is given, the true vowel if the position is vowel-kept, and the masked
/// sentinel otherwise. Decoder targets are the masked tokens in encoder
/// order and reuse the position channels of the slot they fill.
///
/// Prompt, [B] and [E] use the reserved sentence row `limits.max_sentences`.
inline TrainingExample assemble_example(const Song& song, const MaskPlan& plan, const OrderConfig& order,
                                        const Vocabulary& vocab, const VowelLexicon& lexicon,
                                        const SequenceLimits& limits, const RequiredVowels* required = nullptr) {
  for (const auto& p : plan.vowel_kept)
    if (!plan.masked.count(p)) throw UsageError("vowel-kept position is not masked");
  for (const auto& p : plan.masked)
    if (p.sentence < 0 || p.sentence >= static_cast<int>(song.sentences.size()) || p.token < 0 ||
        p.token >= static_cast<int>(song.sentences[static_cast<std::size_t>(p.sentence)].size()))
      throw UsageError("masked position outside the song");
  if (static_cast<int>(song.sentences.size()) > limits.max_sentences) throw DataError("sequence too long");

  const VowelId masked_vowel = lexicon.class_count();
  const int outside = limits.max_sentences;
  TrainingExample ex;
  auto push = [&](TokenId tok, VowelId vowel, int sentence, int local) {
    ex.enc_global.push_back(static_cast<int>(ex.enc_tokens.size()));
    ex.enc_tokens.push_back(tok);
    ex.enc_vowels.push_back(vowel);
    ex.enc_sentence.push_back(sentence);
    ex.enc_local.push_back(std::min(local, limits.max_local - 1));
  };

  const auto prompt = build_prompt(plan.keywords);
  for (std::size_t i = 0; i < prompt.size(); ++i)
    push(vocab.id(prompt[i]), special::is_special(prompt[i]) ? kNoVowel : lexicon.vowel_of(prompt[i]), outside,
         static_cast<int>(i));
  push(vocab_id::kBegin, kNoVowel, outside, 0);

  for (int s = 0; s < static_cast<int>(song.sentences.size()); ++s) {
    const auto& toks = song.sentences[static_cast<std::size_t>(s)];
    const int len = static_cast<int>(toks.size());
    if (len + 1 > limits.max_local) throw DataError("sequence too long");
    int run = 0;
    for (int e = 0; e < len; ++e) {
      const int j = order.token_order == TokenOrder::kReversed ? len - 1 - e : e;
      const int local = order.local_order == LocalOrder::kSequential ? e : len - 1 - e;
      const Position pos{s, j};
      const auto& tok = toks[static_cast<std::size_t>(j)];
      const VowelId truth = lexicon.vowel_of(tok);
      if (!plan.masked.count(pos)) {
        if (run > 0) ex.fragment_lengths.push_back(run);
        run = 0;
        push(vocab.id(tok.surface), truth, s, local);
        continue;
      }
      ++run;
      VowelId input = masked_vowel;
      const bool kept = plan.vowel_kept.count(pos) > 0;
      if (required) {
        if (auto it = required->find(pos); it != required->end()) input = it->second;
      }
      if (input == masked_vowel && kept) input = truth;
      const int slot = static_cast<int>(ex.enc_tokens.size());
      push(vocab_id::kMask, input, s, local);
      ex.targets.push_back(vocab.id(tok.surface));
      ex.target_vowels.push_back(kept && truth != kNoVowel ? truth : kAbsent);
      ex.target_positions.push_back(pos);
      ex.dec_global.push_back(ex.enc_global[static_cast<std::size_t>(slot)]);
      ex.dec_sentence.push_back(ex.enc_sentence[static_cast<std::size_t>(slot)]);
      ex.dec_local.push_back(ex.enc_local[static_cast<std::size_t>(slot)]);
    }
    if (run > 0) ex.fragment_lengths.push_back(run);
    push(vocab_id::kSep, kNoVowel, s, len);
  }
  push(vocab_id::kEnd, kNoVowel, outside, 0);
  if (static_cast<int>(ex.enc_tokens.size()) > limits.max_positions) throw DataError("sequence too long");

  ex.dec_tokens.push_back(vocab_id::kGo);
  for (std::size_t t = 0; t + 1 < ex.targets.size(); ++t) ex.dec_tokens.push_back(ex.targets[t]);
  if (ex.targets.empty()) ex.dec_tokens.clear();
  return ex;
}

// ---------------------------------------------------------------------------
// Mask-spec wire format
//
//   {"scheme": "token",                                   (optional)
//    "spans": [{"sentence": 0, "start": 1, "length": 2}],
//    "vowels": [{"sentence": 0, "token": 1, "vowel": "ai"}],   (optional)
//    "keywords": ["爱情"]}                                  (optional)
//
// Indices are in the song's original (unreversed) order.

struct MaskSpec {
  std::optional<MaskScheme> scheme;
  std::set<Position> masked;
  RequiredVowels vowels;
  std::vector<Keyword> keywords;
};

inline MaskSpec mask_spec_from_json(const json& j, const Song& song, const VowelLexicon& lexicon) {
  if (!j.is_object()) throw DataError("mask spec must be an object");
  MaskSpec spec;
  auto int_field = [](const json& o, const char* key) -> int {
    if (!o.contains(key) || !o[key].is_number_integer()) throw DataError(std::string("missing integer \"") + key + "\"");
    return o[key].get<int>();
  };
  if (j.contains("scheme") && !j["scheme"].is_null()) {
    try {
      spec.scheme = parse_scheme(j["scheme"].get<std::string>());
    } catch (const std::exception& e) {
      throw DataError(e.what());
    }
  }
  const int n_sent = static_cast<int>(song.sentences.size());
  auto check = [&](int s, int t) {
    if (s < 0 || s >= n_sent || t < 0 || t >= static_cast<int>(song.sentences[static_cast<std::size_t>(s)].size()))
      throw DataError("position (" + std::to_string(s) + ", " + std::to_string(t) + ") is outside the song");
  };
  if (j.contains("spans")) {
    if (!j["spans"].is_array()) throw DataError("\"spans\" must be an array");
    for (const auto& sp : j["spans"]) {
      const int s = int_field(sp, "sentence"), start = int_field(sp, "start"), len = int_field(sp, "length");
      if (len < 0) throw DataError("negative span length");
      for (int t = start; t < start + len; ++t) {
        check(s, t);
        spec.masked.insert({s, t});
      }
    }
  }
  if (j.contains("vowels")) {
    if (!j["vowels"].is_array()) throw DataError("\"vowels\" must be an array");
    for (const auto& v : j["vowels"]) {
      const Position p{int_field(v, "sentence"), int_field(v, "token")};
      check(p.sentence, p.token);
      if (!spec.masked.count(p)) throw DataError("required vowel on an unmasked position");
      if (!v.contains("vowel") || !v["vowel"].is_string()) throw DataError("missing \"vowel\" name");
      const auto id = lexicon.find(v["vowel"].get<std::string>());
      if (!id || *id == kNoVowel) throw DataError("unknown vowel " + v["vowel"].get<std::string>());
      spec.vowels[p] = *id;
    }
  }
  if (j.contains("keywords")) {
    if (!j["keywords"].is_array()) throw DataError("\"keywords\" must be an array");
    if (j["keywords"].size() > kMaxKeywords) throw DataError("at most 5 keywords are allowed");
    for (const auto& k : j["keywords"]) {
      if (!k.is_string()) throw DataError("keywords must be strings");
      Keyword kw;
      for (auto& t : tokenize(k.get<std::string>())) kw.push_back(t.surface);
      if (kw.empty()) throw DataError("empty keyword");
      spec.keywords.push_back(std::move(kw));
    }
  }
  return spec;
}

/// Maximal runs of masked positions, one span per run.
inline json spans_to_json(const std::set<Position>& masked) {
  json spans = json::array();
  std::optional<Position> start;
  int len = 0;
  for (const auto& p : masked) {
    if (start && p.sentence == start->sentence && p.token == start->token + len) {
      ++len;
      continue;
    }
    if (start) spans.push_back({{"sentence", start->sentence}, {"start", start->token}, {"length", len}});
    start = p;
    len = 1;
  }
  if (start) spans.push_back({{"sentence", start->sentence}, {"start", start->token}, {"length", len}});
  return spans;
}

inline std::string join_keyword(const Keyword& kw) {
  std::vector<Token> toks;
  for (const auto& s : kw) {
    auto t = tokenize(s);
    toks.insert(toks.end(), t.begin(), t.end());
  }
  return detokenize(toks);
}

inline json mask_spec_to_json(const MaskSpec& spec, const VowelLexicon& lexicon) {
  json j;
  if (spec.scheme) j["scheme"] = to_string(*spec.scheme);
  j["spans"] = spans_to_json(spec.masked);
  j["vowels"] = json::array();
  for (const auto& [p, v] : spec.vowels)
    j["vowels"].push_back({{"sentence", p.sentence}, {"token", p.token}, {"vowel", lexicon.name(v)}});
  j["keywords"] = json::array();
  for (const auto& kw : spec.keywords) j["keywords"].push_back(join_keyword(kw));
  return j;
}

/// A sampled plan in wire form; kept-vowel positions carry their true vowel.
inline MaskSpec mask_spec_from_plan(const MaskPlan& plan, const Song& song, const VowelLexicon& lexicon) {
  MaskSpec spec{plan.scheme, plan.masked, {}, plan.keywords};
  for (const auto& p : plan.vowel_kept) {
    const VowelId v = lexicon.vowel_of(song.sentences[static_cast<std::size_t>(p.sentence)][static_cast<std::size_t>(p.token)]);
    if (v != kNoVowel) spec.vowels[p] = v;
  }
  return spec;
}

/// Text rendering of a plan: masked runs in brackets, kept vowels in braces.
inline std::string render_plan(const Song& song, const MaskPlan& plan, const VowelLexicon& lexicon) {
  std::string out;
  for (int s = 0; s < static_cast<int>(song.sentences.size()); ++s) {
    const auto& toks = song.sentences[static_cast<std::size_t>(s)];
    bool open = false;
    for (int t = 0; t < static_cast<int>(toks.size()); ++t) {
      const bool m = plan.masked.count({s, t}) > 0;
      const auto& tok = toks[static_cast<std::size_t>(t)];
      if (!m && open) {
        out += ']';
        open = false;
      }
      if (t > 0 && tok.kind != TokenKind::kHan && toks[static_cast<std::size_t>(t - 1)].kind != TokenKind::kHan)
        out += ' ';
      if (m && !open) {
        out += '[';
        open = true;
      }
      out += tok.surface;
      if (plan.vowel_kept.count({s, t})) out += "{" + lexicon.name(lexicon.vowel_of(tok)) + "}";
    }
    if (open) out += ']';
    out += '\n';
  }
  return out;
}

}  // namespace versewright
