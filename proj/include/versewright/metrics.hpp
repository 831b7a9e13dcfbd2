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

// Content and rhyme metrics for songs and corpora.

#pragma once

#include <cmath>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "versewright/decode.hpp"
#include "versewright/loss.hpp"

namespace versewright {

/// A metric value plus a note when an edge case decided it.
struct Measured {
  double value = 0.0;
  std::string flag;  // empty when the value is regular
};

// ---------------------------------------------------------------------------
// Diversity

/// Unique n-grams over total n-grams; n-grams never cross sentence ends.
inline Measured distinct_n(const Song& song, int n) {
  if (song.sentences.empty()) throw UsageError("empty song");
  if (n < 1) throw UsageError("n must be positive");
  std::set<std::vector<std::string>> unique;
  std::size_t total = 0;
  for (const auto& s : song.sentences) {
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= s.size(); ++i) {
      std::vector<std::string> gram;
      for (std::size_t k = i; k < i + static_cast<std::size_t>(n); ++k) gram.push_back(s[k].surface);
      unique.insert(std::move(gram));
      ++total;
    }
  }
  if (total == 0) return {0.0, "no " + std::to_string(n) + "-grams"};
  return {static_cast<double>(unique.size()) / static_cast<double>(total), {}};
}

inline Measured diversity(const Song& song) {
  Measured m;
  for (int n = 1; n <= 4; ++n) {
    auto d = distinct_n(song, n);
    m.value += d.value / 4.0;
    if (!d.flag.empty()) m.flag = d.flag;
  }
  return m;
}

// ---------------------------------------------------------------------------
// Coherence

class SentenceEmbedder {
 public:
  virtual ~SentenceEmbedder() = default;
  virtual std::vector<double> embed(const std::vector<Token>& sentence) const = 0;
};

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw UsageError("embedding widths differ");
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / std::sqrt(na * nb);
}

struct CoherenceScores {
  double local = 0.0;
  double global = 0.0;
  double coherence() const { return (local + global) / 2.0; }
};

/// Adjacent-pair mean (local) and all-pair mean (global) of cosine
/// similarity. Undefined for songs with fewer than two sentences.
inline std::optional<CoherenceScores> coherence_scores(const Song& song, const SentenceEmbedder& embedder) {
  const std::size_t n = song.sentences.size();
  if (n < 2) return std::nullopt;
  std::vector<std::vector<double>> e;
  for (const auto& s : song.sentences) e.push_back(embedder.embed(s));
  CoherenceScores c;
  for (std::size_t i = 0; i + 1 < n; ++i) c.local += cosine(e[i], e[i + 1]);
  c.local /= static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) c.global += cosine(e[i], e[j]);
  c.global *= 2.0 / (static_cast<double>(n) * static_cast<double>(n - 1));
  return c;
}

inline std::optional<double> local_sts(const Song& s, const SentenceEmbedder& e) {
  auto c = coherence_scores(s, e);
  return c ? std::optional(c->local) : std::nullopt;
}
inline std::optional<double> global_sts(const Song& s, const SentenceEmbedder& e) {
  auto c = coherence_scores(s, e);
  return c ? std::optional(c->global) : std::nullopt;
}
inline std::optional<double> coherence(const Song& s, const SentenceEmbedder& e) {
  auto c = coherence_scores(s, e);
  return c ? std::optional(c->coherence()) : std::nullopt;
}

/// Mean-pooled encoder states of a model reading the sentence unmasked.
template <class T>
class ModelEmbedder : public SentenceEmbedder {
 public:
  ModelEmbedder(const Model<T>& model, const Vocabulary& vocab, const VowelLexicon& lexicon)
      : model_(model), vocab_(vocab), lexicon_(lexicon) {}

  std::vector<double> embed(const std::vector<Token>& sentence) const override {
    if (sentence.empty()) throw UsageError("cannot embed an empty sentence");
    Song one{std::nullopt, {sentence}};
    const auto ex = assemble_example(one, MaskPlan{}, model_.config().order, vocab_, lexicon_, model_.config().limits);
    const Mat<T> h = encode(model_, ex);
    std::vector<double> out(static_cast<std::size_t>(h.cols()), 0.0);
    int count = 0;
    for (std::size_t i = 0; i < ex.enc_tokens.size(); ++i) {
      if (ex.enc_sentence[i] != 0 || ex.enc_tokens[i] == vocab_id::kSep) continue;
      for (Eigen::Index c = 0; c < h.cols(); ++c) out[static_cast<std::size_t>(c)] += static_cast<double>(h(static_cast<Eigen::Index>(i), c));
      ++count;
    }
    for (auto& x : out) x /= count;
    return out;
  }

 private:
  const Model<T>& model_;
  const Vocabulary& vocab_;
  const VowelLexicon& lexicon_;
};

// ---------------------------------------------------------------------------
// Perplexity

/// exp(mean token NLL) with every position masked and teacher forcing.
template <class T>
double perplexity(const Model<T>& model, const Vocabulary& vocab, const VowelLexicon& lexicon, const Song& song) {
  MaskPlan plan;
  plan.scheme = MaskScheme::kAll;
  for (int s = 0; s < static_cast<int>(song.sentences.size()); ++s)
    for (int t = 0; t < static_cast<int>(song.sentences[static_cast<std::size_t>(s)].size()); ++t) plan.masked.insert({s, t});
  const auto ex = assemble_example(song, plan, model.config().order, vocab, lexicon, model.config().limits);
  Batch b{{ex}};
  const auto logits = forward(model, b);
  return std::exp(token_loss<T>(logits[0], ex.targets));
}

// ---------------------------------------------------------------------------
// Controllability

/// Share of keywords occurring contiguously inside some sentence.
inline Measured keyword_recall(const std::vector<Keyword>& keywords, const Song& song) {
  if (keywords.empty()) return {0.0, "no keywords"};
  std::size_t hit = 0;
  for (const auto& kw : keywords) {
    bool found = false;
    for (const auto& s : song.sentences) {
      for (std::size_t i = 0; !found && i + kw.size() <= s.size(); ++i) {
        bool match = !kw.empty();
        for (std::size_t k = 0; match && k < kw.size(); ++k) match = s[i + k].surface == kw[k];
        found = match;
      }
      if (found) break;
    }
    hit += found;
  }
  return {static_cast<double>(hit) / static_cast<double>(keywords.size()), {}};
}

/// Share of constrained positions whose token carries the required vowel.
inline Measured vowel_accuracy(const RequiredVowels& required, const Song& song, const VowelLexicon& lexicon) {
  if (required.empty()) return {0.0, "no constrained positions"};
  std::size_t ok = 0;
  for (const auto& [p, v] : required) {
    if (p.sentence < 0 || p.sentence >= static_cast<int>(song.sentences.size()) || p.token < 0 ||
        p.token >= static_cast<int>(song.sentences[static_cast<std::size_t>(p.sentence)].size()))
      throw UsageError("constrained position outside the song");
    ok += lexicon.vowel_of(song.sentences[static_cast<std::size_t>(p.sentence)][static_cast<std::size_t>(p.token)]) == v;
  }
  return {static_cast<double>(ok) / static_cast<double>(required.size()), {}};
}

// ---------------------------------------------------------------------------
// Rhyme

/// End vowel per sentence (kNoVowel where the end token has none).
inline std::vector<VowelId> end_vowels(const Song& song, const VowelLexicon& lexicon) {
  std::vector<VowelId> out;
  for (const auto& s : song.sentences) out.push_back(s.empty() ? kNoVowel : lexicon.vowel_of(s.back()));
  return out;
}

/// Rhymed eligible sentences over eligible sentences, where a sentence is
/// rhymed if an eligible sentence at most n lines away shares its end vowel.
/// Eligible means the end token has a vowel.
inline Measured local_rhyme_n(const std::vector<VowelId>& ends, int n) {
  if (n < 1) throw UsageError("n must be positive");
  std::size_t eligible = 0, rhymed = 0;
  const int len = static_cast<int>(ends.size());
  for (int i = 0; i < len; ++i) {
    if (ends[static_cast<std::size_t>(i)] == kNoVowel) continue;
    ++eligible;
    bool hit = false;
    for (int j = std::max(0, i - n); j <= std::min(len - 1, i + n) && !hit; ++j)
      hit = j != i && ends[static_cast<std::size_t>(j)] == ends[static_cast<std::size_t>(i)];
    rhymed += hit;
  }
  if (eligible < 2) return {0.0, "fewer than 2 eligible sentences"};
  return {static_cast<double>(rhymed) / static_cast<double>(eligible), {}};
}

inline Measured local_rhyme_n(const Song& song, int n, const VowelLexicon& lexicon) {
  return local_rhyme_n(end_vowels(song, lexicon), n);
}

inline Measured rhyme_l(const std::vector<VowelId>& ends) {
  Measured m;
  for (int n = 1; n <= 4; ++n) {
    auto r = local_rhyme_n(ends, n);
    m.value += r.value / 4.0;
    if (!r.flag.empty()) m.flag = r.flag;
  }
  return m;
}
inline Measured rhyme_l(const Song& song, const VowelLexicon& lexicon) { return rhyme_l(end_vowels(song, lexicon)); }

/// 1 - unique end vowels / eligible sentences.
inline Measured rhyme_g(const std::vector<VowelId>& ends) {
  std::set<VowelId> unique;
  std::size_t eligible = 0;
  for (VowelId v : ends) {
    if (v == kNoVowel) continue;
    unique.insert(v);
    ++eligible;
  }
  if (eligible == 0) return {0.0, "no eligible sentences"};
  return {1.0 - static_cast<double>(unique.size()) / static_cast<double>(eligible), {}};
}
inline Measured rhyme_g(const Song& song, const VowelLexicon& lexicon) { return rhyme_g(end_vowels(song, lexicon)); }

/// Unique end tokens over sentences.
inline Measured dist_rw(const Song& song) {
  if (song.sentences.empty()) return {0.0, "empty song"};
  std::set<std::string> unique;
  for (const auto& s : song.sentences) unique.insert(s.back().surface);
  return {static_cast<double>(unique.size()) / static_cast<double>(song.sentences.size()), {}};
}

// ---------------------------------------------------------------------------
// Keyword sampling for recall harnesses

/// Draws `count` distinct keywords, each with probability proportional to
/// its occurrence count among the remaining ones.
inline std::vector<Keyword> sample_keywords_weighted(const std::map<Keyword, long>& counts, std::size_t count, Rng& rng) {
  std::vector<std::pair<Keyword, long>> pool(counts.begin(), counts.end());
  std::vector<Keyword> out;
  while (out.size() < count && !pool.empty()) {
    long total = 0;
    for (const auto& [_, c] : pool) total += c;
    if (total <= 0) break;
    auto r = static_cast<long>(rng.below(static_cast<std::uint64_t>(total)));
    std::size_t i = 0;
    while (r >= pool[i].second) r -= pool[i++].second;
    out.push_back(pool[i].first);
    pool.erase(pool.begin() + static_cast<long>(i));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reports

struct SongMetrics {
  std::optional<std::string> title;
  double diversity = 0.0;
  std::optional<double> local_sts, global_sts, coherence;
  std::optional<double> self_ppl;
  std::optional<double> keyword_recall, vowel_accuracy;
  std::array<double, 4> local_rhyme{};
  double rhyme_l = 0.0, rhyme_g = 0.0, dist_rw = 0.0;
  std::vector<std::string> flags;

  json to_json() const {
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    json j = {{"diversity", diversity},
              {"local_sts", opt(local_sts)},
              {"global_sts", opt(global_sts)},
              {"coherence", opt(coherence)},
              {"self_ppl", opt(self_ppl)},
              {"keyword_recall", opt(keyword_recall)},
              {"vowel_accuracy", opt(vowel_accuracy)},
              {"local_rhyme", local_rhyme},
              {"rhyme_l", rhyme_l},
              {"rhyme_g", rhyme_g},
              {"dist_rw", dist_rw},
              {"flags", flags}};
    if (title) j["title"] = *title;
    return j;
  }
};

struct SongAnnotations {
  std::vector<Keyword> keywords;
  RequiredVowels required_vowels;
};

/// Hooks for the model-dependent metrics; either may be absent.
struct MetricContext {
  const VowelLexicon* lexicon = nullptr;
  const SentenceEmbedder* embedder = nullptr;
  std::function<double(const Song&)> perplexity;
};

inline SongMetrics evaluate_song(const Song& song, const MetricContext& ctx, const SongAnnotations* notes = nullptr) {
  if (!ctx.lexicon) throw UsageError("metrics need a vowel lexicon");
  if (song.sentences.empty()) throw UsageError("empty song");
  SongMetrics m;
  m.title = song.title;
  auto note = [&](const std::string& what, const Measured& v) {
    if (!v.flag.empty()) m.flags.push_back(what + ": " + v.flag);
    return v.value;
  };
  m.diversity = note("diversity", diversity(song));
  if (ctx.embedder) {
    if (auto c = coherence_scores(song, *ctx.embedder)) {
      m.local_sts = c->local;
      m.global_sts = c->global;
      m.coherence = c->coherence();
    } else {
      m.flags.push_back("coherence: fewer than 2 sentences");
    }
  }
  if (ctx.perplexity) m.self_ppl = ctx.perplexity(song);
  const auto ends = end_vowels(song, *ctx.lexicon);
  for (int n = 1; n <= 4; ++n) m.local_rhyme[static_cast<std::size_t>(n - 1)] = local_rhyme_n(ends, n).value;
  m.rhyme_l = note("rhyme_l", rhyme_l(ends));
  m.rhyme_g = note("rhyme_g", rhyme_g(ends));
  m.dist_rw = note("dist_rw", dist_rw(song));
  if (notes && !notes->keywords.empty()) m.keyword_recall = keyword_recall(notes->keywords, song).value;
  if (notes && !notes->required_vowels.empty())
    m.vowel_accuracy = vowel_accuracy(notes->required_vowels, song, *ctx.lexicon).value;

  for (double r : {m.diversity, m.rhyme_l, m.rhyme_g, m.dist_rw}) VW_CHECK(r >= 0.0 && r <= 1.0, "ratio metric out of range");
  if (m.self_ppl) VW_CHECK(*m.self_ppl >= 1.0 - 1e-9, "perplexity below 1");
  return m;
}

struct CorpusMetrics {
  std::size_t songs = 0;
  double diversity = 0.0;
  std::optional<double> local_sts, global_sts, coherence, self_ppl, keyword_recall, vowel_accuracy;
  double rhyme_l = 0.0, rhyme_g = 0.0, dist_rw = 0.0;

  json to_json() const {
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    return {{"songs", songs},       {"diversity", diversity}, {"local_sts", opt(local_sts)},
            {"global_sts", opt(global_sts)}, {"coherence", opt(coherence)}, {"self_ppl", opt(self_ppl)},
            {"keyword_recall", opt(keyword_recall)}, {"vowel_accuracy", opt(vowel_accuracy)},
            {"rhyme_l", rhyme_l},    {"rhyme_g", rhyme_g},      {"dist_rw", dist_rw}};
  }
};

inline CorpusMetrics aggregate(const std::vector<SongMetrics>& songs) {
  CorpusMetrics c;
  c.songs = songs.size();
  if (songs.empty()) return c;
  auto mean_opt = [&](auto field) -> std::optional<double> {
    double s = 0;
    std::size_t n = 0;
    for (const auto& m : songs)
      if (auto v = m.*field) s += *v, ++n;
    return n ? std::optional(s / static_cast<double>(n)) : std::nullopt;
  };
  for (const auto& m : songs) {
    c.diversity += m.diversity;
    c.rhyme_l += m.rhyme_l;
    c.rhyme_g += m.rhyme_g;
    c.dist_rw += m.dist_rw;
  }
  const auto n = static_cast<double>(songs.size());
  c.diversity /= n;
  c.rhyme_l /= n;
  c.rhyme_g /= n;
  c.dist_rw /= n;
  c.local_sts = mean_opt(&SongMetrics::local_sts);
  c.global_sts = mean_opt(&SongMetrics::global_sts);
  c.coherence = mean_opt(&SongMetrics::coherence);
  c.self_ppl = mean_opt(&SongMetrics::self_ppl);
  c.keyword_recall = mean_opt(&SongMetrics::keyword_recall);
  c.vowel_accuracy = mean_opt(&SongMetrics::vowel_accuracy);
  return c;
}

struct MetricReport {
  std::vector<SongMetrics> songs;
  CorpusMetrics corpus;
  std::optional<CorpusMetrics> reference;
  // |corpus - reference| for diversity, coherence and self-ppl
  std::optional<double> delta_diversity, delta_coherence, delta_ppl;
  std::vector<std::string> notes;

  json to_json() const {
    json j = {{"corpus", corpus.to_json()}, {"songs", json::array()}, {"notes", notes}};
    for (const auto& s : songs) j["songs"].push_back(s.to_json());
    if (reference) {
      auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
      j["reference"] = reference->to_json();
      j["delta"] = {{"diversity", opt(delta_diversity)}, {"coherence", opt(delta_coherence)}, {"self_ppl", opt(delta_ppl)}};
    }
    return j;
  }

  /// One JSON record per song, then a corpus record.
  std::string to_records() const {
    std::string out;
    for (const auto& s : songs) {
      json j = s.to_json();
      j["record"] = "song";
      out += j.dump() + '\n';
    }
    json c = to_json();
    c.erase("songs");
    c["record"] = "corpus";
    out += c.dump() + '\n';
    return out;
  }

  /// Fixed-width table; columns follow the order Δ-diversity, Δ-coherence,
  /// Δ-self-ppl, self-ppl, Dist-RW, Rhyme-L, Rhyme-G, then the absolute
  /// content and control scores.
  std::string to_table() const {
    std::ostringstream os;
    auto cell = [&](const std::optional<double>& v) {
      std::ostringstream c;
      if (v)
        c << std::fixed << std::setprecision(3) << *v;
      else
        c << "n/a";
      os << std::setw(12) << c.str();
    };
    os << std::left << std::setw(10) << "corpus" << std::right;
    for (const char* h : {"dDiversity", "dCoherence", "dSelfPPL", "SelfPPL", "Dist-RW", "Rhyme-L", "Rhyme-G",
                          "Diversity", "Coherence", "KwRecall", "VowelAcc"})
      os << std::setw(12) << h;
    os << '\n';
    auto row = [&](const std::string& name, const CorpusMetrics& c, bool deltas) {
      os << std::left << std::setw(10) << name << std::right;
      cell(deltas ? delta_diversity : std::nullopt);
      cell(deltas ? delta_coherence : std::nullopt);
      cell(deltas ? delta_ppl : std::nullopt);
      cell(c.self_ppl);
      cell(c.dist_rw);
      cell(c.rhyme_l);
      cell(c.rhyme_g);
      cell(c.diversity);
      cell(c.coherence);
      cell(c.keyword_recall);
      cell(c.vowel_accuracy);
      os << '\n';
    };
    row("eval", corpus, reference.has_value());
    if (reference) row("reference", *reference, false);
    return os.str();
  }
};

inline MetricReport report(const std::vector<Song>& corpus, const MetricContext& ctx,
                           const std::vector<Song>* reference = nullptr,
                           const std::vector<SongAnnotations>* notes = nullptr) {
  MetricReport r;
  for (std::size_t i = 0; i < corpus.size(); ++i)
    r.songs.push_back(evaluate_song(corpus[i], ctx, notes && i < notes->size() ? &(*notes)[i] : nullptr));
  r.corpus = aggregate(r.songs);
  if (reference) {
    std::vector<SongMetrics> ref;
    for (const auto& s : *reference) ref.push_back(evaluate_song(s, ctx));
    r.reference = aggregate(ref);
    r.delta_diversity = std::abs(r.corpus.diversity - r.reference->diversity);
    if (r.corpus.coherence && r.reference->coherence) r.delta_coherence = std::abs(*r.corpus.coherence - *r.reference->coherence);
    if (r.corpus.self_ppl && r.reference->self_ppl) r.delta_ppl = std::abs(*r.corpus.self_ppl - *r.reference->self_ppl);
  }
  r.notes.push_back("rhyme metrics count only sentences whose end token has a vowel");
  if (ctx.perplexity) r.notes.push_back("self_ppl is scored by the rewriting model itself");
  return r;
}

}  // namespace versewright
