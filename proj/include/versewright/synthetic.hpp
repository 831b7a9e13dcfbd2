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

// Random rhyming songs over a small per-vowel character pool. Used for the
// toy corpus and for property tests.

#pragma once

#include <array>
#include <string>
#include <vector>

#include "versewright/rng.hpp"
#include "versewright/text.hpp"

namespace versewright {

struct SyntheticOptions {
  int min_sentences = 4;
  int max_sentences = 8;
  int min_length = 4;
  int max_length = 8;
  int pool_per_vowel = 5;
  double latin_rate = 0.03;  // body tokens replaced by a vowel-less latin word
};

class SyntheticSongs {
 public:
  explicit SyntheticSongs(const VowelLexicon& lexicon, SyntheticOptions options = {})
      : options_(options) {
    if (options.min_sentences < 1 || options.max_sentences < options.min_sentences || options.min_length < 1 ||
        options.max_length < options.min_length || options.pool_per_vowel < 1)
      throw UsageError("bad synthetic song options");
    for (VowelId v = 1; v < lexicon.class_count(); ++v) {
      const auto& m = lexicon.members(v);
      if (m.empty()) continue;
      std::vector<std::string> pool;
      const std::size_t take = std::min<std::size_t>(m.size(), static_cast<std::size_t>(options.pool_per_vowel));
      for (std::size_t i = 0; i < take; ++i) pool.push_back(m[i * m.size() / take]);
      alphabet_.insert(alphabet_.end(), pool.begin(), pool.end());
      pools_.push_back(std::move(pool));
    }
    if (pools_.size() < 2) throw UsageError("synthetic songs need at least two vowel classes");
  }

  const std::vector<std::string>& alphabet() const { return alphabet_; }
  std::size_t vowel_pools() const { return pools_.size(); }

  /// One song; the end characters follow a monorhyme, couplet or alternating scheme.
  Song song(Rng& rng) const {
    static constexpr std::array<std::string_view, 4> kLatin = {"oh", "yeah", "baby", "la"};
    const int n = static_cast<int>(rng.between(options_.min_sentences, options_.max_sentences));
    const std::size_t a = rng.below(pools_.size());
    std::size_t b = rng.below(pools_.size() - 1);
    if (b >= a) ++b;
    const auto scheme = rng.below(3);
    Song song;
    for (int s = 0; s < n; ++s) {
      const int len = static_cast<int>(rng.between(options_.min_length, options_.max_length));
      std::vector<Token> sentence;
      for (int t = 0; t + 1 < len; ++t) {
        if (rng.bernoulli(options_.latin_rate))
          sentence.push_back({std::string(kLatin[rng.below(kLatin.size())]), TokenKind::kLatin});
        else
          sentence.push_back({alphabet_[rng.below(alphabet_.size())], TokenKind::kHan});
      }
      const bool use_b = (scheme == 1 && (s / 2) % 2 == 1) || (scheme == 2 && s % 2 == 1);
      const auto& pool = pools_[use_b ? b : a];
      sentence.push_back({pool[rng.below(pool.size())], TokenKind::kHan});
      song.sentences.push_back(std::move(sentence));
    }
    return song;
  }

  std::vector<Song> corpus(std::size_t count, std::uint64_t seed) const {
    std::vector<Song> out;
    for (std::size_t i = 0; i < count; ++i) {
      Rng rng = Rng::derive(seed, i);
      out.push_back(song(rng));
      out.back().title = "synthetic-" + std::to_string(i);
    }
    return out;
  }

 private:
  SyntheticOptions options_;
  std::vector<std::vector<std::string>> pools_;
  std::vector<std::string> alphabet_;
};

}  // namespace versewright
