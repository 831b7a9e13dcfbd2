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

// Tokens, songs, the vowel lexicon and the vocabulary, plus their file
// formats. Everything here is immutable after construction.

#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "versewright/common.hpp"

namespace versewright {

using json = nlohmann::json;

enum class TokenKind : std::uint8_t { kHan, kLatin, kSpecial };

struct Token {
  std::string surface;
  TokenKind kind = TokenKind::kHan;

  friend bool operator==(const Token&, const Token&) = default;
};

namespace special {
inline constexpr std::string_view kPad = "[PAD]";
inline constexpr std::string_view kBegin = "[B]";
inline constexpr std::string_view kEnd = "[E]";
inline constexpr std::string_view kSep = "[S]";
inline constexpr std::string_view kMask = "[M]";
inline constexpr std::string_view kPrompt = "[K]";
inline constexpr std::string_view kWordSep = "[W]";
inline constexpr std::string_view kGo = "[G]";
inline constexpr std::string_view kUnk = "[UNK]";
// Vocabulary order; ids 0..8 are fixed.
inline constexpr std::array<std::string_view, 9> kAll = {kPad, kBegin, kEnd,    kSep, kMask,
                                                         kPrompt, kWordSep, kGo, kUnk};

inline bool is_special(std::string_view s) {
  return std::find(kAll.begin(), kAll.end(), s) != kAll.end();
}
}  // namespace special

// ---------------------------------------------------------------------------
// UTF-8 and tokenization

namespace detail {

// Decodes one code point at `i`, advancing it. Invalid bytes decode as
// themselves so tokenization never fails.
inline char32_t next_code_point(std::string_view s, std::size_t& i) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  int extra = b0 < 0x80 ? 0 : (b0 >> 5) == 0x6 ? 1 : (b0 >> 4) == 0xE ? 2 : (b0 >> 3) == 0x1E ? 3 : -1;
  if (extra < 0 || i + extra >= s.size()) {
    ++i;
    return b0;
  }
  char32_t cp = extra == 0 ? b0 : (b0 & (0x3F >> extra));
  for (int k = 1; k <= extra; ++k) {
    const auto b = static_cast<unsigned char>(s[i + k]);
    if ((b & 0xC0) != 0x80) {
      ++i;
      return b0;
    }
    cp = (cp << 6) | (b & 0x3F);
  }
  i += extra + 1;
  return cp;
}

inline bool is_space(char32_t cp) {
  return cp == ' ' || cp == '\t' || cp == '\n' || cp == '\r' || cp == '\v' || cp == '\f' ||
         cp == 0x3000 || cp == 0xA0;
}

}  // namespace detail

inline bool is_cjk(char32_t cp) {
  return (cp >= 0x4E00 && cp <= 0x9FFF) || (cp >= 0x3400 && cp <= 0x4DBF) ||
         (cp >= 0xF900 && cp <= 0xFAFF) || (cp >= 0x20000 && cp <= 0x2A6DF) ||
         (cp >= 0x2A700 && cp <= 0x2EBEF) || (cp >= 0x30000 && cp <= 0x3134F);
}

/// Splits text into one token per CJK code point and one token per
/// whitespace-delimited run of anything else.
inline std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> out;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) {
      out.push_back({std::move(word), TokenKind::kLatin});
      word.clear();
    }
  };
  std::size_t i = 0;
  while (i < text.size()) {
    const std::size_t start = i;
    const char32_t cp = detail::next_code_point(text, i);
    if (is_cjk(cp)) {
      flush();
      out.push_back({std::string(text.substr(start, i - start)), TokenKind::kHan});
    } else if (detail::is_space(cp)) {
      flush();
    } else {
      word.append(text.substr(start, i - start));
    }
  }
  flush();
  return out;
}

/// Inverse of tokenize up to whitespace: adjacent latin words get one space.
inline std::string detokenize(const std::vector<Token>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0 && tokens[i].kind != TokenKind::kHan && tokens[i - 1].kind != TokenKind::kHan) out += ' ';
    out += tokens[i].surface;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Song

inline constexpr std::size_t kDefaultTokenBudget = 512;

struct Song {
  std::optional<std::string> title;
  std::vector<std::vector<Token>> sentences;

  std::size_t token_count() const {
    std::size_t n = 0;
    for (const auto& s : sentences) n += s.size();
    return n;
  }

  std::vector<std::string> lines() const {
    std::vector<std::string> out;
    out.reserve(sentences.size());
    for (const auto& s : sentences) out.push_back(detokenize(s));
    return out;
  }

  friend bool operator==(const Song&, const Song&) = default;
};

inline void validate_song(const Song& song, std::size_t budget = kDefaultTokenBudget) {
  if (song.sentences.empty()) throw DataError("song has no lines");
  for (std::size_t i = 0; i < song.sentences.size(); ++i) {
    if (song.sentences[i].empty()) throw DataError("line " + std::to_string(i) + " of song is empty");
    for (const auto& t : song.sentences[i]) {
      if (t.kind == TokenKind::kSpecial || special::is_special(t.surface))
        throw DataError("reserved token " + t.surface + " inside a line");
    }
  }
  if (song.token_count() > budget)
    throw DataError("song has " + std::to_string(song.token_count()) + " tokens, budget is " +
                    std::to_string(budget));
}

inline Song song_from_lines(std::optional<std::string> title, const std::vector<std::string>& lines,
                            std::size_t budget = kDefaultTokenBudget) {
  Song song{std::move(title), {}};
  for (const auto& l : lines) song.sentences.push_back(tokenize(l));
  validate_song(song, budget);
  return song;
}

inline json song_to_json(const Song& song) {
  json j = json::object();
  if (song.title) j["title"] = *song.title;
  j["lines"] = song.lines();
  return j;
}

inline Song song_from_json(const json& j, std::size_t budget = kDefaultTokenBudget) {
  if (!j.is_object()) throw DataError("song record must be an object");
  std::optional<std::string> title;
  if (j.contains("title") && !j["title"].is_null()) {
    if (!j["title"].is_string()) throw DataError("\"title\" must be a string");
    title = j["title"].get<std::string>();
  }
  if (!j.contains("lines") || !j["lines"].is_array()) throw DataError("missing \"lines\" array");
  if (j["lines"].empty()) throw DataError("empty \"lines\"");
  std::vector<std::string> lines;
  for (const auto& l : j["lines"]) {
    if (!l.is_string()) throw DataError("\"lines\" entries must be strings");
    lines.push_back(l.get<std::string>());
  }
  return song_from_lines(std::move(title), lines, budget);
}

/// Newline-delimited song records. Blank lines are skipped; errors carry the
/// 1-based line number of the offending record.
inline std::vector<Song> parse_corpus(std::istream& in, std::size_t budget = kDefaultTokenBudget) {
  std::vector<Song> songs;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      songs.push_back(song_from_json(json::parse(line), budget));
    } catch (const json::exception& e) {
      throw DataError(std::string("parse error: ") + e.what(), lineno);
    } catch (const DataError& e) {
      throw DataError(e.what(), lineno);
    }
  }
  return songs;
}

inline std::vector<Song> load_corpus(const std::string& path, std::size_t budget = kDefaultTokenBudget) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus " + path);
  return parse_corpus(in, budget);
}

inline void write_corpus(std::ostream& out, const std::vector<Song>& songs) {
  for (const auto& s : songs) out << song_to_json(s).dump() << '\n';
}

// ---------------------------------------------------------------------------
// Vowels

using VowelId = int;
inline constexpr VowelId kNoVowel = 0;
inline constexpr std::string_view kNoVowelName = "none";

/// Token surface -> rhyme class. Class 0 is NO_VOWEL and is what every
/// surface outside the table maps to; named classes are numbered 1.. in
/// lexicographic order of their names.
class VowelLexicon {
 public:
  VowelLexicon() : names_{std::string(kNoVowelName)} {}

  /// `entries` must not contain the NO_VOWEL name.
  explicit VowelLexicon(const std::vector<std::pair<std::string, std::string>>& entries,
                        std::vector<std::string>* warnings = nullptr)
      : VowelLexicon() {
    std::map<std::string, std::string> table;
    for (const auto& [surface, vowel] : entries) {
      if (vowel == kNoVowelName) throw DataError("vowel name \"none\" is reserved");
      auto [it, inserted] = table.insert_or_assign(surface, vowel);
      if (!inserted && warnings) warnings->push_back("duplicate surface " + surface + ", last entry wins");
    }
    std::vector<std::string> classes;
    for (const auto& [_, v] : table) classes.push_back(v);
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
    for (auto& c : classes) {
      ids_.emplace(c, static_cast<VowelId>(names_.size()));
      names_.push_back(c);
    }
    members_.resize(names_.size());
    std::uint64_t h = fnv1a("vowel-lexicon-v1");
    for (const auto& [surface, vowel] : table) {
      entries_.emplace(surface, ids_.at(vowel));
      members_[static_cast<std::size_t>(ids_.at(vowel))].push_back(surface);
      h = fnv1a(surface, h);
      h = fnv1a("\t", h);
      h = fnv1a(vowel, h);
      h = fnv1a("\n", h);
    }
    hash_ = h;
  }

  /// Number of classes including NO_VOWEL.
  int class_count() const { return static_cast<int>(names_.size()); }
  std::size_t size() const { return entries_.size(); }
  std::uint64_t hash() const { return hash_; }

  VowelId vowel_of(std::string_view surface) const {
    auto it = entries_.find(std::string(surface));
    return it == entries_.end() ? kNoVowel : it->second;
  }
  VowelId vowel_of(const Token& token) const {
    return token.kind == TokenKind::kSpecial ? kNoVowel : vowel_of(token.surface);
  }

  const std::string& name(VowelId id) const { return names_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& names() const { return names_; }

  /// Surfaces of one class in byte order (empty for NO_VOWEL).
  const std::vector<std::string>& members(VowelId id) const { return members_.at(static_cast<std::size_t>(id)); }

  std::optional<VowelId> find(std::string_view name) const {
    if (name == kNoVowelName) return kNoVowel;
    auto it = ids_.find(std::string(name));
    if (it == ids_.end()) return std::nullopt;
    return it->second;
  }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, VowelId> ids_;
  std::unordered_map<std::string, VowelId> entries_;
  std::vector<std::vector<std::string>> members_{1};
  std::uint64_t hash_ = 0;
};

inline VowelLexicon parse_lexicon(std::istream& in, std::vector<std::string>* warnings = nullptr) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::map<std::string, long> seen;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 == line.size() ||
        line.find('\t', tab + 1) != std::string::npos)
      throw DataError("expected surface<TAB>vowel", lineno);
    std::string surface = line.substr(0, tab);
    std::string vowel = line.substr(tab + 1);
    if (vowel == kNoVowelName) throw DataError("vowel name \"none\" is reserved", lineno);
    if (auto it = seen.find(surface); it != seen.end() && warnings)
      warnings->push_back("line " + std::to_string(lineno) + ": duplicate surface " + surface +
                          " (first at line " + std::to_string(it->second) + "), last entry wins");
    seen[surface] = lineno;
    entries.emplace_back(std::move(surface), std::move(vowel));
  }
  return VowelLexicon(entries);
}

inline VowelLexicon load_lexicon(const std::string& path, std::vector<std::string>* warnings = nullptr) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open lexicon " + path);
  return parse_lexicon(in, warnings);
}

// ---------------------------------------------------------------------------
// Vocabulary

using TokenId = int;

namespace vocab_id {
inline constexpr TokenId kPad = 0;
inline constexpr TokenId kBegin = 1;
inline constexpr TokenId kEnd = 2;
inline constexpr TokenId kSep = 3;
inline constexpr TokenId kMask = 4;
inline constexpr TokenId kPrompt = 5;
inline constexpr TokenId kWordSep = 6;
inline constexpr TokenId kGo = 7;
inline constexpr TokenId kUnk = 8;
inline constexpr TokenId kFirstRegular = 9;
}  // namespace vocab_id

class Vocabulary {
 public:
  Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

  /// `regular` lists the non-special tokens in id order.
  explicit Vocabulary(const std::vector<std::string>& regular) {
    for (auto s : special::kAll) add(std::string(s));
    for (const auto& s : regular) {
      if (special::is_special(s)) throw DataError("reserved token " + s + " in vocabulary list");
      if (index_.count(s)) throw DataError("duplicate vocabulary token " + s);
      add(s);
    }
  }

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  bool contains(std::string_view s) const { return index_.count(std::string(s)) > 0; }

  TokenId id(std::string_view s) const {
    auto it = index_.find(std::string(s));
    return it == index_.end() ? vocab_id::kUnk : it->second;
  }

  bool is_special(TokenId id) const { return id >= 0 && id < vocab_id::kFirstRegular; }

  const std::vector<std::string>& tokens() const { return tokens_; }

  std::uint64_t hash() const {
    std::uint64_t h = fnv1a("vocabulary-v1");
    for (const auto& t : tokens_) {
      h = fnv1a(t, h);
      h = fnv1a("\n", h);
    }
    return h;
  }

  /// Vowel class of every id, specials and unknowns mapping to NO_VOWEL.
  std::vector<VowelId> vowel_table(const VowelLexicon& lexicon) const {
    std::vector<VowelId> out(tokens_.size(), kNoVowel);
    for (std::size_t i = vocab_id::kFirstRegular; i < tokens_.size(); ++i) out[i] = lexicon.vowel_of(tokens_[i]);
    return out;
  }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  void add(std::string s) {
    index_.emplace(s, static_cast<TokenId>(tokens_.size()));
    tokens_.push_back(std::move(s));
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

/// Tokens with frequency >= min_count, ordered by (frequency desc, surface).
inline Vocabulary build_vocabulary(const std::vector<Song>& corpus, long min_count = 1) {
  if (corpus.empty()) throw DataError("empty corpus");
  std::unordered_map<std::string, long> freq;
  for (const auto& song : corpus)
    for (const auto& s : song.sentences)
      for (const auto& t : s) ++freq[t.surface];
  std::vector<std::pair<std::string, long>> items(freq.begin(), freq.end());
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  const long threshold = std::max<long>(min_count, 1);
  std::vector<std::string> regular;
  for (auto& [s, n] : items)
    if (n >= threshold) regular.push_back(s);
  return Vocabulary(regular);
}

inline void write_vocabulary(std::ostream& out, const Vocabulary& vocab) {
  for (const auto& t : vocab.tokens()) out << t << '\n';
}

/// One token per line, line number = id. The special block must come first
/// in canonical order.
inline Vocabulary parse_vocabulary(std::istream& in) {
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  if (lines.size() < special::kAll.size()) throw DataError("vocabulary is missing the special tokens");
  for (std::size_t i = 0; i < special::kAll.size(); ++i)
    if (lines[i] != special::kAll[i])
      throw DataError("expected " + std::string(special::kAll[i]), static_cast<long>(i + 1));
  return Vocabulary(std::vector<std::string>(lines.begin() + special::kAll.size(), lines.end()));
}

}  // namespace versewright
