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

// Shared fixtures for the unit tests.

#pragma once

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "versewright/versewright.hpp"

namespace vwtest {

namespace vw = versewright;

inline const vw::VowelLexicon& lexicon() {
  static const vw::VowelLexicon lex = vw::load_lexicon(VERSEWRIGHT_DATA_DIR "/pinyin_finals.tsv");
  return lex;
}

inline vw::VowelLexicon lexicon_from(const std::string& tsv) {
  std::istringstream in(tsv);
  return vw::parse_lexicon(in);
}

inline vw::Song song(std::vector<std::string> lines) { return vw::song_from_lines(std::nullopt, lines); }

inline std::vector<std::string> surfaces(const std::vector<vw::Token>& toks) {
  std::vector<std::string> out;
  for (const auto& t : toks) out.push_back(t.surface);
  return out;
}

// A fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("vwtest-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }
  std::string write(const std::string& name, const std::string& text) const {
    std::ofstream(file(name), std::ios::binary) << text;
    return file(name);
  }

 private:
  std::filesystem::path path_;
};

inline vw::ModelConfig tiny_config(const vw::Vocabulary& vocab, const vw::VowelLexicon& lex, int d = 16) {
  vw::ModelConfig c;
  c.layers = 1;
  c.heads = 2;
  c.d_model = d;
  c.d_ff = 2 * d;
  c.dropout = 0.0;
  c.vocab_size = static_cast<int>(vocab.size());
  c.vowel_classes = lex.class_count();
  return c;
}

}  // namespace vwtest
