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

// Writes a synthetic rhyming corpus as JSONL.

#include <iostream>

#include <CLI11.hpp>

#include "versewright/synthetic.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Synthetic rhyming corpus"};
  std::string lexicon = VERSEWRIGHT_DATA_DIR "/pinyin_finals.tsv";
  std::size_t songs = 50;
  std::uint64_t seed = 1;
  versewright::SyntheticOptions opt;
  app.add_option("--lexicon", lexicon)->check(CLI::ExistingFile)->capture_default_str();
  app.add_option("--songs", songs)->capture_default_str();
  app.add_option("--seed", seed)->capture_default_str();
  app.add_option("--pool", opt.pool_per_vowel, "Characters per vowel class")->capture_default_str();
  app.add_option("--latin-rate", opt.latin_rate)->capture_default_str();
  CLI11_PARSE(app, argc, argv);
  try {
    const auto lex = versewright::load_lexicon(lexicon);
    versewright::write_corpus(std::cout, versewright::SyntheticSongs(lex, opt).corpus(songs, seed));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
}
