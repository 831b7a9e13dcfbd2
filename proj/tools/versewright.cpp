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

// versewright command-line tool: train, rewrite, eval, mask-preview, serve.

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include <CLI11.hpp>

#include "versewright/versewright.hpp"
#include "versewright/service.hpp"

namespace vw = versewright;
using vw::json;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitInternal = 4;

const std::string kDefaultLexicon = VERSEWRIGHT_DATA_DIR "/pinyin_finals.tsv";
const std::string kDefaultKeywords = VERSEWRIGHT_DATA_DIR "/content_words.txt";

bool deterministic() {
  const char* v = std::getenv("VERSEWRIGHT_DETERMINISTIC");
  return v && std::string(v) == "1";
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw vw::DataError("cannot write " + path);
  out << text;
}

// The resolved flags of a subcommand, in a form CLI11 reads back via
// --config. Unset options without a default are left out.
void record_run(const CLI::App& cmd, const std::string& out) {
  std::string text = "# replay with: versewright --config <this file> " + cmd.get_name() + "\n";
  for (const CLI::Option* opt : cmd.get_options()) {
    const std::string name = opt->get_single_name();
    if (name == "help" || name == "config") continue;
    std::string value;
    if (opt->get_type_size() == 0) {
      value = opt->count() ? "true" : "false";
    } else if (opt->count()) {
      for (const auto& r : opt->results()) value += (value.empty() ? "" : " ") + r;
    } else {
      value = opt->get_default_str();
    }
    if (value.empty()) continue;
    text += cmd.get_name() + "." + name + "=\"" + value + "\"\n";
  }
  if (out.empty()) {
    std::cerr << text;
  } else {
    write_file(out + ".run.toml", text);
  }
}

vw::Song read_song(const std::string& path, std::size_t index) {
  const auto corpus = vw::load_corpus(path);
  if (index >= corpus.size())
    throw vw::UsageError("--index " + std::to_string(index) + " is past the " + std::to_string(corpus.size()) +
                         " songs in " + path);
  return corpus[index];
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw vw::DataError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw vw::DataError(path + ": " + e.what());
  }
}

vw::Checkpoint<float> open_checkpoint(const std::string& path, const vw::VowelLexicon& lexicon) {
  auto ck = vw::load_checkpoint<float>(path);
  vw::check_lexicon(ck.lexicon_hash, lexicon);
  return ck;
}

struct TrainArgs {
  std::string corpus, lexicon = kDefaultLexicon, keywords = kDefaultKeywords, out = "versewright.ckpt", resume;
  long steps = 200;
  std::uint64_t seed = 7;
  double alpha = 1.0, lr = 1e-3, dropout = 0.1;
  int batch = 8, layers = 2, heads = 4, d_model = 128, d_ff = 512, min_count = 1;
  std::string token_order = "reversed", local_order = "sequential";
};

int cmd_train(const TrainArgs& a) {
  auto lexicon = vw::load_lexicon(a.lexicon);
  auto corpus = vw::load_corpus(a.corpus);
  auto keywords = a.keywords.empty() ? vw::ContentLexicon{} : vw::load_content_lexicon(a.keywords);
  std::ofstream log(a.out + ".log.jsonl");
  if (!log) throw vw::DataError("cannot write " + a.out + ".log.jsonl");
  auto emit = [&](const vw::TrainRecord& r) {
    log << r.to_json().dump() << '\n';
    if (r.step % 50 == 0) std::cerr << "step " << r.step << " token " << r.token_loss << " vowel " << r.vowel_loss << '\n';
  };
  std::unique_ptr<vw::Trainer<float>> trainer;
  if (!a.resume.empty()) {
    trainer = std::make_unique<vw::Trainer<float>>(vw::load_checkpoint<float>(a.resume), std::move(corpus), lexicon,
                                                   std::move(keywords));
  } else {
    vw::ModelConfig cfg;
    cfg.layers = a.layers;
    cfg.heads = a.heads;
    cfg.d_model = a.d_model;
    cfg.d_ff = a.d_ff;
    cfg.dropout = a.dropout;
    cfg.vowel_loss_weight = a.alpha;
    cfg.vowel_classes = lexicon.class_count();
    cfg.order.token_order = a.token_order == "reversed" ? vw::TokenOrder::kReversed : vw::TokenOrder::kSequential;
    cfg.order.local_order = a.local_order == "sequential" ? vw::LocalOrder::kSequential : vw::LocalOrder::kReversed;
    auto vocab = vw::build_vocabulary(corpus, a.min_count);
    cfg.vocab_size = static_cast<int>(vocab.size());
    vw::TrainSchedule sch;
    sch.steps = a.steps;
    sch.seed = a.seed;
    sch.lr = a.lr;
    sch.batch_size = a.batch;
    trainer = std::make_unique<vw::Trainer<float>>(cfg, sch, std::move(corpus), std::move(vocab), lexicon,
                                                   std::move(keywords));
  }
  trainer->run(a.steps, emit);
  trainer->save(a.out);
  std::cerr << "wrote " << a.out << '\n';
  return 0;
}

struct RewriteArgs {
  std::string checkpoint, lexicon = kDefaultLexicon, song, mask_spec, scheme, vowel_mode = "soft", out;
  std::size_t index = 0;
  std::optional<double> ratio;
  double lambda = 1.4, gamma = 0.3, temperature = 1.0;
  int k = 32, reset_period = 0;
  std::uint64_t seed = 0;
  bool text = false;
};

int cmd_rewrite(const RewriteArgs& a) {
  const auto lexicon = vw::load_lexicon(a.lexicon);
  const auto ck = open_checkpoint(a.checkpoint, lexicon);
  vw::RewriteRequest req;
  req.song = read_song(a.song, a.index);
  if (!a.mask_spec.empty()) {
    const auto spec = vw::mask_spec_from_json(read_json_file(a.mask_spec), req.song, lexicon);
    req.masked = spec.masked;
    req.required_vowels = spec.vowels;
    req.keywords = spec.keywords;
  } else if (!a.scheme.empty()) {
    vw::Rng rng(a.seed);
    req.masked = vw::sample_mask_plan(req.song, vw::parse_scheme(a.scheme), rng, a.ratio).masked;
  }
  req.config.lambda = a.lambda;
  req.config.gamma = a.gamma;
  req.config.k = a.k;
  req.config.temperature = a.temperature;
  req.config.seed = a.seed;
  req.config.history_reset_period = a.reset_period;
  req.config.vowel_mode = vw::parse_vowel_mode(a.vowel_mode);
  const auto r = vw::rewrite(ck.model, ck.vocab, lexicon, req);
  std::string body;
  if (a.text) {
    for (const auto& line : r.song.lines()) body += line + '\n';
  } else {
    body = json{{"song", vw::song_to_json(r.song)}, {"report", vw::decode_report(r, lexicon, req.config)}}.dump() + '\n';
  }
  if (a.out.empty())
    std::cout << body;
  else
    write_file(a.out, body);
  return 0;
}

struct EvalArgs {
  std::string corpus, reference, checkpoint, lexicon = kDefaultLexicon, out;
  int threads = 0;
};

int cmd_eval(const EvalArgs& a) {
  const auto lexicon = vw::load_lexicon(a.lexicon);
  const auto corpus = vw::load_corpus(a.corpus);
  std::vector<vw::Song> reference;
  if (!a.reference.empty()) reference = vw::load_corpus(a.reference);
  std::optional<vw::Checkpoint<float>> ck;
  std::unique_ptr<vw::ModelEmbedder<float>> embedder;
  vw::MetricContext ctx;
  ctx.lexicon = &lexicon;
  if (!a.checkpoint.empty()) {
    ck = open_checkpoint(a.checkpoint, lexicon);
    embedder = std::make_unique<vw::ModelEmbedder<float>>(ck->model, ck->vocab, lexicon);
    ctx.embedder = embedder.get();
    ctx.perplexity = [&](const vw::Song& s) { return vw::perplexity(ck->model, ck->vocab, lexicon, s); };
  } else {
    std::cerr << "warning: no --checkpoint; coherence and self-ppl are omitted\n";
  }

  // Songs are independent; score them on a few threads, in order.
  auto score_all = [&](const std::vector<vw::Song>& songs) {
    std::vector<vw::SongMetrics> out(songs.size());
    unsigned workers = deterministic() ? 1u : static_cast<unsigned>(a.threads > 0 ? a.threads : std::max(1u, std::thread::hardware_concurrency()));
    workers = std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(1, songs.size())));
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto work = [&] {
      for (std::size_t i; (i = next++) < songs.size();) {
        try {
          out[i] = vw::evaluate_song(songs[i], ctx);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    };
    std::vector<std::thread> pool;
    for (unsigned w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
    return out;
  };

  vw::MetricReport rep;
  rep.songs = score_all(corpus);
  rep.corpus = vw::aggregate(rep.songs);
  if (!a.reference.empty()) {
    rep.reference = vw::aggregate(score_all(reference));
    rep.delta_diversity = std::abs(rep.corpus.diversity - rep.reference->diversity);
    if (rep.corpus.coherence && rep.reference->coherence)
      rep.delta_coherence = std::abs(*rep.corpus.coherence - *rep.reference->coherence);
    if (rep.corpus.self_ppl && rep.reference->self_ppl)
      rep.delta_ppl = std::abs(*rep.corpus.self_ppl - *rep.reference->self_ppl);
  }
  rep.notes.push_back("rhyme metrics count only sentences whose end token has a vowel");
  if (ck) rep.notes.push_back("self_ppl is scored by the rewriting model itself");

  std::cout << rep.to_table();
  if (a.out.empty())
    std::cout << '\n' << rep.to_records();
  else
    write_file(a.out, rep.to_records());
  return 0;
}

struct PreviewArgs {
  std::string song, lexicon = kDefaultLexicon, scheme = "token", out;
  std::size_t index = 0;
  std::optional<double> ratio;
  std::uint64_t seed = 0;
};

int cmd_mask_preview(const PreviewArgs& a) {
  const auto lexicon = vw::load_lexicon(a.lexicon);
  const auto song = read_song(a.song, a.index);
  vw::Rng rng(a.seed);
  const auto plan = vw::sample_mask_plan(song, vw::parse_scheme(a.scheme), rng, a.ratio);
  std::cout << vw::render_plan(song, plan, lexicon);
  if (!a.out.empty())
    write_file(a.out, vw::mask_spec_to_json(vw::mask_spec_from_plan(plan, song, lexicon), lexicon).dump(2) + '\n');
  return 0;
}

struct ServeArgs {
  std::string checkpoint, lexicon = kDefaultLexicon, host = "127.0.0.1";
  int port = 8080;
  std::uint64_t seed = 7;
  std::size_t max_songs = 256;
};

int cmd_serve(const ServeArgs& a) {
  auto lexicon = vw::load_lexicon(a.lexicon);
  auto ck = open_checkpoint(a.checkpoint, lexicon);
  vw::ServiceOptions opts;
  opts.default_seed = a.seed;
  opts.max_metric_songs = a.max_songs;
  vw::RewriteService<float> service(std::move(ck), std::move(lexicon), opts);
  httplib::Server server;
  service.mount(server);
  std::cerr << "listening on " << a.host << ':' << a.port << '\n';
  if (!server.listen(a.host, a.port)) throw vw::DataError("cannot listen on " + a.host + ":" + std::to_string(a.port));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Syllable-exact lyric rewriting"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Replay a recorded run configuration");

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train a model on a corpus");
  train->add_option("--corpus", ta.corpus, "Corpus JSONL")->required()->check(CLI::ExistingFile);
  train->add_option("--lexicon", ta.lexicon, "Vowel lexicon TSV")->check(CLI::ExistingFile)->capture_default_str();
  train->add_option("--keywords", ta.keywords, "Content word list for keyword prompts (empty: none)")->capture_default_str();
  train->add_option("--out", ta.out, "Checkpoint path")->capture_default_str();
  train->add_option("--resume", ta.resume, "Continue from a checkpoint")->check(CLI::ExistingFile);
  train->add_option("--steps", ta.steps, "Optimizer steps")->check(CLI::NonNegativeNumber)->capture_default_str();
  train->add_option("--seed", ta.seed)->capture_default_str();
  train->add_option("--alpha", ta.alpha, "Vowel loss weight")->check(CLI::NonNegativeNumber)->capture_default_str();
  train->add_option("--lr", ta.lr)->check(CLI::PositiveNumber)->capture_default_str();
  train->add_option("--batch-size", ta.batch)->check(CLI::PositiveNumber)->capture_default_str();
  train->add_option("--layers", ta.layers)->check(CLI::PositiveNumber)->capture_default_str();
  train->add_option("--heads", ta.heads)->check(CLI::PositiveNumber)->capture_default_str();
  train->add_option("--d-model", ta.d_model)->check(CLI::PositiveNumber)->capture_default_str();
  train->add_option("--d-ff", ta.d_ff)->check(CLI::PositiveNumber)->capture_default_str();
  train->add_option("--dropout", ta.dropout)->check(CLI::Range(0.0, 0.99))->capture_default_str();
  train->add_option("--min-count", ta.min_count)->check(CLI::PositiveNumber)->capture_default_str();
  train->add_option("--token-order", ta.token_order)->check(CLI::IsMember({"reversed", "sequential"}))->capture_default_str();
  train->add_option("--local-order", ta.local_order)->check(CLI::IsMember({"sequential", "reversed"}))->capture_default_str();

  RewriteArgs ra;
  auto* rw = app.add_subcommand("rewrite", "Rewrite the masked parts of a song");
  rw->add_option("--checkpoint", ra.checkpoint)->required()->check(CLI::ExistingFile);
  rw->add_option("--lexicon", ra.lexicon)->check(CLI::ExistingFile)->capture_default_str();
  rw->add_option("--song,--corpus", ra.song, "Song JSONL (first record unless --index)")->required()->check(CLI::ExistingFile);
  rw->add_option("--index", ra.index)->capture_default_str();
  rw->add_option("--mask-spec", ra.mask_spec, "Mask spec JSON")->check(CLI::ExistingFile);
  rw->add_option("--scheme", ra.scheme, "Sample a mask instead of --mask-spec")->check(CLI::IsMember({"token", "sent", "all"}));
  rw->add_option("--ratio", ra.ratio)->check(CLI::Range(0.0, 1.0));
  rw->add_option("--lambda", ra.lambda)->check(CLI::PositiveNumber)->capture_default_str();
  rw->add_option("--gamma", ra.gamma)->check(CLI::PositiveNumber)->capture_default_str();
  rw->add_option("--k", ra.k)->check(CLI::PositiveNumber)->capture_default_str();
  rw->add_option("--temperature", ra.temperature)->check(CLI::PositiveNumber)->capture_default_str();
  rw->add_option("--vowel-mode", ra.vowel_mode)->check(CLI::IsMember({"soft", "hard"}))->capture_default_str();
  rw->add_option("--reset-period", ra.reset_period, "Clear the rhyme history every N sentences (0: never)")
      ->check(CLI::NonNegativeNumber)->capture_default_str();
  rw->add_option("--seed", ra.seed)->capture_default_str();
  rw->add_option("--out", ra.out, "Write the result here instead of stdout");
  rw->add_flag("--text", ra.text, "Print plain lines instead of JSON");
  rw->get_option("--mask-spec")->excludes("--scheme");

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Score a corpus");
  ev->add_option("--corpus", ea.corpus)->required()->check(CLI::ExistingFile);
  ev->add_option("--reference", ea.reference, "Reference corpus for the delta columns")->check(CLI::ExistingFile);
  ev->add_option("--checkpoint", ea.checkpoint, "Enables coherence and self-ppl")->check(CLI::ExistingFile);
  ev->add_option("--lexicon", ea.lexicon)->check(CLI::ExistingFile)->capture_default_str();
  ev->add_option("--out", ea.out, "Write JSONL records here instead of stdout");
  ev->add_option("--threads", ea.threads, "0: one per core")->check(CLI::NonNegativeNumber)->capture_default_str();

  PreviewArgs pa;
  auto* pv = app.add_subcommand("mask-preview", "Show a sampled mask plan");
  pv->add_option("--song,--corpus", pa.song)->required()->check(CLI::ExistingFile);
  pv->add_option("--index", pa.index)->capture_default_str();
  pv->add_option("--lexicon", pa.lexicon)->check(CLI::ExistingFile)->capture_default_str();
  pv->add_option("--scheme", pa.scheme)->check(CLI::IsMember({"token", "sent", "all"}))->capture_default_str();
  pv->add_option("--ratio", pa.ratio)->check(CLI::Range(0.0, 1.0));
  pv->add_option("--seed", pa.seed)->capture_default_str();
  pv->add_option("--out", pa.out, "Also write the plan as a mask spec");

  ServeArgs sa;
  auto* sv = app.add_subcommand("serve", "Run the HTTP service");
  sv->add_option("--checkpoint", sa.checkpoint)->required()->check(CLI::ExistingFile);
  sv->add_option("--lexicon", sa.lexicon)->check(CLI::ExistingFile)->capture_default_str();
  sv->add_option("--host", sa.host)->capture_default_str();
  sv->add_option("--port", sa.port)->check(CLI::Range(0, 65535))->capture_default_str();
  sv->add_option("--seed", sa.seed, "Seed for requests that carry none")->capture_default_str();
  sv->add_option("--max-songs", sa.max_songs, "Largest corpus accepted by /metrics")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*train) {
      record_run(*train, ta.out);
      return cmd_train(ta);
    }
    if (*rw) {
      record_run(*rw, ra.out);
      return cmd_rewrite(ra);
    }
    if (*ev) {
      record_run(*ev, ea.out);
      return cmd_eval(ea);
    }
    if (*pv) {
      record_run(*pv, pa.out);
      return cmd_mask_preview(pa);
    }
    record_run(*sv, "");
    return cmd_serve(sa);
  } catch (const vw::UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const vw::DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const vw::InternalError& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kExitInternal;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
}
