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

// HTTP facade: rewrite, mask sampling, metrics and metadata endpoints over
// one read-only checkpoint. `handle` is transport-free; `mount` wires it
// into a cpp-httplib server.

#pragma once

#include <atomic>
#include <functional>
#include <string>

// Eigen must be parsed before httplib: <resolv.h> defines a `_res` macro.
#include "versewright/checkpoint.hpp"
#include "versewright/decode.hpp"
#include "versewright/metrics.hpp"

#include <httplib.h>

namespace versewright {

struct ServiceOptions {
  std::uint64_t default_seed = 7;  // used when a request carries none; always echoed
  std::size_t max_metric_songs = 256;
  std::size_t token_budget = kDefaultTokenBudget;
};

struct HttpReply {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

class ApiError : public std::runtime_error {
 public:
  ApiError(int status, std::string code, const std::string& message, std::string path)
      : std::runtime_error(message), status(status), code(std::move(code)), path(std::move(path)) {}
  int status;
  std::string code;
  std::string path;
};

template <class T>
class RewriteService {
 public:
  RewriteService(Checkpoint<T> checkpoint, VowelLexicon lexicon, ServiceOptions options = {})
      : ck_(std::move(checkpoint)), lexicon_(std::move(lexicon)), options_(options) {
    check_lexicon(ck_.lexicon_hash, lexicon_);
  }

  const Checkpoint<T>& checkpoint() const { return ck_; }
  long requests() const { return requests_.load(); }

  HttpReply handle(const std::string& method, const std::string& path, const std::string& body) const {
    ++requests_;
    try {
      if (path == "/meta") {
        expect(method, "GET");
        return ok(meta());
      }
      const std::map<std::string, json (RewriteService::*)(const json&) const> routes = {
          {"/rewrite", &RewriteService::rewrite_endpoint},
          {"/mask/sample", &RewriteService::mask_endpoint},
          {"/metrics", &RewriteService::metrics_endpoint}};
      const auto it = routes.find(path);
      if (it == routes.end()) throw ApiError(404, "not_found", "no endpoint " + path, "");
      expect(method, "POST");
      return ok((this->*(it->second))(parse(body)));
    } catch (const ApiError& e) {
      return error(e.status, e.code, e.what(), e.path);
    } catch (const InternalError& e) {
      return error(422, "invariant", e.what(), "");
    } catch (const DataError& e) {
      return error(400, "schema", e.what(), "");
    } catch (const UsageError& e) {
      return error(400, "schema", e.what(), "");
    } catch (const std::exception& e) {
      return error(500, "internal", e.what(), "");
    }
  }

  json meta() const {
    DecodeConfig d;
    const auto& cfg = ck_.model.config();
    return {{"model", to_json(cfg)},
            {"vocab_size", ck_.vocab.size()},
            {"vocab_hash", detail::hex64(ck_.vocab.hash())},
            {"lexicon_hash", detail::hex64(lexicon_.hash())},
            {"vowels", lexicon_.names()},
            {"vowel_count", lexicon_.class_count()},
            {"max_keywords", kMaxKeywords},
            {"max_metric_songs", options_.max_metric_songs},
            {"defaults", {{"lambda", d.lambda}, {"gamma", d.gamma}, {"k", d.k}, {"vowel_mode", to_string(d.vowel_mode)}}}};
  }

  void mount(httplib::Server& server) const {
    auto bridge = [this](const httplib::Request& req, httplib::Response& res) {
      const auto r = handle(req.method, req.path, req.body);
      res.status = r.status;
      res.set_content(r.body, r.content_type);
    };
    server.Get("/meta", bridge);
    server.Post("/rewrite", bridge);
    server.Post("/mask/sample", bridge);
    server.Post("/metrics", bridge);
  }

 private:
  static void expect(const std::string& method, const char* want) {
    if (method != want) throw ApiError(405, "method", "use " + std::string(want), "");
  }
  static HttpReply ok(const json& j) { return {200, j.dump(), "application/json"}; }
  static HttpReply error(int status, const std::string& code, const std::string& message, const std::string& path) {
    return {status, json{{"code", code}, {"message", message}, {"path", path}}.dump(), "application/json"};
  }

  static json parse(const std::string& body) {
    try {
      auto j = json::parse(body);
      if (!j.is_object()) throw ApiError(400, "schema", "request body must be an object", "");
      return j;
    } catch (const json::parse_error& e) {
      throw ApiError(400, "schema", std::string("malformed JSON: ") + e.what(), "");
    }
  }

  // Runs `fn`, re-labelling data errors with the JSON path they came from.
  template <class F>
  static auto at(const std::string& path, F&& fn) {
    try {
      return fn();
    } catch (const DataError& e) {
      throw ApiError(400, "schema", e.what(), path);
    } catch (const UsageError& e) {
      throw ApiError(400, "schema", e.what(), path);
    } catch (const json::exception& e) {
      throw ApiError(400, "schema", e.what(), path);
    }
  }

  Song song_at(const json& j, const std::string& key) const {
    if (!j.contains(key)) throw ApiError(400, "schema", "missing \"" + key + "\"", "/" + key);
    return at("/" + key, [&] { return song_from_json(j[key], options_.token_budget); });
  }

  std::uint64_t seed_of(const json& j) const {
    if (!j.contains("seed") || j["seed"].is_null()) return options_.default_seed;
    if (!j["seed"].is_number_unsigned()) throw ApiError(400, "schema", "seed must be a non-negative integer", "/seed");
    return j["seed"].get<std::uint64_t>();
  }

  void check_fingerprint(const json& j) const {
    if (!j.contains("checkpoint")) return;
    const auto& c = j["checkpoint"];
    if (c.contains("vocab_hash") && c["vocab_hash"] != detail::hex64(ck_.vocab.hash()))
      throw ApiError(409, "vocabulary_mismatch", "request targets a different vocabulary", "/checkpoint/vocab_hash");
    if (c.contains("lexicon_hash") && c["lexicon_hash"] != detail::hex64(lexicon_.hash()))
      throw ApiError(409, "lexicon_mismatch", "request targets a different vowel lexicon", "/checkpoint/lexicon_hash");
  }

  DecodeConfig decode_config(const json& j, std::uint64_t seed) const {
    DecodeConfig c;
    c.seed = seed;
    if (!j.contains("config")) return c;
    const auto& o = j["config"];
    at("/config", [&] {
      if (!o.is_object()) throw DataError("config must be an object");
      if (o.contains("k")) c.k = o["k"].get<int>();
      if (o.contains("lambda")) c.lambda = o["lambda"].get<double>();
      if (o.contains("gamma")) c.gamma = o["gamma"].get<double>();
      if (o.contains("temperature")) c.temperature = o["temperature"].get<double>();
      if (o.contains("vowel_mode")) c.vowel_mode = parse_vowel_mode(o["vowel_mode"].get<std::string>());
      if (o.contains("history_reset_period")) c.history_reset_period = o["history_reset_period"].get<int>();
      c.validate();
      return 0;
    });
    return c;
  }

  json rewrite_endpoint(const json& j) const {
    check_fingerprint(j);
    const Song song = song_at(j, "song");
    const auto spec = at("/mask", [&] { return mask_spec_from_json(j.value("mask", json::object()), song, lexicon_); });
    RewriteRequest req;
    req.song = song;
    req.masked = spec.masked;
    req.keywords = spec.keywords;
    req.required_vowels = spec.vowels;
    req.config = decode_config(j, seed_of(j));
    const auto r = versewright::rewrite(ck_.model, ck_.vocab, lexicon_, req);
    json prov = json::array();
    for (const auto& row : r.generated) {
      json line = json::array();
      for (bool g : row) line.push_back(g ? "generated" : "original");
      prov.push_back(line);
    }
    return {{"song", song_to_json(r.song)},
            {"provenance", prov},
            {"report", decode_report(r, lexicon_, req.config)},
            {"seed", req.config.seed}};
  }

  json mask_endpoint(const json& j) const {
    const Song song = song_at(j, "song");
    if (!j.contains("scheme")) throw ApiError(400, "schema", "missing \"scheme\"", "/scheme");
    const auto scheme = at("/scheme", [&] { return parse_scheme(j["scheme"].get<std::string>()); });
    std::optional<double> ratio;
    if (j.contains("ratio") && !j["ratio"].is_null()) {
      ratio = at("/ratio", [&] { return j["ratio"].get<double>(); });
      if (*ratio < 0.0 || *ratio > 1.0) throw ApiError(400, "schema", "ratio must be in [0, 1]", "/ratio");
    }
    const auto seed = seed_of(j);
    Rng rng(seed);
    const auto plan = sample_mask_plan(song, scheme, rng, ratio);
    json out = mask_spec_to_json(mask_spec_from_plan(plan, song, lexicon_), lexicon_);
    out["seed"] = seed;
    out["preview"] = render_plan(song, plan, lexicon_);
    return out;
  }

  json metrics_endpoint(const json& j) const {
    std::vector<Song> corpus, reference;
    auto read_list = [&](const std::string& key, std::vector<Song>& into) {
      const auto& arr = j[key];
      if (!arr.is_array()) throw ApiError(400, "schema", "\"" + key + "\" must be an array", "/" + key);
      if (arr.size() > options_.max_metric_songs)
        throw ApiError(413, "too_large",
                       std::to_string(arr.size()) + " songs exceed the cap of " + std::to_string(options_.max_metric_songs),
                       "/" + key);
      for (std::size_t i = 0; i < arr.size(); ++i) {
        const std::string p = "/" + key + "/" + std::to_string(i);
        into.push_back(at(p, [&] { return song_from_json(arr[i], options_.token_budget); }));
      }
    };
    if (j.contains("corpus"))
      read_list("corpus", corpus);
    else
      corpus.push_back(song_at(j, "song"));
    if (j.contains("reference")) read_list("reference", reference);

    ModelEmbedder<T> embedder(ck_.model, ck_.vocab, lexicon_);
    MetricContext ctx;
    ctx.lexicon = &lexicon_;
    ctx.embedder = &embedder;
    ctx.perplexity = [&](const Song& s) { return perplexity(ck_.model, ck_.vocab, lexicon_, s); };
    const auto rep = report(corpus, ctx, j.contains("reference") ? &reference : nullptr);
    return rep.to_json();
  }

  Checkpoint<T> ck_;
  VowelLexicon lexicon_;
  ServiceOptions options_;
  mutable std::atomic<long> requests_{0};
};

}  // namespace versewright
