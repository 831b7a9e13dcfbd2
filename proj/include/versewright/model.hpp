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

// Encoder-decoder transformer with summed embedding channels.
//
// Encoder input per position: token + global position + sentence position +
// local position + vowel. The decoder omits the vowel channel. Layers are
// pre-norm; the decoder's output projection is untied.

#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "versewright/autograd.hpp"
#include "versewright/mask.hpp"

namespace versewright {

struct ModelConfig {
  int layers = 2;
  int heads = 4;
  int d_model = 128;
  int d_ff = 512;
  double dropout = 0.1;
  int vocab_size = 0;
  int vowel_classes = 0;  // including NO_VOWEL; the table has one more row
  SequenceLimits limits;
  OrderConfig order;
  double vowel_loss_weight = 1.0;  // alpha

  void validate() const {
    if (layers <= 0 || heads <= 0 || d_model <= 0 || d_ff <= 0 || vocab_size <= 0 || vowel_classes <= 0)
      throw UsageError("model dimensions must be positive");
    if (d_model % heads != 0) throw UsageError("d_model must be divisible by heads");
    if (dropout < 0.0 || dropout >= 1.0) throw UsageError("dropout must be in [0, 1)");
    if (vowel_loss_weight < 0.0) throw UsageError("vowel loss weight must be non-negative");
    if (limits.max_positions <= 0 || limits.max_sentences <= 0 || limits.max_local <= 0)
      throw UsageError("position table sizes must be positive");
  }
};

inline json to_json(const ModelConfig& c) {
  return {{"layers", c.layers},
          {"heads", c.heads},
          {"d_model", c.d_model},
          {"d_ff", c.d_ff},
          {"dropout", c.dropout},
          {"vocab_size", c.vocab_size},
          {"vowel_classes", c.vowel_classes},
          {"max_positions", c.limits.max_positions},
          {"max_sentences", c.limits.max_sentences},
          {"max_local", c.limits.max_local},
          {"token_order", c.order.token_order == TokenOrder::kReversed ? "reversed" : "sequential"},
          {"local_order", c.order.local_order == LocalOrder::kSequential ? "sequential" : "reversed"},
          {"alpha", c.vowel_loss_weight}};
}

inline ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  try {
    c.layers = j.at("layers");
    c.heads = j.at("heads");
    c.d_model = j.at("d_model");
    c.d_ff = j.at("d_ff");
    c.dropout = j.at("dropout");
    c.vocab_size = j.at("vocab_size");
    c.vowel_classes = j.at("vowel_classes");
    c.limits.max_positions = j.at("max_positions");
    c.limits.max_sentences = j.at("max_sentences");
    c.limits.max_local = j.at("max_local");
    c.order.token_order = j.at("token_order") == "reversed" ? TokenOrder::kReversed : TokenOrder::kSequential;
    c.order.local_order = j.at("local_order") == "sequential" ? LocalOrder::kSequential : LocalOrder::kReversed;
    c.vowel_loss_weight = j.at("alpha");
  } catch (const json::exception& e) {
    throw DataError(std::string("bad model config: ") + e.what());
  }
  c.validate();
  return c;
}

namespace detail {
inline double normal(Rng& rng) {
  double u1 = rng.uniform();
  while (u1 <= 0.0) u1 = rng.uniform();
  const double u2 = rng.uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}
}  // namespace detail

template <class T>
class Model {
 public:
  using M = Mat<T>;

  Model() = default;

  explicit Model(const ModelConfig& config, std::uint64_t seed = 0) : config_(config) {
    config_.validate();
    Rng rng(seed);
    const int d = config_.d_model;
    auto emb = [&](const std::string& name, int rows) {
      auto& p = add(name, rows, d, false);
      for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = T(0.02 * detail::normal(rng));
    };
    auto linear = [&](const std::string& name, int in, int out) {
      auto& w = add(name + ".w", in, out, true);
      const double bound = std::sqrt(6.0 / (in + out));
      for (Eigen::Index i = 0; i < w.value.size(); ++i) w.value.data()[i] = T(bound * (2.0 * rng.uniform() - 1.0));
      add(name + ".b", 1, out, false);
    };
    auto norm = [&](const std::string& name) {
      add(name + ".g", 1, d, false).value.setOnes();
      add(name + ".b", 1, d, false);
    };
    auto attention = [&](const std::string& name) {
      for (const char* proj : {".q", ".k", ".v", ".o"}) linear(name + proj, d, d);
    };
    emb("embed.token", config_.vocab_size);
    emb("embed.global", config_.limits.max_positions);
    emb("embed.sentence", config_.limits.max_sentences + 1);
    emb("embed.local", config_.limits.max_local);
    emb("embed.vowel", config_.vowel_classes + 1);
    for (int l = 0; l < config_.layers; ++l) {
      const std::string e = "enc." + std::to_string(l);
      norm(e + ".ln1");
      attention(e + ".self");
      norm(e + ".ln2");
      linear(e + ".ff1", d, config_.d_ff);
      linear(e + ".ff2", config_.d_ff, d);
    }
    norm("enc.ln");
    for (int l = 0; l < config_.layers; ++l) {
      const std::string e = "dec." + std::to_string(l);
      norm(e + ".ln1");
      attention(e + ".self");
      norm(e + ".ln2");
      attention(e + ".cross");
      norm(e + ".ln3");
      linear(e + ".ff1", d, config_.d_ff);
      linear(e + ".ff2", config_.d_ff, d);
    }
    norm("dec.ln");
    linear("out", d, config_.vocab_size);
  }

  // Parameters are referenced by address from tapes; keep them in place.
  Model(const Model& other) : config_(other.config_), params_(other.params_) { reindex(); }
  Model& operator=(const Model& other) {
    config_ = other.config_;
    params_ = other.params_;
    reindex();
    return *this;
  }
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  const ModelConfig& config() const { return config_; }
  std::vector<Parameter<T>>& params() { return params_; }
  const std::vector<Parameter<T>>& params() const { return params_; }

  Parameter<T>& param(const std::string& name) { return params_.at(index_.at(name)); }
  const Parameter<T>& param(const std::string& name) const { return params_.at(index_.at(name)); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  bool all_finite() const {
    for (const auto& p : params_)
      if (!p.value.allFinite()) return false;
    return true;
  }

 private:
  Parameter<T>& add(const std::string& name, int rows, int cols, bool decay) {
    index_[name] = params_.size();
    params_.push_back({name, M::Zero(rows, cols), M::Zero(rows, cols), decay});
    return params_.back();
  }
  void reindex() {
    index_.clear();
    for (std::size_t i = 0; i < params_.size(); ++i) index_[params_[i].name] = i;
  }

  ModelConfig config_;
  std::vector<Parameter<T>> params_;
  std::map<std::string, std::size_t> index_;
};

// ---------------------------------------------------------------------------
// Forward pass on a tape

/// Binds a model's parameters to a tape once and builds the graph.
/// `rng` drives dropout; pass nullptr for evaluation.
template <class T>
class Graph {
 public:
  Graph(Tape<T>& tape, Model<T>& model, Rng* rng = nullptr) : tape_(tape), model_(model), rng_(rng) {}

  Var p(const std::string& name) {
    auto it = bound_.find(name);
    if (it != bound_.end()) return it->second;
    Var v = tape_.param(model_.param(name));
    bound_.emplace(name, v);
    return v;
  }

  /// Sum of the embedding channels; `vowels` is null on the decoder side.
  Var embed(std::span<const int> tokens, std::span<const int> global, std::span<const int> sentence,
            std::span<const int> local, std::span<const int> vowels = {}, bool with_vowels = false) {
    if (global.size() != tokens.size() || sentence.size() != tokens.size() || local.size() != tokens.size() ||
        (with_vowels && vowels.size() != tokens.size()))
      throw UsageError("embedding channels differ in length");
    Var x = tape_.gather(p("embed.token"), tokens);
    x = tape_.add(x, tape_.gather(p("embed.global"), global));
    x = tape_.add(x, tape_.gather(p("embed.sentence"), sentence));
    x = tape_.add(x, tape_.gather(p("embed.local"), local));
    if (with_vowels) x = tape_.add(x, tape_.gather(p("embed.vowel"), vowels));
    return x;
  }

  Var encode(const TrainingExample& ex) {
    if (ex.enc_tokens.empty()) throw UsageError("empty encoder input");
    Var x = embed(ex.enc_tokens, ex.enc_global, ex.enc_sentence, ex.enc_local, ex.enc_vowels, true);
    x = drop(x);
    for (int l = 0; l < model_.config().layers; ++l) {
      const std::string e = "enc." + std::to_string(l);
      Var h = norm(x, e + ".ln1");
      x = tape_.add(x, drop(attention(h, h, e + ".self", false)));
      h = norm(x, e + ".ln2");
      x = tape_.add(x, drop(feed_forward(h, e)));
    }
    return norm(x, "enc.ln");
  }

  /// Logits for every decoder step, (targets x vocab).
  Var decode(Var memory, const TrainingExample& ex) {
    if (ex.dec_tokens.empty()) throw UsageError("example has no decoder steps");
    if (ex.dec_tokens.size() != ex.targets.size()) throw UsageError("decoder inputs and targets differ in length");
    Var y = embed(ex.dec_tokens, ex.dec_global, ex.dec_sentence, ex.dec_local);
    y = drop(y);
    for (int l = 0; l < model_.config().layers; ++l) {
      const std::string e = "dec." + std::to_string(l);
      Var h = norm(y, e + ".ln1");
      y = tape_.add(y, drop(attention(h, h, e + ".self", true)));
      h = norm(y, e + ".ln2");
      y = tape_.add(y, drop(attention(h, memory, e + ".cross", false)));
      h = norm(y, e + ".ln3");
      y = tape_.add(y, drop(feed_forward(h, e)));
    }
    y = norm(y, "dec.ln");
    return linear(y, "out");
  }

  Var forward(const TrainingExample& ex) { return decode(encode(ex), ex); }

 private:
  Var drop(Var x) { return tape_.dropout(x, model_.config().dropout, rng_); }
  Var norm(Var x, const std::string& name) { return tape_.layer_norm(x, p(name + ".g"), p(name + ".b")); }
  Var linear(Var x, const std::string& name) { return tape_.add_row(tape_.matmul(x, p(name + ".w")), p(name + ".b")); }
  Var feed_forward(Var x, const std::string& prefix) {
    return linear(tape_.gelu(linear(x, prefix + ".ff1")), prefix + ".ff2");
  }

  Var attention(Var query_in, Var memory, const std::string& name, bool causal) {
    const int heads = model_.config().heads;
    const int dh = model_.config().d_model / heads;
    Var q = linear(query_in, name + ".q");
    Var k = linear(memory, name + ".k");
    Var v = linear(memory, name + ".v");
    const T scale = T(1.0 / std::sqrt(static_cast<double>(dh)));
    std::vector<Var> outs;
    for (int h = 0; h < heads; ++h) {
      Var qh = tape_.cols(q, h * dh, dh), kh = tape_.cols(k, h * dh, dh), vh = tape_.cols(v, h * dh, dh);
      Var a = tape_.softmax_rows(tape_.scale(tape_.matmul_nt(qh, kh), scale), causal);
      outs.push_back(tape_.matmul(a, vh));
    }
    return linear(heads == 1 ? outs[0] : tape_.hconcat(outs), name + ".o");
  }

  Tape<T>& tape_;
  Model<T>& model_;
  Rng* rng_;
  std::map<std::string, Var> bound_;
};

/// Embedding sum for one sequence without recording gradients.
template <class T>
Mat<T> embed(const Model<T>& model, std::span<const int> tokens, std::span<const int> global,
             std::span<const int> sentence, std::span<const int> local,
             std::optional<std::span<const int>> vowels = std::nullopt) {
  Tape<T> tape(false);
  Graph<T> g(tape, const_cast<Model<T>&>(model));
  return tape.value(g.embed(tokens, global, sentence, local, vowels.value_or(std::span<const int>{}),
                            vowels.has_value()));
}

/// Padded examples. Each example is processed at its own length, which is
/// equivalent to attending under a padding mask.
struct Batch {
  std::vector<TrainingExample> examples;

  std::size_t max_target_length() const {
    std::size_t n = 0;
    for (const auto& e : examples) n = std::max(n, e.target_count());
    return n;
  }
  /// Row-major (batch x max length) mask, 1 on real target steps.
  std::vector<std::uint8_t> target_mask() const {
    const std::size_t t = max_target_length();
    std::vector<std::uint8_t> m(examples.size() * t, 0);
    for (std::size_t b = 0; b < examples.size(); ++b)
      for (std::size_t i = 0; i < examples[b].target_count(); ++i) m[b * t + i] = 1;
    return m;
  }
};

/// Decoder logits per example, each padded with zero rows to the batch's
/// longest target.
template <class T>
std::vector<Mat<T>> forward(const Model<T>& model, const Batch& batch) {
  std::vector<Mat<T>> out;
  const auto t = static_cast<Eigen::Index>(batch.max_target_length());
  for (const auto& ex : batch.examples) {
    Tape<T> tape(false);
    Graph<T> g(tape, const_cast<Model<T>&>(model));
    Mat<T> padded = Mat<T>::Zero(t, model.config().vocab_size);
    if (!ex.targets.empty()) padded.topRows(static_cast<Eigen::Index>(ex.targets.size())) = tape.value(g.forward(ex));
    out.push_back(std::move(padded));
  }
  return out;
}

/// Final encoder states for one example.
template <class T>
Mat<T> encode(const Model<T>& model, const TrainingExample& ex) {
  Tape<T> tape(false);
  Graph<T> g(tape, const_cast<Model<T>&>(model));
  return tape.value(g.encode(ex));
}

// ---------------------------------------------------------------------------
// Incremental decoding with cached keys and values

template <class T>
class IncrementalDecoder {
 public:
  using M = Mat<T>;
  using Row = Eigen::Matrix<T, 1, Eigen::Dynamic>;

  IncrementalDecoder(const Model<T>& model, const M& memory) : model_(model) {
    const int layers = model.config().layers;
    self_k_.resize(static_cast<std::size_t>(layers));
    self_v_.resize(static_cast<std::size_t>(layers));
    for (int l = 0; l < layers; ++l) {
      const std::string e = "dec." + std::to_string(l) + ".cross";
      cross_k_.push_back(affine(memory, e + ".k"));
      cross_v_.push_back(affine(memory, e + ".v"));
    }
  }

  std::size_t steps() const { return self_k_.empty() ? 0 : static_cast<std::size_t>(self_k_[0].rows()); }

  /// Feeds one decoder input at the given position channels and returns the
  /// next-token logits.
  Row step(TokenId input, int global, int sentence, int local) {
    const auto& cfg = model_.config();
    auto row_of = [&](const char* name, int idx) -> Row {
      const auto& t = model_.param(name).value;
      if (idx < 0 || idx >= t.rows()) throw UsageError(std::string(name) + " index out of range");
      return t.row(idx);
    };
    M y = row_of("embed.token", input) + row_of("embed.global", global) + row_of("embed.sentence", sentence) +
          row_of("embed.local", local);
    for (int l = 0; l < cfg.layers; ++l) {
      const std::string e = "dec." + std::to_string(l);
      const auto li = static_cast<std::size_t>(l);
      M h = norm(y, e + ".ln1");
      append(self_k_[li], affine(h, e + ".self.k"));
      append(self_v_[li], affine(h, e + ".self.v"));
      y += attend(affine(h, e + ".self.q"), self_k_[li], self_v_[li], e + ".self");
      h = norm(y, e + ".ln2");
      y += attend(affine(h, e + ".cross.q"), cross_k_[li], cross_v_[li], e + ".cross");
      h = norm(y, e + ".ln3");
      M f = affine(h, e + ".ff1");
      f = f.unaryExpr([](T v) {
        return T(0.5) * v * (T(1) + std::tanh(T(0.7978845608028654) * (v + T(0.044715) * v * v * v)));
      });
      y += affine(f, e + ".ff2");
    }
    return affine(norm(y, "dec.ln"), "out");
  }

 private:
  M affine(const M& x, const std::string& name) const {
    return (x * model_.param(name + ".w").value).rowwise() + model_.param(name + ".b").value.row(0);
  }

  M norm(const M& x, const std::string& name) const {
    M out(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const T mean = x.row(r).mean();
      const T var = (x.row(r).array() - mean).square().mean();
      out.row(r) = (x.row(r).array() - mean) / std::sqrt(var + T(1e-5));
    }
    return (out.array().rowwise() * model_.param(name + ".g").value.row(0).array()).rowwise() +
           model_.param(name + ".b").value.row(0).array();
  }

  static void append(M& cache, const M& row) {
    cache.conservativeResize(cache.rows() + 1, row.cols());
    cache.row(cache.rows() - 1) = row.row(0);
  }

  M attend(const M& q, const M& k, const M& v, const std::string& name) const {
    const int heads = model_.config().heads;
    const int dh = model_.config().d_model / heads;
    const T scale = T(1.0 / std::sqrt(static_cast<double>(dh)));
    M out(1, model_.config().d_model);
    for (int h = 0; h < heads; ++h) {
      Row s = (q.middleCols(h * dh, dh) * k.middleCols(h * dh, dh).transpose()) * scale;
      s = (s.array() - s.maxCoeff()).exp();
      s /= s.sum();
      out.middleCols(h * dh, dh) = s * v.middleCols(h * dh, dh);
    }
    return affine(out, name + ".o");
  }

  const Model<T>& model_;
  std::vector<M> self_k_, self_v_, cross_k_, cross_v_;
};

}  // namespace versewright
