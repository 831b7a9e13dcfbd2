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

// Checkpoint container.
//
// Layout (all integers little-endian):
//
//   bytes 0..7    magic "VWCKPT01"
//   bytes 8..15   u64 header length H
//   next H bytes  UTF-8 JSON header
//   remainder     tensor payload
//
// The header holds the model config, the vocabulary, the lexicon hash and
// vowel inventory, the trainer state (seed, counters, rng state) and a
// tensor directory of {name, rows, cols, offset}. Offsets are relative to
// the payload start. Tensors are row-major IEEE-754 of the header's dtype
// ("f32" or "f64"). Optimizer moments, when present, are stored as tensors
// named "adam.m/<param>" and "adam.v/<param>".

#pragma once

#include <bit>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>

#include "versewright/model.hpp"

namespace versewright {

inline constexpr char kCheckpointMagic[9] = "VWCKPT01";
inline constexpr int kCheckpointVersion = 1;

struct TrainSchedule {
  long steps = 200;
  int batch_size = 8;
  double lr = 1e-3;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip_norm = 1.0;  // 0 disables
  long warmup = 0;
  std::uint64_t seed = 7;
};

inline json to_json(const TrainSchedule& s) {
  return {{"steps", s.steps},       {"batch_size", s.batch_size}, {"lr", s.lr},
          {"weight_decay", s.weight_decay}, {"beta1", s.beta1}, {"beta2", s.beta2},
          {"adam_eps", s.adam_eps}, {"clip_norm", s.clip_norm},  {"warmup", s.warmup},
          {"seed", s.seed}};
}

inline TrainSchedule schedule_from_json(const json& j) {
  TrainSchedule s;
  s.steps = j.value("steps", s.steps);
  s.batch_size = j.value("batch_size", s.batch_size);
  s.lr = j.value("lr", s.lr);
  s.weight_decay = j.value("weight_decay", s.weight_decay);
  s.beta1 = j.value("beta1", s.beta1);
  s.beta2 = j.value("beta2", s.beta2);
  s.adam_eps = j.value("adam_eps", s.adam_eps);
  s.clip_norm = j.value("clip_norm", s.clip_norm);
  s.warmup = j.value("warmup", s.warmup);
  s.seed = j.value("seed", s.seed);
  return s;
}

template <class T>
struct TrainerState {
  TrainSchedule schedule;
  long step = 0;
  std::uint64_t example_counter = 0;
  std::string dropout_rng;
  std::vector<Mat<T>> adam_m, adam_v;  // parallel to Model::params()
};

template <class T>
struct Checkpoint {
  Model<T> model;
  Vocabulary vocab;
  std::uint64_t lexicon_hash = 0;
  std::vector<std::string> vowel_names;
  std::optional<TrainerState<T>> trainer;
};

namespace detail {

template <class T>
void put_le(std::string& out, T v) {
  auto bytes = std::bit_cast<std::array<char, sizeof(T)>>(v);
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.append(bytes.data(), bytes.size());
}

template <class T>
T get_le(const char* p) {
  std::array<char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  return std::bit_cast<T>(bytes);
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << v;
  return os.str();
}

}  // namespace detail

template <class T>
std::string serialize_checkpoint(const Model<T>& model, const Vocabulary& vocab, const VowelLexicon& lexicon,
                                 const TrainerState<T>* trainer = nullptr) {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  json header;
  header["format_version"] = kCheckpointVersion;
  header["dtype"] = sizeof(T) == 4 ? "f32" : "f64";
  header["config"] = to_json(model.config());
  header["vocabulary"] = vocab.tokens();
  header["vocabulary_hash"] = detail::hex64(vocab.hash());
  header["lexicon_hash"] = detail::hex64(lexicon.hash());
  header["vowel_names"] = lexicon.names();
  std::string payload;
  json dir = json::array();
  auto put = [&](const std::string& name, const Mat<T>& m) {
    dir.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}, {"offset", payload.size()}});
    for (Eigen::Index i = 0; i < m.size(); ++i) detail::put_le<T>(payload, m.data()[i]);
  };
  for (const auto& p : model.params()) put(p.name, p.value);
  if (trainer) {
    header["trainer"] = {{"schedule", to_json(trainer->schedule)},
                         {"step", trainer->step},
                         {"example_counter", trainer->example_counter},
                         {"dropout_rng", trainer->dropout_rng},
                         {"has_optimizer", !trainer->adam_m.empty()}};
    for (std::size_t i = 0; i < trainer->adam_m.size(); ++i) {
      put("adam.m/" + model.params()[i].name, trainer->adam_m[i]);
      put("adam.v/" + model.params()[i].name, trainer->adam_v[i]);
    }
  }
  header["tensors"] = dir;
  const std::string h = header.dump();
  std::string out(kCheckpointMagic, 8);
  detail::put_le<std::uint64_t>(out, h.size());
  out += h;
  out += payload;
  return out;
}

template <class T>
void save_checkpoint(const std::string& path, const Model<T>& model, const Vocabulary& vocab,
                     const VowelLexicon& lexicon, const TrainerState<T>* trainer = nullptr) {
  const std::string bytes = serialize_checkpoint(model, vocab, lexicon, trainer);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing checkpoint " + path);
}

template <class T>
Checkpoint<T> deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0)
    throw DataError("not a checkpoint (bad magic)");
  const auto hlen = detail::get_le<std::uint64_t>(bytes.data() + 8);
  if (hlen > bytes.size() - 16) throw DataError("truncated checkpoint header");
  json header;
  try {
    header = json::parse(bytes.substr(16, hlen));
  } catch (const json::exception& e) {
    throw DataError(std::string("corrupt checkpoint header: ") + e.what());
  }
  if (header.value("format_version", 0) != kCheckpointVersion) throw DataError("unsupported checkpoint version");
  const std::string dtype = header.value("dtype", "");
  if (dtype != "f32" && dtype != "f64") throw DataError("unsupported dtype " + dtype);
  const std::size_t width = dtype == "f32" ? 4 : 8;
  const char* payload = bytes.data() + 16 + hlen;
  const std::size_t payload_size = bytes.size() - 16 - hlen;

  std::map<std::string, Mat<T>> tensors;
  for (const auto& t : header.at("tensors")) {
    const auto rows = t.at("rows").get<Eigen::Index>(), cols = t.at("cols").get<Eigen::Index>();
    const auto offset = t.at("offset").get<std::size_t>();
    if (rows < 0 || cols < 0 || offset + static_cast<std::size_t>(rows * cols) * width > payload_size)
      throw DataError("tensor " + t.at("name").get<std::string>() + " exceeds the payload");
    Mat<T> m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      const char* p = payload + offset + static_cast<std::size_t>(i) * width;
      m.data()[i] = width == 4 ? static_cast<T>(detail::get_le<float>(p)) : static_cast<T>(detail::get_le<double>(p));
    }
    tensors.emplace(t.at("name").get<std::string>(), std::move(m));
  }

  Checkpoint<T> ck;
  ck.model = Model<T>(model_config_from_json(header.at("config")));
  for (auto& p : ck.model.params()) {
    auto it = tensors.find(p.name);
    if (it == tensors.end()) throw DataError("checkpoint lacks tensor " + p.name);
    if (it->second.rows() != p.value.rows() || it->second.cols() != p.value.cols())
      throw DataError("tensor " + p.name + " has the wrong shape");
    p.value = it->second;
    p.zero_grad();
  }
  const auto tokens = header.at("vocabulary").get<std::vector<std::string>>();
  if (tokens.size() < special::kAll.size()) throw DataError("checkpoint vocabulary lacks specials");
  ck.vocab = Vocabulary(std::vector<std::string>(tokens.begin() + static_cast<long>(special::kAll.size()), tokens.end()));
  if (ck.vocab.tokens() != tokens) throw DataError("checkpoint vocabulary has a non-canonical special block");
  if (static_cast<int>(ck.vocab.size()) != ck.model.config().vocab_size)
    throw DataError("vocabulary size does not match the model");
  ck.lexicon_hash = std::stoull(header.at("lexicon_hash").get<std::string>(), nullptr, 16);
  ck.vowel_names = header.at("vowel_names").get<std::vector<std::string>>();

  if (header.contains("trainer")) {
    const auto& tj = header["trainer"];
    TrainerState<T> st;
    st.schedule = schedule_from_json(tj.at("schedule"));
    st.step = tj.at("step");
    st.example_counter = tj.at("example_counter");
    st.dropout_rng = tj.at("dropout_rng");
    if (tj.value("has_optimizer", false)) {
      for (const auto& p : ck.model.params()) {
        auto m = tensors.find("adam.m/" + p.name), v = tensors.find("adam.v/" + p.name);
        if (m == tensors.end() || v == tensors.end()) throw DataError("checkpoint lacks optimizer state for " + p.name);
        st.adam_m.push_back(m->second);
        st.adam_v.push_back(v->second);
      }
    }
    ck.trainer = std::move(st);
  }
  return ck;
}

template <class T>
Checkpoint<T> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint<T>(ss.str());
}

/// Checkpoint and lexicon must agree on the vowel inventory.
inline void check_lexicon(std::uint64_t checkpoint_hash, const VowelLexicon& lexicon) {
  if (checkpoint_hash != lexicon.hash())
    throw DataError("lexicon does not match the one the checkpoint was trained with");
}

}  // namespace versewright
