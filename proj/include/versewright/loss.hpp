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

// Token cross-entropy and the restricted vowel loss.
//
// The vowel loss at a labeled step is -ln p(v), where p(v) is the total
// softmax mass of vocabulary entries whose vowel class is v. All logs are
// natural.

#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "versewright/autograd.hpp"
#include "versewright/mask.hpp"

namespace versewright {

inline constexpr double kVowelProbFloor = 1e-12;

/// Softmax of one logit row, in double.
template <class Derived>
std::vector<double> softmax(const Eigen::MatrixBase<Derived>& row) {
  std::vector<double> p(static_cast<std::size_t>(row.size()));
  double mx = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < row.size(); ++i) mx = std::max(mx, static_cast<double>(row(i)));
  double z = 0.0;
  for (Eigen::Index i = 0; i < row.size(); ++i) z += p[static_cast<std::size_t>(i)] = std::exp(static_cast<double>(row(i)) - mx);
  for (auto& x : p) x /= z;
  return p;
}

/// p(v) for every vowel class: probabilities summed per class.
inline std::vector<double> vowel_distribution(std::span<const double> probs, std::span<const VowelId> vowel_of,
                                              int classes) {
  if (probs.size() != vowel_of.size()) throw UsageError("vowel table does not match the vocabulary");
  std::vector<double> out(static_cast<std::size_t>(classes), 0.0);
  for (std::size_t i = 0; i < probs.size(); ++i) out.at(static_cast<std::size_t>(vowel_of[i])) += probs[i];
  return out;
}

/// Mean negative log-likelihood over unmasked rows. `mask` may be empty,
/// meaning every row counts.
template <class T>
double token_loss(const Mat<T>& logits, std::span<const int> targets, std::span<const std::uint8_t> mask = {}) {
  if (static_cast<std::size_t>(logits.rows()) != targets.size()) throw UsageError("logits and targets differ in length");
  if (!mask.empty() && mask.size() != targets.size()) throw UsageError("pad mask differs in length");
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    if (!mask.empty() && !mask[t]) continue;
    const auto row = logits.row(static_cast<Eigen::Index>(t));
    const double mx = static_cast<double>(row.maxCoeff());
    double z = 0.0;
    for (Eigen::Index i = 0; i < row.size(); ++i) z += std::exp(static_cast<double>(row(i)) - mx);
    sum += -(static_cast<double>(row(targets[t])) - mx - std::log(z));
    ++n;
  }
  if (n == 0) throw UsageError("token loss over an all-padded batch");
  return sum / static_cast<double>(n);
}

struct VowelLossResult {
  double value = 0.0;
  std::size_t labeled = 0;
  std::size_t clamped = 0;  // steps whose label vowel had (numerically) zero mass
  bool no_labels() const { return labeled == 0; }
};

/// Mean of -ln p(label) over steps whose label is not kAbsent. With no
/// labeled steps the loss is 0 and `no_labels()` is set.
template <class T>
VowelLossResult vowel_loss(const Mat<T>& logits, std::span<const int> labels, std::span<const VowelId> vowel_of) {
  if (static_cast<std::size_t>(logits.rows()) != labels.size()) throw UsageError("logits and labels differ in length");
  if (static_cast<std::size_t>(logits.cols()) != vowel_of.size()) throw UsageError("vowel table does not match the vocabulary");
  VowelLossResult r;
  for (std::size_t t = 0; t < labels.size(); ++t) {
    if (labels[t] == kAbsent) continue;
    const auto p = softmax(logits.row(static_cast<Eigen::Index>(t)));
    double mass = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i)
      if (vowel_of[i] == labels[t]) mass += p[i];
    if (mass < kVowelProbFloor) {
      mass = kVowelProbFloor;
      ++r.clamped;
    }
    r.value += -std::log(mass);
    ++r.labeled;
  }
  if (r.labeled > 0) r.value /= static_cast<double>(r.labeled);
  return r;
}

inline double total_loss(double token, double vowel, double alpha) { return token + alpha * vowel; }

struct LossStats {
  double token_sum = 0.0;
  double vowel_sum = 0.0;
  std::size_t tokens = 0;
  std::size_t labeled = 0;
  std::size_t clamped = 0;

  double token_mean() const { return tokens ? token_sum / static_cast<double>(tokens) : 0.0; }
  double vowel_mean() const { return labeled ? vowel_sum / static_cast<double>(labeled) : 0.0; }
};

/// Records  sum_t nll_t / token_norm + alpha * sum_labeled vnll_t / vowel_norm
/// for one example's logits. Normalizers are batch-wide counts so that the
/// sum over examples is the batch mean of each component.
template <class T>
Var masked_lm_loss(Tape<T>& tape, Var logits, const TrainingExample& ex, std::span<const VowelId> vowel_of,
                   double alpha, std::size_t token_norm, std::size_t vowel_norm, LossStats* stats = nullptr) {
  const Mat<T>& z = tape.value(logits);
  if (static_cast<std::size_t>(z.rows()) != ex.targets.size()) throw UsageError("logits and targets differ in length");
  if (static_cast<std::size_t>(z.cols()) != vowel_of.size()) throw UsageError("vowel table does not match the vocabulary");
  if (token_norm == 0) throw UsageError("token loss over an all-padded batch");
  const double vnorm = vowel_norm ? static_cast<double>(vowel_norm) : 1.0;

  Mat<T> dz = Mat<T>::Zero(z.rows(), z.cols());
  double value = 0.0;
  for (Eigen::Index t = 0; t < z.rows(); ++t) {
    const auto p = softmax(z.row(t));
    const auto y = static_cast<std::size_t>(ex.targets[static_cast<std::size_t>(t)]);
    const double nll = -std::log(std::max(p[y], 1e-300));
    value += nll / static_cast<double>(token_norm);
    if (stats) {
      stats->token_sum += nll;
      ++stats->tokens;
    }
    for (std::size_t i = 0; i < p.size(); ++i) dz(t, static_cast<Eigen::Index>(i)) = T(p[i] / static_cast<double>(token_norm));
    dz(t, static_cast<Eigen::Index>(y)) -= T(1.0 / static_cast<double>(token_norm));

    const int label = ex.target_vowels[static_cast<std::size_t>(t)];
    if (label == kAbsent) continue;
    double mass = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i)
      if (vowel_of[i] == label) mass += p[i];
    const bool clamped = mass < kVowelProbFloor;
    const double vnll = -std::log(clamped ? kVowelProbFloor : mass);
    value += alpha * vnll / vnorm;
    if (stats) {
      stats->vowel_sum += vnll;
      ++stats->labeled;
      stats->clamped += clamped;
    }
    if (clamped || alpha == 0.0) continue;
    // d(-ln sum_{i in S} p_i)/dz_j = p_j - [j in S] p_j / P_S
    const double w = alpha / vnorm;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = p[i] - (vowel_of[i] == label ? p[i] / mass : 0.0);
      dz(t, static_cast<Eigen::Index>(i)) += T(w * gi);
    }
  }
  Mat<T> out(1, 1);
  out(0, 0) = T(value);
  return tape.record(std::move(out), {logits}, [&tape, logits, dz = std::move(dz)](const Mat<T>& g) {
    tape.grad(logits) += dz * g(0, 0);
  });
}

}  // namespace versewright
