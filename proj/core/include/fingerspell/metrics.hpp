// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "fingerspell/datamodel.hpp"

namespace fsr {

struct EditCounts {
  int64_t substitutions = 0;
  int64_t deletions = 0;
  int64_t insertions = 0;
  int64_t reference_length = 0;

  int64_t errors() const { return substitutions + deletions + insertions; }
  EditCounts& operator+=(const EditCounts& o);
  friend bool operator==(const EditCounts&, const EditCounts&) = default;
};

/// S, D, I of a minimal unit-cost alignment of hyp against ref. Backtrace
/// prefers match, then substitution, then insertion, then deletion.
EditCounts edit_counts(const LabelSequence& ref, const LabelSequence& hyp);

/// 1 - (S + D + I) / N; throws std::invalid_argument for an empty reference.
double letter_accuracy(const LabelSequence& ref, const LabelSequence& hyp);
double letter_accuracy(const EditCounts& counts);

using LabelPair = std::pair<LabelSequence, LabelSequence>;  // (reference, hypothesis)

/// Pools counts over the corpus: 1 - (sum S + sum D + sum I) / sum N.
double corpus_accuracy(const std::vector<LabelPair>& pairs);
/// Mean of per-sample letter accuracies.
double corpus_accuracy_sample_mean(const std::vector<LabelPair>& pairs);

}  // namespace fsr
