// SPDX-License-Identifier: Apache-2.0
#include "fingerspell/metrics.hpp"

#include <algorithm>
#include <stdexcept>

namespace fsr {

EditCounts& EditCounts::operator+=(const EditCounts& o) {
  substitutions += o.substitutions;
  deletions += o.deletions;
  insertions += o.insertions;
  reference_length += o.reference_length;
  return *this;
}

EditCounts edit_counts(const LabelSequence& ref, const LabelSequence& hyp) {
  const size_t n = ref.size(), m = hyp.size();
  std::vector<int64_t> d((n + 1) * (m + 1));
  auto at = [&](size_t i, size_t j) -> int64_t& { return d[i * (m + 1) + j]; };
  for (size_t i = 0; i <= n; ++i) at(i, 0) = static_cast<int64_t>(i);
  for (size_t j = 0; j <= m; ++j) at(0, j) = static_cast<int64_t>(j);
  for (size_t i = 1; i <= n; ++i)
    for (size_t j = 1; j <= m; ++j) {
      const int64_t sub = at(i - 1, j - 1) + (ref.ids[i - 1] == hyp.ids[j - 1] ? 0 : 1);
      at(i, j) = std::min({sub, at(i, j - 1) + 1, at(i - 1, j) + 1});
    }

  EditCounts c;
  c.reference_length = static_cast<int64_t>(n);
  size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const bool same = ref.ids[i - 1] == hyp.ids[j - 1];
      if (at(i, j) == at(i - 1, j - 1) + (same ? 0 : 1)) {
        if (!same) ++c.substitutions;
        --i;
        --j;
        continue;
      }
    }
    if (j > 0 && at(i, j) == at(i, j - 1) + 1) {
      ++c.insertions;
      --j;
    } else {
      ++c.deletions;
      --i;
    }
  }
  return c;
}

double letter_accuracy(const EditCounts& counts) {
  if (counts.reference_length < 1) throw std::invalid_argument("letter accuracy needs a non-empty reference");
  return 1.0 - static_cast<double>(counts.errors()) / static_cast<double>(counts.reference_length);
}

double letter_accuracy(const LabelSequence& ref, const LabelSequence& hyp) {
  if (ref.empty()) throw std::invalid_argument("letter accuracy needs a non-empty reference");
  return letter_accuracy(edit_counts(ref, hyp));
}

double corpus_accuracy(const std::vector<LabelPair>& pairs) {
  if (pairs.empty()) throw std::invalid_argument("corpus accuracy of an empty corpus");
  EditCounts total;
  for (const auto& [ref, hyp] : pairs) total += edit_counts(ref, hyp);
  return letter_accuracy(total);
}

double corpus_accuracy_sample_mean(const std::vector<LabelPair>& pairs) {
  if (pairs.empty()) throw std::invalid_argument("corpus accuracy of an empty corpus");
  double sum = 0.0;
  for (const auto& [ref, hyp] : pairs) sum += letter_accuracy(ref, hyp);
  return sum / static_cast<double>(pairs.size());
}

}  // namespace fsr
