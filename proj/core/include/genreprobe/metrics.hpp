#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "genreprobe/corpus.hpp"

namespace genreprobe {

/// counts[true][predicted] over a fixed label vocabulary.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(LabelVocabulary labels);

  void add(std::size_t true_class, std::size_t predicted_class);

  const LabelVocabulary& labels() const { return labels_; }
  std::size_t class_count() const { return labels_.size(); }
  std::uint64_t count(std::size_t true_class, std::size_t predicted_class) const;
  std::uint64_t total() const { return total_; }
  std::uint64_t support(std::size_t true_class) const;

  double precision(std::size_t c) const;
  double recall(std::size_t c) const;
  double f1(std::size_t c) const;
  /// Unweighted mean of per-class F1 over the whole vocabulary.
  double macro_f1() const;

 private:
  LabelVocabulary labels_;
  std::vector<std::uint64_t> counts_;
  std::uint64_t total_ = 0;
};

/// Both overloads throw InvalidArgument on length mismatch, empty input, or
/// labels outside the vocabulary. Any 0/0 in precision, recall or F1 is 0.
ConfusionMatrix confusion(std::span<const std::size_t> y_true, std::span<const std::size_t> y_pred,
                          const LabelVocabulary& labels);
ConfusionMatrix confusion(std::span<const std::string> y_true, std::span<const std::string> y_pred,
                          const LabelVocabulary& labels);

double macro_f1(std::span<const std::size_t> y_true, std::span<const std::size_t> y_pred,
                const LabelVocabulary& labels);
double macro_f1(std::span<const std::string> y_true, std::span<const std::string> y_pred,
                const LabelVocabulary& labels);

}  // namespace genreprobe
