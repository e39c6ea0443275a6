#include "genreprobe/metrics.hpp"

#include "genreprobe/error.hpp"

namespace genreprobe {

namespace {

double safe_ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

}  // namespace

ConfusionMatrix::ConfusionMatrix(LabelVocabulary labels)
    : labels_(std::move(labels)), counts_(labels_.size() * labels_.size(), 0) {}

void ConfusionMatrix::add(std::size_t true_class, std::size_t predicted_class) {
  const std::size_t C = class_count();
  if (true_class >= C || predicted_class >= C) throw InvalidArgument("class index outside the vocabulary");
  ++counts_[true_class * C + predicted_class];
  ++total_;
}

std::uint64_t ConfusionMatrix::count(std::size_t true_class, std::size_t predicted_class) const {
  return counts_.at(true_class * class_count() + predicted_class);
}

std::uint64_t ConfusionMatrix::support(std::size_t true_class) const {
  std::uint64_t sum = 0;
  for (std::size_t p = 0; p < class_count(); ++p) sum += count(true_class, p);
  return sum;
}

double ConfusionMatrix::precision(std::size_t c) const {
  std::uint64_t predicted = 0;
  for (std::size_t t = 0; t < class_count(); ++t) predicted += count(t, c);
  return safe_ratio(static_cast<double>(count(c, c)), static_cast<double>(predicted));
}

double ConfusionMatrix::recall(std::size_t c) const {
  return safe_ratio(static_cast<double>(count(c, c)), static_cast<double>(support(c)));
}

double ConfusionMatrix::f1(std::size_t c) const {
  const double p = precision(c);
  const double r = recall(c);
  return safe_ratio(2.0 * p * r, p + r);
}

double ConfusionMatrix::macro_f1() const {
  double sum = 0.0;
  for (std::size_t c = 0; c < class_count(); ++c) sum += f1(c);
  return sum / static_cast<double>(class_count());
}

ConfusionMatrix confusion(std::span<const std::size_t> y_true, std::span<const std::size_t> y_pred,
                          const LabelVocabulary& labels) {
  if (y_true.size() != y_pred.size()) {
    throw InvalidArgument("y_true has " + std::to_string(y_true.size()) + " labels but y_pred has " +
                          std::to_string(y_pred.size()));
  }
  if (y_true.empty()) throw InvalidArgument("cannot score an empty prediction set");
  ConfusionMatrix matrix(labels);
  for (std::size_t i = 0; i < y_true.size(); ++i) matrix.add(y_true[i], y_pred[i]);
  return matrix;
}

ConfusionMatrix confusion(std::span<const std::string> y_true, std::span<const std::string> y_pred,
                          const LabelVocabulary& labels) {
  if (y_true.size() != y_pred.size()) {
    throw InvalidArgument("y_true has " + std::to_string(y_true.size()) + " labels but y_pred has " +
                          std::to_string(y_pred.size()));
  }
  std::vector<std::size_t> t, p;
  t.reserve(y_true.size());
  p.reserve(y_pred.size());
  for (const auto& label : y_true) t.push_back(labels.index_of(label));
  for (const auto& label : y_pred) p.push_back(labels.index_of(label));
  return confusion(std::span<const std::size_t>(t), std::span<const std::size_t>(p), labels);
}

double macro_f1(std::span<const std::size_t> y_true, std::span<const std::size_t> y_pred,
                const LabelVocabulary& labels) {
  return confusion(y_true, y_pred, labels).macro_f1();
}

double macro_f1(std::span<const std::string> y_true, std::span<const std::string> y_pred,
                const LabelVocabulary& labels) {
  return confusion(y_true, y_pred, labels).macro_f1();
}

}  // namespace genreprobe
