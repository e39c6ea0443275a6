#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace genreprobe {

/// One labelled text segment.
struct Chunk {
  std::string id;
  std::string text;
  std::string category;
  std::optional<std::string> source_id;
  std::string dataset;

  bool operator==(const Chunk&) const = default;
};

using Dataset = std::vector<Chunk>;

/// Ordered set of class labels; the position of a label is its class index.
class LabelVocabulary {
 public:
  LabelVocabulary() = default;
  /// Throws InvalidArgument on an empty list or duplicate labels.
  explicit LabelVocabulary(std::vector<std::string> labels);

  std::size_t size() const { return labels_.size(); }
  const std::vector<std::string>& labels() const { return labels_; }
  const std::string& label(std::size_t index) const { return labels_.at(index); }

  bool contains(std::string_view label) const;
  std::optional<std::size_t> find(std::string_view label) const;
  /// Class index of `label`; throws InvalidArgument naming the label if absent.
  std::size_t index_of(std::string_view label) const;

  bool operator==(const LabelVocabulary&) const = default;

 private:
  std::vector<std::string> labels_;
};

/// The five genre classes of the synthetic dataset, most frequent first.
const LabelVocabulary& synthetic_vocabulary();

/// The eight coarse registers of the merged CORE dataset, most frequent first.
const LabelVocabulary& core_vocabulary();

/// Label assigned by the section labeller to text that fits no genre; such
/// chunks never enter a probe dataset.
inline constexpr std::string_view kOtherCategory = "other";

/// The dataset's distinct categories, in synthetic or CORE order when they all
/// belong to that vocabulary and sorted otherwise.
LabelVocabulary infer_vocabulary(const Dataset& dataset);

/// Checks the chunk invariants (non-blank text, known category, unique ids).
/// Throws InvalidArgument describing the first violation.
void validate_dataset(const Dataset& dataset, const LabelVocabulary& vocabulary);

/// Newline-delimited JSON, one flat object per chunk.
Dataset parse_dataset(std::string_view jsonl);
std::string serialize_dataset(const Dataset& dataset);
Dataset read_dataset(const std::filesystem::path& path);
void write_dataset(const std::filesystem::path& path, const Dataset& dataset);

/// Splits text into paragraph chunks on "\n\n". A fenced code block (lines
/// opening with ```) is never split internally. Segments are trimmed and
/// blank segments dropped.
std::vector<std::string> split_chunks(std::string_view text);

/// Fine-to-coarse category table. Coarse labels keep the order in which they
/// first appear in the table.
class LabelMapping {
 public:
  LabelMapping() = default;
  void add(std::string fine, std::string coarse);

  /// Throws InvalidArgument naming `fine_label` when it has no entry.
  const std::string& merge(std::string_view fine_label) const;
  bool contains(std::string_view fine_label) const;
  std::size_t size() const { return table_.size(); }

  /// Distinct coarse labels in first-appearance order.
  LabelVocabulary coarse_vocabulary() const;

  /// Accepts a JSON object {fine: coarse} or tab-separated lines
  /// "fine<TAB>coarse" ('#' starts a comment line).
  static LabelMapping parse(std::string_view content);
  static LabelMapping load(const std::filesystem::path& path);

 private:
  std::map<std::string, std::string, std::less<>> table_;
  std::vector<std::string> coarse_order_;
};

std::string merge_labels(const LabelMapping& mapping, std::string_view fine_label);

/// Relabels every chunk through `mapping`; throws on the first unmapped label.
Dataset merge_dataset(const Dataset& dataset, const LabelMapping& mapping);

/// Location of the shipped CORE merge table.
std::filesystem::path default_core_mapping_path();

struct SplitAssignment {
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
  std::uint64_t seed = 0;
  double ratio = 0.8;

  bool operator==(const SplitAssignment&) const = default;
};

/// Stratified train/test split. Per class the train count is floor(ratio*n_c)
/// or one more, distributed by largest remainder so the overall train size is
/// round(ratio*N); every class keeps at least one member on each side.
/// Throws InvalidArgument for an empty dataset, a ratio outside (0, 1), or a
/// class with fewer than two members.
SplitAssignment split_train_test(const Dataset& dataset, double ratio, std::uint64_t seed);

/// Uniformly draws min(n, available) chunks from every category without
/// replacement. Retained chunks keep their input order.
Dataset subsample_per_category(const Dataset& dataset, std::size_t n, std::uint64_t seed);

/// Drops chunks labelled "other".
Dataset without_other(const Dataset& dataset);

/// Chunk counts per category, keyed by category name.
std::map<std::string, std::size_t> category_counts(const Dataset& dataset);

}  // namespace genreprobe
