#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "genreprobe/activation_store.hpp"
#include "genreprobe/corpus.hpp"
#include "genreprobe/probes.hpp"

namespace genreprobe {

/// Layer x stream x probe x condition experiment description.
///
/// JSON form (paths relative to the config file):
///   {"dataset": "chunks.jsonl",
///    "activations": {"trained": "t.apb", "control": "c.apb"},
///    "probes": ["logreg", "ridge"], "streams": ["resid_post"],
///    "layers": [0, 3], "split_ratio": 0.8, "seed": 7,
///    "output_prefix": "out/sweep", "workers": 4,
///    "hyperparams": {"l2_strength": 1.0, "max_iter": 100000, "tol": 1e-4,
///                    "k": 5, "svm_iterations": 1000},
///    "labels": ["instructional", ...]}
/// Only "dataset", "activations" and "output_prefix" are required.
struct SweepConfig {
  std::filesystem::path dataset;
  std::filesystem::path trained_activations;
  std::filesystem::path control_activations;
  std::vector<ProbeKind> probes{kProbeKinds.begin(), kProbeKinds.end()};
  std::vector<StreamKind> streams{kStreamKinds.begin(), kStreamKinds.end()};
  /// Empty means every layer.
  std::vector<std::size_t> layers;
  double split_ratio = 0.8;
  std::uint64_t seed = 0;
  std::filesystem::path output_prefix;
  /// 0 selects std::thread::hardware_concurrency().
  std::size_t workers = 0;
  ProbeHyperparams hyperparams;
  /// Label vocabulary override; inferred from the dataset when empty.
  std::optional<std::vector<std::string>> labels;

  static SweepConfig parse(std::string_view json_text, const std::filesystem::path& base_dir = {});
  static SweepConfig load(const std::filesystem::path& path);
};

struct SweepResult {
  std::size_t layer = 0;
  double layer_fraction = 0.0;
  StreamKind stream = StreamKind::resid_post;
  ProbeKind probe = ProbeKind::logreg;
  Condition condition = Condition::trained;
  double macro_f1 = 0.0;
  std::size_t train_size = 0;
  std::size_t test_size = 0;

  bool operator==(const SweepResult&) const = default;
};

/// Already-loaded sweep inputs.
struct SweepInputs {
  Dataset dataset;
  ActivationSet trained;
  ActivationSet control;
};

/// Rows of one activation set and their class indices, per split side.
struct SplitRows {
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> test_rows;
  std::vector<std::size_t> train_labels;
  std::vector<std::size_t> test_labels;
};

struct CellOutcome {
  ProbeModel model;
  double macro_f1 = 0.0;
};

/// Trains one probe on the train rows of (layer, stream) and scores it on the
/// test rows. The scaler sees training rows only.
CellOutcome evaluate_cell(const ActivationSet& activations, std::size_t layer, StreamKind stream, ProbeKind probe,
                          const SplitRows& rows, const LabelVocabulary& labels, const ProbeHyperparams& hyperparams,
                          std::uint64_t seed);

/// A sweep in which at least one cell failed. Successful cells are kept.
class SweepError : public Error {
 public:
  SweepError(std::vector<std::string> failures, std::vector<SweepResult> partial);
  const std::vector<std::string>& failures() const { return failures_; }
  const std::vector<SweepResult>& partial_results() const { return partial_; }

 private:
  std::vector<std::string> failures_;
  std::vector<SweepResult> partial_;
};

/// One shared stratified split drives every cell. Results are sorted by
/// (condition, probe, stream, layer) in enumeration order. Throws
/// InvalidArgument before any training when the two activation headers
/// disagree on shape or chunk ids, or an activation chunk is missing from the
/// dataset. Chunks labelled "other" are left out.
std::vector<SweepResult> run_sweep(const SweepConfig& config, const SweepInputs& inputs);
std::vector<SweepResult> run_sweep(const SweepConfig& config);

/// Header "layer,layer_fraction,stream,probe,condition,macro_f1,train_size,test_size";
/// reals with six decimals. Throws InvalidArgument for empty results.
std::string sweep_csv(std::span<const SweepResult> results);
std::vector<SweepResult> parse_sweep_csv(std::string_view csv);

/// Line chart of macro F1 against layer fraction, one panel per stream; solid
/// lines for trained, dashed for control, one color per probe.
std::string sweep_svg(std::span<const SweepResult> results);

/// Writes <prefix>.csv and <prefix>.svg.
void emit_sweep_outputs(const std::filesystem::path& prefix, std::span<const SweepResult> results);

}  // namespace genreprobe
