#pragma once

// Mean-pooled activation storage and the model-adapter contract.
//
// ActivationFile layout (all integers little-endian):
//
//   offset 0   8 bytes   magic "APROBE1\0"
//   offset 8   uint32    H, byte length of the header
//   offset 12  H bytes   UTF-8 JSON header:
//                          {"model_id": str, "condition": "trained"|"control",
//                           "seed": uint, "layer_count": L, "hidden_dim": d,
//                           "streams": ["resid_post","attn_out","mlp_out"],
//                           "pooling": "mean", "chunk_ids": [str, ...]}
//   offset 12+H          N*L*3*d IEEE-754 binary32 values, row-major over
//                        [chunk][layer][stream][dim], chunks in header order.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "genreprobe/corpus.hpp"
#include "genreprobe/error.hpp"

namespace genreprobe {

enum class StreamKind : std::uint8_t { resid_post = 0, attn_out = 1, mlp_out = 2 };

inline constexpr std::array<StreamKind, 3> kStreamKinds = {
    StreamKind::resid_post, StreamKind::attn_out, StreamKind::mlp_out};
inline constexpr std::size_t kStreamCount = kStreamKinds.size();

std::string_view to_string(StreamKind kind);
StreamKind parse_stream_kind(std::string_view name);

/// Whether activations come from the model as given or from its
/// random-parameter control copy.
enum class Condition : std::uint8_t { trained = 0, control = 1 };

std::string_view to_string(Condition condition);
Condition parse_condition(std::string_view name);

enum class FormatErrc {
  io,
  bad_magic,
  malformed_header,
  truncated_payload,
  shape_mismatch,
  duplicate_chunk_id,
  non_finite,
};

std::string_view to_string(FormatErrc code);

/// Rejection of an activation file; `code()` identifies the failed check.
class FormatError : public Error {
 public:
  FormatError(FormatErrc code, const std::string& detail);
  FormatErrc code() const { return code_; }

 private:
  FormatErrc code_;
};

struct ActivationHeader {
  std::string model_id;
  Condition condition = Condition::trained;
  std::uint64_t seed = 0;
  std::size_t layer_count = 0;
  std::size_t hidden_dim = 0;
  std::vector<std::string> chunk_ids;

  std::size_t values_per_chunk() const { return layer_count * kStreamCount * hidden_dim; }
  bool operator==(const ActivationHeader&) const = default;
};

/// Mean-pooled vectors of one chunk, indexed [layer][stream][dim].
struct ActivationTensor {
  std::string chunk_id;
  std::size_t layer_count = 0;
  std::size_t hidden_dim = 0;
  std::vector<float> values;

  std::span<const float> at(std::size_t layer, StreamKind stream) const;
};

/// In-memory contents of an activation file.
class ActivationSet {
 public:
  ActivationSet() = default;
  /// Throws FormatError if `values` does not match the header shape.
  ActivationSet(ActivationHeader header, std::vector<float> values);

  const ActivationHeader& header() const { return header_; }
  std::span<const float> values() const { return values_; }
  std::size_t chunk_count() const { return header_.chunk_ids.size(); }

  std::span<const float> vector(std::size_t chunk, std::size_t layer, StreamKind stream) const;
  std::optional<std::size_t> find_chunk(std::string_view chunk_id) const;

  /// Rows = `chunks` (positions in header order), columns = hidden dims.
  Eigen::MatrixXd matrix(std::size_t layer, StreamKind stream, std::span<const std::size_t> chunks) const;

  bool operator==(const ActivationSet&) const = default;

 private:
  ActivationHeader header_;
  std::vector<float> values_;
};

/// Serializes to the byte layout documented above. Throws FormatError on
/// duplicate chunk ids or non-finite values.
std::string encode_activation_file(const ActivationSet& set);

/// Parses and validates the byte layout documented above. A payload shorter
/// than the header implies and not a multiple of 12*N bytes (what any other
/// L and d would produce) is truncated_payload; any other size disagreement is
/// shape_mismatch.
ActivationSet decode_activation_file(std::string_view bytes);

void write_activation_file(const std::filesystem::path& path, const ActivationSet& set);
ActivationSet read_activation_file(const std::filesystem::path& path);

/// Component-wise arithmetic mean of equal-length vectors, accumulated in
/// double precision. Throws InvalidArgument for an empty list.
std::vector<double> mean_pool(std::span<const std::vector<double>> token_vectors);

/// Per-token activations of one forward pass, indexed [token][layer][stream][dim].
struct TokenActivations {
  std::size_t token_count = 0;
  std::size_t layer_count = 0;
  std::size_t hidden_dim = 0;
  std::vector<float> values;

  std::span<const float> at(std::size_t token, std::size_t layer, StreamKind stream) const;
};

/// A causal language model that can report per-token activations for every
/// (layer, stream). Implementations must be deterministic, and `forward` must
/// be safe to call concurrently on a const instance.
class ModelAdapter {
 public:
  virtual ~ModelAdapter() = default;

  virtual std::string model_id() const = 0;
  virtual std::size_t layer_count() const = 0;
  virtual std::size_t hidden_dim() const = 0;

  virtual std::vector<std::int32_t> tokenize(std::string_view text) const = 0;
  /// True for markers such as begin-of-sequence that are excluded from pooling.
  virtual bool is_special_token(std::int32_t token) const = 0;
  virtual TokenActivations forward(std::span<const std::int32_t> tokens) const = 0;

  virtual std::unique_ptr<ModelAdapter> clone() const = 0;
  /// Mutable views of every parameter tensor, in a fixed order.
  virtual std::vector<std::span<float>> parameter_tensors() = 0;
};

/// Standard deviation of the control re-initialization.
inline constexpr double kControlInitStddev = 0.02;

/// Copy of `adapter` with every parameter drawn independently from
/// Normal(0, 0.02^2) using `seed`. Architecture and tokenizer are unchanged.
std::unique_ptr<ModelAdapter> randomize_parameters(const ModelAdapter& adapter, std::uint64_t seed);

/// Mean over content tokens (special tokens excluded) of one forward pass.
ActivationTensor pool_chunk(const ModelAdapter& adapter, const Chunk& chunk);

struct ExtractOptions {
  Condition condition = Condition::trained;
  std::uint64_t seed = 0;
  /// 0 selects std::thread::hardware_concurrency().
  std::size_t workers = 0;
};

/// One pooled tensor per chunk, in dataset order. Errors name the chunk id.
ActivationSet extract_activations(const ModelAdapter& adapter, const Dataset& chunks,
                                  const ExtractOptions& options = {});

}  // namespace genreprobe
