#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "genreprobe/activation_store.hpp"

namespace genreprobe {

struct ToyTransformerConfig {
  std::size_t layers = 4;
  std::size_t hidden_dim = 32;
  std::size_t heads = 4;
  std::size_t mlp_multiplier = 4;

  bool operator==(const ToyTransformerConfig&) const = default;
};

/// Byte-level decoder-only transformer with pre-norm residual blocks.
///
/// Tokens are the 256 byte values plus a begin-of-sequence marker (id 256)
/// prepended by tokenize(). Positions use fixed sinusoidal encodings, so any
/// sequence length is accepted. Each block records its attention output, its
/// MLP output and the residual stream after the block.
class ToyTransformer final : public ModelAdapter {
 public:
  static constexpr std::int32_t kBosToken = 256;
  static constexpr std::size_t kVocabSize = 257;

  /// Weights drawn from a seeded scaled-normal initialization.
  static ToyTransformer from_seed(const ToyTransformerConfig& config, std::uint64_t seed);
  /// JSON weight fixture written by save().
  static ToyTransformer load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  const ToyTransformerConfig& config() const { return config_; }

  std::string model_id() const override { return model_id_; }
  std::size_t layer_count() const override { return config_.layers; }
  std::size_t hidden_dim() const override { return config_.hidden_dim; }

  std::vector<std::int32_t> tokenize(std::string_view text) const override;
  bool is_special_token(std::int32_t token) const override { return token == kBosToken; }
  TokenActivations forward(std::span<const std::int32_t> tokens) const override;

  std::unique_ptr<ModelAdapter> clone() const override;
  std::vector<std::span<float>> parameter_tensors() override;

 private:
  using Matrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Vector = Eigen::Matrix<float, 1, Eigen::Dynamic>;

  struct Block {
    Vector ln1_gain, ln1_bias;
    Matrix w_query, w_key, w_value, w_out;
    Vector b_query, b_key, b_value, b_out;
    Vector ln2_gain, ln2_bias;
    Matrix w_up, w_down;
    Vector b_up, b_down;
  };

  explicit ToyTransformer(const ToyTransformerConfig& config);
  void allocate();
  /// Named views in the canonical parameter order.
  std::vector<std::pair<std::string, std::span<float>>> named_parameters();

  ToyTransformerConfig config_;
  std::string model_id_;
  Matrix embedding_;
  std::vector<Block> blocks_;
};

}  // namespace genreprobe
