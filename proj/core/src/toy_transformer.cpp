#include "genreprobe/toy_transformer.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "genreprobe/random.hpp"
#include "text_util.hpp"

namespace genreprobe {

namespace {

constexpr float kLayerNormEps = 1e-5F;

template <typename Row>
void layer_norm_rows(const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>& x,
                     const Row& gain, const Row& bias,
                     Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>& out) {
  out.resize(x.rows(), x.cols());
  const float n = static_cast<float>(x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const float mean = x.row(r).sum() / n;
    const float var = (x.row(r).array() - mean).square().sum() / n;
    const float inv = 1.0F / std::sqrt(var + kLayerNormEps);
    out.row(r) = ((x.row(r).array() - mean) * inv * gain.array() + bias.array()).matrix();
  }
}

float gelu(float v) {
  constexpr float kSqrt2OverPi = 0.7978845608028654F;
  return 0.5F * v * (1.0F + std::tanh(kSqrt2OverPi * (v + 0.044715F * v * v * v)));
}

}  // namespace

ToyTransformer::ToyTransformer(const ToyTransformerConfig& config) : config_(config) {
  if (config_.layers == 0 || config_.hidden_dim == 0 || config_.heads == 0 ||
      config_.hidden_dim % config_.heads != 0 || config_.mlp_multiplier == 0) {
    throw InvalidArgument("invalid toy transformer configuration");
  }
  allocate();
}

void ToyTransformer::allocate() {
  const auto d = static_cast<Eigen::Index>(config_.hidden_dim);
  const auto m = static_cast<Eigen::Index>(config_.hidden_dim * config_.mlp_multiplier);
  embedding_ = Matrix::Zero(static_cast<Eigen::Index>(kVocabSize), d);
  blocks_.assign(config_.layers, Block{});
  for (Block& b : blocks_) {
    b.ln1_gain = Vector::Ones(d);
    b.ln1_bias = Vector::Zero(d);
    b.w_query = b.w_key = b.w_value = b.w_out = Matrix::Zero(d, d);
    b.b_query = b.b_key = b.b_value = b.b_out = Vector::Zero(d);
    b.ln2_gain = Vector::Ones(d);
    b.ln2_bias = Vector::Zero(d);
    b.w_up = Matrix::Zero(d, m);
    b.b_up = Vector::Zero(m);
    b.w_down = Matrix::Zero(m, d);
    b.b_down = Vector::Zero(d);
  }
}

ToyTransformer ToyTransformer::from_seed(const ToyTransformerConfig& config, std::uint64_t seed) {
  ToyTransformer model(config);
  model.model_id_ = "toy-byte-L" + std::to_string(config.layers) + "-d" + std::to_string(config.hidden_dim) +
                    "-s" + std::to_string(seed);
  Rng rng(seed);
  auto fill = [&rng](auto& tensor, double stddev) {
    for (Eigen::Index i = 0; i < tensor.size(); ++i) tensor.data()[i] = static_cast<float>(rng.normal(0.0, stddev));
  };
  const double d = static_cast<double>(config.hidden_dim);
  const double m = d * static_cast<double>(config.mlp_multiplier);
  fill(model.embedding_, 1.0);
  for (Block& b : model.blocks_) {
    fill(b.w_query, 1.0 / std::sqrt(d));
    fill(b.w_key, 1.0 / std::sqrt(d));
    fill(b.w_value, 1.0 / std::sqrt(d));
    fill(b.w_out, 1.0 / std::sqrt(d));
    fill(b.w_up, 1.0 / std::sqrt(d));
    fill(b.w_down, 1.0 / std::sqrt(m));
  }
  return model;
}

std::vector<std::pair<std::string, std::span<float>>> ToyTransformer::named_parameters() {
  std::vector<std::pair<std::string, std::span<float>>> out;
  auto add = [&out](std::string name, auto& tensor) {
    out.emplace_back(std::move(name), std::span<float>(tensor.data(), static_cast<std::size_t>(tensor.size())));
  };
  add("embedding", embedding_);
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    Block& b = blocks_[l];
    const std::string p = "blocks." + std::to_string(l) + ".";
    add(p + "ln1_gain", b.ln1_gain);
    add(p + "ln1_bias", b.ln1_bias);
    add(p + "w_query", b.w_query);
    add(p + "b_query", b.b_query);
    add(p + "w_key", b.w_key);
    add(p + "b_key", b.b_key);
    add(p + "w_value", b.w_value);
    add(p + "b_value", b.b_value);
    add(p + "w_out", b.w_out);
    add(p + "b_out", b.b_out);
    add(p + "ln2_gain", b.ln2_gain);
    add(p + "ln2_bias", b.ln2_bias);
    add(p + "w_up", b.w_up);
    add(p + "b_up", b.b_up);
    add(p + "w_down", b.w_down);
    add(p + "b_down", b.b_down);
  }
  return out;
}

std::vector<std::span<float>> ToyTransformer::parameter_tensors() {
  std::vector<std::span<float>> out;
  for (auto& [name, view] : named_parameters()) out.push_back(view);
  return out;
}

std::unique_ptr<ModelAdapter> ToyTransformer::clone() const { return std::make_unique<ToyTransformer>(*this); }

std::vector<std::int32_t> ToyTransformer::tokenize(std::string_view text) const {
  std::vector<std::int32_t> tokens;
  tokens.reserve(text.size() + 1);
  tokens.push_back(kBosToken);
  for (unsigned char c : text) tokens.push_back(static_cast<std::int32_t>(c));
  return tokens;
}

TokenActivations ToyTransformer::forward(std::span<const std::int32_t> tokens) const {
  const auto T = static_cast<Eigen::Index>(tokens.size());
  const auto d = static_cast<Eigen::Index>(config_.hidden_dim);
  const auto heads = static_cast<Eigen::Index>(config_.heads);
  const Eigen::Index head_dim = d / heads;
  const float score_scale = 1.0F / std::sqrt(static_cast<float>(head_dim));
  const std::size_t L = config_.layers;
  const std::size_t D = config_.hidden_dim;

  TokenActivations out;
  out.token_count = tokens.size();
  out.layer_count = L;
  out.hidden_dim = D;
  out.values.resize(tokens.size() * L * kStreamCount * D);
  auto record = [&](std::size_t layer, StreamKind stream, const Matrix& m) {
    for (Eigen::Index t = 0; t < T; ++t) {
      const std::size_t offset =
          ((static_cast<std::size_t>(t) * L + layer) * kStreamCount + static_cast<std::size_t>(stream)) * D;
      for (Eigen::Index k = 0; k < d; ++k) out.values[offset + static_cast<std::size_t>(k)] = m(t, k);
    }
  };

  Matrix x(T, d);
  for (Eigen::Index t = 0; t < T; ++t) {
    const std::int32_t token = tokens[static_cast<std::size_t>(t)];
    if (token < 0 || token >= static_cast<std::int32_t>(kVocabSize)) {
      throw InvalidArgument("token id " + std::to_string(token) + " outside the toy vocabulary");
    }
    x.row(t) = embedding_.row(token);
    for (Eigen::Index k = 0; k < d; k += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(k) / static_cast<double>(d));
      x(t, k) += static_cast<float>(std::sin(static_cast<double>(t) * freq));
      if (k + 1 < d) x(t, k + 1) += static_cast<float>(std::cos(static_cast<double>(t) * freq));
    }
  }

  Matrix normed, q, k, v, mixed(T, d), attn, hidden, mlp;
  Eigen::MatrixXf scores;
  for (std::size_t layer = 0; layer < L; ++layer) {
    const Block& b = blocks_[layer];
    layer_norm_rows(x, b.ln1_gain, b.ln1_bias, normed);
    q = (normed * b.w_query).rowwise() + b.b_query;
    k = (normed * b.w_key).rowwise() + b.b_key;
    v = (normed * b.w_value).rowwise() + b.b_value;
    for (Eigen::Index h = 0; h < heads; ++h) {
      const Eigen::Index c0 = h * head_dim;
      scores = (q.middleCols(c0, head_dim) * k.middleCols(c0, head_dim).transpose()) * score_scale;
      for (Eigen::Index i = 0; i < T; ++i) {
        const float peak = scores.row(i).head(i + 1).maxCoeff();
        float total = 0.0F;
        for (Eigen::Index j = 0; j <= i; ++j) {
          scores(i, j) = std::exp(scores(i, j) - peak);
          total += scores(i, j);
        }
        for (Eigen::Index j = 0; j <= i; ++j) scores(i, j) /= total;
        for (Eigen::Index j = i + 1; j < T; ++j) scores(i, j) = 0.0F;
      }
      mixed.middleCols(c0, head_dim) = scores * v.middleCols(c0, head_dim);
    }
    attn = (mixed * b.w_out).rowwise() + b.b_out;
    x += attn;

    layer_norm_rows(x, b.ln2_gain, b.ln2_bias, normed);
    hidden = (normed * b.w_up).rowwise() + b.b_up;
    hidden = hidden.unaryExpr([](float value) { return gelu(value); });
    mlp = (hidden * b.w_down).rowwise() + b.b_down;
    x += mlp;

    record(layer, StreamKind::attn_out, attn);
    record(layer, StreamKind::mlp_out, mlp);
    record(layer, StreamKind::resid_post, x);
  }
  return out;
}

void ToyTransformer::save(const std::filesystem::path& path) const {
  nlohmann::ordered_json doc;
  doc["format"] = "genreprobe-toy-transformer";
  doc["model_id"] = model_id_;
  doc["config"] = {{"layers", config_.layers},
                   {"hidden_dim", config_.hidden_dim},
                   {"heads", config_.heads},
                   {"mlp_multiplier", config_.mlp_multiplier}};
  auto& params = doc["parameters"];
  for (const auto& [name, view] : const_cast<ToyTransformer*>(this)->named_parameters()) {
    params[name] = std::vector<float>(view.begin(), view.end());
  }
  detail::write_text_file(path, doc.dump());
}

ToyTransformer ToyTransformer::load(const std::filesystem::path& path) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(detail::read_text_file(path));
    if (doc.at("format").get<std::string>() != "genreprobe-toy-transformer") {
      throw InvalidArgument("not a toy transformer fixture");
    }
    ToyTransformerConfig config;
    const auto& c = doc.at("config");
    config.layers = c.at("layers").get<std::size_t>();
    config.hidden_dim = c.at("hidden_dim").get<std::size_t>();
    config.heads = c.at("heads").get<std::size_t>();
    config.mlp_multiplier = c.at("mlp_multiplier").get<std::size_t>();
    ToyTransformer model(config);
    model.model_id_ = doc.at("model_id").get<std::string>();
    const auto& params = doc.at("parameters");
    for (auto& [name, view] : model.named_parameters()) {
      const auto values = params.at(name).get<std::vector<float>>();
      if (values.size() != view.size()) {
        throw InvalidArgument("parameter '" + name + "' has " + std::to_string(values.size()) +
                              " values, expected " + std::to_string(view.size()));
      }
      std::copy(values.begin(), values.end(), view.begin());
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument("toy transformer fixture '" + path.string() + "': " + e.what());
  }
}

}  // namespace genreprobe
