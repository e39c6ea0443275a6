#include "genreprobe/activation_store.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>
#include <exception>
#include <mutex>
#include <set>
#include <thread>

#include <nlohmann/json.hpp>

#include "genreprobe/random.hpp"
#include "text_util.hpp"

namespace genreprobe {

using nlohmann::json;

namespace {

constexpr std::array<char, 8> kMagic = {'A', 'P', 'R', 'O', 'B', 'E', '1', '\0'};
constexpr std::size_t kPreambleSize = kMagic.size() + sizeof(std::uint32_t);

void put_u32_le(std::string& out, std::uint32_t value) {
  for (int shift = 0; shift < 32; shift += 8) out.push_back(static_cast<char>((value >> shift) & 0xFF));
}

std::uint32_t get_u32_le(const char* bytes) {
  std::uint32_t value = 0;
  for (int i = 0; i < 4; ++i) value |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i])) << (8 * i);
  return value;
}

void check_unique(const std::vector<std::string>& ids) {
  std::set<std::string_view> seen;
  for (const auto& id : ids) {
    if (!seen.insert(id).second) throw FormatError(FormatErrc::duplicate_chunk_id, "'" + id + "'");
  }
}

void check_finite(const ActivationHeader& header, std::span<const float> values) {
  const std::size_t d = header.hidden_dim;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (std::isfinite(values[i])) continue;
    const std::size_t dim = i % d;
    const std::size_t stream = (i / d) % kStreamCount;
    const std::size_t layer = (i / (d * kStreamCount)) % header.layer_count;
    const std::size_t chunk = i / header.values_per_chunk();
    throw FormatError(FormatErrc::non_finite,
                      "at (chunk '" + header.chunk_ids[chunk] + "', layer " + std::to_string(layer) +
                          ", stream " + std::string(to_string(kStreamKinds[stream])) + ", dim " +
                          std::to_string(dim) + ")");
  }
}

}  // namespace

std::string_view to_string(StreamKind kind) {
  switch (kind) {
    case StreamKind::resid_post: return "resid_post";
    case StreamKind::attn_out: return "attn_out";
    case StreamKind::mlp_out: return "mlp_out";
  }
  return "unknown";
}

StreamKind parse_stream_kind(std::string_view name) {
  for (StreamKind kind : kStreamKinds) {
    if (to_string(kind) == name) return kind;
  }
  throw InvalidArgument("unknown stream kind '" + std::string(name) + "'");
}

std::string_view to_string(Condition condition) {
  return condition == Condition::trained ? "trained" : "control";
}

Condition parse_condition(std::string_view name) {
  if (name == "trained") return Condition::trained;
  if (name == "control") return Condition::control;
  throw InvalidArgument("unknown condition '" + std::string(name) + "'");
}

std::string_view to_string(FormatErrc code) {
  switch (code) {
    case FormatErrc::io: return "io error";
    case FormatErrc::bad_magic: return "bad magic";
    case FormatErrc::malformed_header: return "malformed header";
    case FormatErrc::truncated_payload: return "truncated payload";
    case FormatErrc::shape_mismatch: return "shape mismatch";
    case FormatErrc::duplicate_chunk_id: return "duplicate chunk id";
    case FormatErrc::non_finite: return "non-finite value";
  }
  return "unknown";
}

FormatError::FormatError(FormatErrc code, const std::string& detail)
    : Error(std::string(to_string(code)) + (detail.empty() ? "" : ": " + detail)), code_(code) {}

std::span<const float> ActivationTensor::at(std::size_t layer, StreamKind stream) const {
  const std::size_t offset = (layer * kStreamCount + static_cast<std::size_t>(stream)) * hidden_dim;
  return std::span<const float>(values).subspan(offset, hidden_dim);
}

std::span<const float> TokenActivations::at(std::size_t token, std::size_t layer, StreamKind stream) const {
  const std::size_t offset =
      ((token * layer_count + layer) * kStreamCount + static_cast<std::size_t>(stream)) * hidden_dim;
  return std::span<const float>(values).subspan(offset, hidden_dim);
}

ActivationSet::ActivationSet(ActivationHeader header, std::vector<float> values)
    : header_(std::move(header)), values_(std::move(values)) {
  if (values_.size() != header_.chunk_ids.size() * header_.values_per_chunk()) {
    throw FormatError(FormatErrc::shape_mismatch,
                      "expected " + std::to_string(header_.chunk_ids.size() * header_.values_per_chunk()) +
                          " values, got " + std::to_string(values_.size()));
  }
}

std::span<const float> ActivationSet::vector(std::size_t chunk, std::size_t layer, StreamKind stream) const {
  const std::size_t offset = chunk * header_.values_per_chunk() +
                             (layer * kStreamCount + static_cast<std::size_t>(stream)) * header_.hidden_dim;
  return std::span<const float>(values_).subspan(offset, header_.hidden_dim);
}

std::optional<std::size_t> ActivationSet::find_chunk(std::string_view chunk_id) const {
  const auto& ids = header_.chunk_ids;
  auto it = std::find(ids.begin(), ids.end(), chunk_id);
  if (it == ids.end()) return std::nullopt;
  return static_cast<std::size_t>(it - ids.begin());
}

Eigen::MatrixXd ActivationSet::matrix(std::size_t layer, StreamKind stream,
                                      std::span<const std::size_t> chunks) const {
  if (layer >= header_.layer_count) throw InvalidArgument("layer index out of range");
  Eigen::MatrixXd out(static_cast<Eigen::Index>(chunks.size()), static_cast<Eigen::Index>(header_.hidden_dim));
  for (std::size_t r = 0; r < chunks.size(); ++r) {
    auto row = vector(chunks[r], layer, stream);
    for (std::size_t c = 0; c < row.size(); ++c) {
      out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = row[c];
    }
  }
  return out;
}

std::string encode_activation_file(const ActivationSet& set) {
  const auto& header = set.header();
  check_unique(header.chunk_ids);
  check_finite(header, set.values());

  nlohmann::ordered_json meta;
  meta["model_id"] = header.model_id;
  meta["condition"] = to_string(header.condition);
  meta["seed"] = header.seed;
  meta["layer_count"] = header.layer_count;
  meta["hidden_dim"] = header.hidden_dim;
  meta["streams"] = {"resid_post", "attn_out", "mlp_out"};
  meta["pooling"] = "mean";
  meta["chunk_ids"] = header.chunk_ids;
  const std::string header_text = meta.dump();

  std::string out;
  out.reserve(kPreambleSize + header_text.size() + 4 * set.values().size());
  out.append(kMagic.data(), kMagic.size());
  put_u32_le(out, static_cast<std::uint32_t>(header_text.size()));
  out += header_text;
  for (float value : set.values()) put_u32_le(out, std::bit_cast<std::uint32_t>(value));
  return out;
}

ActivationSet decode_activation_file(std::string_view bytes) {
  if (bytes.size() < kMagic.size() || std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0) {
    throw FormatError(FormatErrc::bad_magic, "file does not start with APROBE1");
  }
  if (bytes.size() < kPreambleSize) throw FormatError(FormatErrc::malformed_header, "file shorter than preamble");
  const std::uint32_t header_len = get_u32_le(bytes.data() + kMagic.size());
  if (bytes.size() - kPreambleSize < header_len) {
    throw FormatError(FormatErrc::malformed_header, "header length exceeds file size");
  }

  ActivationHeader header;
  try {
    const json meta = json::parse(bytes.substr(kPreambleSize, header_len));
    header.model_id = meta.at("model_id").get<std::string>();
    header.condition = parse_condition(meta.at("condition").get<std::string>());
    header.seed = meta.at("seed").get<std::uint64_t>();
    header.layer_count = meta.at("layer_count").get<std::size_t>();
    header.hidden_dim = meta.at("hidden_dim").get<std::size_t>();
    header.chunk_ids = meta.at("chunk_ids").get<std::vector<std::string>>();
    const auto streams = meta.at("streams").get<std::vector<std::string>>();
    if (streams != std::vector<std::string>{"resid_post", "attn_out", "mlp_out"}) {
      throw FormatError(FormatErrc::malformed_header, "unexpected stream list");
    }
    if (meta.at("pooling").get<std::string>() != "mean") {
      throw FormatError(FormatErrc::malformed_header, "unsupported pooling");
    }
  } catch (const json::exception& e) {
    throw FormatError(FormatErrc::malformed_header, e.what());
  } catch (const InvalidArgument& e) {
    throw FormatError(FormatErrc::malformed_header, e.what());
  }
  if (header.layer_count == 0 || header.hidden_dim == 0) {
    throw FormatError(FormatErrc::malformed_header, "layer_count and hidden_dim must be positive");
  }
  check_unique(header.chunk_ids);

  const std::string_view payload = bytes.substr(kPreambleSize + header_len);
  const std::size_t expected = 4 * header.values_per_chunk() * header.chunk_ids.size();
  if (payload.size() != expected) {
    // A short payload that still splits evenly into N chunks x 3 streams of
    // float32 was written for another (L, d); any other shortfall is a cut.
    const std::size_t record_grain = 4 * kStreamCount * std::max<std::size_t>(header.chunk_ids.size(), 1);
    const bool partial = payload.size() < expected && payload.size() % record_grain != 0;
    if (partial) {
      throw FormatError(FormatErrc::truncated_payload,
                        std::to_string(payload.size()) + " of " + std::to_string(expected) + " bytes");
    }
    throw FormatError(FormatErrc::shape_mismatch, "payload has " + std::to_string(payload.size()) +
                                                       " bytes, header implies " + std::to_string(expected));
  }

  std::vector<float> values(payload.size() / 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = std::bit_cast<float>(get_u32_le(payload.data() + 4 * i));
  }
  check_finite(header, values);
  return ActivationSet(std::move(header), std::move(values));
}

void write_activation_file(const std::filesystem::path& path, const ActivationSet& set) {
  const std::string bytes = encode_activation_file(set);
  try {
    detail::write_text_file(path, bytes);
  } catch (const IoError& e) {
    throw FormatError(FormatErrc::io, e.what());
  }
}

ActivationSet read_activation_file(const std::filesystem::path& path) {
  std::string bytes;
  try {
    bytes = detail::read_text_file(path);
  } catch (const IoError& e) {
    throw FormatError(FormatErrc::io, e.what());
  }
  return decode_activation_file(bytes);
}

std::vector<double> mean_pool(std::span<const std::vector<double>> token_vectors) {
  if (token_vectors.empty()) throw InvalidArgument("empty chunk after tokenization");
  const std::size_t d = token_vectors.front().size();
  std::vector<double> sum(d, 0.0);
  for (const auto& v : token_vectors) {
    if (v.size() != d) throw InvalidArgument("token vectors differ in length");
    for (std::size_t k = 0; k < d; ++k) sum[k] += v[k];
  }
  const double n = static_cast<double>(token_vectors.size());
  for (double& s : sum) s /= n;
  return sum;
}

std::unique_ptr<ModelAdapter> randomize_parameters(const ModelAdapter& adapter, std::uint64_t seed) {
  auto copy = adapter.clone();
  Rng rng(seed);
  for (std::span<float> tensor : copy->parameter_tensors()) {
    for (float& value : tensor) value = static_cast<float>(rng.normal(0.0, kControlInitStddev));
  }
  return copy;
}

ActivationTensor pool_chunk(const ModelAdapter& adapter, const Chunk& chunk) {
  std::vector<std::int32_t> tokens;
  TokenActivations acts;
  try {
    tokens = adapter.tokenize(chunk.text);
  } catch (const std::exception& e) {
    throw InvalidArgument("chunk '" + chunk.id + "': tokenizer failure: " + e.what());
  }
  std::vector<std::size_t> content;
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    if (!adapter.is_special_token(tokens[t])) content.push_back(t);
  }
  if (content.empty()) throw InvalidArgument("chunk '" + chunk.id + "': empty chunk after tokenization");

  try {
    acts = adapter.forward(tokens);
  } catch (const std::exception& e) {
    throw InvalidArgument("chunk '" + chunk.id + "': forward pass failed: " + e.what());
  }
  const std::size_t L = adapter.layer_count();
  const std::size_t d = adapter.hidden_dim();
  if (acts.token_count != tokens.size() || acts.layer_count != L || acts.hidden_dim != d ||
      acts.values.size() != tokens.size() * L * kStreamCount * d) {
    throw InvalidArgument("chunk '" + chunk.id + "': adapter returned activations of unexpected shape");
  }

  ActivationTensor tensor{chunk.id, L, d, std::vector<float>(L * kStreamCount * d)};
  std::vector<double> sum(d);
  for (std::size_t layer = 0; layer < L; ++layer) {
    for (StreamKind stream : kStreamKinds) {
      std::fill(sum.begin(), sum.end(), 0.0);
      for (std::size_t t : content) {
        auto v = acts.at(t, layer, stream);
        for (std::size_t k = 0; k < d; ++k) sum[k] += v[k];
      }
      const std::size_t offset = (layer * kStreamCount + static_cast<std::size_t>(stream)) * d;
      for (std::size_t k = 0; k < d; ++k) {
        const double mean = sum[k] / static_cast<double>(content.size());
        if (!std::isfinite(mean)) {
          throw InvalidArgument("chunk '" + chunk.id + "': non-finite activation");
        }
        tensor.values[offset + k] = static_cast<float>(mean);
      }
    }
  }
  return tensor;
}

ActivationSet extract_activations(const ModelAdapter& adapter, const Dataset& chunks,
                                  const ExtractOptions& options) {
  ActivationHeader header;
  header.model_id = adapter.model_id();
  header.condition = options.condition;
  header.seed = options.seed;
  header.layer_count = adapter.layer_count();
  header.hidden_dim = adapter.hidden_dim();
  for (const auto& chunk : chunks) header.chunk_ids.push_back(chunk.id);
  try {
    check_unique(header.chunk_ids);
  } catch (const FormatError& e) {
    throw InvalidArgument(e.what());
  }

  const std::size_t per_chunk = header.values_per_chunk();
  std::vector<float> values(per_chunk * chunks.size());

  std::size_t workers = options.workers != 0 ? options.workers : std::thread::hardware_concurrency();
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(chunks.size(), 1));

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::size_t failed_index = chunks.size();
  std::mutex failure_mutex;
  auto work = [&] {
    for (std::size_t i = next++; i < chunks.size(); i = next++) {
      try {
        ActivationTensor tensor = pool_chunk(adapter, chunks[i]);
        std::copy(tensor.values.begin(), tensor.values.end(), values.begin() + static_cast<std::ptrdiff_t>(i * per_chunk));
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        // Report the earliest failing chunk so errors are reproducible.
        if (i < failed_index) {
          failed_index = i;
          failure = std::current_exception();
        }
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  if (failure) std::rethrow_exception(failure);
  return ActivationSet(std::move(header), std::move(values));
}

}  // namespace genreprobe
