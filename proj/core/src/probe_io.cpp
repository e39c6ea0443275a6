// Probe model file layout (integers little-endian):
//
//   offset 0   8 bytes   magic "APMODEL1"
//   offset 8   uint32    H, byte length of the header
//   offset 12  H bytes   JSON header {"kind", "labels", "hyperparams",
//                        "shapes": {"features", "classes", "train_rows"},
//                        "dtype": "f64"}
//   offset 12+H          float64 payload: scaler means [d], scaler scales [d],
//                        then weights [C][d] and bias [C] for linear kinds, or
//                        training rows [n][d] and training labels [n] for knn.

#include <array>
#include <bit>
#include <cstring>

#include <nlohmann/json.hpp>

#include "genreprobe/error.hpp"
#include "genreprobe/probes.hpp"
#include "text_util.hpp"

namespace genreprobe {

namespace {

constexpr std::array<char, 8> kModelMagic = {'A', 'P', 'M', 'O', 'D', 'E', 'L', '1'};

void put_u64(std::string& out, std::uint64_t v) {
  for (int shift = 0; shift < 64; shift += 8) out.push_back(static_cast<char>((v >> shift) & 0xFF));
}

std::uint64_t get_u64(const char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

class PayloadReader {
 public:
  explicit PayloadReader(std::string_view bytes) : bytes_(bytes) {}
  double next() {
    if (pos_ + 8 > bytes_.size()) throw InvalidArgument("probe model payload is truncated");
    const double v = std::bit_cast<double>(get_u64(bytes_.data() + pos_));
    pos_ += 8;
    return v;
  }
  bool exhausted() const { return pos_ == bytes_.size(); }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_probe_model(const ProbeModel& model) {
  const std::size_t d = model.feature_count();
  const bool knn = model.kind == ProbeKind::knn;
  nlohmann::ordered_json header;
  header["kind"] = to_string(model.kind);
  header["labels"] = model.labels.labels();
  header["hyperparams"] = {{"l2_strength", model.hyperparams.l2_strength},
                           {"max_iter", model.hyperparams.max_iter},
                           {"tol", model.hyperparams.tol},
                           {"k", model.hyperparams.k},
                           {"svm_iterations", model.hyperparams.svm_iterations}};
  header["shapes"] = {{"features", d},
                      {"classes", model.class_count()},
                      {"train_rows", knn ? model.train_labels.size() : 0}};
  header["dtype"] = "f64";
  const std::string text = header.dump();

  std::string out(kModelMagic.data(), kModelMagic.size());
  for (int shift = 0; shift < 32; shift += 8) out.push_back(static_cast<char>((text.size() >> shift) & 0xFF));
  out += text;
  auto put = [&out](double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); };
  for (Eigen::Index i = 0; i < model.scaler.means.size(); ++i) put(model.scaler.means(i));
  for (Eigen::Index i = 0; i < model.scaler.scales.size(); ++i) put(model.scaler.scales(i));
  if (knn) {
    for (Eigen::Index r = 0; r < model.train_points.rows(); ++r)
      for (Eigen::Index c = 0; c < model.train_points.cols(); ++c) put(model.train_points(r, c));
    for (std::size_t label : model.train_labels) put(static_cast<double>(label));
  } else {
    for (Eigen::Index r = 0; r < model.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < model.weights.cols(); ++c) put(model.weights(r, c));
    for (Eigen::Index i = 0; i < model.bias.size(); ++i) put(model.bias(i));
  }
  return out;
}

ProbeModel decode_probe_model(std::string_view bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kModelMagic.data(), kModelMagic.size()) != 0) {
    throw InvalidArgument("not a probe model file (bad magic)");
  }
  std::uint32_t header_len = 0;
  for (int i = 0; i < 4; ++i) header_len |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[8 + i])) << (8 * i);
  if (bytes.size() - 12 < header_len) throw InvalidArgument("probe model header is truncated");

  ProbeModel model;
  std::size_t d = 0, classes = 0, train_rows = 0;
  try {
    const auto header = nlohmann::json::parse(bytes.substr(12, header_len));
    model.kind = parse_probe_kind(header.at("kind").get<std::string>());
    model.labels = LabelVocabulary(header.at("labels").get<std::vector<std::string>>());
    const auto& hp = header.at("hyperparams");
    model.hyperparams.l2_strength = hp.at("l2_strength").get<double>();
    model.hyperparams.max_iter = hp.at("max_iter").get<std::size_t>();
    model.hyperparams.tol = hp.at("tol").get<double>();
    model.hyperparams.k = hp.at("k").get<std::size_t>();
    model.hyperparams.svm_iterations = hp.at("svm_iterations").get<std::size_t>();
    const auto& shapes = header.at("shapes");
    d = shapes.at("features").get<std::size_t>();
    classes = shapes.at("classes").get<std::size_t>();
    train_rows = shapes.at("train_rows").get<std::size_t>();
    if (header.at("dtype").get<std::string>() != "f64") throw InvalidArgument("unsupported dtype");
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("probe model header: ") + e.what());
  }
  if (classes != model.labels.size()) throw InvalidArgument("probe model class count disagrees with labels");

  const auto D = static_cast<Eigen::Index>(d);
  PayloadReader reader(bytes.substr(12 + header_len));
  model.scaler.means.resize(D);
  model.scaler.scales.resize(D);
  for (Eigen::Index i = 0; i < D; ++i) model.scaler.means(i) = reader.next();
  for (Eigen::Index i = 0; i < D; ++i) model.scaler.scales(i) = reader.next();
  if (model.kind == ProbeKind::knn) {
    model.train_points.resize(static_cast<Eigen::Index>(train_rows), D);
    for (Eigen::Index r = 0; r < model.train_points.rows(); ++r)
      for (Eigen::Index c = 0; c < D; ++c) model.train_points(r, c) = reader.next();
    model.train_labels.resize(train_rows);
    for (auto& label : model.train_labels) {
      const double v = reader.next();
      if (!(v >= 0.0 && v < static_cast<double>(classes))) throw InvalidArgument("knn label out of range");
      label = static_cast<std::size_t>(v);
    }
  } else {
    model.weights.resize(static_cast<Eigen::Index>(classes), D);
    for (Eigen::Index r = 0; r < model.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < D; ++c) model.weights(r, c) = reader.next();
    model.bias.resize(static_cast<Eigen::Index>(classes));
    for (Eigen::Index i = 0; i < model.bias.size(); ++i) model.bias(i) = reader.next();
  }
  if (!reader.exhausted()) throw InvalidArgument("probe model payload has trailing bytes");
  return model;
}

void write_probe_model(const std::filesystem::path& path, const ProbeModel& model) {
  detail::write_text_file(path, encode_probe_model(model));
}

ProbeModel read_probe_model(const std::filesystem::path& path) {
  return decode_probe_model(detail::read_text_file(path));
}

}  // namespace genreprobe
