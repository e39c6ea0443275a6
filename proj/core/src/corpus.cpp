#include "genreprobe/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "genreprobe/error.hpp"
#include "genreprobe/random.hpp"
#include "text_util.hpp"

namespace genreprobe {

using nlohmann::json;

LabelVocabulary::LabelVocabulary(std::vector<std::string> labels) : labels_(std::move(labels)) {
  if (labels_.empty()) throw InvalidArgument("label vocabulary must not be empty");
  std::set<std::string_view> seen;
  for (const auto& label : labels_) {
    if (!seen.insert(label).second) {
      throw InvalidArgument("duplicate label in vocabulary: '" + label + "'");
    }
  }
}

bool LabelVocabulary::contains(std::string_view label) const { return find(label).has_value(); }

std::optional<std::size_t> LabelVocabulary::find(std::string_view label) const {
  auto it = std::find(labels_.begin(), labels_.end(), label);
  if (it == labels_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - labels_.begin());
}

std::size_t LabelVocabulary::index_of(std::string_view label) const {
  if (auto index = find(label)) return *index;
  throw InvalidArgument("label '" + std::string(label) + "' is not in the vocabulary");
}

const LabelVocabulary& synthetic_vocabulary() {
  static const LabelVocabulary vocabulary(
      {"instructional", "explanatory", "speech", "narrative", "code"});
  return vocabulary;
}

const LabelVocabulary& core_vocabulary() {
  static const LabelVocabulary vocabulary({"News Report", "Informational", "Opinion",
                                           "Sports Report", "Personal Blog", "Persuasion",
                                           "Discussion", "Instructional"});
  return vocabulary;
}

LabelVocabulary infer_vocabulary(const Dataset& dataset) {
  std::set<std::string> categories;
  for (const auto& chunk : dataset) categories.insert(chunk.category);
  if (categories.empty()) throw InvalidArgument("cannot infer a vocabulary from an empty dataset");
  for (const LabelVocabulary* known : {&synthetic_vocabulary(), &core_vocabulary()}) {
    if (std::all_of(categories.begin(), categories.end(),
                    [&](const std::string& c) { return known->contains(c); })) {
      std::vector<std::string> present;
      for (const auto& label : known->labels()) {
        if (categories.contains(label)) present.push_back(label);
      }
      return LabelVocabulary(std::move(present));
    }
  }
  return LabelVocabulary(std::vector<std::string>(categories.begin(), categories.end()));
}

void validate_dataset(const Dataset& dataset, const LabelVocabulary& vocabulary) {
  std::set<std::string_view> ids;
  for (const auto& chunk : dataset) {
    if (chunk.id.empty()) throw InvalidArgument("chunk with empty id");
    if (!ids.insert(chunk.id).second) throw InvalidArgument("duplicate chunk id '" + chunk.id + "'");
    if (detail::trim(chunk.text).empty()) {
      throw InvalidArgument("chunk '" + chunk.id + "' has blank text");
    }
    if (!vocabulary.contains(chunk.category)) {
      throw InvalidArgument("chunk '" + chunk.id + "' has category '" + chunk.category +
                            "' outside the vocabulary");
    }
  }
}

namespace {

Chunk chunk_from_json(const json& record, std::size_t line) {
  auto field = [&](const char* key) -> std::string {
    if (!record.contains(key) || !record[key].is_string()) {
      throw InvalidArgument("dataset line " + std::to_string(line) + ": missing string field '" +
                            key + "'");
    }
    return record[key].get<std::string>();
  };
  Chunk chunk;
  chunk.id = field("id");
  chunk.text = field("text");
  chunk.category = field("category");
  chunk.dataset = field("dataset");
  if (record.contains("source_id") && !record["source_id"].is_null()) {
    chunk.source_id = field("source_id");
  }
  return chunk;
}

}  // namespace

Dataset parse_dataset(std::string_view jsonl) {
  Dataset dataset;
  std::size_t line_number = 0;
  for (std::string_view line : detail::split_lines(jsonl)) {
    ++line_number;
    if (detail::trim(line).empty()) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      throw InvalidArgument("dataset line " + std::to_string(line_number) + ": " + e.what());
    }
    if (!record.is_object()) {
      throw InvalidArgument("dataset line " + std::to_string(line_number) + ": not a JSON object");
    }
    dataset.push_back(chunk_from_json(record, line_number));
  }
  return dataset;
}

std::string serialize_dataset(const Dataset& dataset) {
  std::string out;
  for (const auto& chunk : dataset) {
    nlohmann::ordered_json record;
    record["id"] = chunk.id;
    record["text"] = chunk.text;
    record["category"] = chunk.category;
    record["source_id"] = chunk.source_id ? nlohmann::ordered_json(*chunk.source_id) : nlohmann::ordered_json(nullptr);
    record["dataset"] = chunk.dataset;
    out += record.dump();
    out += '\n';
  }
  return out;
}

Dataset read_dataset(const std::filesystem::path& path) {
  return parse_dataset(detail::read_text_file(path));
}

void write_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  detail::write_text_file(path, serialize_dataset(dataset));
}

namespace {

bool opens_fence(std::string_view text, std::size_t line_start) {
  std::size_t pos = line_start;
  while (pos < text.size() && (text[pos] == ' ' || text[pos] == '\t')) ++pos;
  return text.substr(pos, 3) == "```";
}

}  // namespace

std::vector<std::string> split_chunks(std::string_view raw) {
  std::string normalized;
  normalized.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (raw[i] == '\r' && i + 1 < raw.size() && raw[i + 1] == '\n') continue;
    normalized.push_back(raw[i]);
  }
  const std::string_view text = normalized;

  std::vector<std::string> segments;
  auto emit = [&](std::size_t begin, std::size_t end) {
    auto piece = detail::trim(text.substr(begin, end - begin));
    if (!piece.empty()) segments.emplace_back(piece);
  };

  bool in_fence = false;
  std::size_t segment_start = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    if (i == 0 || text[i - 1] == '\n') {
      if (opens_fence(text, i)) in_fence = !in_fence;
    }
    if (!in_fence && text[i] == '\n' && i + 1 < text.size() && text[i + 1] == '\n') {
      emit(segment_start, i);
      i += 2;
      segment_start = i;
      continue;
    }
    ++i;
  }
  emit(segment_start, text.size());
  return segments;
}

void LabelMapping::add(std::string fine, std::string coarse) {
  if (fine.empty() || coarse.empty()) throw InvalidArgument("mapping entries must be non-empty");
  if (std::find(coarse_order_.begin(), coarse_order_.end(), coarse) == coarse_order_.end()) {
    coarse_order_.push_back(coarse);
  }
  auto [it, inserted] = table_.emplace(std::move(fine), std::move(coarse));
  if (!inserted) throw InvalidArgument("fine label '" + it->first + "' mapped twice");
}

const std::string& LabelMapping::merge(std::string_view fine_label) const {
  auto it = table_.find(fine_label);
  if (it == table_.end()) {
    throw InvalidArgument("no coarse category for fine label '" + std::string(fine_label) + "'");
  }
  return it->second;
}

bool LabelMapping::contains(std::string_view fine_label) const {
  return table_.find(fine_label) != table_.end();
}

LabelVocabulary LabelMapping::coarse_vocabulary() const { return LabelVocabulary(coarse_order_); }

LabelMapping LabelMapping::parse(std::string_view content) {
  LabelMapping mapping;
  auto body = detail::trim(content);
  if (!body.empty() && body.front() == '{') {
    nlohmann::ordered_json object;
    try {
      object = nlohmann::ordered_json::parse(body);
    } catch (const nlohmann::ordered_json::parse_error& e) {
      throw InvalidArgument(std::string("mapping: ") + e.what());
    }
    for (const auto& [fine, coarse] : object.items()) {
      if (!coarse.is_string()) throw InvalidArgument("mapping value for '" + fine + "' is not a string");
      mapping.add(fine, coarse.get<std::string>());
    }
    return mapping;
  }
  std::size_t line_number = 0;
  for (std::string_view line : detail::split_lines(content)) {
    ++line_number;
    auto trimmed = detail::trim(line);
    if (trimmed.empty() || trimmed.front() == '#') continue;
    auto tab = trimmed.find('\t');
    if (tab == std::string_view::npos) {
      throw InvalidArgument("mapping line " + std::to_string(line_number) +
                            ": expected 'fine<TAB>coarse'");
    }
    mapping.add(std::string(detail::trim(trimmed.substr(0, tab))),
                std::string(detail::trim(trimmed.substr(tab + 1))));
  }
  return mapping;
}

LabelMapping LabelMapping::load(const std::filesystem::path& path) {
  return parse(detail::read_text_file(path));
}

std::string merge_labels(const LabelMapping& mapping, std::string_view fine_label) {
  return mapping.merge(fine_label);
}

Dataset merge_dataset(const Dataset& dataset, const LabelMapping& mapping) {
  Dataset merged = dataset;
  for (auto& chunk : merged) chunk.category = mapping.merge(chunk.category);
  return merged;
}

std::filesystem::path default_core_mapping_path() {
  if (const char* dir = std::getenv("GENREPROBE_DATA_DIR"); dir != nullptr && *dir != '\0') {
    return std::filesystem::path(dir) / "core_mapping.tsv";
  }
  return std::filesystem::path(GENREPROBE_DEFAULT_DATA_DIR) / "core_mapping.tsv";
}

namespace {

// Category -> member positions, categories in sorted order.
std::map<std::string, std::vector<std::size_t>> group_by_category(const Dataset& dataset) {
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < dataset.size(); ++i) groups[dataset[i].category].push_back(i);
  return groups;
}

}  // namespace

SplitAssignment split_train_test(const Dataset& dataset, double ratio, std::uint64_t seed) {
  if (dataset.empty()) throw InvalidArgument("cannot split an empty dataset");
  if (!(ratio > 0.0 && ratio < 1.0)) throw InvalidArgument("split ratio must lie in (0, 1)");

  auto groups = group_by_category(dataset);
  struct Quota {
    std::size_t floor_count;
    double remainder;
    std::size_t order;
  };
  std::vector<Quota> quotas;
  std::size_t order = 0;
  std::size_t assigned = 0;
  for (const auto& [category, members] : groups) {
    if (members.size() < 2) {
      throw InvalidArgument("category '" + category +
                            "' has fewer than 2 chunks and cannot appear in both splits");
    }
    const double exact = ratio * static_cast<double>(members.size());
    const auto floor_count = static_cast<std::size_t>(std::floor(exact));
    quotas.push_back({floor_count, exact - static_cast<double>(floor_count), order++});
    assigned += floor_count;
  }

  // Hand out the rounding slack to the largest remainders, earlier class first.
  const auto target = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(dataset.size())));
  std::vector<std::size_t> by_remainder(quotas.size());
  std::iota(by_remainder.begin(), by_remainder.end(), 0);
  std::stable_sort(by_remainder.begin(), by_remainder.end(), [&](std::size_t a, std::size_t b) {
    return quotas[a].remainder > quotas[b].remainder;
  });
  for (std::size_t k = 0; assigned < target && k < by_remainder.size(); ++k) {
    ++quotas[by_remainder[k]].floor_count;
    ++assigned;
  }

  SplitAssignment split;
  split.seed = seed;
  split.ratio = ratio;
  std::size_t class_index = 0;
  for (const auto& [category, members] : groups) {
    const std::size_t n = members.size();
    const std::size_t n_train = std::clamp<std::size_t>(quotas[class_index].floor_count, 1, n - 1);
    std::vector<std::size_t> shuffled = members;
    Rng rng(derive_seed(seed, fnv1a64(category)));
    rng.shuffle(std::span<std::size_t>(shuffled));
    for (std::size_t k = 0; k < n; ++k) {
      auto& side = k < n_train ? split.train_ids : split.test_ids;
      side.push_back(dataset[shuffled[k]].id);
    }
    ++class_index;
  }
  return split;
}

Dataset subsample_per_category(const Dataset& dataset, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw InvalidArgument("subsample size must be at least 1");
  std::vector<bool> keep(dataset.size(), false);
  for (const auto& [category, members] : group_by_category(dataset)) {
    std::vector<std::size_t> shuffled = members;
    Rng rng(derive_seed(seed, fnv1a64(category)));
    rng.shuffle(std::span<std::size_t>(shuffled));
    const std::size_t take = std::min(n, shuffled.size());
    for (std::size_t k = 0; k < take; ++k) keep[shuffled[k]] = true;
  }
  Dataset out;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (keep[i]) out.push_back(dataset[i]);
  }
  return out;
}

Dataset without_other(const Dataset& dataset) {
  Dataset out;
  std::copy_if(dataset.begin(), dataset.end(), std::back_inserter(out),
               [](const Chunk& c) { return c.category != kOtherCategory; });
  return out;
}

std::map<std::string, std::size_t> category_counts(const Dataset& dataset) {
  std::map<std::string, std::size_t> counts;
  for (const auto& chunk : dataset) ++counts[chunk.category];
  return counts;
}

}  // namespace genreprobe
