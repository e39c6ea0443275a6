#include "genreprobe/datagen.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cctype>
#include <optional>
#include <thread>
#include <unordered_set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "genreprobe/random.hpp"
#include "text_util.hpp"

namespace genreprobe {

const std::vector<std::string>& labeler_categories() {
  static const std::vector<std::string> categories = {"instructional", "narrative", "explanatory",
                                                      "speech",        "code",      "other"};
  return categories;
}

bool acceptable_prompt(std::string_view prompt) {
  if (prompt.size() < 10 || prompt.size() > 300) return false;
  std::size_t printable = 0;
  for (unsigned char c : prompt) {
    // UTF-8 continuation and lead bytes count as printable text.
    if (c >= 0x80 || std::isprint(c)) ++printable;
  }
  return static_cast<double>(printable) / static_cast<double>(prompt.size()) > 0.95;
}

std::string normalize_prompt(std::string_view prompt) {
  std::string out;
  bool space = false;
  for (char c : detail::trim(prompt)) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      space = true;
      continue;
    }
    if (space && !out.empty()) out.push_back(' ');
    space = false;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

std::vector<std::string> parse_prompt_list(std::string_view response) {
  std::vector<std::string> prompts;
  for (std::string_view line : detail::split_lines(response)) {
    line = detail::trim(line);
    std::size_t i = 0;
    while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
    if (i > 0 && i < line.size() && (line[i] == '.' || line[i] == ')')) {
      line.remove_prefix(i + 1);
    } else if (!line.empty() && (line[0] == '-' || line[0] == '*')) {
      line.remove_prefix(1);
    }
    line = detail::trim(line);
    if (line.size() >= 2 && line.front() == '"' && line.back() == '"') line = line.substr(1, line.size() - 2);
    if (!line.empty()) prompts.emplace_back(line);
  }
  return prompts;
}

namespace {

std::string numbered_list(const std::vector<std::string>& prompts) {
  std::string out;
  for (std::size_t i = 0; i < prompts.size(); ++i) out += fmt::format("{}. {}\n", i + 1, prompts[i]);
  return out;
}

// Runs fn(i) for i in [0, n) on at most `limit` threads.
template <typename Fn>
void bounded_for(std::size_t n, std::size_t limit, Fn fn) {
  const std::size_t workers = std::clamp<std::size_t>(limit, 1, std::max<std::size_t>(n, 1));
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) fn(i);
  };
  if (workers == 1) {
    work();
    return;
  }
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
}

}  // namespace

ExpansionResult expand_prompts(const std::vector<std::string>& seed_prompts, CompletionProvider& provider,
                               std::size_t rounds) {
  if (seed_prompts.empty()) throw InvalidArgument("expand_prompts needs at least one seed prompt");
  std::unordered_set<std::string> seen;
  for (const auto& p : seed_prompts) seen.insert(normalize_prompt(p));
  std::vector<std::string> all = seed_prompts;
  ExpansionResult result;
  for (std::size_t round = 0; round < rounds; ++round) {
    const std::string request = std::string(kExpansionPrompt) + "\n" + numbered_list(all);
    const std::string response = provider.complete(request, kExpansionMaxTokens);
    const auto candidates = parse_prompt_list(response);
    if (candidates.empty()) throw ResponseError("expansion response contains no prompts", response);
    for (const auto& candidate : candidates) {
      if (!acceptable_prompt(candidate)) {
        result.rejected.push_back(candidate);
        continue;
      }
      if (!seen.insert(normalize_prompt(candidate)).second) continue;
      result.prompts.push_back(candidate);
      all.push_back(candidate);
    }
  }
  return result;
}

GenerationResult generate_texts(const std::vector<std::string>& prompts, CompletionProvider& provider,
                                std::size_t max_in_flight) {
  if (prompts.empty()) throw InvalidArgument("generate_texts needs at least one prompt");
  std::vector<std::optional<std::string>> outputs(prompts.size());
  std::vector<std::string> failures(prompts.size());
  bounded_for(prompts.size(), max_in_flight, [&](std::size_t i) {
    try {
      outputs[i] = provider.complete(prompts[i], kGenerationMaxTokens);
    } catch (const std::exception& e) {
      failures[i] = fmt::format("prompt {}: {}", i, e.what());
    }
  });
  GenerationResult result;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    if (!failures[i].empty()) {
      result.errors.push_back(failures[i]);
    } else if (detail::trim(*outputs[i]).empty()) {
      result.warnings.push_back(fmt::format("prompt {}: empty completion dropped", i));
    } else {
      result.texts.push_back({i, prompts[i], std::move(*outputs[i])});
    }
  }
  return result;
}

LabelingResult parse_labeling_response(std::string_view response, std::string_view source_text) {
  LabelingResult result;
  result.raw_response = std::string(response);
  std::string_view body = detail::trim(response);
  if (body.starts_with("```")) {
    const auto first_newline = body.find('\n');
    const auto closing = body.rfind("```");
    if (first_newline == std::string_view::npos || closing <= first_newline) {
      throw ResponseError("unterminated code fence in labelling response", result.raw_response);
    }
    body = detail::trim(body.substr(first_newline + 1, closing - first_newline - 1));
  }
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw ResponseError(std::string("labelling response is not JSON: ") + e.what(), result.raw_response);
  }
  if (!doc.is_array()) throw ResponseError("labelling response is not a JSON array", result.raw_response);

  const auto& categories = labeler_categories();
  std::size_t covered = 0;
  for (const auto& item : doc) {
    const bool well_formed = item.is_object() && item.contains("text") && item["text"].is_string() &&
                             item.contains("category") && item["category"].is_string();
    if (!well_formed) {
      result.rejected.push_back(item.dump());
      continue;
    }
    const std::string category = detail::to_lower(detail::trim(item["category"].get<std::string>()));
    if (std::find(categories.begin(), categories.end(), category) == categories.end()) {
      result.rejected.push_back(item.dump());
      continue;
    }
    std::string text = item["text"].get<std::string>();
    covered += detail::non_whitespace_length(text);
    result.sections.push_back({std::move(text), category});
  }
  const std::size_t total = detail::non_whitespace_length(source_text);
  result.coverage = total == 0 ? 0.0 : static_cast<double>(covered) / static_cast<double>(total);
  result.flagged = result.coverage < kCoverageThreshold;
  return result;
}

LabelingResult section_and_label(const std::string& text, CompletionProvider& provider) {
  if (detail::trim(text).empty()) throw InvalidArgument("section_and_label needs non-empty text");
  const std::string request = std::string(kLabelingPrompt) + "\n" + text;
  return parse_labeling_response(provider.complete(request, kLabelingMaxTokens), text);
}

std::vector<LabeledRecord> label_texts(const std::vector<GeneratedText>& texts, CompletionProvider& provider,
                                       std::size_t max_in_flight) {
  std::vector<LabeledRecord> records(texts.size());
  std::vector<std::string> failures(texts.size());
  bounded_for(texts.size(), max_in_flight, [&](std::size_t i) {
    records[i].prompt_index = texts[i].prompt_index;
    records[i].prompt = texts[i].prompt;
    records[i].text = texts[i].text;
    try {
      records[i].labeling = section_and_label(texts[i].text, provider);
    } catch (const ResponseError& e) {
      // Keep the record for review with the raw payload.
      records[i].labeling.raw_response = e.raw();
      records[i].labeling.flagged = true;
    } catch (const std::exception& e) {
      failures[i] = fmt::format("text for prompt {}: {}", texts[i].prompt_index, e.what());
    }
  });
  for (const auto& f : failures) {
    if (!f.empty()) throw ProviderError(f);
  }
  return records;
}

Dataset emit_dataset(const std::vector<LabeledRecord>& records) {
  Dataset out;
  for (const auto& record : records) {
    if (record.labeling.flagged) continue;
    for (std::size_t s = 0; s < record.labeling.sections.size(); ++s) {
      const auto& section = record.labeling.sections[s];
      if (section.category == kOtherCategory || detail::trim(section.text).empty()) continue;
      Chunk chunk;
      chunk.id = fmt::format("syn-{}-{}", record.prompt_index, s);
      chunk.text = std::string(detail::trim(section.text));
      chunk.category = section.category;
      chunk.source_id = fmt::format("prompt-{}", record.prompt_index);
      chunk.dataset = "synthetic";
      out.push_back(std::move(chunk));
    }
  }
  validate_dataset(out, synthetic_vocabulary());
  return out;
}

PipelineResult run_pipeline(const std::vector<std::string>& seed_prompts, CompletionProvider& provider,
                            std::size_t expansion_rounds) {
  PipelineResult result;
  result.prompts = seed_prompts;
  if (expansion_rounds > 0) {
    const auto expansion = expand_prompts(seed_prompts, provider, expansion_rounds);
    result.prompts.insert(result.prompts.end(), expansion.prompts.begin(), expansion.prompts.end());
  }
  result.generation = generate_texts(result.prompts, provider);
  result.records = label_texts(result.generation.texts, provider);
  result.dataset = emit_dataset(result.records);
  return result;
}

CategoryReport category_report(const Dataset& dataset) {
  static const std::array<std::pair<const char*, std::size_t>, 5> reference = {{{"instructional", 1159},
                                                                                {"explanatory", 699},
                                                                                {"speech", 548},
                                                                                {"narrative", 542},
                                                                                {"code", 290}}};
  std::size_t reference_total = 0;
  for (const auto& [name, n] : reference) reference_total += n;

  CategoryReport report;
  for (const auto& [name, n] : reference) report.counts[name] = 0;
  std::size_t total = 0;
  for (const auto& chunk : dataset) {
    if (chunk.category == kOtherCategory) continue;
    ++report.counts[chunk.category];
    ++total;
  }
  report.table = fmt::format("{:<14} {:>7} {:>8} {:>10}\n", "category", "count", "share", "reference");
  for (const auto& [name, n] : reference) {
    const std::size_t c = report.counts[name];
    report.table += fmt::format("{:<14} {:>7} {:>8.3f} {:>10.3f}\n", name, c,
                                total ? static_cast<double>(c) / static_cast<double>(total) : 0.0,
                                static_cast<double>(n) / static_cast<double>(reference_total));
  }
  std::size_t max_count = 0, min_count = SIZE_MAX;
  for (const auto& [name, c] : report.counts) {
    max_count = std::max(max_count, c);
    min_count = std::min(min_count, c);
  }
  report.instructional_most_frequent = total > 0 && report.counts["instructional"] == max_count;
  report.code_least_frequent = total > 0 && report.counts["code"] == min_count;
  return report;
}

// ---------------------------------------------------------------------------
// Scripted mock responses

namespace {

std::string heuristic_category(std::string_view section) {
  const std::string_view s = detail::trim(section);
  if (s.starts_with("```")) return "code";
  if (s.starts_with("Title:") || s.size() < 40 || (s.back() == ':' && s.size() < 160)) return "other";
  if (s.starts_with("\"") || s.starts_with("Ladies and gentlemen") || s.starts_with("My friends")) return "speech";
  if (s.starts_with("Step ")) return "instructional";
  for (const char* opener : {"Once upon a time", "She ", "He ", "They ", "That night", "The next morning"}) {
    if (s.starts_with(opener)) return "narrative";
  }
  return "explanatory";
}

std::string topic_of(std::string_view prompt) {
  std::string lower = detail::to_lower(prompt);
  for (std::string_view marker : {" about ", " on ", " for ", " of "}) {
    if (auto pos = lower.find(marker); pos != std::string::npos) {
      lower = lower.substr(pos + marker.size());
      break;
    }
  }
  while (!lower.empty() && (lower.back() == '.' || lower.back() == '?' || lower.back() == '!')) lower.pop_back();
  return std::string(detail::trim(lower));
}

bool mentions(std::string_view lower_prompt, std::initializer_list<std::string_view> words) {
  return std::any_of(words.begin(), words.end(),
                     [&](std::string_view w) { return lower_prompt.find(w) != std::string_view::npos; });
}

template <std::size_t N>
std::string_view pick(const std::array<std::string_view, N>& options, Rng& rng) {
  return options[rng.uniform_index(N)];
}

std::string scripted_expansion(std::string_view list_text, std::uint64_t hash) {
  static constexpr std::array<std::string_view, 8> kTemplates = {
      "Write a short story about",       "Explain how scientists study",  "Give step-by-step instructions for",
      "Draft a speech celebrating",      "Write a Python function that models", "Describe the history of",
      "Tell a tale about a child who discovers", "Write a motivational address about"};
  static constexpr std::array<std::string_view, 10> kTopics = {
      "a lighthouse keeper",   "volcanic islands",  "baking sourdough bread", "a retiring teacher",
      "traffic flow",          "the printing press", "a hidden library",       "community gardens",
      "migrating birds",       "renewable energy"};
  const std::size_t seen = parse_prompt_list(list_text).size();
  Rng rng(derive_seed(hash, seen));
  std::string out;
  for (std::size_t i = 0; i < 6; ++i) {
    out += fmt::format("{}. {} {}.\n", i + 1, pick(kTemplates, rng), pick(kTopics, rng));
  }
  return out;
}

std::string scripted_generation(std::string_view prompt, std::uint64_t hash) {
  Rng rng(hash);
  const std::string lower = detail::to_lower(prompt);
  const std::string topic = topic_of(prompt);
  std::vector<std::string> parts;
  parts.push_back(fmt::format("Title: {}", topic.empty() ? std::string("Untitled") : topic));

  static constexpr std::array<std::string_view, 4> kDetail = {
      "Every detail mattered, and nothing was left to chance.",
      "The work was slow, but each day brought a small improvement.",
      "Patience turned out to be the most valuable tool of all.",
      "Small choices added up to something larger than expected."};

  if (mentions(lower, {"function", "code", "program", "implement", "class", "script"})) {
    parts.push_back("Here is an example implementation that follows your requirements:");
    parts.push_back(fmt::format(
        "```python\ndef simulate(steps):\n    \"\"\"Toy model of {}.\"\"\"\n    state = 0\n\n    for i in "
        "range(steps):\n        state += i % {}\n    return state\n```",
        topic, 2 + rng.uniform_index(7)));
    parts.push_back(fmt::format("The function keeps a running state and updates it once per step. {}",
                                pick(kDetail, rng)));
  } else if (mentions(lower, {"speech", "address", "toast", "celebrat", "motivational"})) {
    parts.push_back(fmt::format("Ladies and gentlemen, thank you for joining us today to talk about {}.", topic));
    parts.push_back(fmt::format("\"We are here because {} matters to every one of us,\" I want to say plainly. {}",
                                topic, pick(kDetail, rng)));
    parts.push_back("My friends, let us leave this room ready to act, and let us return next year with results.");
  } else if (mentions(lower, {"step", "instruction", "how to", "guide", "recipe", "tutorial"})) {
    parts.push_back(fmt::format("Step 1: Gather everything you need for {} before you begin.", topic));
    parts.push_back(fmt::format("Step 2: Work through the task carefully and check your progress. {}",
                                pick(kDetail, rng)));
    parts.push_back("Step 3: Clean up, review the result, and note what you would change next time.");
  } else if (mentions(lower, {"story", "tale", "narrative", "fable"})) {
    parts.push_back(fmt::format("Once upon a time, in a quiet town, there lived someone obsessed with {}.", topic));
    parts.push_back(fmt::format("She spent her evenings sketching plans and testing ideas. {}", pick(kDetail, rng)));
    parts.push_back("The next morning the whole town gathered to see what she had made, and nobody left unchanged.");
  } else {
    parts.push_back(fmt::format("The study of {} begins with a few simple observations about cause and effect.",
                                topic));
    parts.push_back(fmt::format("Researchers describe the process in stages, each building on the last. {}",
                                pick(kDetail, rng)));
    parts.push_back("In summary, the topic rewards careful measurement and a willingness to revise old models.");
  }
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i > 0) out += "\n\n";
    out += parts[i];
  }
  return out;
}

std::string scripted_labeling(std::string_view text) {
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (const auto& section : split_chunks(text)) {
    out.push_back({{"text", section}, {"category", heuristic_category(section)}});
  }
  return out.dump(1);
}

}  // namespace

std::string scripted_completion(std::string_view prompt) {
  const std::uint64_t hash = fnv1a64(prompt);
  if (prompt.starts_with(kExpansionPrompt)) return scripted_expansion(prompt.substr(kExpansionPrompt.size()), hash);
  if (prompt.starts_with(kLabelingPrompt)) {
    std::string_view text = prompt.substr(kLabelingPrompt.size());
    if (!text.empty() && text.front() == '\n') text.remove_prefix(1);
    return scripted_labeling(text);
  }
  return scripted_generation(prompt, hash);
}

// ---------------------------------------------------------------------------
// Intermediate files

std::vector<std::string> read_prompt_file(const std::filesystem::path& path) {
  std::vector<std::string> prompts;
  const std::string text = detail::read_text_file(path);
  for (std::string_view line : detail::split_lines(text)) {
    line = detail::trim(line);
    if (!line.empty() && !line.starts_with('#')) prompts.emplace_back(line);
  }
  return prompts;
}

void write_prompt_file(const std::filesystem::path& path, const std::vector<std::string>& prompts) {
  std::string out;
  for (const auto& p : prompts) out += p + "\n";
  detail::write_text_file(path, out);
}

std::string serialize_generated(const std::vector<GeneratedText>& texts) {
  std::string out;
  for (const auto& t : texts) {
    nlohmann::ordered_json line{{"prompt_index", t.prompt_index}, {"prompt", t.prompt}, {"text", t.text}};
    out += line.dump() + "\n";
  }
  return out;
}

std::vector<GeneratedText> parse_generated(std::string_view jsonl) {
  std::vector<GeneratedText> texts;
  std::size_t n = 0;
  for (std::string_view line : detail::split_lines(jsonl)) {
    ++n;
    if (detail::trim(line).empty()) continue;
    try {
      const auto doc = nlohmann::json::parse(line);
      texts.push_back({doc.at("prompt_index").get<std::size_t>(), doc.at("prompt").get<std::string>(),
                       doc.at("text").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
      throw InvalidArgument(fmt::format("generated texts line {}: {}", n, e.what()));
    }
  }
  return texts;
}

std::string serialize_labeled(const std::vector<LabeledRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    nlohmann::ordered_json sections = nlohmann::ordered_json::array();
    for (const auto& s : r.labeling.sections) sections.push_back({{"text", s.text}, {"category", s.category}});
    nlohmann::ordered_json line{{"prompt_index", r.prompt_index},
                                {"prompt", r.prompt},
                                {"text", r.text},
                                {"sections", sections},
                                {"rejected", r.labeling.rejected},
                                {"coverage", r.labeling.coverage},
                                {"flagged", r.labeling.flagged},
                                {"raw_response", r.labeling.raw_response}};
    out += line.dump() + "\n";
  }
  return out;
}

std::vector<LabeledRecord> parse_labeled(std::string_view jsonl) {
  std::vector<LabeledRecord> records;
  std::size_t n = 0;
  for (std::string_view line : detail::split_lines(jsonl)) {
    ++n;
    if (detail::trim(line).empty()) continue;
    try {
      const auto doc = nlohmann::json::parse(line);
      LabeledRecord r;
      r.prompt_index = doc.at("prompt_index").get<std::size_t>();
      r.prompt = doc.at("prompt").get<std::string>();
      r.text = doc.at("text").get<std::string>();
      for (const auto& s : doc.at("sections")) {
        r.labeling.sections.push_back({s.at("text").get<std::string>(), s.at("category").get<std::string>()});
      }
      r.labeling.rejected = doc.at("rejected").get<std::vector<std::string>>();
      r.labeling.coverage = doc.at("coverage").get<double>();
      r.labeling.flagged = doc.at("flagged").get<bool>();
      r.labeling.raw_response = doc.value("raw_response", std::string());
      records.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw InvalidArgument(fmt::format("labelled records line {}: {}", n, e.what()));
    }
  }
  return records;
}

}  // namespace genreprobe
