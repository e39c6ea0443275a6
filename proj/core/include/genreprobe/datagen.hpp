#pragma once

// Synthetic genre corpus generation: prompt expansion, text generation, and
// sectioning-and-labelling against a pluggable completion provider.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "genreprobe/corpus.hpp"
#include "genreprobe/error.hpp"

namespace genreprobe {

inline constexpr std::string_view kExpansionPrompt = "Please generate a prompt list inspired by the list below.";

/// Sent verbatim; the backslash-n sequences are literal.
inline constexpr std::string_view kLabelingPrompt =
    "Please return a json list that sections the text below and labels it according to one of these categories: "
    "instructional, narrative, explanatory, speech, code, other. Please escape characters such as \"\\n\". Here is "
    "how you should format the output: [\\n {\"text\": ..., \"category\": ...}, \\n {\"text\": ..., \"category\": "
    "...}, \\n ... \\n ]";

inline constexpr int kGenerationMaxTokens = 500;
inline constexpr int kExpansionMaxTokens = 1000;
inline constexpr int kLabelingMaxTokens = 2000;
inline constexpr double kCoverageThreshold = 0.9;

/// instructional, narrative, explanatory, speech, code, other.
const std::vector<std::string>& labeler_categories();

class ProviderError : public Error {
 public:
  using Error::Error;
};

/// Raised when a provider response cannot be interpreted; keeps the raw text.
class ResponseError : public Error {
 public:
  ResponseError(const std::string& what, std::string raw) : Error(what), raw_(std::move(raw)) {}
  const std::string& raw() const { return raw_; }

 private:
  std::string raw_;
};

class CompletionProvider {
 public:
  virtual ~CompletionProvider() = default;
  /// Must be safe to call from several threads at once.
  virtual std::string complete(const std::string& prompt, int max_tokens) = 0;
};

struct CompletionRequest {
  std::string prompt;
  int max_tokens = 0;
};

/// Canned responses keyed by fnv1a64 of the prompt. Unknown prompts fall back
/// to a scripted responder that answers expansion, generation and labelling
/// prompts deterministically; with the fallback disabled they throw.
class MockProvider final : public CompletionProvider {
 public:
  explicit MockProvider(bool scripted_fallback = true) : fallback_(scripted_fallback) {}

  void set_response(std::string_view prompt, std::string response);
  void set_response_for_hash(std::uint64_t prompt_hash, std::string response);

  /// {"responses": [{"prompt": "...", "response": "..."} |
  ///                {"hash": "<16 hex digits>", "response": "..."}],
  ///  "fallback": true}
  static std::unique_ptr<MockProvider> load(const std::filesystem::path& path);

  std::string complete(const std::string& prompt, int max_tokens) override;

  std::vector<CompletionRequest> requests() const;

 private:
  bool fallback_;
  std::map<std::uint64_t, std::string> canned_;
  mutable std::mutex mutex_;
  std::vector<CompletionRequest> requests_;
};

/// The deterministic responder behind MockProvider's fallback.
std::string scripted_completion(std::string_view prompt);

struct LiveProviderConfig {
  /// Scheme and host, e.g. "https://api.openai.com".
  std::string base_url;
  std::string path = "/v1/chat/completions";
  std::string model;
  std::string api_key;
  std::size_t max_retries = 5;
  std::chrono::milliseconds initial_backoff{500};
  std::chrono::milliseconds max_backoff{8000};
  std::chrono::seconds timeout{60};
  /// When set, each request/response pair is appended as a JSON line.
  std::optional<std::filesystem::path> transcript;

  /// Reads GENREPROBE_API_BASE, GENREPROBE_API_MODEL, GENREPROBE_API_KEY and
  /// optionally GENREPROBE_API_TRANSCRIPT. Throws InvalidArgument when one of
  /// the first three is missing.
  static LiveProviderConfig from_environment();
};

/// Chat-completion client. Connection failures, 429 and 5xx are retried with
/// capped exponential backoff; other statuses fail immediately.
class LiveProvider final : public CompletionProvider {
 public:
  using SleepFn = std::function<void(std::chrono::milliseconds)>;

  explicit LiveProvider(LiveProviderConfig config, SleepFn sleep = {});
  std::string complete(const std::string& prompt, int max_tokens) override;

 private:
  LiveProviderConfig config_;
  SleepFn sleep_;
  std::mutex transcript_mutex_;
};

/// Backoff before retry `attempt` (0-based): initial * 2^attempt, capped.
std::chrono::milliseconds backoff_delay(const LiveProviderConfig& config, std::size_t attempt);

// ---------------------------------------------------------------------------
// Pipeline

/// Length in [10, 300] and printable-character ratio above 0.95.
bool acceptable_prompt(std::string_view prompt);

/// Lowercase with whitespace runs collapsed; used for deduplication.
std::string normalize_prompt(std::string_view prompt);

/// Splits a model response into prompts, dropping list numbering and bullets.
std::vector<std::string> parse_prompt_list(std::string_view response);

struct ExpansionResult {
  /// New prompts in first-seen order, excluding anything matching a seed.
  std::vector<std::string> prompts;
  /// Lines that failed the acceptability filter.
  std::vector<std::string> rejected;
};

/// Each round sends the expansion prompt followed by the numbered list of all
/// prompts so far. Throws ResponseError when a response has no prompt lines.
ExpansionResult expand_prompts(const std::vector<std::string>& seed_prompts, CompletionProvider& provider,
                               std::size_t rounds = 1);

struct GeneratedText {
  std::size_t prompt_index = 0;
  std::string prompt;
  std::string text;
};

struct GenerationResult {
  /// In prompt order.
  std::vector<GeneratedText> texts;
  std::vector<std::string> warnings;
  std::vector<std::string> errors;
};

GenerationResult generate_texts(const std::vector<std::string>& prompts, CompletionProvider& provider,
                                std::size_t max_in_flight = 4);

struct LabeledSection {
  std::string text;
  std::string category;

  bool operator==(const LabeledSection&) const = default;
};

struct LabelingResult {
  std::vector<LabeledSection> sections;
  /// Raw JSON of sections whose category is outside the six-way set.
  std::vector<std::string> rejected;
  /// Non-whitespace characters of accepted sections over those of the source.
  double coverage = 0.0;
  bool flagged = false;
  std::string raw_response;
};

/// Parses a labeller response (optionally wrapped in a ```json fence).
/// Throws ResponseError on malformed JSON.
LabelingResult parse_labeling_response(std::string_view response, std::string_view source_text);

LabelingResult section_and_label(const std::string& text, CompletionProvider& provider);

struct LabeledRecord {
  std::size_t prompt_index = 0;
  std::string prompt;
  std::string text;
  LabelingResult labeling;
};

std::vector<LabeledRecord> label_texts(const std::vector<GeneratedText>& texts, CompletionProvider& provider,
                                       std::size_t max_in_flight = 4);

/// Probe dataset from labelled records: "other" sections and flagged records
/// are dropped; ids are "syn-<prompt>-<section>".
Dataset emit_dataset(const std::vector<LabeledRecord>& records);

struct PipelineResult {
  std::vector<std::string> prompts;  // seeds followed by expansions
  GenerationResult generation;
  std::vector<LabeledRecord> records;
  Dataset dataset;
};

/// expand -> generate -> label -> emit.
PipelineResult run_pipeline(const std::vector<std::string>& seed_prompts, CompletionProvider& provider,
                            std::size_t expansion_rounds = 1);

/// Shares of each synthetic category next to the reference generation counts
/// (instructional 1159, explanatory 699, speech 548, narrative 542, code 290).
struct CategoryReport {
  std::map<std::string, std::size_t> counts;
  std::string table;
  bool instructional_most_frequent = false;
  bool code_least_frequent = false;
};
CategoryReport category_report(const Dataset& dataset);

// Intermediate files, one JSON object per line.
std::vector<std::string> read_prompt_file(const std::filesystem::path& path);
void write_prompt_file(const std::filesystem::path& path, const std::vector<std::string>& prompts);
std::string serialize_generated(const std::vector<GeneratedText>& texts);
std::vector<GeneratedText> parse_generated(std::string_view jsonl);
std::string serialize_labeled(const std::vector<LabeledRecord>& records);
std::vector<LabeledRecord> parse_labeled(std::string_view jsonl);

}  // namespace genreprobe
