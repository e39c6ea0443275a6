// Acceptance suite: one PASS/FAIL line per criterion. Tolerances and time
// limits are fixed here; the exit status is non-zero if any line fails.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "genreprobe/activation_store.hpp"
#include "genreprobe/datagen.hpp"
#include "genreprobe/metrics.hpp"
#include "genreprobe/phate.hpp"
#include "genreprobe/probes.hpp"
#include "genreprobe/random.hpp"
#include "genreprobe/sweep.hpp"
#include "genreprobe/toy_transformer.hpp"
#include "oracles.hpp"

namespace gp = genreprobe;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(const std::string& name, double time_limit_s, const std::function<Outcome()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Outcome outcome;
  try {
    outcome = body();
  } catch (const std::exception& e) {
    outcome = {false, std::string("exception: ") + e.what()};
  }
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const bool in_time = elapsed < time_limit_s;
  const bool pass = outcome.pass && in_time;
  if (!pass) ++failures;
  fmt::print("{} {} ({}; {:.2f} s of {:.0f} s){}\n", pass ? "PASS" : "FAIL", name, outcome.detail, elapsed,
             time_limit_s, in_time ? "" : " too slow");
  std::fflush(stdout);
}

gp::LabelVocabulary numbered_vocab(std::size_t classes) {
  std::vector<std::string> labels;
  for (std::size_t c = 0; c < classes; ++c) labels.push_back("class" + std::to_string(c));
  return gp::LabelVocabulary(labels);
}

Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  gp::Rng rng(seed);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
  return m;
}

Eigen::MatrixXd rows_of(const Eigen::MatrixXd& X, const std::vector<std::size_t>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), X.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = X.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

// ---------------------------------------------------------------------------

Outcome macro_f1_oracle() {
  gp::Rng rng(20240601);
  double worst = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t classes = 1 + rng.uniform_index(5);
    const std::size_t n = 1 + rng.uniform_index(50);
    std::vector<std::size_t> truth(n), pred(n);
    for (std::size_t i = 0; i < n; ++i) {
      truth[i] = rng.uniform_index(classes);
      pred[i] = rng.uniform_index(classes);
    }
    const double got = gp::macro_f1(truth, pred, numbered_vocab(classes));
    worst = std::max(worst, std::abs(got - oracle::brute_force_macro_f1(truth, pred, classes)));
  }
  return {worst <= 1e-12, fmt::format("max |diff| {:.3g} over 1000 instances, tol 1e-12", worst)};
}

Outcome logreg_gradient() {
  const auto X = random_matrix(20, 8, 101);
  gp::Rng rng(102);
  std::vector<std::size_t> y;
  for (int i = 0; i < 20; ++i) y.push_back(rng.uniform_index(3));
  const Eigen::MatrixXd W = random_matrix(3, 8, 103) * 0.5;
  const Eigen::VectorXd b = random_matrix(3, 1, 104).col(0);
  Eigen::MatrixXd gW;
  Eigen::VectorXd gb;
  gp::logreg_objective(X, y, W, b, 1.0, &gW, &gb);
  Eigen::VectorXd theta(27), analytic(27);
  theta << Eigen::Map<const Eigen::VectorXd>(W.data(), 24), b;
  analytic << Eigen::Map<const Eigen::VectorXd>(gW.data(), 24), gb;
  const auto numeric = oracle::central_difference(
      [&](const Eigen::VectorXd& t) {
        const Eigen::MatrixXd Wt = Eigen::Map<const Eigen::MatrixXd>(t.data(), 3, 8);
        return gp::logreg_objective(X, y, Wt, t.tail(3), 1.0);
      },
      theta, 1e-5);
  const double rel = (analytic - numeric).norm() / std::max(numeric.norm(), 1e-12);
  return {rel < 1e-5, fmt::format("relative error {:.3g}, tol 1e-5", rel)};
}

Outcome probe_beats_control() {
  // Class c has mean 4 * e_c, unit variance.
  const auto blobs = oracle::gaussian_blobs(5, 64, 200, 4.0, 7);
  const auto vocab = numbered_vocab(5);
  gp::Dataset ids;
  for (std::size_t i = 0; i < blobs.y.size(); ++i) {
    ids.push_back({std::to_string(i), "x", vocab.labels()[blobs.y[i]], std::nullopt, "blobs"});
  }
  const auto split = gp::split_train_test(ids, 0.8, 3);
  std::vector<std::size_t> train, test;
  for (const auto& id : split.train_ids) train.push_back(std::stoul(id));
  for (const auto& id : split.test_ids) test.push_back(std::stoul(id));

  auto score = [&](const std::vector<std::size_t>& labels) {
    std::vector<std::size_t> ytr, yte;
    for (auto i : train) ytr.push_back(labels[i]);
    for (auto i : test) yte.push_back(labels[i]);
    const auto model = gp::train_probe(gp::ProbeKind::logreg, rows_of(blobs.X, train), ytr, vocab);
    return gp::macro_f1(yte, gp::predict(model, rows_of(blobs.X, test)).labels, vocab);
  };
  const double real = score(blobs.y);
  auto permuted = blobs.y;
  gp::Rng rng(8);
  rng.shuffle(std::span<std::size_t>(permuted));
  const double control = score(permuted);
  return {real >= 0.95 && control <= 0.30,
          fmt::format("held-out macro F1 {:.4f} (>= 0.95), permuted {:.4f} (<= 0.30), test n={}", real, control,
                      test.size())};
}

// Toy-model activations with labels read linearly off layer 3; layer 0 is noise.
gp::SweepInputs layered_inputs() {
  gp::SweepInputs inputs;
  const std::size_t n = 150;
  for (std::size_t i = 0; i < n; ++i) {
    inputs.dataset.push_back({fmt::format("t{:03d}", i), oracle::random_text(1000 + i, 12 + i % 20), "pending",
                              std::nullopt, "toy"});
  }
  const auto model = gp::ToyTransformer::from_seed({}, 1);
  gp::ExtractOptions opts;
  opts.workers = 4;
  auto trained = gp::extract_activations(model, inputs.dataset, opts);
  opts.condition = gp::Condition::control;
  opts.seed = 17;
  const auto control_model = gp::randomize_parameters(model, 17);
  auto control = gp::extract_activations(*control_model, inputs.dataset, opts);

  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  const Eigen::MatrixXd top = trained.matrix(3, gp::StreamKind::resid_post, all);
  const Eigen::VectorXd direction = random_matrix(top.cols(), 1, 19).col(0);
  const Eigen::VectorXd projection = top * direction;
  std::vector<double> sorted(projection.data(), projection.data() + n);
  std::sort(sorted.begin(), sorted.end());
  const double lo = sorted[n / 3], hi = sorted[2 * n / 3];
  for (std::size_t i = 0; i < n; ++i) {
    const double p = projection(static_cast<Eigen::Index>(i));
    inputs.dataset[i].category = p < lo ? "narrative" : (p < hi ? "explanatory" : "code");
  }

  auto noise_layer0 = [](const gp::ActivationSet& set, std::uint64_t seed) {
    std::vector<float> values(set.values().begin(), set.values().end());
    const auto& h = set.header();
    const std::size_t per_layer = gp::kStreamCount * h.hidden_dim;
    gp::Rng rng(seed);
    for (std::size_t c = 0; c < set.chunk_count(); ++c) {
      for (std::size_t k = 0; k < per_layer; ++k) values[c * h.values_per_chunk() + k] = static_cast<float>(rng.normal());
    }
    return gp::ActivationSet(h, std::move(values));
  };
  inputs.trained = noise_layer0(trained, 23);
  inputs.control = noise_layer0(control, 29);
  return inputs;
}

Outcome layer_ordering(const gp::SweepInputs& inputs) {
  gp::SweepConfig config;
  config.probes = {gp::ProbeKind::logreg};
  config.streams = {gp::StreamKind::resid_post};
  config.layers = {0, 3};
  config.seed = 2;
  const auto results = gp::run_sweep(config, inputs);
  double f0 = -1, f3 = -1;
  for (const auto& r : results) {
    if (r.condition != gp::Condition::trained) continue;
    if (r.layer == 0) f0 = r.macro_f1;
    if (r.layer == 3) f3 = r.macro_f1;
  }
  return {f3 > f0, fmt::format("logreg F1 layer 3 {:.4f} > layer 0 {:.4f}", f3, f0)};
}

Outcome phate_clusters() {
  const auto blobs = oracle::gaussian_blobs(3, 50, 100, 10.0, 31);
  const gp::PhateParams params;
  const auto op = gp::diffusion_operator(blobs.X, params.k, params.alpha);
  double worst_row = 0;
  for (Eigen::Index i = 0; i < op.P.rows(); ++i) worst_row = std::max(worst_row, std::abs(op.P.row(i).sum() - 1.0));
  const auto embedding = gp::phate_embed(blobs.X, params);
  const auto& stress = embedding.stress_history;
  bool monotone = !stress.empty();
  for (std::size_t i = 1; i < stress.size(); ++i) monotone = monotone && stress[i] <= stress[i - 1] * (1 + 1e-12);
  const double ari = oracle::adjusted_rand_index(oracle::kmeans(embedding.coords, 3, 5), blobs.y);
  return {ari >= 0.9 && worst_row <= 1e-9 && monotone,
          fmt::format("ARI {:.4f} (>= 0.9), max |row sum - 1| {:.2g} (<= 1e-9), stress non-increasing over {} "
                      "steps: {}, t={}",
                      ari, worst_row, stress.size(), monotone ? "yes" : "no", embedding.params.t.value_or(0))};
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome sweep_determinism(const gp::SweepInputs& inputs) {
  const auto dir = std::filesystem::temp_directory_path() / "genreprobe_acceptance";
  std::filesystem::remove_all(dir);
  gp::SweepConfig config;
  config.seed = 6;
  config.workers = 4;
  gp::emit_sweep_outputs(dir / "a", gp::run_sweep(config, inputs));
  config.workers = 1;
  gp::emit_sweep_outputs(dir / "b", gp::run_sweep(config, inputs));
  const bool csv = slurp(dir / "a.csv") == slurp(dir / "b.csv") && !slurp(dir / "a.csv").empty();
  const bool svg = slurp(dir / "a.svg") == slurp(dir / "b.svg") && !slurp(dir / "a.svg").empty();
  std::filesystem::remove_all(dir);
  return {csv && svg, fmt::format("CSV identical: {}, SVG identical: {} (4 workers vs 1)", csv, svg)};
}

std::optional<gp::FormatErrc> decode_error(std::string_view bytes) {
  try {
    gp::decode_activation_file(bytes);
  } catch (const gp::FormatError& e) {
    return e.code();
  }
  return std::nullopt;
}

Outcome format_robustness(const gp::SweepInputs& inputs) {
  std::vector<std::string> notes;
  bool ok = true;
  auto check = [&](const char* what, bool cond) {
    ok = ok && cond;
    notes.push_back(fmt::format("{} {}", what, cond ? "ok" : "WRONG"));
  };

  const auto bytes = gp::encode_activation_file(inputs.trained);
  const auto back = gp::decode_activation_file(bytes);
  bool exact = back.header() == inputs.trained.header() && back.values().size() == inputs.trained.values().size();
  for (std::size_t i = 0; exact && i < back.values().size(); ++i) {
    exact = std::bit_cast<std::uint32_t>(back.values()[i]) == std::bit_cast<std::uint32_t>(inputs.trained.values()[i]);
  }
  check("round-trip", exact && gp::encode_activation_file(back) == bytes);

  check("truncation", decode_error(std::string_view(bytes).substr(0, bytes.size() - 4)) ==
                          gp::FormatErrc::truncated_payload);

  std::string bad = bytes;
  bad[0] = 'X';
  check("bad magic", decode_error(bad) == gp::FormatErrc::bad_magic);

  // Header claiming four layers over a three-layer payload.
  const std::vector<std::string> ids = {"a", "b", "c"};
  auto fill = [](std::size_t c, std::size_t l, std::size_t s, std::size_t k) {
    return static_cast<float>(c + 0.5 * l + 0.25 * s + 0.001 * k);
  };
  const auto four = gp::encode_activation_file(oracle::make_activation_set(ids, 4, 8, gp::Condition::trained, fill));
  const auto three = gp::encode_activation_file(oracle::make_activation_set(ids, 3, 8, gp::Condition::trained, fill));
  auto payload_offset = [](const std::string& b) {
    std::uint32_t len = 0;
    for (int i = 3; i >= 0; --i) len = (len << 8) | static_cast<unsigned char>(b[8 + static_cast<std::size_t>(i)]);
    return 12 + static_cast<std::size_t>(len);
  };
  const std::string mismatched = four.substr(0, payload_offset(four)) + three.substr(payload_offset(three));
  check("shape mismatch", decode_error(mismatched) == gp::FormatErrc::shape_mismatch);

  std::string nan = bytes;
  const float q = std::numeric_limits<float>::quiet_NaN();
  std::memcpy(nan.data() + payload_offset(nan) + 4 * 5, &q, 4);
  bool named = false;
  try {
    gp::decode_activation_file(nan);
  } catch (const gp::FormatError& e) {
    named = e.code() == gp::FormatErrc::non_finite && std::string(e.what()).find("non-finite value") == 0;
  }
  check("NaN", named);

  std::string joined;
  for (const auto& n : notes) joined += (joined.empty() ? "" : ", ") + n;
  return {ok, joined};
}

Outcome datagen_replay() {
  const std::vector<std::string> seeds = {
      "Create a tale about a person who creates a machine that can predict the future.",
      "Write a recipe for a simple vegetable soup.", "Explain why the sky is blue.",
      "Write a speech to welcome new students to a school.",
      "Write a Python function that counts the words in a sentence."};
  gp::MockProvider first, second;
  const auto a = gp::run_pipeline(seeds, first);
  const auto b = gp::run_pipeline(seeds, second);
  const bool deterministic = gp::serialize_dataset(a.dataset) == gp::serialize_dataset(b.dataset) &&
                             gp::serialize_labeled(a.records) == gp::serialize_labeled(b.records);
  bool valid = !a.dataset.empty();
  try {
    gp::validate_dataset(a.dataset, gp::synthetic_vocabulary());
  } catch (const gp::InvalidArgument&) {
    valid = false;
  }

  std::ifstream in(std::filesystem::path(GENREPROBE_FIXTURE_DIR) / "oracle_tale.json");
  const auto example = nlohmann::json::parse(in);
  const std::string text = example.at("text").get<std::string>();
  gp::MockProvider replay(false);
  replay.set_response(std::string(gp::kLabelingPrompt) + "\n" + text, example.at("response").dump());
  const auto labeling = gp::section_and_label(text, replay);
  std::vector<std::string> categories;
  for (const auto& s : labeling.sections) categories.push_back(s.category);
  const std::vector<std::string> expected = {"other",     "narrative", "narrative", "explanatory",
                                             "narrative", "narrative", "other"};
  const bool example_ok = categories == expected && !labeling.flagged;

  return {deterministic && valid && example_ok,
          fmt::format("mock pipeline deterministic: {}, {} chunks pass corpus checks: {}, example replay gives {} "
                      "sections in expected order: {}",
                      deterministic, a.dataset.size(), valid, labeling.sections.size(), example_ok)};
}

}  // namespace

int main() {
  criterion("macro-F1 matches brute force", 5, macro_f1_oracle);
  criterion("logreg gradient check", 5, logreg_gradient);
  criterion("probe beats label-permuted control", 60, probe_beats_control);

  gp::SweepInputs inputs;
  criterion("layer ordering (F1 layer 3 > layer 0)", 60, [&] {
    inputs = layered_inputs();
    return layer_ordering(inputs);
  });
  criterion("PHATE recovers three clusters", 120, phate_clusters);
  criterion("sweep outputs byte-identical across runs", 60, [&] { return sweep_determinism(inputs); });
  criterion("activation file robustness", 10, [&] { return format_robustness(inputs); });
  criterion("datagen mock replay", 10, datagen_replay);

  fmt::print("{} criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
