// genreprobe command-line driver.

#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "genreprobe/activation_store.hpp"
#include "genreprobe/corpus.hpp"
#include "genreprobe/datagen.hpp"
#include "genreprobe/metrics.hpp"
#include "genreprobe/phate.hpp"
#include "genreprobe/probes.hpp"
#include "genreprobe/sweep.hpp"
#include "genreprobe/toy_transformer.hpp"

namespace gp = genreprobe;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kDefaultToySeed = 1;

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw gp::IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spill(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw gp::IoError("cannot write " + path.string());
}

// "toy", "toy:<seed>" or "file:<weights.json>".
gp::ToyTransformer load_model(const std::string& spec) {
  if (spec == "toy") return gp::ToyTransformer::from_seed({}, kDefaultToySeed);
  if (spec.starts_with("toy:")) return gp::ToyTransformer::from_seed({}, std::stoull(spec.substr(4)));
  if (spec.starts_with("file:")) return gp::ToyTransformer::load(spec.substr(5));
  throw gp::InvalidArgument("unknown model spec '" + spec + "' (expected toy, toy:<seed> or file:<path>)");
}

std::string split_json(const gp::SplitAssignment& split) {
  nlohmann::ordered_json doc{{"seed", split.seed},
                             {"ratio", split.ratio},
                             {"train_ids", split.train_ids},
                             {"test_ids", split.test_ids}};
  return doc.dump(2) + "\n";
}

gp::SplitAssignment parse_split(const std::string& text) {
  const auto doc = nlohmann::json::parse(text);
  gp::SplitAssignment split;
  split.seed = doc.at("seed").get<std::uint64_t>();
  split.ratio = doc.at("ratio").get<double>();
  split.train_ids = doc.at("train_ids").get<std::vector<std::string>>();
  split.test_ids = doc.at("test_ids").get<std::vector<std::string>>();
  return split;
}

std::vector<std::size_t> rows_for(const gp::ActivationSet& set, const std::vector<std::string>& ids) {
  std::vector<std::size_t> rows;
  rows.reserve(ids.size());
  for (const auto& id : ids) {
    const auto row = set.find_chunk(id);
    if (!row) throw gp::InvalidArgument("chunk '" + id + "' is not in the activation file");
    rows.push_back(*row);
  }
  return rows;
}

std::map<std::string, std::string, std::less<>> categories_by_id(const gp::Dataset& dataset) {
  std::map<std::string, std::string, std::less<>> out;
  for (const auto& chunk : dataset) out.emplace(chunk.id, chunk.category);
  return out;
}

std::unique_ptr<gp::CompletionProvider> make_provider(const std::string& kind, const std::string& responses) {
  if (kind == "mock") {
    if (!responses.empty()) return gp::MockProvider::load(responses);
    return std::make_unique<gp::MockProvider>();
  }
  if (kind == "live") return std::make_unique<gp::LiveProvider>(gp::LiveProviderConfig::from_environment());
  throw gp::InvalidArgument("unknown provider '" + kind + "' (expected mock or live)");
}

// PHATE input: an activation file slice, or a CSV with an id column followed
// by feature columns.
struct PhateInput {
  Eigen::MatrixXd X;
  std::vector<std::string> ids;
};

PhateInput read_feature_csv(const fs::path& path) {
  std::istringstream in(slurp(path));
  std::string line;
  if (!std::getline(in, line)) throw gp::InvalidArgument("empty feature csv");
  std::vector<std::vector<double>> rows;
  PhateInput out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string field;
    std::getline(fields, field, ',');
    out.ids.push_back(field);
    std::vector<double> row;
    while (std::getline(fields, field, ',')) row.push_back(std::stod(field));
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw gp::InvalidArgument(fmt::format("feature csv row {} has {} values, expected {}", rows.size() + 2,
                                            row.size(), rows.front().size()));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw gp::InvalidArgument("feature csv has no rows");
  out.X.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      out.X(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Genre probing toolkit: corpus preparation, activation export, probes, sweeps, PHATE, datagen"};
  app.require_subcommand(1);

  // chunk
  auto* chunk_cmd = app.add_subcommand("chunk", "Split a text file into chunks (JSONL dataset)");
  std::string chunk_in, chunk_out, chunk_category{gp::kOtherCategory}, chunk_prefix = "chunk", chunk_dataset = "core";
  chunk_cmd->add_option("--in", chunk_in, "Input text file")->required();
  chunk_cmd->add_option("--out", chunk_out, "Output JSONL dataset")->required();
  chunk_cmd->add_option("--category", chunk_category, "Category assigned to every chunk");
  chunk_cmd->add_option("--id-prefix", chunk_prefix, "Chunk id prefix");
  chunk_cmd->add_option("--dataset", chunk_dataset, "Dataset name recorded on each chunk");

  // merge
  auto* merge_cmd = app.add_subcommand("merge", "Map fine labels to coarse labels");
  std::string merge_dataset_path, merge_mapping, merge_out;
  merge_cmd->add_option("--dataset", merge_dataset_path)->required();
  merge_cmd->add_option("--mapping", merge_mapping, "Mapping file (default: shipped CORE table)");
  merge_cmd->add_option("--out", merge_out)->required();

  // split
  auto* split_cmd = app.add_subcommand("split", "Stratified train/test split");
  std::string split_dataset, split_out;
  double split_ratio = 0.8;
  std::uint64_t split_seed = 0;
  split_cmd->add_option("--dataset", split_dataset)->required();
  split_cmd->add_option("--ratio", split_ratio);
  split_cmd->add_option("--seed", split_seed);
  split_cmd->add_option("--out", split_out)->required();

  // export
  auto* export_cmd = app.add_subcommand("export", "Extract pooled activations into an ActivationFile");
  std::string export_model = "toy", export_dataset, export_condition = "trained", export_out, export_save;
  std::uint64_t export_seed = 0;
  std::size_t export_workers = 0;
  export_cmd->add_option("--model", export_model, "toy | toy:<seed> | file:<weights.json>");
  export_cmd->add_option("--dataset", export_dataset)->required();
  export_cmd->add_option("--condition", export_condition, "trained | control");
  export_cmd->add_option("--seed", export_seed, "Seed for the control re-initialization");
  export_cmd->add_option("--workers", export_workers);
  export_cmd->add_option("--out", export_out)->required();
  export_cmd->add_option("--save-model", export_save, "Also write the model weights as JSON");

  // probe
  auto* probe_cmd = app.add_subcommand("probe", "Train or apply a single probe");
  probe_cmd->require_subcommand(1);
  auto* train_cmd = probe_cmd->add_subcommand("train", "Fit a probe on one (layer, stream)");
  std::string pt_acts, pt_dataset, pt_split, pt_stream = "resid_post", pt_kind = "logreg", pt_out;
  std::size_t pt_layer = 0;
  gp::ProbeHyperparams pt_hp;
  train_cmd->add_option("--activations", pt_acts)->required();
  train_cmd->add_option("--dataset", pt_dataset)->required();
  train_cmd->add_option("--split", pt_split, "Split JSON from 'split'; all non-other chunks when omitted");
  train_cmd->add_option("--layer", pt_layer);
  train_cmd->add_option("--stream", pt_stream);
  train_cmd->add_option("--probe", pt_kind, "logreg | ridge | linear_svm | knn");
  train_cmd->add_option("--l2", pt_hp.l2_strength);
  train_cmd->add_option("--k", pt_hp.k);
  train_cmd->add_option("--out", pt_out)->required();

  auto* predict_cmd = probe_cmd->add_subcommand("predict", "Apply a fitted probe");
  std::string pp_model, pp_acts, pp_dataset, pp_split, pp_stream = "resid_post", pp_out;
  std::size_t pp_layer = 0;
  predict_cmd->add_option("--model", pp_model)->required();
  predict_cmd->add_option("--activations", pp_acts)->required();
  predict_cmd->add_option("--layer", pp_layer);
  predict_cmd->add_option("--stream", pp_stream);
  predict_cmd->add_option("--dataset", pp_dataset, "Dataset with gold labels; reports macro F1");
  predict_cmd->add_option("--split", pp_split, "Restrict to the split's test ids");
  predict_cmd->add_option("--out", pp_out, "CSV of id,predicted")->required();

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "Run a layer x stream x probe x condition sweep");
  std::string sweep_config;
  std::size_t sweep_workers = 0;
  sweep_cmd->add_option("--config", sweep_config)->required();
  sweep_cmd->add_option("--workers", sweep_workers, "Override the configured worker count");

  // phate
  auto* phate_cmd = app.add_subcommand("phate", "2-D PHATE embedding of activations or features");
  std::string ph_in, ph_dataset, ph_stream = "resid_post", ph_out;
  std::size_t ph_layer = 0, ph_subsample = 200;
  gp::PhateParams ph_params;
  std::size_t ph_t = 0;
  phate_cmd->add_option("--in", ph_in, "ActivationFile (.apb) or CSV (id,f1,f2,...)")->required();
  phate_cmd->add_option("--dataset", ph_dataset, "Dataset for categories and subsampling");
  phate_cmd->add_option("--layer", ph_layer);
  phate_cmd->add_option("--stream", ph_stream);
  phate_cmd->add_option("--subsample", ph_subsample, "Chunks kept per category (0 keeps all)");
  phate_cmd->add_option("--seed", ph_params.seed);
  phate_cmd->add_option("--knn", ph_params.k);
  phate_cmd->add_option("--alpha", ph_params.alpha);
  phate_cmd->add_option("--t", ph_t, "Diffusion time (0 selects automatically)");
  phate_cmd->add_option("--out", ph_out, "Output prefix for .csv and .svg")->required();

  // datagen
  auto* datagen_cmd = app.add_subcommand("datagen", "Synthetic corpus generation");
  datagen_cmd->require_subcommand(1);
  std::string dg_provider = "mock", dg_responses, dg_in, dg_out;
  std::size_t dg_rounds = 1;
  auto add_common = [&](CLI::App* cmd, bool needs_out) {
    cmd->add_option("--provider", dg_provider, "mock | live");
    cmd->add_option("--mock-responses", dg_responses, "JSON file of canned mock responses");
    cmd->add_option("--in", dg_in)->required();
    auto* out = cmd->add_option("--out", dg_out);
    if (needs_out) out->required();
  };
  auto* dg_expand = datagen_cmd->add_subcommand("expand", "Expand a prompt list (one prompt per line)");
  add_common(dg_expand, true);
  dg_expand->add_option("--rounds", dg_rounds);
  auto* dg_generate = datagen_cmd->add_subcommand("generate", "Generate one text per prompt");
  add_common(dg_generate, true);
  auto* dg_label = datagen_cmd->add_subcommand("label", "Section and label generated texts");
  add_common(dg_label, true);
  auto* dg_review = datagen_cmd->add_subcommand("review", "List flagged records; --out writes the dataset");
  add_common(dg_review, false);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*chunk_cmd) {
      const auto pieces = gp::split_chunks(slurp(chunk_in));
      gp::Dataset dataset;
      for (std::size_t i = 0; i < pieces.size(); ++i) {
        dataset.push_back({fmt::format("{}-{}", chunk_prefix, i), pieces[i], chunk_category, std::nullopt,
                           chunk_dataset});
      }
      gp::write_dataset(chunk_out, dataset);
      std::cout << dataset.size() << " chunks written to " << chunk_out << "\n";
    } else if (*merge_cmd) {
      const auto mapping =
          gp::LabelMapping::load(merge_mapping.empty() ? gp::default_core_mapping_path() : fs::path(merge_mapping));
      gp::write_dataset(merge_out, gp::merge_dataset(gp::read_dataset(merge_dataset_path), mapping));
    } else if (*split_cmd) {
      const auto dataset = gp::without_other(gp::read_dataset(split_dataset));
      const auto split = gp::split_train_test(dataset, split_ratio, split_seed);
      spill(split_out, split_json(split));
      std::cout << "train " << split.train_ids.size() << ", test " << split.test_ids.size() << "\n";
    } else if (*export_cmd) {
      const auto model = load_model(export_model);
      if (!export_save.empty()) model.save(export_save);
      const auto condition = gp::parse_condition(export_condition);
      std::unique_ptr<gp::ModelAdapter> control;
      if (condition == gp::Condition::control) control = gp::randomize_parameters(model, export_seed);
      const gp::ModelAdapter& adapter = control ? *control : static_cast<const gp::ModelAdapter&>(model);
      const auto set = gp::extract_activations(adapter, gp::read_dataset(export_dataset),
                                               {condition, export_seed, export_workers});
      gp::write_activation_file(export_out, set);
      std::cout << set.chunk_count() << " chunks x " << set.header().layer_count << " layers written to "
                << export_out << "\n";
    } else if (*train_cmd) {
      const auto set = gp::read_activation_file(pt_acts);
      const auto dataset = gp::without_other(gp::read_dataset(pt_dataset));
      std::vector<std::string> ids;
      if (pt_split.empty()) {
        for (const auto& c : dataset) ids.push_back(c.id);
      } else {
        ids = parse_split(slurp(pt_split)).train_ids;
      }
      const auto categories = categories_by_id(dataset);
      const auto labels = gp::infer_vocabulary(dataset);
      std::vector<std::size_t> y;
      for (const auto& id : ids) {
        const auto it = categories.find(id);
        if (it == categories.end()) throw gp::InvalidArgument("split id '" + id + "' is not in the dataset");
        y.push_back(labels.index_of(it->second));
      }
      const auto X = set.matrix(pt_layer, gp::parse_stream_kind(pt_stream), rows_for(set, ids));
      const auto model = gp::train_probe(gp::parse_probe_kind(pt_kind), X, y, labels, pt_hp);
      gp::write_probe_model(pt_out, model);
      std::cout << "trained " << pt_kind << " on " << ids.size() << " rows"
                << (model.kind == gp::ProbeKind::logreg && !model.report.converged ? " (did not converge)" : "") << "\n";
    } else if (*predict_cmd) {
      const auto model = gp::read_probe_model(pp_model);
      const auto set = gp::read_activation_file(pp_acts);
      std::vector<std::string> ids;
      if (!pp_split.empty()) {
        ids = parse_split(slurp(pp_split)).test_ids;
      } else {
        ids = set.header().chunk_ids;
      }
      const auto X = set.matrix(pp_layer, gp::parse_stream_kind(pp_stream), rows_for(set, ids));
      const auto prediction = gp::predict(model, X);
      std::string csv = "id,predicted\n";
      for (std::size_t i = 0; i < ids.size(); ++i) csv += ids[i] + "," + model.labels.label(prediction.labels[i]) + "\n";
      spill(pp_out, csv);
      if (!pp_dataset.empty()) {
        const auto categories = categories_by_id(gp::read_dataset(pp_dataset));
        std::vector<std::size_t> gold, predicted;
        for (std::size_t i = 0; i < ids.size(); ++i) {
          const auto it = categories.find(ids[i]);
          if (it == categories.end() || it->second == gp::kOtherCategory) continue;
          gold.push_back(model.labels.index_of(it->second));
          predicted.push_back(prediction.labels[i]);
        }
        std::cout << fmt::format("macro F1 {:.6f} over {} rows\n", gp::macro_f1(gold, predicted, model.labels),
                                 gold.size());
      }
    } else if (*sweep_cmd) {
      auto config = gp::SweepConfig::load(sweep_config);
      if (sweep_workers != 0) config.workers = sweep_workers;
      try {
        const auto results = gp::run_sweep(config);
        gp::emit_sweep_outputs(config.output_prefix, results);
        std::cout << results.size() << " cells written to " << config.output_prefix.string() << ".{csv,svg}\n";
      } catch (const gp::SweepError& e) {
        for (const auto& f : e.failures()) std::cerr << "cell failed: " << f << "\n";
        if (!e.partial_results().empty()) gp::emit_sweep_outputs(config.output_prefix, e.partial_results());
        return 3;
      }
    } else if (*phate_cmd) {
      PhateInput input;
      gp::Dataset dataset;
      if (!ph_dataset.empty()) dataset = gp::read_dataset(ph_dataset);
      const auto categories = categories_by_id(dataset);
      if (fs::path(ph_in).extension() == ".csv") {
        input = read_feature_csv(ph_in);
      } else {
        const auto set = gp::read_activation_file(ph_in);
        if (dataset.empty()) {
          input.ids = set.header().chunk_ids;
        } else {
          gp::Dataset present;
          for (const auto& c : gp::without_other(dataset)) {
            if (set.find_chunk(c.id)) present.push_back(c);
          }
          if (ph_subsample > 0) present = gp::subsample_per_category(present, ph_subsample, ph_params.seed);
          for (const auto& c : present) input.ids.push_back(c.id);
        }
        input.X = set.matrix(ph_layer, gp::parse_stream_kind(ph_stream), rows_for(set, input.ids));
      }
      if (ph_t != 0) ph_params.t = ph_t;
      const auto embedding = gp::phate_embed(input.X, ph_params, input.ids);
      std::vector<std::string> labels;
      for (const auto& id : input.ids) {
        const auto it = categories.find(id);
        labels.push_back(it == categories.end() ? std::string("unknown") : it->second);
      }
      spill(ph_out + ".csv", gp::embedding_csv(embedding, labels));
      spill(ph_out + ".svg", gp::embedding_svg(embedding, labels,
                                                fmt::format("PHATE (t = {})", embedding.params.t.value_or(0))));
      std::cout << "embedded " << input.ids.size() << " points with t = " << embedding.params.t.value_or(0) << "\n";
    } else if (*datagen_cmd) {
      auto provider = make_provider(dg_provider, dg_responses);
      if (*dg_expand) {
        const auto seeds = gp::read_prompt_file(dg_in);
        const auto result = gp::expand_prompts(seeds, *provider, dg_rounds);
        for (const auto& r : result.rejected) std::cerr << "rejected prompt: " << r << "\n";
        auto all = seeds;
        all.insert(all.end(), result.prompts.begin(), result.prompts.end());
        gp::write_prompt_file(dg_out, all);
        std::cout << result.prompts.size() << " new prompts, " << all.size() << " total\n";
      } else if (*dg_generate) {
        const auto result = gp::generate_texts(gp::read_prompt_file(dg_in), *provider);
        for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
        for (const auto& e : result.errors) std::cerr << "error: " << e << "\n";
        spill(dg_out, gp::serialize_generated(result.texts));
        std::cout << result.texts.size() << " texts generated\n";
        if (!result.errors.empty()) return 3;
      } else if (*dg_label) {
        const auto records = gp::label_texts(gp::parse_generated(slurp(dg_in)), *provider);
        spill(dg_out, gp::serialize_labeled(records));
        std::size_t flagged = 0;
        for (const auto& r : records) flagged += r.labeling.flagged ? 1 : 0;
        std::cout << records.size() << " texts labelled, " << flagged << " flagged for review\n";
      } else if (*dg_review) {
        const auto records = gp::parse_labeled(slurp(dg_in));
        for (const auto& r : records) {
          if (!r.labeling.flagged) continue;
          std::cout << fmt::format("prompt {} coverage {:.3f}: {}\n", r.prompt_index, r.labeling.coverage, r.prompt);
          for (const auto& rej : r.labeling.rejected) std::cout << "  rejected section: " << rej << "\n";
        }
        const auto dataset = gp::emit_dataset(records);
        std::cout << gp::category_report(dataset).table;
        if (!dg_out.empty()) gp::write_dataset(dg_out, dataset);
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
