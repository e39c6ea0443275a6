#include "genreprobe/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <map>
#include <mutex>
#include <thread>
#include <tuple>
#include <unordered_map>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "genreprobe/metrics.hpp"
#include "svg.hpp"
#include "text_util.hpp"

namespace genreprobe {

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

}  // namespace

SweepConfig SweepConfig::parse(std::string_view json_text, const std::filesystem::path& base_dir) {
  SweepConfig config;
  try {
    const auto doc = nlohmann::json::parse(json_text);
    config.dataset = resolve(base_dir, doc.at("dataset").get<std::string>());
    config.trained_activations = resolve(base_dir, doc.at("activations").at("trained").get<std::string>());
    config.control_activations = resolve(base_dir, doc.at("activations").at("control").get<std::string>());
    config.output_prefix = resolve(base_dir, doc.at("output_prefix").get<std::string>());
    if (doc.contains("probes")) {
      config.probes.clear();
      for (const auto& name : doc["probes"]) config.probes.push_back(parse_probe_kind(name.get<std::string>()));
    }
    if (doc.contains("streams")) {
      config.streams.clear();
      for (const auto& name : doc["streams"]) config.streams.push_back(parse_stream_kind(name.get<std::string>()));
    }
    if (doc.contains("layers")) config.layers = doc["layers"].get<std::vector<std::size_t>>();
    config.split_ratio = doc.value("split_ratio", config.split_ratio);
    config.seed = doc.value("seed", config.seed);
    config.workers = doc.value("workers", config.workers);
    if (doc.contains("hyperparams")) {
      const auto& hp = doc["hyperparams"];
      auto& out = config.hyperparams;
      out.l2_strength = hp.value("l2_strength", out.l2_strength);
      out.max_iter = hp.value("max_iter", out.max_iter);
      out.tol = hp.value("tol", out.tol);
      out.k = hp.value("k", out.k);
      out.svm_iterations = hp.value("svm_iterations", out.svm_iterations);
    }
    if (doc.contains("labels")) config.labels = doc["labels"].get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("sweep config: ") + e.what());
  }
  if (config.probes.empty() || config.streams.empty()) throw InvalidArgument("sweep config selects no cells");
  return config;
}

SweepConfig SweepConfig::load(const std::filesystem::path& path) {
  return parse(detail::read_text_file(path), path.parent_path());
}

SweepError::SweepError(std::vector<std::string> failures, std::vector<SweepResult> partial)
    : Error(fmt::format("{} sweep cell(s) failed; first: {}", failures.size(),
                        failures.empty() ? std::string() : failures.front())),
      failures_(std::move(failures)),
      partial_(std::move(partial)) {}

CellOutcome evaluate_cell(const ActivationSet& activations, std::size_t layer, StreamKind stream, ProbeKind probe,
                          const SplitRows& rows, const LabelVocabulary& labels, const ProbeHyperparams& hyperparams,
                          std::uint64_t seed) {
  const Eigen::MatrixXd train = activations.matrix(layer, stream, rows.train_rows);
  const Eigen::MatrixXd test = activations.matrix(layer, stream, rows.test_rows);
  CellOutcome outcome{train_probe(probe, train, rows.train_labels, labels, hyperparams, seed), 0.0};
  const Prediction prediction = predict(outcome.model, test);
  outcome.macro_f1 = macro_f1(rows.test_labels, prediction.labels, labels);
  return outcome;
}

namespace {

void check_compatible(const ActivationHeader& trained, const ActivationHeader& control) {
  if (trained.layer_count != control.layer_count || trained.hidden_dim != control.hidden_dim) {
    throw InvalidArgument(fmt::format("activation files disagree on shape: trained (L={}, d={}) vs control (L={}, d={})",
                                      trained.layer_count, trained.hidden_dim, control.layer_count,
                                      control.hidden_dim));
  }
  if (trained.chunk_ids != control.chunk_ids) {
    throw InvalidArgument("activation files disagree on chunk ids or their order");
  }
  if (trained.condition != Condition::trained || control.condition != Condition::control) {
    throw InvalidArgument("activation file conditions must be 'trained' and 'control' respectively");
  }
}

struct Cell {
  Condition condition;
  ProbeKind probe;
  StreamKind stream;
  std::size_t layer;
};

auto sort_key(const SweepResult& r) {
  return std::make_tuple(static_cast<int>(r.condition), static_cast<int>(r.probe), static_cast<int>(r.stream), r.layer);
}

}  // namespace

std::vector<SweepResult> run_sweep(const SweepConfig& config, const SweepInputs& inputs) {
  const ActivationHeader& header = inputs.trained.header();
  check_compatible(header, inputs.control.header());

  std::unordered_map<std::string_view, const Chunk*> by_id;
  for (const auto& chunk : inputs.dataset) by_id.emplace(chunk.id, &chunk);
  Dataset probe_set;
  std::unordered_map<std::string_view, std::size_t> row_of;
  for (std::size_t row = 0; row < header.chunk_ids.size(); ++row) {
    auto it = by_id.find(header.chunk_ids[row]);
    if (it == by_id.end()) {
      throw InvalidArgument("activation chunk '" + header.chunk_ids[row] + "' is not in the dataset");
    }
    if (it->second->category == kOtherCategory) continue;
    probe_set.push_back(*it->second);
    row_of.emplace(header.chunk_ids[row], row);
  }
  const LabelVocabulary labels = config.labels ? LabelVocabulary(*config.labels) : infer_vocabulary(probe_set);
  validate_dataset(probe_set, labels);

  std::vector<std::size_t> layers = config.layers;
  if (layers.empty()) {
    for (std::size_t l = 0; l < header.layer_count; ++l) layers.push_back(l);
  }
  for (std::size_t l : layers) {
    if (l >= header.layer_count) {
      throw InvalidArgument(fmt::format("layer {} out of range (file has {} layers)", l, header.layer_count));
    }
  }

  const SplitAssignment split = split_train_test(probe_set, config.split_ratio, config.seed);
  std::unordered_map<std::string_view, std::size_t> class_of;
  for (const auto& chunk : probe_set) class_of.emplace(chunk.id, labels.index_of(chunk.category));
  SplitRows rows;
  for (const auto& id : split.train_ids) {
    rows.train_rows.push_back(row_of.at(id));
    rows.train_labels.push_back(class_of.at(id));
  }
  for (const auto& id : split.test_ids) {
    rows.test_rows.push_back(row_of.at(id));
    rows.test_labels.push_back(class_of.at(id));
  }

  std::vector<Cell> cells;
  for (Condition condition : {Condition::trained, Condition::control})
    for (ProbeKind probe : config.probes)
      for (StreamKind stream : config.streams)
        for (std::size_t layer : layers) cells.push_back({condition, probe, stream, layer});

  std::vector<std::optional<SweepResult>> slots(cells.size());
  std::vector<std::string> failures(cells.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      const Cell& cell = cells[i];
      const ActivationSet& set = cell.condition == Condition::trained ? inputs.trained : inputs.control;
      try {
        const CellOutcome outcome =
            evaluate_cell(set, cell.layer, cell.stream, cell.probe, rows, labels, config.hyperparams, config.seed);
        slots[i] = SweepResult{cell.layer,
                               static_cast<double>(cell.layer + 1) / static_cast<double>(header.layer_count),
                               cell.stream,
                               cell.probe,
                               cell.condition,
                               outcome.macro_f1,
                               rows.train_rows.size(),
                               rows.test_rows.size()};
      } catch (const std::exception& e) {
        failures[i] = fmt::format("{}/{}/{}/layer {}: {}", to_string(cell.condition), to_string(cell.probe),
                                  to_string(cell.stream), cell.layer, e.what());
      }
    }
  };
  std::size_t workers = config.workers != 0 ? config.workers : std::thread::hardware_concurrency();
  workers = std::clamp<std::size_t>(workers, 1, cells.size());
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  }

  std::vector<SweepResult> results;
  std::vector<std::string> errors;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (slots[i]) results.push_back(*slots[i]);
    if (!failures[i].empty()) errors.push_back(failures[i]);
  }
  std::sort(results.begin(), results.end(), [](const auto& a, const auto& b) { return sort_key(a) < sort_key(b); });
  if (!errors.empty()) throw SweepError(std::move(errors), std::move(results));
  return results;
}

std::vector<SweepResult> run_sweep(const SweepConfig& config) {
  SweepInputs inputs;
  inputs.trained = read_activation_file(config.trained_activations);
  inputs.control = read_activation_file(config.control_activations);
  check_compatible(inputs.trained.header(), inputs.control.header());
  inputs.dataset = read_dataset(config.dataset);
  return run_sweep(config, inputs);
}

std::string sweep_csv(std::span<const SweepResult> results) {
  if (results.empty()) throw InvalidArgument("no sweep results to write");
  std::string out = "layer,layer_fraction,stream,probe,condition,macro_f1,train_size,test_size\n";
  for (const auto& r : results) {
    out += fmt::format("{},{:.6f},{},{},{},{:.6f},{},{}\n", r.layer, r.layer_fraction, to_string(r.stream),
                       to_string(r.probe), to_string(r.condition), r.macro_f1, r.train_size, r.test_size);
  }
  return out;
}

namespace {

template <typename T>
T parse_number(std::string_view field, std::size_t line) {
  T value{};
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw InvalidArgument(fmt::format("sweep csv line {}: bad number '{}'", line, field));
  }
  return value;
}

}  // namespace

std::vector<SweepResult> parse_sweep_csv(std::string_view csv) {
  const auto lines = detail::split_lines(csv);
  if (lines.empty() || lines.front() != "layer,layer_fraction,stream,probe,condition,macro_f1,train_size,test_size") {
    throw InvalidArgument("sweep csv: unexpected header");
  }
  std::vector<SweepResult> results;
  for (std::size_t n = 1; n < lines.size(); ++n) {
    if (lines[n].empty()) continue;
    std::vector<std::string_view> fields;
    std::string_view rest = lines[n];
    for (std::size_t pos; (pos = rest.find(',')) != std::string_view::npos; rest.remove_prefix(pos + 1)) {
      fields.push_back(rest.substr(0, pos));
    }
    fields.push_back(rest);
    if (fields.size() != 8) throw InvalidArgument(fmt::format("sweep csv line {}: expected 8 fields", n + 1));
    SweepResult r;
    r.layer = parse_number<std::size_t>(fields[0], n + 1);
    r.layer_fraction = parse_number<double>(fields[1], n + 1);
    r.stream = parse_stream_kind(fields[2]);
    r.probe = parse_probe_kind(fields[3]);
    r.condition = parse_condition(fields[4]);
    r.macro_f1 = parse_number<double>(fields[5], n + 1);
    r.train_size = parse_number<std::size_t>(fields[6], n + 1);
    r.test_size = parse_number<std::size_t>(fields[7], n + 1);
    results.push_back(r);
  }
  return results;
}

std::string sweep_svg(std::span<const SweepResult> results) {
  if (results.empty()) throw InvalidArgument("no sweep results to plot");
  constexpr double kPanelW = 420, kPanelH = 320, kMargin = 50, kTop = 40, kLegendH = 70;

  std::vector<StreamKind> streams;
  for (StreamKind s : kStreamKinds) {
    if (std::any_of(results.begin(), results.end(), [s](const auto& r) { return r.stream == s; })) streams.push_back(s);
  }
  const double width = static_cast<double>(streams.size()) * kPanelW;
  const double height = kTop + kPanelH + kLegendH;
  detail::SvgDocument svg(width, height);
  svg.rect(0, 0, width, height, "white");
  svg.text(width / 2, 22, "Macro F1 by layer fraction (solid: trained, dashed: control)", 14, "middle");

  for (std::size_t p = 0; p < streams.size(); ++p) {
    const double x0 = static_cast<double>(p) * kPanelW + kMargin;
    const double y0 = kTop + 10;
    const double w = kPanelW - kMargin - 20;
    const double h = kPanelH - 50;
    auto px = [&](double fraction) { return x0 + std::clamp(fraction, 0.0, 1.0) * w; };
    auto py = [&](double f1) { return y0 + h - std::clamp(f1, 0.0, 1.0) * h; };

    svg.rect(x0, y0, w, h, "none", "#444444");
    for (int tick = 0; tick <= 4; ++tick) {
      const double v = tick / 4.0;
      svg.line(x0, py(v), x0 + w, py(v), "#dddddd", 0.5);
      svg.text(x0 - 6, py(v) + 4, fmt::format("{:.2f}", v), 10, "end");
      svg.text(px(v), y0 + h + 14, fmt::format("{:.2f}", v), 10, "middle");
    }
    svg.text(x0 + w / 2, y0 + h + 30, std::string("layer fraction - ") + std::string(to_string(streams[p])), 12,
             "middle");

    std::map<std::pair<int, int>, std::vector<std::pair<double, double>>> series;
    for (const auto& r : results) {
      if (r.stream != streams[p]) continue;
      series[{static_cast<int>(r.probe), static_cast<int>(r.condition)}].emplace_back(r.layer_fraction, r.macro_f1);
    }
    for (auto& [key, points] : series) {
      std::sort(points.begin(), points.end());
      std::vector<std::pair<double, double>> mapped;
      for (const auto& [fraction, f1] : points) mapped.emplace_back(px(fraction), py(f1));
      const auto color = detail::palette_color(static_cast<std::size_t>(key.first));
      const bool dashed = key.second == static_cast<int>(Condition::control);
      svg.polyline(mapped, color, 2.0, dashed);
      for (const auto& [x, y] : mapped) svg.circle(x, y, 2.5, color);
    }
  }

  double lx = 20;
  const double ly = kTop + kPanelH + 30;
  for (ProbeKind probe : kProbeKinds) {
    if (std::none_of(results.begin(), results.end(), [probe](const auto& r) { return r.probe == probe; })) continue;
    const auto color = detail::palette_color(static_cast<std::size_t>(probe));
    svg.line(lx, ly, lx + 24, ly, color, 2.0, false);
    svg.text(lx + 30, ly + 4, to_string(probe), 12);
    lx += 130;
  }
  svg.line(lx, ly, lx + 24, ly, "#000000", 2.0, true);
  svg.text(lx + 30, ly + 4, "control", 12);
  return svg.finish();
}

void emit_sweep_outputs(const std::filesystem::path& prefix, std::span<const SweepResult> results) {
  const std::string csv = sweep_csv(results);
  const std::string svg = sweep_svg(results);
  if (prefix.has_parent_path()) std::filesystem::create_directories(prefix.parent_path());
  detail::write_text_file(prefix.string() + ".csv", csv);
  detail::write_text_file(prefix.string() + ".svg", svg);
}

}  // namespace genreprobe
