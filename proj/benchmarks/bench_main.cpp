#include <benchmark/benchmark.h>

#include "genreprobe/metrics.hpp"
#include "genreprobe/phate.hpp"
#include "genreprobe/probes.hpp"
#include "genreprobe/random.hpp"
#include "genreprobe/toy_transformer.hpp"

namespace gp = genreprobe;

namespace {

struct Blobs {
  Eigen::MatrixXd X;
  std::vector<std::size_t> y;
};

Blobs blobs(std::size_t classes, Eigen::Index dim, std::size_t per_class, double separation) {
  gp::Rng rng(1);
  Blobs b{Eigen::MatrixXd(static_cast<Eigen::Index>(classes * per_class), dim), {}};
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t i = 0; i < per_class; ++i) {
      const auto row = static_cast<Eigen::Index>(c * per_class + i);
      for (Eigen::Index j = 0; j < dim; ++j) b.X(row, j) = rng.normal() + (j == static_cast<Eigen::Index>(c) ? separation : 0.0);
      b.y.push_back(c);
    }
  }
  return b;
}

gp::LabelVocabulary vocab(std::size_t classes) {
  std::vector<std::string> labels;
  for (std::size_t c = 0; c < classes; ++c) labels.push_back("c" + std::to_string(c));
  return gp::LabelVocabulary(labels);
}

void BM_ProbeFit(benchmark::State& state) {
  const auto kind = static_cast<gp::ProbeKind>(state.range(0));
  const auto data = blobs(5, 64, 160, 4.0);
  const auto labels = vocab(5);
  for (auto _ : state) benchmark::DoNotOptimize(gp::train_probe(kind, data.X, data.y, labels));
  state.SetLabel(std::string(gp::to_string(kind)));
}
BENCHMARK(BM_ProbeFit)->DenseRange(0, 3)->Unit(benchmark::kMillisecond);

void BM_MacroF1(benchmark::State& state) {
  gp::Rng rng(2);
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<std::size_t> truth(n), pred(n);
  for (std::size_t i = 0; i < n; ++i) {
    truth[i] = rng.uniform_index(8);
    pred[i] = rng.uniform_index(8);
  }
  const auto labels = vocab(8);
  for (auto _ : state) benchmark::DoNotOptimize(gp::macro_f1(truth, pred, labels));
}
BENCHMARK(BM_MacroF1)->Arg(1000)->Arg(100000);

void BM_PhateEmbed(benchmark::State& state) {
  const auto data = blobs(3, 50, static_cast<std::size_t>(state.range(0)) / 3, 10.0);
  for (auto _ : state) benchmark::DoNotOptimize(gp::phate_embed(data.X));
}
BENCHMARK(BM_PhateEmbed)->Arg(150)->Arg(300)->Unit(benchmark::kMillisecond);

void BM_ToyForward(benchmark::State& state) {
  const auto model = gp::ToyTransformer::from_seed({}, 1);
  const std::string text(static_cast<std::size_t>(state.range(0)), 'a');
  const auto tokens = model.tokenize(text);
  for (auto _ : state) benchmark::DoNotOptimize(model.forward(tokens));
}
BENCHMARK(BM_ToyForward)->Arg(64)->Arg(512)->Unit(benchmark::kMicrosecond);

}  // namespace
BENCHMARK_MAIN();
