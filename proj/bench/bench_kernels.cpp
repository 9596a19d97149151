// Serial vs OpenMP kernels on simulated data. Run with DRNETS_THREADS or
// OMP_NUM_THREADS set to the worker count of interest.
#include <benchmark/benchmark.h>

#include <map>

#include "drnets/kernels.hpp"
#include "drnets/learners.hpp"
#include "drnets/simlab.hpp"

using namespace drnets;

namespace {

struct Fixture {
  simlab::CateSample sample;
  Predictor mlp;
  CateNuisance nuis;
};

const Fixture& fixture(std::size_t n) {
  static std::map<std::size_t, Fixture> cache;
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  simlab::DgpConfig c;
  c.kind = simlab::DgpKind::cate_sparse_smooth;
  c.d = 10;
  Fixture f{simlab::gen_cate(c, n, 1), {}, {}};
  nnet::MLPConfig m;
  m.depth = 3;
  m.width = 32;
  f.mlp = Predictor(nnet::mlp_init(m, c.d), Link::identity);
  f.nuis = f.sample.truth.cate_nuisance();
  f.nuis.mu1 = f.mlp;
  return cache.emplace(n, std::move(f)).first->second;
}

template <bool Parallel>
void BM_Predict(benchmark::State& state) {
  const auto& f = fixture(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    auto out = Parallel ? kernels::parallel::predict(f.mlp, f.sample.data.s)
                        : kernels::serial::predict(f.mlp, f.sample.data.s);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <bool Parallel>
void BM_PseudoOutcomes(benchmark::State& state) {
  const auto& f = fixture(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    auto out = Parallel ? kernels::parallel::cate_pseudo_outcomes(f.sample.data, f.nuis)
                        : kernels::serial::cate_pseudo_outcomes(f.sample.data, f.nuis);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <bool Parallel>
void BM_DeltaTerms(benchmark::State& state) {
  const auto& f = fixture(static_cast<std::size_t>(state.range(0)));
  const auto truth = f.sample.truth.cate_nuisance();
  for (auto _ : state) {
    auto out = Parallel ? kernels::parallel::delta_terms(f.sample.data, f.nuis, truth)
                        : kernels::serial::delta_terms(f.sample.data, f.nuis, truth);
    benchmark::DoNotOptimize(out.delta1.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_Predict<false>)->Name("predict/serial")->Arg(4096)->Arg(65536);
BENCHMARK(BM_Predict<true>)->Name("predict/parallel")->Arg(4096)->Arg(65536);
BENCHMARK(BM_PseudoOutcomes<false>)->Name("cate_pseudo_outcomes/serial")->Arg(4096)->Arg(65536);
BENCHMARK(BM_PseudoOutcomes<true>)->Name("cate_pseudo_outcomes/parallel")->Arg(4096)->Arg(65536);
BENCHMARK(BM_DeltaTerms<false>)->Name("delta_terms/serial")->Arg(65536);
BENCHMARK(BM_DeltaTerms<true>)->Name("delta_terms/parallel")->Arg(65536);

BENCHMARK_MAIN();
