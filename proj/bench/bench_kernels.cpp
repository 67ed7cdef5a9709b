#include <benchmark/benchmark.h>

#include <omp.h>

#include <vector>

#include "mutual/agents.hpp"
#include "mutual/kernels.hpp"
#include "mutual/rng.hpp"

using namespace mutual;
using kernels::Exec;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform() - 0.5;
  return v;
}

Exec exec_of(const benchmark::State& s) { return s.range(1) ? Exec::parallel : Exec::serial; }

void label(benchmark::State& s) { s.SetLabel(s.range(1) ? "openmp x" + std::to_string(omp_get_max_threads()) : "serial"); }

void BM_matvec(benchmark::State& s) {
  const int n = static_cast<int>(s.range(0));
  const auto A = random_vec(static_cast<std::size_t>(n) * n, 1), x = random_vec(n, 2);
  std::vector<double> y(n);
  for (auto _ : s) {
    kernels::matvec(A.data(), x.data(), y.data(), n, n, exec_of(s));
    benchmark::DoNotOptimize(y.data());
  }
  s.SetItemsProcessed(s.iterations() * n * n);
  label(s);
}

void BM_matvec_t(benchmark::State& s) {
  const int n = static_cast<int>(s.range(0));
  const auto A = random_vec(static_cast<std::size_t>(n) * n, 1), x = random_vec(n, 2);
  std::vector<double> y(n);
  for (auto _ : s) {
    kernels::matvec_t(A.data(), x.data(), y.data(), n, n, exec_of(s));
    benchmark::DoNotOptimize(y.data());
  }
  s.SetItemsProcessed(s.iterations() * n * n);
  label(s);
}

void BM_matmul_nt(benchmark::State& s) {
  const int n = static_cast<int>(s.range(0));
  const auto A = random_vec(static_cast<std::size_t>(n) * n, 1), B = random_vec(static_cast<std::size_t>(n) * n, 2);
  std::vector<double> C(static_cast<std::size_t>(n) * n);
  for (auto _ : s) {
    kernels::matmul_nt(A.data(), B.data(), C.data(), n, n, n, exec_of(s));
    benchmark::DoNotOptimize(C.data());
  }
  s.SetItemsProcessed(s.iterations() * n * n * n);
  label(s);
}

void BM_outer_acc(benchmark::State& s) {
  const int n = static_cast<int>(s.range(0));
  const auto a = random_vec(n, 1), b = random_vec(n, 2);
  std::vector<double> G(static_cast<std::size_t>(n) * n);
  for (auto _ : s) {
    kernels::outer_acc(G.data(), a.data(), b.data(), n, n, exec_of(s));
    benchmark::DoNotOptimize(G.data());
  }
  s.SetItemsProcessed(s.iterations() * n * n);
  label(s);
}

// Dialogue-level parallelism: rule-vs-rule self-play over a batch.
void BM_selfplay(benchmark::State& s) {
  static const Schema schema = default_schema();
  static const Lexicon lexicon(schema);
  static const TemplateTable templates = TemplateTable::bundled();
  static const SurfaceFormStore forms;
  static const auto scenarios = generate_scenarios(schema, 64, 1);
  AgentResources res;
  res.lexicon = &lexicon;
  res.templates = &templates;
  res.forms = &forms;
  SelfPlayOptions o;
  o.jobs = s.range(1) ? omp_get_max_threads() : 1;
  for (auto _ : s) benchmark::DoNotOptimize(selfplay(scenarios, res, o));
  s.SetItemsProcessed(s.iterations() * 64);
  label(s);
}

}  // namespace

BENCHMARK(BM_matvec)->ArgsProduct({{100, 400, 1600}, {0, 1}});
BENCHMARK(BM_matvec_t)->ArgsProduct({{100, 400, 1600}, {0, 1}});
BENCHMARK(BM_matmul_nt)->ArgsProduct({{32, 128, 256}, {0, 1}});
BENCHMARK(BM_outer_acc)->ArgsProduct({{100, 400, 1600}, {0, 1}});
BENCHMARK(BM_selfplay)->ArgsProduct({{64}, {0, 1}})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
