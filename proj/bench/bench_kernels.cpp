// Parallel kernels against their serial references.
#include <benchmark/benchmark.h>

#include "sggr/cluster.hpp"
#include "sggr/reward.hpp"
#include "synthetic.hpp"

using namespace sggr;

namespace {

struct ScoreFixture {
  sggr::testing::World world = sggr::testing::make_world(2000);
  std::vector<SceneGraph> gts;
  std::vector<std::string> texts;
  std::vector<ScoreItem> items;
  EmbeddingStore store{world.provider()};

  ScoreFixture() {
    sggr::testing::Rng rng(2000);
    for (int i = 0; i < 1000; ++i) {
      gts.push_back(sggr::testing::random_scene(rng, world, "img" + std::to_string(i), 10, 12));
      texts.push_back(sggr::testing::render_completion(sggr::testing::perturb_scene(rng, world, gts.back()), world));
    }
    for (std::size_t i = 0; i < gts.size(); ++i) items.push_back({texts[i], &gts[i]});
    score_batch_serial(items, world.profile, RewardConfig{}, store);
  }
};

ScoreFixture& score_fixture() {
  static ScoreFixture f;
  return f;
}

std::vector<EmbeddingVector> points(std::size_t n) {
  sggr::testing::Rng rng(7);
  std::vector<EmbeddingVector> out;
  for (const auto& p : sggr::testing::random_points(rng, n, 64)) out.emplace_back(p);
  return out;
}

void BM_score_batch_serial(benchmark::State& state) {
  auto& f = score_fixture();
  for (auto _ : state) benchmark::DoNotOptimize(score_batch_serial(f.items, f.world.profile, RewardConfig{}, f.store));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(f.items.size()));
}

void BM_score_batch(benchmark::State& state) {
  auto& f = score_fixture();
  const int threads = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(score_batch(f.items, f.world.profile, RewardConfig{}, f.store, threads));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(f.items.size()));
}

void BM_neighbor_lists_serial(benchmark::State& state) {
  const auto pts = points(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(neighbor_lists_serial(pts, 0.15));
}

void BM_neighbor_lists(benchmark::State& state) {
  const auto pts = points(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(neighbor_lists(pts, 0.15));
}

}  // namespace

BENCHMARK(BM_score_batch_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_score_batch)->Arg(1)->Arg(2)->Arg(4)->Arg(8)->UseRealTime()->Unit(benchmark::kMillisecond);
BENCHMARK(BM_neighbor_lists_serial)->Arg(300)->Arg(2000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_neighbor_lists)->Arg(300)->Arg(2000)->UseRealTime()->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
