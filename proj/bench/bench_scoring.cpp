// Copyright 2026 The netdissect Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Parallel scoring kernel against the serial reference on a synthetic store.
#include <benchmark/benchmark.h>

#include "fixtures.hpp"
#include "netdissect/scoring.hpp"
#include "netdissect/thresholds.hpp"

using namespace netdissect;

namespace {

struct Workload {
    testing::TempDir dir;
    testing::SynthDataset data;
    DatasetIndex index;
    MemorySource store{LayerMeta{}};
    UnitThresholds thresholds;

    Workload() {
        data = testing::random_dataset(7, 64, 112, 112);
        testing::write_dataset(data, dir.path());
        index = load_index(dir.path(), {.min_samples = 1});
        store = testing::random_store(data, 64, 7, 7, 11);
        thresholds = compute_thresholds(store, kDefaultTau);
    }
};

Workload& workload() {
    static Workload w;
    return w;
}

void BM_ScoreParallel(benchmark::State& state) {
    auto& w = workload();
    ScoringOptions opts;
    opts.workers = static_cast<int>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(accumulate_iou(w.store, w.index, w.thresholds, opts));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(w.store.size()));
}
BENCHMARK(BM_ScoreParallel)->Arg(1)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_ScoreSerialReference(benchmark::State& state) {
    auto& w = workload();
    for (auto _ : state) benchmark::DoNotOptimize(accumulate_iou_serial(w.store, w.index, w.thresholds));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(w.store.size()));
}
BENCHMARK(BM_ScoreSerialReference)->Unit(benchmark::kMillisecond);

void BM_Thresholds(benchmark::State& state) {
    auto& w = workload();
    ThresholdOptions opts;
    opts.mode = state.range(0) ? ThresholdMode::sketch : ThresholdMode::exact;
    for (auto _ : state) benchmark::DoNotOptimize(compute_thresholds(w.store, kDefaultTau, opts));
}
BENCHMARK(BM_Thresholds)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
