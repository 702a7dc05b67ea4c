#include <benchmark/benchmark.h>

#include "a3s/autodiff/ops.hpp"
#include "a3s/autodiff/params.hpp"
#include "a3s/geometry/bezier.hpp"
#include "a3s/geometry/polygon.hpp"
#include "a3s/rng.hpp"

namespace a3s {
namespace {

// Backbone-sized 3x3 convolution; args: channels, spatial height.
void BM_Conv2dForward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0)), h = static_cast<std::size_t>(state.range(1));
  Rng rng(1);
  const Tensor x = uniform_tensor({1, c, h, 2 * h}, -1, 1, rng);
  const Tensor w = he_uniform({c, c, 3, 3}, c * 9, rng), b = Tensor::zeros({c});
  for (auto _ : state) {
    Tape tape;
    benchmark::DoNotOptimize(ops::conv2d(tape, x, w, b, 1, 1));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(c * c * 9 * h * 2 * h));
}
BENCHMARK(BM_Conv2dForward)->Args({16, 24})->Args({32, 24})->Args({64, 24});

void BM_Conv2dBackward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0)), h = static_cast<std::size_t>(state.range(1));
  Rng rng(2);
  Tensor x = uniform_tensor({1, c, h, 2 * h}, -1, 1, rng);
  Tensor w = he_uniform({c, c, 3, 3}, c * 9, rng), b = Tensor::zeros({c});
  x.set_requires_grad(true);
  w.set_requires_grad(true);
  b.set_requires_grad(true);
  for (auto _ : state) {
    Tape tape;
    backward(ops::sum(tape, ops::conv2d(tape, x, w, b, 1, 1)), tape);
  }
}
BENCHMARK(BM_Conv2dBackward)->Args({16, 24})->Args({32, 24});

void BM_BezierAlign(benchmark::State& state) {
  Rng rng(3);
  const Tensor f = uniform_tensor({32, 24, 48}, -1, 1, rng);
  const BezierRegion r{{Point{20, 30}, Point{60, 10}, Point{110, 10}, Point{150, 30}},
                       {Point{20, 60}, Point{60, 40}, Point{110, 40}, Point{150, 60}}};
  for (auto _ : state) {
    Tape tape;
    benchmark::DoNotOptimize(bezier_align(tape, f, r, static_cast<int>(state.range(0)), 32, 0.25));
  }
}
BENCHMARK(BM_BezierAlign)->Arg(4)->Arg(8);

void BM_PolygonIou(benchmark::State& state) {
  const BezierRegion a{{Point{20, 30}, Point{60, 10}, Point{110, 10}, Point{150, 30}},
                       {Point{20, 60}, Point{60, 40}, Point{110, 40}, Point{150, 60}}};
  const Polygon pa = region_to_polygon(a, 8), pb = region_to_polygon(a.translated(6, 3), 8);
  for (auto _ : state) benchmark::DoNotOptimize(polygon_iou(pa, pb, static_cast<int>(state.range(0))));
}
BENCHMARK(BM_PolygonIou)->Arg(2)->Arg(8);

}  // namespace
}  // namespace a3s
