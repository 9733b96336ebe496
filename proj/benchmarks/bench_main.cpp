#include <benchmark/benchmark.h>

#include <random>

#include "eskin/dataset.hpp"
#include "eskin/forward.hpp"
#include "eskin/pointcloud.hpp"
#include "eskin/recon.hpp"
#include "eskin/vd2t.hpp"

using namespace eskin;

namespace {

const SensorGeometry& geom() {
  static const SensorGeometry g = make_geometry();
  return g;
}

void BM_ForwardSolve(benchmark::State& st) {
  const Mesh m = make_mesh(geom(), DeformationState{1.0}, static_cast<int>(st.range(0)));
  const auto s = ConductivityField::uniform(Lattice{}, 1.0);
  const auto p = make_adjacent_protocol(16);
  for (auto _ : st) benchmark::DoNotOptimize(solve_frame(m, s, p));
  st.counters["vertices"] = m.vertex_count();
}
BENCHMARK(BM_ForwardSolve)->Arg(4000)->Arg(8671)->Unit(benchmark::kMillisecond);

void BM_Jacobian(benchmark::State& st) {
  const DeformationState d{1.0};
  const Mesh m = make_mesh(geom(), d, 4000);
  const auto grid = make_recon_grid(geom(), d);
  const auto s = ConductivityField::uniform(Lattice{}, 1.0);
  const auto p = make_adjacent_protocol(16);
  for (auto _ : st) benchmark::DoNotOptimize(compute_jacobian(m, s, p, grid));
}
BENCHMARK(BM_Jacobian)->Unit(benchmark::kMillisecond);

void BM_Solvers(benchmark::State& st) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n;
  Eigen::MatrixXd j(104, 1350);
  for (Eigen::Index i = 0; i < j.size(); ++i) j.data()[i] = n(rng);
  Eigen::VectorXd dv(104);
  for (auto& v : dv) v = n(rng);
  const auto p = ReconParams::defaults(static_cast<ReconMethod>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(solve(j, dv, p));
  st.SetLabel(to_string(p.method));
}
BENCHMARK(BM_Solvers)->DenseRange(0, 2)->Unit(benchmark::kMillisecond);

void BM_CloudPipeline(benchmark::State& st) {
  const Mesh m = make_mesh(geom(), DeformationState{1.2}, 4000);
  const RawCloud c{emit_point_cloud(m, 0.1, 0.0, 3), CloudSource::kSynthetic};
  for (auto _ : st) benchmark::DoNotOptimize(process_cloud(c, Lattice{}));
}
BENCHMARK(BM_CloudPipeline)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& st) {
  Vd2tConfig c;
  c.pooling = static_cast<VoltagePooling>(st.range(0));
  Vd2tModel m(c);
  const int b = 32;
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n;
  nn::Mat dv(104, b), de(1350, b), y = nn::Mat::Zero(1350, b);
  for (auto* x : {&dv, &de})
    for (Eigen::Index i = 0; i < x->size(); ++i) x->data()[i] = n(rng);
  for (auto _ : st) benchmark::DoNotOptimize(loss_and_gradient(m, dv, de, y, 1));
  st.SetLabel(to_string(c.pooling));
}
BENCHMARK(BM_TrainStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
