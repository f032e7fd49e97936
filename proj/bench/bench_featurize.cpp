#include <chrono>
#include <cstdio>

#include <omp.h>

#include "movseq/featurize.hpp"
#include "movseq/synth.hpp"

using namespace movseq;

namespace {

template <typename F>
double seconds(F&& f) {
  auto t0 = std::chrono::steady_clock::now();
  f();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

int main(int argc, char** argv) {
  const std::size_t n_slices = argc > 1 ? std::strtoul(argv[1], nullptr, 10) : 4;
  auto cohort = generate_cohort(1, 7);
  auto rec = generate_session(cohort.profiles[0], Condition::NB, 309.0, 11);
  auto slices = slice_session(rec);
  slices.resize(std::min(n_slices, slices.size()));

  FeaturizeConfig cfg;
  cfg.hmc.steps = 200;
  cfg.hmc.warmup = 100;

  MatrixResult serial, parallel;
  double ts = seconds([&] { serial = featurize_matrix_serial(slices, 1, cfg); });
  double tp = seconds([&] { parallel = featurize_matrix(slices, 1, cfg); });
  bool same = serial.matrix.rows == parallel.matrix.rows;

  std::printf("slices=%zu directions=%zu threads=%d hmc_steps=%zu\n", slices.size(), kAnalysisDirections.size(),
              omp_get_max_threads(), cfg.hmc.steps);
  std::printf("serial   %8.2f s\n", ts);
  std::printf("openmp   %8.2f s  speedup %.2fx\n", tp, ts / tp);
  std::printf("identical output: %s\n", same ? "yes" : "NO");
  return same ? 0 : 1;
}
